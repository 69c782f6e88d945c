//! Session records, file ingestion, channel extraction, windowing and user-disjoint splits.
//!
//! Session files are line-delimited JSON, one session per line:
//!
//! ```text
//! {"schema_version":1,"user_id":"u03","familiar":true,"passcode":"2648","session_index":1,
//!  "fps":60.0,"correct_entry":true,"frames":[[t,px,py,pz,qw,qx,qy,qz],...]}
//! ```
//!
//! Unknown fields are ignored. Positions are meters, `t` is seconds since session start and
//! the orientation is a unit quaternion `(w, x, y, z)`.

mod normalize;
mod split;
mod window;

pub use normalize::{normalize, NormStats, STD_FLOOR};
pub use split::{make_split, train_count, SplitPlan};
pub use window::{sliding_windows, Matrix, WindowSet, WindowSource};

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
/// Tolerance on `|q| = 1` for recorded orientations.
pub const QUATERNION_TOLERANCE: f64 = 1e-4;
/// The four combinations entered by every participant.
pub const DEFAULT_CODES: [&str; 4] = ["2648", "2468", "1379", "3197"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 8]", into = "[f64; 8]")]
pub struct Frame {
    pub t: f64,
    pub position: [f64; 3],
    /// `(w, x, y, z)`
    pub orientation: [f64; 4],
}

impl From<[f64; 8]> for Frame {
    fn from(v: [f64; 8]) -> Self {
        Frame { t: v[0], position: [v[1], v[2], v[3]], orientation: [v[4], v[5], v[6], v[7]] }
    }
}

impl From<Frame> for [f64; 8] {
    fn from(f: Frame) -> Self {
        let [px, py, pz] = f.position;
        let [qw, qx, qy, qz] = f.orientation;
        [f.t, px, py, pz, qw, qx, qy, qz]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub schema_version: u32,
    pub user_id: String,
    pub familiar: bool,
    pub passcode: String,
    pub session_index: u32,
    pub fps: f64,
    pub correct_entry: bool,
    pub frames: Vec<Frame>,
}

impl Session {
    /// Only correctly entered sessions are used for training and testing.
    pub fn is_included(&self) -> bool {
        self.correct_entry
    }

    pub fn label(&self) -> u8 {
        u8::from(self.familiar)
    }

    /// Checks the record invariants. `codes` is the configured passcode set; an empty set
    /// accepts any 4-digit code.
    pub fn validate<S: AsRef<str>>(&self, codes: &[S]) -> Result<()> {
        if self.passcode.len() != 4 || !self.passcode.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::Validation(format!("passcode `{}` is not 4 digits", self.passcode)));
        }
        if !codes.is_empty() && !codes.iter().any(|c| c.as_ref() == self.passcode) {
            return Err(Error::Validation(format!("passcode `{}` is not in the configured code set", self.passcode)));
        }
        if self.user_id.is_empty() {
            return Err(Error::Validation("empty user_id".into()));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::Validation(format!("fps must be positive, got {}", self.fps)));
        }
        if self.session_index == 0 {
            return Err(Error::Validation("session_index starts at 1".into()));
        }
        if self.frames.is_empty() {
            return Err(Error::Validation("session has no frames".into()));
        }
        for (i, f) in self.frames.iter().enumerate() {
            let raw: [f64; 8] = (*f).into();
            if raw.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("frame {i} has a non-finite value")));
            }
            let norm = f.orientation.iter().map(|q| q * q).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > QUATERNION_TOLERANCE {
                return Err(Error::Validation(format!("frame {i}: quaternion norm {norm} is not 1")));
            }
            if i > 0 && f.t <= self.frames[i - 1].t {
                return Err(Error::Validation(format!("frame {i}: time {} does not increase", f.t)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelMode {
    #[default]
    #[serde(rename = "position")]
    Position,
    #[serde(rename = "position+orientation")]
    PositionOrientation,
}

impl ChannelMode {
    pub fn channels(self) -> usize {
        match self {
            ChannelMode::Position => 3,
            ChannelMode::PositionOrientation => 7,
        }
    }
}

impl fmt::Display for ChannelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelMode::Position => "position",
            ChannelMode::PositionOrientation => "position+orientation",
        })
    }
}

impl FromStr for ChannelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "position" | "pos" => Ok(ChannelMode::Position),
            "position+orientation" | "pose" | "all" => Ok(ChannelMode::PositionOrientation),
            other => Err(Error::Config(format!("unknown channel mode `{other}`"))),
        }
    }
}

/// `[T, C]` channel matrix of a session, rows in frame order.
pub fn extract_channels(s: &Session, mode: ChannelMode) -> Matrix {
    let cols = mode.channels();
    let mut data = Vec::with_capacity(s.frames.len() * cols);
    for f in &s.frames {
        data.extend(f.position.iter().map(|&v| v as f32));
        if mode == ChannelMode::PositionOrientation {
            data.extend(f.orientation.iter().map(|&v| v as f32));
        }
    }
    Matrix::new(s.frames.len(), cols, data)
}

fn session_files(path: &Path) -> Result<Vec<PathBuf>> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let p = entry.map_err(|e| Error::io(path, e))?.path();
        if p.is_file() && p.extension().is_some_and(|e| e == "jsonl") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Reads every session from a `.jsonl` file or from all `.jsonl` files in a directory
/// (sorted by name). Incorrect-entry sessions are kept; see [`Session::is_included`].
pub fn load_sessions<S: AsRef<str>>(path: &Path, codes: &[S]) -> Result<Vec<Session>> {
    let mut out = Vec::new();
    for file in session_files(path)? {
        let name = file.display().to_string();
        let reader = BufReader::new(fs::File::open(&file).map_err(|e| Error::io(&file, e))?);
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(&file, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let session: Session = serde_json::from_str(&line).map_err(|e| Error::Parse {
                file: name.clone(),
                line: i + 1,
                msg: e.to_string(),
            })?;
            if session.schema_version != SCHEMA_VERSION {
                return Err(Error::Parse {
                    file: name.clone(),
                    line: i + 1,
                    msg: format!("unsupported schema_version {}", session.schema_version),
                });
            }
            session
                .validate(codes)
                .map_err(|e| Error::Validation(format!("{name}:{}: {}", i + 1, strip_kind(&e))))?;
            out.push(session);
        }
    }
    Ok(out)
}

fn strip_kind(e: &Error) -> String {
    match e {
        Error::Validation(m) => m.clone(),
        other => other.to_string(),
    }
}

/// Writes sessions one per line.
pub fn write_sessions(path: &Path, sessions: &[Session]) -> Result<()> {
    let mut buf = Vec::new();
    for s in sessions {
        serde_json::to_writer(&mut buf, s)?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Distinct users with their labels, sorted by id.
pub fn users(sessions: &[Session]) -> Result<Vec<(String, bool)>> {
    let mut map = BTreeMap::new();
    for s in sessions {
        if let Some(prev) = map.insert(s.user_id.clone(), s.familiar) {
            if prev != s.familiar {
                return Err(Error::Data(format!("user `{}` carries both labels", s.user_id)));
            }
        }
    }
    Ok(map.into_iter().collect())
}
