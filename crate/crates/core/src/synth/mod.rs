//! Synthetic keypad-entry trajectories with a controllable familiarity gap `delta`.
//!
//! A session is a chain of minimum-jerk reaches from a rest pose to each digit of the code
//! and then to `E`, with a dwell (key press) at every key. Unfamiliar users get their
//! positional noise amplitude and their timing variability multiplied by `1 + delta`;
//! everything else is drawn from the same distributions for both classes, so `delta = 0`
//! yields indistinguishable classes.
//!
//! Amplitudes are implementer-chosen defaults, not measurements of human motion.

mod keypad;
mod noise;
mod oracle;

pub use keypad::KeypadLayout;
pub use oracle::{path_length, path_variance};

use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{write_sessions, Frame, Session, DEFAULT_CODES, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::seed::{derive_rng, Rng};

/// Shortest session emitted; the largest window in the grid.
pub const MIN_FRAMES: usize = 120;

/// Named values of the familiarity gap.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaPreset {
    None,
    Weak,
    Strong,
}

impl DeltaPreset {
    pub fn value(self) -> f64 {
        match self {
            DeltaPreset::None => 0.0,
            DeltaPreset::Weak => 1.0,
            DeltaPreset::Strong => 3.0,
        }
    }
}

impl FromStr for DeltaPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(DeltaPreset::None),
            "weak" => Ok(DeltaPreset::Weak),
            "strong" => Ok(DeltaPreset::Strong),
            other => Err(Error::Config(format!("unknown delta preset `{other}` (none, weak, strong)"))),
        }
    }
}

/// Parses a preset name or a non-negative number.
pub fn parse_delta(s: &str) -> Result<f64> {
    if let Ok(p) = s.parse::<DeltaPreset>() {
        return Ok(p.value());
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(Error::Config(format!("delta must be none, weak, strong or a number >= 0, got `{s}`"))),
    }
}

/// Motor parameters. Ranges are `[low, high]` for per-user uniform draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotorParams {
    /// Base duration of one reach, seconds.
    pub reach_duration: [f64; 2],
    /// Base dwell on a key, seconds.
    pub dwell: [f64; 2],
    /// Log-normal sigma of per-reach and per-dwell duration jitter.
    pub timing_jitter: f64,
    /// Standard deviation of the smooth positional perturbation, meters.
    pub smooth_noise: f64,
    /// Correlation time of the smooth perturbation, seconds.
    pub smooth_time: f64,
    /// Noise envelope during dwells relative to reaches.
    pub dwell_noise_scale: f64,
    /// Tremor amplitude, meters.
    pub tremor: [f64; 2],
    pub tremor_hz: [f64; 2],
    /// Lift off the keypad plane between keys, meters.
    pub hover: f64,
    /// Press depth into the keypad plane, meters.
    pub press_depth: f64,
    /// Standard deviation of the slow orientation drift, radians.
    pub orientation_drift: f64,
}

impl Default for MotorParams {
    fn default() -> Self {
        MotorParams {
            reach_duration: [0.31, 0.33],
            dwell: [0.13, 0.14],
            timing_jitter: 0.06,
            smooth_noise: 0.002,
            smooth_time: 0.12,
            dwell_noise_scale: 0.5,
            tremor: [0.00058, 0.00062],
            tremor_hz: [9.5, 10.5],
            hover: 0.02,
            press_depth: 0.006,
            orientation_drift: 0.03,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub users_per_class: usize,
    pub sessions_per_code: usize,
    pub codes: Vec<String>,
    pub fps: f64,
    pub delta: f64,
    pub seed: u64,
    pub motor: MotorParams,
    pub key_pitch: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users_per_class: 7,
            sessions_per_code: 10,
            codes: DEFAULT_CODES.iter().map(|c| c.to_string()).collect(),
            fps: 60.0,
            delta: DeltaPreset::Weak.value(),
            seed: 0,
            motor: MotorParams::default(),
            key_pitch: keypad::DEFAULT_PITCH,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let m = &self.motor;
        let ranges = [("reach_duration", m.reach_duration), ("dwell", m.dwell), ("tremor", m.tremor), ("tremor_hz", m.tremor_hz)];
        for (name, [lo, hi]) in ranges {
            if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::Config(format!("motor.{name} must be an ordered non-negative range, got [{lo}, {hi}]")));
            }
        }
        if m.reach_duration[0] <= 0.0 || m.dwell[0] <= 0.0 {
            return Err(Error::Config("reach and dwell durations must be positive".into()));
        }
        if !(self.fps > 0.0) || !(self.delta >= 0.0) || !(self.key_pitch > 0.0) {
            return Err(Error::Config(format!(
                "need fps > 0, delta >= 0 and key_pitch > 0 (got {}, {}, {})",
                self.fps, self.delta, self.key_pitch
            )));
        }
        if self.users_per_class == 0 || self.sessions_per_code == 0 || self.codes.is_empty() {
            return Err(Error::Config("users_per_class, sessions_per_code and codes must be nonempty".into()));
        }
        let layout = KeypadLayout::new(self.key_pitch);
        for code in &self.codes {
            if code.len() != 4 {
                return Err(Error::Config(format!("code `{code}` is not 4 digits")));
            }
            for c in code.chars() {
                layout.key(c)?;
            }
        }
        Ok(())
    }

    /// `(user_id, familiar)` for every synthetic user.
    pub fn users(&self) -> Vec<(String, bool)> {
        (0..2 * self.users_per_class)
            .map(|i| (format!("u{:02}", i + 1), i < self.users_per_class))
            .collect()
    }
}

/// Per-user motor traits; drawn identically for both classes.
#[derive(Clone, Debug, PartialEq)]
pub struct UserProfile {
    pub user_id: String,
    pub familiar: bool,
    pub reach_duration: f64,
    pub dwell: f64,
    pub tremor: f64,
    pub tremor_hz: f64,
}

fn uniform(rng: &mut Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

pub fn sample_profile(cfg: &SynthConfig, user_id: &str, familiar: bool) -> UserProfile {
    let mut rng = derive_rng(cfg.seed, &["user", user_id]);
    let m = &cfg.motor;
    UserProfile {
        user_id: user_id.to_string(),
        familiar,
        reach_duration: uniform(&mut rng, m.reach_duration),
        dwell: uniform(&mut rng, m.dwell),
        tremor: uniform(&mut rng, m.tremor),
        tremor_hz: uniform(&mut rng, m.tremor_hz),
    }
}

/// Minimum-jerk displacement fraction at normalised time `tau`.
pub fn min_jerk(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

/// Smooth bump `16 u^2 (1-u)^2` with zero value and slope at both ends and peak 1 at `u = 1/2`.
fn bump(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    16.0 * u * u * (1.0 - u) * (1.0 - u)
}

/// Samples a minimum-jerk reach at `fps`, including both endpoints.
pub fn synth_reach(from: [f64; 3], to: [f64; 3], duration: f64, fps: f64) -> Result<Vec<[f64; 3]>> {
    if !(duration > 0.0) || !(fps > 0.0) {
        return Err(Error::Config(format!("reach needs duration > 0 and fps > 0, got {duration} / {fps}")));
    }
    let steps = ((duration * fps).round() as usize).max(1);
    Ok((0..=steps)
        .map(|i| {
            let s = min_jerk(i as f64 / steps as f64);
            [0, 1, 2].map(|a| from[a] + (to[a] - from[a]) * s)
        })
        .collect())
}

#[derive(Clone, Copy)]
enum Segment {
    Reach { from: [f64; 3], to: [f64; 3] },
    Dwell { at: [f64; 3] },
}

struct Timeline {
    segments: Vec<(f64, f64, Segment)>,
}

impl Timeline {
    fn end(&self) -> f64 {
        self.segments.last().map_or(0.0, |(s, d, _)| s + d)
    }

    /// Nominal position and noise envelope at time `t`.
    fn at(&self, t: f64, hover: f64, press: f64, dwell_scale: f64) -> ([f64; 3], f64) {
        let idx = self.segments.partition_point(|(s, _, _)| *s <= t).saturating_sub(1);
        let (start, dur, seg) = self.segments[idx];
        let u = ((t - start) / dur).clamp(0.0, 1.0);
        match seg {
            Segment::Reach { from, to } => {
                let s = min_jerk(u);
                let mut p = [0, 1, 2].map(|a| from[a] + (to[a] - from[a]) * s);
                p[2] -= hover * bump(u);
                (p, 1.0)
            }
            Segment::Dwell { at } => {
                let mut p = at;
                p[2] += press * bump(u);
                (p, dwell_scale)
            }
        }
    }
}

fn jittered(rng: &mut Rng, base: f64, sigma: f64, floor: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    (base * (sigma * z).exp()).max(floor)
}

/// One correctly entered session of `code` by `profile`.
pub fn synth_session(profile: &UserProfile, code: &str, session_index: u32, layout: &KeypadLayout, cfg: &SynthConfig) -> Result<Session> {
    let keys: Vec<[f64; 3]> = code.chars().chain(['E']).map(|c| layout.key(c)).collect::<Result<_>>()?;
    let mut rng = derive_rng(cfg.seed, &["session", &profile.user_id, code, &session_index.to_string()]);
    let m = &cfg.motor;
    let scale = if profile.familiar { 1.0 } else { 1.0 + cfg.delta };
    let sigma = m.timing_jitter * scale;

    let mut segments = Vec::with_capacity(2 * keys.len());
    let mut t = 0.0;
    let mut here = layout.rest();
    for (i, &key) in keys.iter().enumerate() {
        let reach = jittered(&mut rng, profile.reach_duration, sigma, 0.1);
        segments.push((t, reach, Segment::Reach { from: here, to: key }));
        t += reach;
        let mut dwell = jittered(&mut rng, profile.dwell, sigma, 0.04);
        if i + 1 == keys.len() {
            // the final press is held long enough for the largest window
            dwell = dwell.max(MIN_FRAMES as f64 / cfg.fps - t);
        }
        segments.push((t, dwell, Segment::Dwell { at: key }));
        t += dwell;
        here = key;
    }
    let timeline = Timeline { segments };
    let frames = ((timeline.end() * cfg.fps).floor() as usize + 1).max(MIN_FRAMES);

    let amp = m.smooth_noise * scale;
    let corr = m.smooth_time * cfg.fps;
    let smooth: Vec<Vec<f64>> = (0..3).map(|_| noise::smooth_gaussian(&mut rng, frames, corr)).collect();
    let tremor_amp = profile.tremor * scale;
    let phase: [f64; 3] = [0, 1, 2].map(|_| rng.random_range(0.0..std::f64::consts::TAU));
    let axis_gain: [f64; 3] = [0, 1, 2].map(|_| rng.random_range(0.6..1.0));
    let drift = noise::smooth_gaussian(&mut rng, frames, 4.0 * corr);
    let axis = noise::random_unit(&mut rng);
    let base_angle = rng.random_range(0.2..0.4);

    let mut out = Vec::with_capacity(frames);
    for i in 0..frames {
        let t = i as f64 / cfg.fps;
        let (nominal, envelope) = timeline.at(t, m.hover, m.press_depth, m.dwell_noise_scale);
        let mut position = [0.0; 3];
        for a in 0..3 {
            let tremor = tremor_amp * axis_gain[a] * (std::f64::consts::TAU * profile.tremor_hz * t + phase[a]).sin();
            position[a] = nominal[a] + envelope * amp * smooth[a][i] + tremor;
        }
        let angle = base_angle + m.orientation_drift * scale * drift[i];
        out.push(Frame { t, position, orientation: noise::axis_angle(axis, angle) });
    }
    Ok(Session {
        schema_version: SCHEMA_VERSION,
        user_id: profile.user_id.clone(),
        familiar: profile.familiar,
        passcode: code.to_string(),
        session_index,
        fps: cfg.fps,
        correct_entry: true,
        frames: out,
    })
}

/// Every session of every user, ordered by user, code, then session index.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<Vec<Session>> {
    cfg.validate()?;
    let layout = KeypadLayout::new(cfg.key_pitch);
    let mut sessions = Vec::with_capacity(2 * cfg.users_per_class * cfg.codes.len() * cfg.sessions_per_code);
    for (user, familiar) in cfg.users() {
        let profile = sample_profile(cfg, &user, familiar);
        for code in &cfg.codes {
            for idx in 1..=cfg.sessions_per_code {
                sessions.push(synth_session(&profile, code, idx as u32, &layout, cfg)?);
            }
        }
    }
    Ok(sessions)
}

pub const SESSIONS_FILE: &str = "sessions.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Sidecar written next to the generated sessions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub generator: String,
    pub schema_version: u32,
    pub config: SynthConfig,
    pub sessions: usize,
    pub users: usize,
    pub frames: usize,
    /// SHA-256 of the sessions file.
    pub sessions_sha256: String,
}

/// Writes `sessions.jsonl` and `manifest.json` into `dir` (created if missing).
pub fn write_dataset(dir: &Path, cfg: &SynthConfig, sessions: &[Session]) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(SESSIONS_FILE);
    write_sessions(&path, sessions)?;
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let manifest = DatasetManifest {
        generator: format!("vrfam-synth {}", env!("CARGO_PKG_VERSION")),
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        sessions: sessions.len(),
        users: crate::data::users(sessions)?.len(),
        frames: sessions.iter().map(|s| s.frames.len()).sum(),
        sessions_sha256: hex::encode(Sha256::digest(&bytes)),
    };
    let mpath = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(delta: f64) -> SynthConfig {
        SynthConfig { users_per_class: 2, sessions_per_code: 2, codes: vec!["2648".into()], delta, ..Default::default() }
    }

    #[test]
    fn min_jerk_midpoint_and_ends() {
        assert_eq!(min_jerk(0.0), 0.0);
        assert_eq!(min_jerk(1.0), 1.0);
        assert!((min_jerk(0.5) - (10.0 / 8.0 - 15.0 / 16.0 + 6.0 / 32.0)).abs() < 1e-15);
        assert!((min_jerk(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn degenerate_reach_is_constant() {
        let p = [0.1, 0.2, 0.3];
        assert!(synth_reach(p, p, 0.5, 60.0).unwrap().iter().all(|q| *q == p));
        assert!(synth_reach(p, p, 0.0, 60.0).is_err());
    }

    #[test]
    fn reach_endpoint_speed_is_negligible() {
        let pts = synth_reach([0.0; 3], [0.1, -0.05, 0.02], 0.5, 60.0).unwrap();
        assert_eq!(pts.first().unwrap(), &[0.0; 3]);
        assert_eq!(pts.last().unwrap(), &[0.1, -0.05, 0.02]);
        let speed = |a: &[f64; 3], b: &[f64; 3]| (0..3).map(|i| (b[i] - a[i]).powi(2)).sum::<f64>().sqrt() * 60.0;
        let speeds: Vec<f64> = pts.windows(2).map(|w| speed(&w[0], &w[1])).collect();
        let peak = speeds.iter().cloned().fold(0.0, f64::max);
        // one-frame differences at the ends are third order in the step
        let end = speeds[0].max(*speeds.last().unwrap());
        assert!(end < 1e-2 * peak, "{end} vs {peak}");
        // fourth-order one-sided stencil, exact for the cubic and quartic terms
        let h = 1.0 / 60.0;
        let stencil = |p: [&[f64; 3]; 5]| -> f64 {
            let c = [-25.0, 48.0, -36.0, 16.0, -3.0];
            (0..3)
                .map(|a| ((0..5).map(|i| c[i] * p[i][a]).sum::<f64>() / (12.0 * h)).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let n = pts.len();
        let start = stencil([&pts[0], &pts[1], &pts[2], &pts[3], &pts[4]]);
        let finish = stencil([&pts[n - 1], &pts[n - 2], &pts[n - 3], &pts[n - 4], &pts[n - 5]]);
        assert!(start < 1e-3 * peak && finish < 1e-3 * peak, "{start} {finish} vs {peak}");
    }

    #[test]
    fn session_timing_and_length() {
        let sessions = synth_dataset(&small(3.0)).unwrap();
        assert_eq!(sessions.len(), 8);
        for s in &sessions {
            assert!(s.frames.len() >= MIN_FRAMES);
            s.validate(&["2648"]).unwrap();
            for (i, f) in s.frames.iter().enumerate() {
                assert!((f.t - i as f64 / 60.0).abs() < 1e-12);
                let n = f.orientation.iter().map(|q| q * q).sum::<f64>().sqrt();
                assert!((n - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn visits_keys_in_order() {
        let cfg = small(1.0);
        let layout = KeypadLayout::new(cfg.key_pitch);
        for s in synth_dataset(&cfg).unwrap() {
            let mut cursor = 0;
            for key in "2648E".chars() {
                let c = layout.key(key).unwrap();
                let near = |f: &Frame| (0..3).map(|a| (f.position[a] - c[a]).powi(2)).sum::<f64>().sqrt() < layout.key_radius();
                let hit = s.frames[cursor..].iter().position(near);
                assert!(hit.is_some(), "{} never reaches {key}", s.user_id);
                cursor += hit.unwrap();
            }
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        let cfg = SynthConfig { codes: vec!["26A8".into()], ..small(0.0) };
        assert!(matches!(synth_dataset(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn full_scale_count() {
        let cfg = SynthConfig::default();
        assert_eq!(cfg.users().len() * cfg.codes.len() * cfg.sessions_per_code, 560);
    }

    #[test]
    fn delta_presets() {
        assert_eq!(parse_delta("strong").unwrap(), 3.0);
        assert_eq!(parse_delta("none").unwrap(), 0.0);
        assert_eq!(parse_delta("1.5").unwrap(), 1.5);
        assert!(parse_delta("-1").is_err());
    }

    #[test]
    fn profiles_do_not_depend_on_the_label() {
        let cfg = small(2.0);
        let a = sample_profile(&cfg, "u01", true);
        let b = sample_profile(&cfg, "u01", false);
        assert_eq!((a.reach_duration, a.dwell, a.tremor), (b.reach_duration, b.dwell, b.tremor));
    }
}
