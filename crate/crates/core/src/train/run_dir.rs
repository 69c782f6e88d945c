//! Per-cell run directory: `config.json`, `metrics.csv`, `record.json`, `roc.csv`,
//! `checkpoint.bin` and, written last, the `DONE` marker.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{CellResult, RunRecord};
use crate::error::{Error, Result};
use crate::eval::RocCurve;
use crate::models::CHECKPOINT_FORMAT_VERSION;

pub const DONE_MARKER: &str = "DONE";
pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const RECORD_FILE: &str = "record.json";
pub const ROC_FILE: &str = "roc.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn metrics_csv(record: &RunRecord) -> String {
    let mut out = String::from("epoch,train_loss,test_acc\n");
    for e in &record.epochs {
        writeln!(out, "{},{},{}", e.epoch, e.train_loss, e.test_accuracy).unwrap();
    }
    out
}

/// Writes every artifact of a finished cell into `dir`, creating it if needed.
pub fn save_run<C: Serialize>(dir: &Path, result: &CellResult, config: &C) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let done = dir.join(DONE_MARKER);
    if done.exists() {
        fs::remove_file(&done).map_err(|e| Error::io(&done, e))?;
    }
    write(&dir.join(CONFIG_FILE), serde_json::to_string_pretty(config)? + "\n")?;
    write(&dir.join(METRICS_FILE), metrics_csv(&result.record))?;
    write(&dir.join(RECORD_FILE), serde_json::to_string_pretty(&result.record)? + "\n")?;
    write(&dir.join(ROC_FILE), result.roc.to_csv())?;
    result.checkpoint.save(&dir.join(CHECKPOINT_FILE))?;
    write(&done, format!("checkpoint_format={CHECKPOINT_FORMAT_VERSION}\nschema_version={}\n", crate::data::SCHEMA_VERSION))
}

/// A completed run read back from disk.
#[derive(Clone, Debug)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub record: RunRecord,
    pub roc: RocCurve,
}

impl LoadedRun {
    pub fn checkpoint_path(&self) -> PathBuf {
        self.dir.join(CHECKPOINT_FILE)
    }
}

pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let rpath = dir.join(RECORD_FILE);
    let text = fs::read_to_string(&rpath).map_err(|e| Error::io(&rpath, e))?;
    let record: RunRecord = serde_json::from_str(&text)?;
    let cpath = dir.join(ROC_FILE);
    let roc = RocCurve::from_csv(&fs::read_to_string(&cpath).map_err(|e| Error::io(&cpath, e))?)?;
    Ok(LoadedRun { dir: dir.to_path_buf(), record, roc })
}

/// Completed run directories: `root` itself or its immediate subdirectories, sorted.
pub fn scan_runs(root: &Path) -> Result<Vec<PathBuf>> {
    if root.join(DONE_MARKER).is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let p = entry.map_err(|e| Error::io(root, e))?.path();
        if p.join(DONE_MARKER).is_file() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}
