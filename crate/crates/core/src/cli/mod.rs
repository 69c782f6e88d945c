//! The `vrfam` command line.
//!
//! Settings resolve as built-in defaults, then the `--config` TOML file (sections
//! `[synth]` and `[train]`), then flags. Every run directory gets a `config.json` holding
//! the fully resolved settings, so a cell can be retrained exactly from it.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{load_sessions, make_split, users, ChannelMode, Session, DEFAULT_CODES, SCHEMA_VERSION};
use crate::eval::{accuracy, report_tables, roc, scored, write_roc_svg, CellMetrics, RocSeries, DEFAULT_THRESHOLD};
use crate::models::{Checkpoint, ModelKind, CHECKPOINT_FORMAT_VERSION};
use crate::synth::{parse_delta, synth_dataset, write_dataset, SynthConfig, MANIFEST_FILE};
use crate::tensor::gradcheck::{standard_suite, MAX_REL_ERROR};
use crate::train::{
    check_cell_data, grid, load_run, prepare_windows, save_run, scan_runs, score_windows, train_matrix, Cell, CellOutcome,
    CellSetup, EpochEvent, ModelOverrides, TrainConfig, WINDOW_SIZES,
};

/// Environment variable naming the default dataset for `train` and `eval`.
pub const DATA_ENV: &str = "VRFAM_DATA";
pub const EVAL_FILE: &str = "eval.json";

#[derive(Debug, Parser)]
#[command(name = "vrfam", version, about = "Detect VR familiarity from keypad-entry hand trajectories")]
pub struct Cli {
    /// TOML file with `[synth]` and `[train]` sections; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic session dataset.
    Synth(SynthArgs),
    /// Train one cell or a grid of cells.
    Train(TrainArgs),
    /// Re-score saved checkpoints on their test split and compare with the recorded peak.
    Eval(EvalArgs),
    /// Build accuracy/AUC tables and the ROC figure from completed runs.
    Report(ReportArgs),
    /// Check every differentiable primitive against central differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub users_per_class: Option<usize>,
    /// Sessions per user and code.
    #[arg(long)]
    pub sessions: Option<usize>,
    #[arg(long = "codes", value_delimiter = ',')]
    pub codes: Option<Vec<String>>,
    /// Familiarity gap: none, weak, strong or a number >= 0.
    #[arg(long, value_parser = delta_arg)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overwrite an existing dataset.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, env = DATA_ENV, value_name = "PATH")]
    pub data: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Model kind (mlp, fcn, pct); repeatable.
    #[arg(long = "kind")]
    pub kinds: Vec<ModelKind>,
    /// Window size; repeatable.
    #[arg(long = "window")]
    pub windows: Vec<usize>,
    /// Passcode; repeatable.
    #[arg(long = "code")]
    pub codes: Vec<String>,
    /// Use the full grid (3 kinds x 8 windows x 4 codes) for dimensions not given explicitly.
    #[arg(long)]
    pub matrix: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Master seed for initialisation and shuffling.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// position or position+orientation.
    #[arg(long)]
    pub channels: Option<ChannelMode>,
    /// Cells trained concurrently; results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Train into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
    /// Suppress per-epoch progress lines.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// A run directory or a directory of run directories.
    #[arg(long, value_name = "DIR")]
    pub runs: PathBuf,
    #[arg(long, env = DATA_ENV, value_name = "PATH")]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, value_name = "DIR")]
    pub runs: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn delta_arg(s: &str) -> std::result::Result<f64, String> {
    parse_delta(s).map_err(|e| e.to_string())
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct FileConfig {
    synth: Option<SynthConfig>,
    train: TrainSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct TrainSection {
    #[serde(flatten)]
    optim: TrainConfig,
    channels: Option<ChannelMode>,
    overrides: ModelOverrides,
    kinds: Option<Vec<ModelKind>>,
    windows: Option<Vec<usize>>,
    codes: Option<Vec<String>>,
    split_seed: Option<u64>,
    workers: Option<usize>,
    data: Option<PathBuf>,
}

fn read_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    execute(Cli::try_parse_from(args)?)
}

pub fn execute(cli: Cli) -> Result<()> {
    let file = read_config(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => cmd_synth(a, file),
        Command::Train(a) => cmd_train(a, file),
        Command::Eval(a) => cmd_eval(a, file),
        Command::Report(a) => cmd_report(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    }
}

fn dir_is_nonempty(dir: &Path) -> Result<bool> {
    match fs::read_dir(dir) {
        Ok(mut it) => Ok(it.next().is_some()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(false),
        Err(e) => Err(e).with_context(|| format!("reading {}", dir.display())),
    }
}

fn cmd_synth(a: SynthArgs, file: FileConfig) -> Result<()> {
    let mut cfg = file.synth.unwrap_or_default();
    if let Some(v) = a.users_per_class {
        cfg.users_per_class = v;
    }
    if let Some(v) = a.sessions {
        cfg.sessions_per_code = v;
    }
    if let Some(v) = a.codes {
        cfg.codes = v;
    }
    if let Some(v) = a.delta {
        cfg.delta = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    if !a.force && a.out.join(MANIFEST_FILE).exists() {
        bail!("{} already holds a dataset; pass --force to overwrite", a.out.display());
    }
    let sessions = synth_dataset(&cfg)?;
    let manifest = write_dataset(&a.out, &cfg, &sessions)?;
    println!(
        "wrote {}: {} users, {} sessions, {} frames, delta {}, sha256 {}",
        a.out.display(),
        manifest.users,
        manifest.sessions,
        manifest.frames,
        cfg.delta,
        manifest.sessions_sha256
    );
    Ok(())
}

/// Provenance snapshot written to each run directory.
#[derive(Debug, Serialize)]
struct RunSnapshot<'a> {
    command: &'static str,
    version: &'static str,
    data: String,
    /// `sessions_sha256` from the dataset manifest, when there is one.
    data_sha256: Option<String>,
    split_seed: u64,
    cell: &'a Cell,
    setup: &'a CellSetup,
    checkpoint_format: u32,
    schema_version: u32,
}

fn data_codes(requested: &[String]) -> Vec<String> {
    let mut codes: BTreeSet<String> = DEFAULT_CODES.iter().map(|c| c.to_string()).collect();
    codes.extend(requested.iter().cloned());
    codes.into_iter().collect()
}

fn load_data(path: &Path, codes: &[String]) -> Result<Vec<Session>> {
    let sessions = load_sessions(path, &data_codes(codes)).with_context(|| format!("loading sessions from {}", path.display()))?;
    ensure!(!sessions.is_empty(), "no sessions found in {}", path.display());
    Ok(sessions)
}

fn manifest_hash(data: &Path) -> Option<String> {
    let text = fs::read_to_string(data.join(MANIFEST_FILE)).ok()?;
    let v: serde_json::Value = serde_json::from_str(&text).ok()?;
    v.get("sessions_sha256")?.as_str().map(str::to_string)
}

fn pick<T: Clone>(flag: Vec<T>, file: Option<Vec<T>>, full: Vec<T>, matrix: bool, name: &str) -> Result<Vec<T>> {
    if !flag.is_empty() {
        return Ok(flag);
    }
    if let Some(v) = file {
        return Ok(v);
    }
    ensure!(matrix, "no {name} selected; pass --{name} or --matrix");
    Ok(full)
}

fn cmd_train(a: TrainArgs, file: FileConfig) -> Result<()> {
    let t = file.train;
    let data = a.data.or(t.data).context(format!("no dataset given; pass --data or set {DATA_ENV}"))?;
    let kinds = pick(a.kinds, t.kinds, ModelKind::ALL.to_vec(), a.matrix, "kind")?;
    let windows = pick(a.windows, t.windows, WINDOW_SIZES.to_vec(), a.matrix, "window")?;
    let codes = pick(a.codes, t.codes, crate::eval::CODE_ORDER.iter().map(|c| c.to_string()).collect(), a.matrix, "code")?;
    let mut train = t.optim;
    if let Some(v) = a.epochs {
        train.epochs = v;
    }
    if let Some(v) = a.batch_size {
        train.batch_size = v;
    }
    if let Some(v) = a.lr {
        train.learning_rate = v;
    }
    if let Some(v) = a.seed {
        train.seed = v;
    }
    train.validate()?;
    let setup = CellSetup { train, channels: a.channels.or(t.channels).unwrap_or_default(), overrides: t.overrides };
    let split_seed = a.split_seed.or(t.split_seed).unwrap_or(0);
    let workers = a.workers.or(t.workers).unwrap_or(1).max(1);

    if !a.force && dir_is_nonempty(&a.out)? {
        bail!("{} is not empty; pass --force to train into it", a.out.display());
    }
    let cells = grid(&kinds, &windows, &codes);
    for c in &cells {
        setup.overrides.spec(c.kind, c.window, setup.channels.channels()).with_context(|| format!("cell {}", c.dir_name()))?;
    }
    // All data problems surface before any training starts.
    let sessions = load_data(&data, &codes)?;
    let split = make_split(&users(&sessions)?, split_seed)?;
    for c in &cells {
        check_cell_data(&sessions, c, &split)?;
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;

    let data_sha256 = manifest_hash(&data);
    let quiet = a.quiet;
    let progress = move |e: &EpochEvent<'_>| {
        if !quiet {
            eprintln!(
                "[{}] epoch {}/{} loss {:.5} test_acc {:.4}",
                e.cell.dir_name(),
                e.metrics.epoch,
                e.epochs,
                e.metrics.train_loss,
                e.metrics.test_accuracy
            );
        }
    };
    let save_errors = Mutex::new(Vec::new());
    let on_done = |o: &CellOutcome| {
        let Ok(result) = &o.result else { return };
        let snapshot = RunSnapshot {
            command: "train",
            version: env!("CARGO_PKG_VERSION"),
            data: data.display().to_string(),
            data_sha256: data_sha256.clone(),
            split_seed,
            cell: &o.cell,
            setup: &setup,
            checkpoint_format: CHECKPOINT_FORMAT_VERSION,
            schema_version: SCHEMA_VERSION,
        };
        if let Err(e) = save_run(&a.out.join(o.cell.dir_name()), result, &snapshot) {
            save_errors.lock().unwrap().push(format!("{}: {e}", o.cell.dir_name()));
        }
    };
    let outcomes = train_matrix(&cells, &sessions, &split, &setup, workers, Some(&progress), Some(&on_done));

    let mut failures = save_errors.into_inner().unwrap();
    for o in &outcomes {
        match &o.result {
            Ok(r) => println!(
                "{}: peak_acc {:.4} (epoch {}) last_acc {:.4} auc {:.4}",
                o.cell.dir_name(),
                r.record.peak_accuracy,
                r.record.peak_epoch,
                r.record.last_accuracy,
                r.record.peak_auc
            ),
            Err(e) => failures.push(format!("{}: {e}", o.cell.dir_name())),
        }
    }
    ensure!(failures.is_empty(), "{} of {} cells failed:\n  {}", failures.len(), cells.len(), failures.join("\n  "));
    Ok(())
}

fn channel_mode(channels: usize) -> Result<ChannelMode> {
    [ChannelMode::Position, ChannelMode::PositionOrientation]
        .into_iter()
        .find(|m| m.channels() == channels)
        .with_context(|| format!("no channel mode has {channels} channels"))
}

fn found_runs(root: &Path) -> Result<Vec<PathBuf>> {
    ensure!(root.is_dir(), "no completed runs under {}: not a directory", root.display());
    let runs = scan_runs(root)?;
    ensure!(!runs.is_empty(), "no completed runs under {}", root.display());
    Ok(runs)
}

#[derive(Debug, Serialize)]
struct EvalRecord {
    cell: Cell,
    test_windows: usize,
    accuracy: f64,
    auc: f64,
    recorded_accuracy: f64,
    recorded_auc: f64,
    reproduced: bool,
}

fn cmd_eval(a: EvalArgs, file: FileConfig) -> Result<()> {
    let data = a.data.or(file.train.data).context(format!("no dataset given; pass --data or set {DATA_ENV}"))?;
    let runs = found_runs(&a.runs)?;
    let loaded = runs.iter().map(|d| load_run(d)).collect::<crate::Result<Vec<_>>>()?;
    let codes: Vec<String> = loaded.iter().map(|r| r.record.cell.code.clone()).collect();
    let sessions = load_data(&data, &codes)?;
    let mut mismatches = Vec::new();
    for run in &loaded {
        let rec = &run.record;
        let mode = channel_mode(rec.spec.channels)?;
        let (_, test, norm) = prepare_windows(&sessions, &rec.cell, &rec.split, mode)?;
        let name = rec.cell.dir_name();
        if norm != rec.norm {
            mismatches.push(format!("{name}: normalisation statistics differ from the recorded ones"));
        }
        let model = Checkpoint::load(&run.checkpoint_path())?.to_model()?;
        let scores = score_windows(&model, &test, 256)?;
        let s = scored(&scores, test.labels());
        let (acc, auc) = (accuracy(&s, DEFAULT_THRESHOLD)?, roc(&s)?.auc);
        let reproduced = acc == rec.peak_accuracy && (auc - rec.peak_auc).abs() <= 1e-12;
        if !reproduced {
            mismatches.push(format!("{name}: accuracy {acc} vs recorded {}, auc {auc} vs {}", rec.peak_accuracy, rec.peak_auc));
        }
        let out = EvalRecord {
            cell: rec.cell.clone(),
            test_windows: test.len(),
            accuracy: acc,
            auc,
            recorded_accuracy: rec.peak_accuracy,
            recorded_auc: rec.peak_auc,
            reproduced,
        };
        let path = run.dir.join(EVAL_FILE);
        fs::write(&path, serde_json::to_string_pretty(&out)? + "\n").with_context(|| format!("writing {}", path.display()))?;
        println!("{name}: acc {acc:.4} auc {auc:.4} windows {} {}", test.len(), if reproduced { "ok" } else { "MISMATCH" });
    }
    ensure!(mismatches.is_empty(), "evaluation does not reproduce the recorded metrics:\n  {}", mismatches.join("\n  "));
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let runs = found_runs(&a.runs)?;
    let loaded = runs.iter().map(|d| load_run(d)).collect::<crate::Result<Vec<_>>>()?;
    let metrics = |last: bool| -> Vec<CellMetrics> {
        loaded
            .iter()
            .map(|r| CellMetrics {
                kind: r.record.cell.kind,
                code: r.record.cell.code.clone(),
                window: r.record.cell.window,
                accuracy: if last { r.record.last_accuracy } else { r.record.peak_accuracy },
                auc: Some(r.record.peak_auc),
            })
            .collect()
    };
    let (acc, auc) = report_tables(&metrics(false))?;
    let (acc_last, _) = report_tables(&metrics(true))?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let write = |name: &str, text: String| -> Result<()> {
        let p = a.out.join(name);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
    };
    write("accuracy.csv", acc.to_csv())?;
    write("auc.csv", auc.to_csv())?;
    write("accuracy_last.csv", acc_last.to_csv())?;
    let tables = format!("{}\n{}", acc.to_text(), auc.to_text());
    write("tables.txt", tables.clone())?;
    let series: Vec<RocSeries> = loaded
        .into_iter()
        .map(|r| RocSeries { kind: r.record.cell.kind, code: r.record.cell.code, window: r.record.cell.window, curve: r.roc })
        .collect();
    write_roc_svg(&a.out.join("roc.svg"), &series)?;
    print!("{tables}");
    println!("wrote {} runs to {}", series.len(), a.out.display());
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<()> {
    let reports = standard_suite(a.seed)?;
    println!("{:<20} {:<28} {:>8} {:>12}  result", "primitive", "shapes", "elements", "max_rel_err");
    for r in &reports {
        println!(
            "{:<20} {:<28} {:>8} {:>12.3e}  {}",
            r.primitive,
            r.shapes,
            r.elements_checked,
            r.max_rel_error,
            if r.passed() { "PASS" } else { "FAIL" }
        );
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.primitive.as_str()).collect();
    ensure!(failed.is_empty(), "gradient check above {MAX_REL_ERROR:e} for: {}", failed.join(", "));
    println!("all {} primitives within {MAX_REL_ERROR:e}", reports.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_config_is_overridden_by_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        fs::write(&cfg, "[synth]\nusers_per_class = 3\nsessions_per_code = 1\ncodes = [\"2648\"]\nseed = 9\n").unwrap();
        let out = dir.path().join("d");
        let args = ["vrfam", "--config", cfg.to_str().unwrap(), "synth", "--out", out.to_str().unwrap(), "--users-per-class", "2"];
        run_from(args).unwrap();
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join(MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(m["sessions"], 4);
        assert_eq!(m["config"]["seed"], 9);
    }

    #[test]
    fn train_section_parses_flattened_optimiser_fields() {
        let f: FileConfig = toml::from_str("[train]\nepochs = 3\nlearning_rate = 0.01\nwindows = [50]\n[train.overrides]\npct_blocks = 2\n").unwrap();
        assert_eq!(f.train.optim.epochs, 3);
        assert_eq!(f.train.optim.batch_size, TrainConfig::default().batch_size);
        assert_eq!(f.train.windows, Some(vec![50]));
        assert_eq!(f.train.overrides.pct_blocks, Some(2));
    }

    #[test]
    fn selection_requires_matrix_or_explicit_values() {
        assert!(pick::<usize>(vec![], None, vec![1], false, "window").is_err());
        assert_eq!(pick(vec![], None, vec![1, 2], true, "window").unwrap(), vec![1, 2]);
        assert_eq!(pick(vec![7], Some(vec![8]), vec![1], true, "window").unwrap(), vec![7]);
    }

    #[test]
    fn delta_presets() {
        assert_eq!(delta_arg("strong").unwrap(), 3.0);
        assert!(delta_arg("-1").is_err());
    }
}
