//! Minibatch cross-entropy training with Adam, one classifier per grid cell.

mod adam;
mod run_dir;

pub use adam::Adam;
pub use run_dir::{load_run, save_run, scan_runs, LoadedRun, DONE_MARKER};

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{normalize, ChannelMode, NormStats, Session, SplitPlan, WindowSet};
use crate::error::{Error, Result};
use crate::eval::{accuracy, roc, scored, RocCurve, DEFAULT_THRESHOLD};
use crate::models::{Checkpoint, Hyper, Model, ModelKind, ModelSpec, TrainedOn};
use crate::seed::{derive_rng, derive_seed};
use crate::tensor::{Graph, Tensor, Var};

/// Window sizes of the full experiment grid.
pub const WINDOW_SIZES: [usize; 8] = [50, 60, 70, 80, 90, 100, 110, 120];

/// Probability floor inside the log of the loss.
pub const PROB_FLOOR: f32 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub shuffle: bool,
    /// Windows per inference batch during test evaluation.
    pub eval_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            shuffle: true,
            eval_batch_size: 256,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.eval_batch_size == 0 {
            return Err(Error::Config("epochs, batch_size and eval_batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::Config("invalid optimiser settings".into()));
        }
        Ok(())
    }
}

/// Mean over the batch of `-ln(max(p[gt], floor))`.
pub fn bce_loss(g: &mut Graph, probs: Var, labels: &[usize]) -> Result<Var> {
    g.bce(probs, labels, PROB_FLOOR)
}

/// One `(model kind, window size, passcode)` combination.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub kind: ModelKind,
    pub window: usize,
    pub code: String,
}

impl Cell {
    pub fn new(kind: ModelKind, window: usize, code: impl Into<String>) -> Cell {
        Cell { kind, window, code: code.into() }
    }

    /// Directory name inside a run root, e.g. `fcn_w050_2648`.
    pub fn dir_name(&self) -> String {
        format!("{}_w{:03}_{}", self.kind.label().to_lowercase(), self.window, self.code)
    }

    pub fn seed_path(&self) -> [String; 3] {
        [self.kind.label().to_string(), self.window.to_string(), self.code.clone()]
    }
}

/// All cells of `kinds x windows x codes`.
pub fn grid(kinds: &[ModelKind], windows: &[usize], codes: &[String]) -> Vec<Cell> {
    let mut out = Vec::with_capacity(kinds.len() * windows.len() * codes.len());
    for code in codes {
        for &kind in kinds {
            for &w in windows {
                out.push(Cell::new(kind, w, code.clone()));
            }
        }
    }
    out
}

/// Structure overrides; `None` keeps the default architecture.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelOverrides {
    pub mlp_hidden: Option<Vec<usize>>,
    pub fcn_filters: Option<Vec<usize>>,
    pub fcn_kernels: Option<Vec<usize>>,
    pub pct_d_model: Option<usize>,
    pub pct_blocks: Option<usize>,
}

impl ModelOverrides {
    pub fn spec(&self, kind: ModelKind, window: usize, channels: usize) -> Result<ModelSpec> {
        let spec = ModelSpec::new(kind, window, channels);
        let hyper = match spec.hyper.clone() {
            Hyper::Mlp { hidden } => Hyper::Mlp { hidden: self.mlp_hidden.clone().unwrap_or(hidden) },
            Hyper::Fcn { filters, kernels } => Hyper::Fcn {
                filters: self.fcn_filters.clone().unwrap_or(filters),
                kernels: self.fcn_kernels.clone().unwrap_or(kernels),
            },
            Hyper::Pct { d_model, blocks, qk_reduction } => Hyper::Pct {
                d_model: self.pct_d_model.unwrap_or(d_model),
                blocks: self.pct_blocks.unwrap_or(blocks),
                qk_reduction,
            },
        };
        let spec = spec.with_hyper(hyper)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Everything a cell needs besides the sessions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CellSetup {
    pub train: TrainConfig,
    pub channels: ChannelMode,
    pub overrides: ModelOverrides,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_accuracy: f64,
}

/// Summary of a trained cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell: Cell,
    pub spec: ModelSpec,
    pub seed: u64,
    pub split: SplitPlan,
    pub norm: NormStats,
    pub train_windows: usize,
    pub test_windows: usize,
    pub epochs: Vec<EpochMetrics>,
    pub peak_accuracy: f64,
    /// 1-based epoch of the first occurrence of the peak.
    pub peak_epoch: usize,
    pub last_accuracy: f64,
    /// AUC of the peak-epoch model on the test windows.
    pub peak_auc: f64,
}

/// Record plus the peak-epoch artifacts.
#[derive(Clone, Debug)]
pub struct CellResult {
    pub record: RunRecord,
    pub checkpoint: Checkpoint,
    pub roc: RocCurve,
    /// "Familiar" probabilities of the test windows at the peak epoch.
    pub peak_scores: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub cell: Cell,
    pub result: std::result::Result<CellResult, String>,
}

/// Progress notification emitted after every epoch.
#[derive(Clone, Debug)]
pub struct EpochEvent<'a> {
    pub cell: &'a Cell,
    pub metrics: &'a EpochMetrics,
    pub epochs: usize,
}

/// Fails when a cell would lack windows of either class on either side of the split,
/// without materialising any window.
pub fn check_cell_data(sessions: &[Session], cell: &Cell, split: &SplitPlan) -> Result<()> {
    for (name, users) in [("training", &split.train_users), ("test", &split.test_users)] {
        let mut counts = [0usize; 2];
        for s in sessions.iter().filter(|s| s.is_included() && s.passcode == cell.code && users.contains(&s.user_id)) {
            counts[s.label() as usize] += (s.frames.len() + 1).saturating_sub(cell.window);
        }
        if let Some(missing) = counts.iter().position(|&c| c == 0) {
            let class = if missing == 1 { "familiar" } else { "unfamiliar" };
            return Err(Error::Data(format!("{name} set of {} W={} has no {class} windows", cell.code, cell.window)));
        }
    }
    Ok(())
}

/// Train/test windows of one cell, normalised with training statistics.
pub fn prepare_windows(sessions: &[Session], cell: &Cell, split: &SplitPlan, mode: ChannelMode) -> Result<(WindowSet, WindowSet, NormStats)> {
    let of = |users: &std::collections::BTreeSet<String>| {
        WindowSet::from_sessions(sessions.iter().filter(|s| s.passcode == cell.code && users.contains(&s.user_id)), cell.window, mode)
    };
    let mut train = of(&split.train_users)?;
    let mut test = of(&split.test_users)?;
    for (name, set) in [("training", &train), ("test", &test)] {
        let [neg, pos] = set.class_counts();
        if neg == 0 || pos == 0 {
            let missing = if pos == 0 { "familiar" } else { "unfamiliar" };
            return Err(Error::Data(format!(
                "{name} set of {} W={} has no {missing} windows ({} windows in total)",
                cell.code,
                cell.window,
                set.len()
            )));
        }
    }
    let norm = normalize(&mut train, &mut test)?;
    Ok((train, test, norm))
}

/// "Familiar" probabilities for every window, in inference mode.
pub fn score_windows(model: &Model, windows: &WindowSet, batch_size: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(windows.len());
    let idx: Vec<usize> = (0..windows.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let probs = model.predict(windows.batch(chunk)?)?;
        out.extend(probs.data().chunks(2).map(|r| r[1] as f64));
    }
    Ok(out)
}

fn train_epoch(model: &mut Model, adam: &mut Adam, train: &WindowSet, order: &[usize], batch_size: usize) -> Result<f64> {
    let mut total = 0.0f64;
    for chunk in order.chunks(batch_size) {
        let labels: Vec<usize> = chunk.iter().map(|&i| train.labels()[i] as usize).collect();
        let mut g = Graph::new();
        let x = g.input(train.batch(chunk)?);
        let probs = model.forward(&mut g, x, true)?;
        let loss = bce_loss(&mut g, probs, &labels)?;
        let value = g.value(loss).data()[0] as f64;
        if !value.is_finite() {
            return Err(Error::Data(format!("training loss became {value}")));
        }
        total += value * chunk.len() as f64;
        g.backward(loss)?;
        model.params_mut().zero_grads();
        g.accumulate_param_grads(model.params_mut());
        adam.step(model.params_mut())?;
    }
    Ok(total / order.len() as f64)
}

/// Trains one cell from scratch. Per epoch: a seeded shuffle, minibatch updates in
/// training mode, then inference on every test window. The peak is the first epoch with
/// the highest test accuracy.
pub fn train_cell(
    cell: &Cell,
    sessions: &[Session],
    split: &SplitPlan,
    setup: &CellSetup,
    progress: Option<&(dyn Fn(&EpochEvent<'_>) + Sync)>,
) -> Result<CellResult> {
    let cfg = &setup.train;
    cfg.validate()?;
    let spec = setup.overrides.spec(cell.kind, cell.window, setup.channels.channels())?;
    let (train, test, norm) = prepare_windows(sessions, cell, split, setup.channels)?;
    let path = cell.seed_path();
    let init_seed = derive_seed(cfg.seed, &[&["init".to_string()][..], &path[..]].concat());
    let mut shuffle_rng = derive_rng(cfg.seed, &[&["shuffle".to_string()][..], &path[..]].concat());
    let mut model = Model::build(&spec, init_seed)?;
    let mut adam = Adam::new(cfg, model.params());
    let trained_on = TrainedOn { passcode: cell.code.clone(), window_size: cell.window, split_seed: split.seed };

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut peak: Option<(f64, usize, Checkpoint, Vec<f64>)> = None;
    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        let train_loss = train_epoch(&mut model, &mut adam, &train, &order, cfg.batch_size)?;
        let scores = score_windows(&model, &test, cfg.eval_batch_size)?;
        let acc = accuracy(&scored(&scores, test.labels()), DEFAULT_THRESHOLD)?;
        let metrics = EpochMetrics { epoch, train_loss, test_accuracy: acc };
        if let Some(cb) = progress {
            cb(&EpochEvent { cell, metrics: &metrics, epochs: cfg.epochs });
        }
        epochs.push(metrics);
        if peak.as_ref().is_none_or(|p| acc > p.0) {
            peak = Some((acc, epoch, Checkpoint::from_model(&model, trained_on.clone()), scores));
        }
    }
    let (peak_accuracy, peak_epoch, checkpoint, peak_scores) = peak.expect("at least one epoch");
    let curve = roc(&scored(&peak_scores, test.labels()))?;
    let record = RunRecord {
        cell: cell.clone(),
        spec,
        seed: cfg.seed,
        split: split.clone(),
        norm,
        train_windows: train.len(),
        test_windows: test.len(),
        last_accuracy: epochs.last().unwrap().test_accuracy,
        epochs,
        peak_accuracy,
        peak_epoch,
        peak_auc: curve.auc,
    };
    Ok(CellResult { record, checkpoint, roc: curve, peak_scores })
}

/// Trains every cell; a failing cell is reported in its outcome and the rest proceed.
/// `workers > 1` runs cells concurrently, each single-threaded with its own derived seeds,
/// so results do not depend on the worker count. `on_done` is called as cells finish.
pub fn train_matrix(
    cells: &[Cell],
    sessions: &[Session],
    split: &SplitPlan,
    setup: &CellSetup,
    workers: usize,
    progress: Option<&(dyn Fn(&EpochEvent<'_>) + Sync)>,
    on_done: Option<&(dyn Fn(&CellOutcome) + Sync)>,
) -> Vec<CellOutcome> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<CellOutcome>>> = Mutex::new(vec![None; cells.len()]);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        if i >= cells.len() {
            break;
        }
        let result = train_cell(&cells[i], sessions, split, setup, progress).map_err(|e| e.to_string());
        let outcome = CellOutcome { cell: cells[i].clone(), result };
        if let Some(cb) = on_done {
            cb(&outcome);
        }
        results.lock().unwrap()[i] = Some(outcome);
    };
    let workers = workers.clamp(1, cells.len().max(1));
    if workers == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(work);
            }
        });
    }
    results.into_inner().unwrap().into_iter().map(|o| o.expect("every cell visited")).collect()
}

/// Test accuracy of a checkpoint on already normalised windows.
pub fn checkpoint_accuracy(checkpoint: &Checkpoint, test: &WindowSet, batch_size: usize) -> Result<f64> {
    let model = checkpoint.to_model()?;
    let scores = score_windows(&model, test, batch_size)?;
    accuracy(&scored(&scores, test.labels()), DEFAULT_THRESHOLD)
}

/// Windows as a `[n, T, C]` tensor, mainly for examples and tests.
pub fn windows_tensor(set: &WindowSet) -> Result<Tensor> {
    let all: Vec<usize> = (0..set.len()).collect();
    set.batch(&all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_split;
    use crate::synth::{synth_dataset, SynthConfig};

    fn tiny_data(delta: f64) -> (Vec<Session>, SplitPlan) {
        let cfg = SynthConfig { users_per_class: 3, sessions_per_code: 2, codes: vec!["2648".into()], delta, seed: 5, ..Default::default() };
        let sessions = synth_dataset(&cfg).unwrap();
        let split = make_split(&cfg.users(), 1).unwrap();
        (sessions, split)
    }

    fn small_setup(epochs: usize, lr: f64) -> CellSetup {
        CellSetup {
            train: TrainConfig { epochs, learning_rate: lr, batch_size: 32, ..Default::default() },
            channels: ChannelMode::Position,
            overrides: ModelOverrides {
                fcn_filters: Some(vec![8, 8, 8]),
                pct_d_model: Some(8),
                pct_blocks: Some(2),
                ..Default::default()
            },
        }
    }

    #[test]
    fn bce_examples() {
        let mut g = Graph::new();
        let p = g.input(Tensor::new(vec![2, 2], vec![0.5, 0.5, 1.0 - 1e-7, 1e-7]).unwrap());
        let one = g.input(Tensor::new(vec![1, 2], vec![0.5, 0.5]).unwrap());
        let l = bce_loss(&mut g, one, &[1]).unwrap();
        assert!((g.value(l).data()[0] - std::f32::consts::LN_2).abs() < 1e-6);
        let l = bce_loss(&mut g, p, &[1, 0]).unwrap();
        assert!((g.value(l).data()[0] - 0.3466).abs() < 1e-4);
        let confident = g.input(Tensor::new(vec![1, 2], vec![1.0 - 1e-7, 1e-7]).unwrap());
        let l = bce_loss(&mut g, confident, &[0]).unwrap();
        assert!(g.value(l).data()[0] < 1e-6);
    }

    #[test]
    fn loss_is_the_window_weighted_mean_of_sub_batches() {
        use rand::Rng as _;
        let mut rng = crate::seed::rng_from_seed(2);
        let n = 11;
        let probs: Vec<f32> = (0..n)
            .flat_map(|_| {
                let p: f32 = rng.random_range(0.01..0.99);
                [1.0 - p, p]
            })
            .collect();
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let loss_of = |from: usize, to: usize| {
            let mut g = Graph::new();
            let p = g.input(Tensor::new(vec![to - from, 2], probs[2 * from..2 * to].to_vec()).unwrap());
            let l = bce_loss(&mut g, p, &labels[from..to]).unwrap();
            g.value(l).data()[0] as f64
        };
        let whole = loss_of(0, n);
        let parts = (loss_of(0, 4) * 4.0 + loss_of(4, n) * 7.0) / n as f64;
        assert!((whole - parts).abs() < 1e-6);
    }

    #[test]
    fn same_seed_same_losses_and_zero_rate_is_frozen() {
        let (sessions, split) = tiny_data(3.0);
        let cell = Cell::new(ModelKind::Mlp, 50, "2648");
        let a = train_cell(&cell, &sessions, &split, &small_setup(2, 1e-3), None).unwrap();
        let b = train_cell(&cell, &sessions, &split, &small_setup(2, 1e-3), None).unwrap();
        assert_eq!(a.record.epochs, b.record.epochs);

        let frozen = train_cell(&cell, &sessions, &split, &small_setup(2, 0.0), None).unwrap();
        let init_seed = derive_seed(0, &["init", "MLP", "50", "2648"]);
        let fresh = Model::build(&frozen.record.spec, init_seed).unwrap();
        let trained = frozen.checkpoint.to_model().unwrap();
        for (x, y) in fresh.params().entries().iter().zip(trained.params().entries()) {
            if x.trainable {
                assert_eq!(x.value.data(), y.value.data(), "{}", x.name);
            }
        }
    }

    #[test]
    fn peak_checkpoint_reproduces_peak_accuracy() {
        let (sessions, split) = tiny_data(3.0);
        let setup = small_setup(3, 1e-3);
        for kind in ModelKind::ALL {
            let cell = Cell::new(kind, 50, "2648");
            let r = train_cell(&cell, &sessions, &split, &setup, None).unwrap();
            let max = r.record.epochs.iter().map(|e| e.test_accuracy).fold(0.0, f64::max);
            assert_eq!(r.record.peak_accuracy, max);
            let (_, test, _) = prepare_windows(&sessions, &cell, &split, setup.channels).unwrap();
            let acc = checkpoint_accuracy(&r.checkpoint, &test, setup.train.eval_batch_size).unwrap();
            assert_eq!(acc, r.record.peak_accuracy, "{kind}");
        }
    }

    #[test]
    fn failed_cell_does_not_stop_the_matrix() {
        let (sessions, split) = tiny_data(1.0);
        let cells = vec![Cell::new(ModelKind::Mlp, 50, "2648"), Cell::new(ModelKind::Mlp, 50, "1379")];
        let out = train_matrix(&cells, &sessions, &split, &small_setup(1, 1e-3), 1, None, None);
        assert_eq!(out.len(), 2);
        assert!(out[0].result.is_ok());
        assert!(out[1].result.as_ref().unwrap_err().contains("no familiar"));
    }

    #[test]
    fn grid_size() {
        let codes: Vec<String> = crate::data::DEFAULT_CODES.iter().map(|c| c.to_string()).collect();
        let windows: Vec<usize> = (50..=120).step_by(10).collect();
        assert_eq!(grid(&ModelKind::ALL, &windows, &codes).len(), 96);
        assert_eq!(grid(&[ModelKind::Pct], &[120], &codes[..1]).len(), 1);
    }
}
