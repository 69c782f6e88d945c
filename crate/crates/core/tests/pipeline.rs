//! Library-level pipeline: dataset files, training in parallel, run directories, re-scoring.

use vrfam::data::{load_sessions, make_split, ChannelMode, DEFAULT_CODES};
use vrfam::models::{Checkpoint, ModelKind};
use vrfam::synth::{synth_dataset, write_dataset, SynthConfig, SESSIONS_FILE};
use vrfam::train::{
    checkpoint_accuracy, grid, load_run, prepare_windows, save_run, scan_runs, train_matrix, CellSetup, ModelOverrides, TrainConfig,
};

fn setup(channels: ChannelMode) -> CellSetup {
    CellSetup {
        train: TrainConfig { epochs: 2, batch_size: 32, ..Default::default() },
        channels,
        overrides: ModelOverrides { fcn_filters: Some(vec![6, 6, 6]), pct_d_model: Some(8), pct_blocks: Some(2), ..Default::default() },
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let cfg = SynthConfig { users_per_class: 3, sessions_per_code: 2, codes: vec!["2648".into(), "3197".into()], delta: 2.0, ..Default::default() };
    let sessions = synth_dataset(&cfg).unwrap();
    let split = make_split(&cfg.users(), 3).unwrap();
    let cells = grid(&ModelKind::ALL, &[50], &cfg.codes);
    let setup = setup(ChannelMode::Position);
    let serial = train_matrix(&cells, &sessions, &split, &setup, 1, None, None);
    let parallel = train_matrix(&cells, &sessions, &split, &setup, 3, None, None);
    for (a, b) in serial.iter().zip(&parallel) {
        let (a, b) = (a.result.as_ref().unwrap(), b.result.as_ref().unwrap());
        assert_eq!(a.record, b.record);
        assert_eq!(a.checkpoint.to_bytes().unwrap(), b.checkpoint.to_bytes().unwrap());
    }
}

#[test]
fn saved_runs_reproduce_their_peak() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = SynthConfig { users_per_class: 3, sessions_per_code: 2, codes: vec!["2468".into()], delta: 3.0, ..Default::default() };
    let sessions = synth_dataset(&cfg).unwrap();
    write_dataset(tmp.path(), &cfg, &sessions).unwrap();
    let loaded = load_sessions(&tmp.path().join(SESSIONS_FILE), &DEFAULT_CODES).unwrap();
    assert_eq!(loaded, sessions);

    let split = make_split(&cfg.users(), 0).unwrap();
    let setup = setup(ChannelMode::PositionOrientation);
    let cells = grid(&[ModelKind::Mlp, ModelKind::Fcn], &[60], &cfg.codes);
    let runs = tmp.path().join("runs");
    for o in train_matrix(&cells, &loaded, &split, &setup, 1, None, None) {
        save_run(&runs.join(o.cell.dir_name()), o.result.as_ref().unwrap(), &setup).unwrap();
    }
    let dirs = scan_runs(&runs).unwrap();
    assert_eq!(dirs.len(), 2);
    for dir in dirs {
        let run = load_run(&dir).unwrap();
        assert_eq!(run.record.spec.channels, 7);
        assert!((run.roc.auc - run.record.peak_auc).abs() < 1e-12);
        let (_, test, norm) = prepare_windows(&loaded, &run.record.cell, &run.record.split, setup.channels).unwrap();
        assert_eq!(norm, run.record.norm);
        let ckpt = Checkpoint::load(&run.checkpoint_path()).unwrap();
        assert_eq!(ckpt.trained_on.window_size, 60);
        assert_eq!(checkpoint_accuracy(&ckpt, &test, 128).unwrap(), run.record.peak_accuracy);
    }
}
