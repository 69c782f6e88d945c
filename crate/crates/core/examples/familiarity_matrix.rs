//! A reduced experiment grid end to end: train every cell in parallel, save run
//! directories, then rebuild the tables and ROC figure from disk.
//!
//! `cargo run --release --example familiarity_matrix -- [OUT_DIR]`

use vrfam::data::make_split;
use vrfam::models::ModelKind;
use vrfam::synth::{synth_dataset, DeltaPreset, SynthConfig};
use vrfam::train::{grid, save_run, train_matrix, CellSetup, ModelOverrides, TrainConfig};

fn main() -> anyhow::Result<()> {
    let tmp = tempfile::tempdir()?;
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| tmp.path().join("runs"));
    let codes = vec!["1379".to_string(), "2648".to_string()];
    let cfg = SynthConfig { users_per_class: 4, sessions_per_code: 4, codes: codes.clone(), delta: DeltaPreset::Strong.value(), ..Default::default() };
    let sessions = synth_dataset(&cfg)?;
    let split = make_split(&cfg.users(), 0)?;

    // Narrow models keep the example quick.
    let setup = CellSetup {
        train: TrainConfig { epochs: 3, ..Default::default() },
        overrides: ModelOverrides { fcn_filters: Some(vec![16, 16, 16]), pct_d_model: Some(16), pct_blocks: Some(2), ..Default::default() },
        ..Default::default()
    };
    let cells = grid(&ModelKind::ALL, &[50, 100], &codes);
    let outcomes = train_matrix(&cells, &sessions, &split, &setup, 2, None, None);
    for o in &outcomes {
        let r = o.result.as_ref().map_err(|e| anyhow::anyhow!("{}: {e}", o.cell.dir_name()))?;
        save_run(&out.join(o.cell.dir_name()), r, &setup)?;
    }
    println!("{} cells saved under {}", outcomes.len(), out.display());

    let report = out.join("report");
    vrfam::cli::run_from(["vrfam", "report", "--runs", out.to_str().unwrap(), "--out", report.to_str().unwrap()])?;
    Ok(())
}
