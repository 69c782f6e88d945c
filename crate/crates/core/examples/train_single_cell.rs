//! Trains one cell (MLP unless a kind is given) on a strongly separated synthetic dataset.
//!
//! `cargo run --release --example train_single_cell -- [KIND] [EPOCHS]`

use vrfam::data::make_split;
use vrfam::models::ModelKind;
use vrfam::synth::{synth_dataset, DeltaPreset, SynthConfig};
use vrfam::train::{train_cell, Cell, CellSetup, EpochEvent, TrainConfig};

fn main() -> vrfam::Result<()> {
    let mut args = std::env::args().skip(1);
    let kind: ModelKind = args.next().unwrap_or_else(|| "mlp".into()).parse()?;
    let epochs = args.next().map(|e| e.parse().expect("epochs")).unwrap_or(5);

    let cfg = SynthConfig { codes: vec!["2648".into()], delta: DeltaPreset::Strong.value(), seed: 1, ..Default::default() };
    let sessions = synth_dataset(&cfg)?;
    let split = make_split(&cfg.users(), 7)?;
    println!("train users {:?}\ntest users  {:?}", split.train_users, split.test_users);

    let setup = CellSetup { train: TrainConfig { epochs, seed: 3, ..Default::default() }, ..Default::default() };
    let show = |e: &EpochEvent<'_>| println!("epoch {:>3} loss {:.4} test acc {:.4}", e.metrics.epoch, e.metrics.train_loss, e.metrics.test_accuracy);
    let result = train_cell(&Cell::new(kind, 50, "2648"), &sessions, &split, &setup, Some(&show))?;
    let r = &result.record;
    println!(
        "{kind}: {} train / {} test windows, peak {:.4} at epoch {}, AUC {:.4}",
        r.train_windows, r.test_windows, r.peak_accuracy, r.peak_epoch, r.peak_auc
    );
    Ok(())
}
