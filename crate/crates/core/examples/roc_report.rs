//! ROC/AUC from scored windows, grid tables and the SVG figure, without training.

use vrfam::eval::{accuracy, report_tables, roc, scored, write_roc_svg, CellMetrics, RocSeries, DEFAULT_THRESHOLD};
use vrfam::models::ModelKind;
use vrfam::seed::derive_rng;
use rand::Rng;

fn main() -> vrfam::Result<()> {
    let mut cells = Vec::new();
    let mut series = Vec::new();
    for kind in ModelKind::ALL {
        for window in [50, 80, 120] {
            // Positives score higher on average; the gap grows with the window.
            let mut rng = derive_rng(0, &[kind.label(), &window.to_string()]);
            let labels: Vec<u8> = (0..400).map(|i| (i % 2) as u8).collect();
            let scores: Vec<f64> = labels
                .iter()
                .map(|&l| (rng.random::<f64>() + l as f64 * window as f64 / 200.0).min(1.0))
                .collect();
            let s = scored(&scores, &labels);
            let curve = roc(&s)?;
            cells.push(CellMetrics { kind, code: "2648".into(), window, accuracy: accuracy(&s, DEFAULT_THRESHOLD)?, auc: Some(curve.auc) });
            series.push(RocSeries { kind, code: "2648".into(), window, curve });
        }
    }
    let (acc, auc) = report_tables(&cells)?;
    println!("{}\n{}", acc.to_text(), auc.to_text());
    let out = std::env::temp_dir().join("vrfam_roc_example.svg");
    write_roc_svg(&out, &series)?;
    println!("ROC figure written to {}", out.display());
    Ok(())
}
