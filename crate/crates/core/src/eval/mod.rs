//! Window-level accuracy, ROC/AUC, metric grids and ROC plots.

mod plot;
mod report;

pub use plot::{render_roc_svg, write_roc_svg, RocSeries};
pub use report::{report_tables, CellMetrics, MetricGrid, CODE_ORDER};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::WindowSource;
use crate::error::{Error, Result};

/// Decision threshold on the "familiar" probability.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredWindow {
    /// Probability of the "familiar" class.
    pub score: f64,
    pub label: u8,
    pub source: Option<WindowSource>,
}

impl ScoredWindow {
    pub fn new(score: f64, label: u8) -> ScoredWindow {
        ScoredWindow { score, label, source: None }
    }
}

/// Pairs scores and labels.
pub fn scored(scores: &[f64], labels: &[u8]) -> Vec<ScoredWindow> {
    scores.iter().zip(labels).map(|(&s, &l)| ScoredWindow::new(s, l)).collect()
}

fn check_scores(scored: &[ScoredWindow]) -> Result<()> {
    if let Some(w) = scored.iter().find(|w| !w.score.is_finite() || w.label > 1) {
        return Err(Error::Data(format!("invalid scored window (score {}, label {})", w.score, w.label)));
    }
    Ok(())
}

/// Fraction of windows with `(score >= threshold) == label`.
pub fn accuracy(scored: &[ScoredWindow], threshold: f64) -> Result<f64> {
    if scored.is_empty() {
        return Err(Error::Data("accuracy of an empty set".into()));
    }
    check_scores(scored)?;
    let correct = scored.iter().filter(|w| (w.score >= threshold) == (w.label == 1)).count();
    Ok(correct as f64 / scored.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)`, from `(0,0)` to `(1,1)`.
    pub points: Vec<(f64, f64)>,
    /// Cutoff of each point: a window is positive when `score >= threshold`.
    pub thresholds: Vec<f64>,
    pub auc: f64,
}

/// Sweeps `+inf`, every distinct score in descending order, then `-inf`.
pub fn roc(scored: &[ScoredWindow]) -> Result<RocCurve> {
    check_scores(scored)?;
    let pos = scored.iter().filter(|w| w.label == 1).count();
    let neg = scored.len() - pos;
    if pos == 0 || neg == 0 {
        let missing = if pos == 0 { "familiar (1)" } else { "unfamiliar (0)" };
        return Err(Error::Data(format!("ROC needs both classes; no {missing} windows")));
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[b].score.total_cmp(&scored[a].score));
    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = vec![f64::INFINITY];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scored[order[i]].score;
        while i < order.len() && scored[order[i]].score == s {
            if scored[order[i]].label == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        thresholds.push(s);
    }
    points.push((1.0, 1.0));
    thresholds.push(f64::NEG_INFINITY);
    let auc = points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum();
    Ok(RocCurve { points, thresholds, auc })
}

impl RocCurve {
    /// `threshold,fpr,tpr` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for (t, (f, p)) in self.thresholds.iter().zip(&self.points) {
            let t = if t.is_infinite() { if *t > 0.0 { "inf".to_string() } else { "-inf".to_string() } } else { t.to_string() };
            writeln!(out, "{t},{f},{p}").unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<RocCurve> {
        let mut points = Vec::new();
        let mut thresholds = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            let bad = || Error::Parse { file: "roc.csv".into(), line: i + 1, msg: format!("bad row `{line}`") };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            thresholds.push(num(f[0])?);
            points.push((num(f[1])?, num(f[2])?));
        }
        if points.len() < 2 {
            return Err(Error::Parse { file: "roc.csv".into(), line: 1, msg: "fewer than two points".into() });
        }
        let auc = points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum();
        Ok(RocCurve { points, thresholds, auc })
    }
}
