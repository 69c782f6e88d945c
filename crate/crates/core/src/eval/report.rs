use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelKind;

/// Row order of the published tables; other codes follow in ascending order.
pub const CODE_ORDER: [&str; 4] = ["1379", "3197", "2468", "2648"];

/// Headline numbers of one grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub kind: ModelKind,
    pub code: String,
    pub window: usize,
    pub accuracy: f64,
    pub auc: Option<f64>,
}

/// Rows are `(kind, code)`, columns are window sizes; `None` marks a missing cell.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricGrid {
    pub title: String,
    pub rows: Vec<(ModelKind, String)>,
    pub windows: Vec<usize>,
    pub values: Vec<Vec<Option<f64>>>,
}

pub(crate) fn code_rank(code: &str) -> (usize, String) {
    let rank = CODE_ORDER.iter().position(|c| *c == code).unwrap_or(CODE_ORDER.len());
    (rank, code.to_string())
}

impl MetricGrid {
    pub fn get(&self, kind: ModelKind, code: &str, window: usize) -> Option<f64> {
        let r = self.rows.iter().position(|(k, c)| *k == kind && c == code)?;
        let c = self.windows.iter().position(|w| *w == window)?;
        self.values[r][c]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.windows.len())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("KIND CODE");
        for w in &self.windows {
            write!(out, ",{w}").unwrap();
        }
        out.push('\n');
        for ((kind, code), row) in self.rows.iter().zip(&self.values) {
            write!(out, "{kind} {code}").unwrap();
            for v in row {
                match v {
                    Some(v) => write!(out, ",{v:.4}").unwrap(),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Aligned plain-text table; missing cells show as `-`.
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.title);
        write!(out, "{:<10}", "WS").unwrap();
        for w in &self.windows {
            write!(out, " {w:>7}").unwrap();
        }
        out.push('\n');
        let mut last_code: Option<&str> = None;
        for ((kind, code), row) in self.rows.iter().zip(&self.values) {
            if last_code.is_some_and(|c| c != code) {
                out.push('\n');
            }
            last_code = Some(code);
            write!(out, "{:<10}", format!("{kind} {code}")).unwrap();
            for v in row {
                match v {
                    Some(v) => write!(out, " {v:>7.4}").unwrap(),
                    None => write!(out, " {:>7}", "-").unwrap(),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Accuracy and AUC grids in the published row/column layout.
pub fn report_tables(cells: &[CellMetrics]) -> Result<(MetricGrid, MetricGrid)> {
    if cells.is_empty() {
        return Err(Error::Data("no cells to report".into()));
    }
    let mut index: BTreeMap<(ModelKind, String, usize), &CellMetrics> = BTreeMap::new();
    for c in cells {
        if index.insert((c.kind, c.code.clone(), c.window), c).is_some() {
            return Err(Error::Data(format!("duplicate cell {} {} W={}", c.kind, c.code, c.window)));
        }
    }
    let mut rows: Vec<(ModelKind, String)> = cells.iter().map(|c| (c.kind, c.code.clone())).collect();
    rows.sort_by_key(|(k, c)| (code_rank(c), *k));
    rows.dedup();
    let mut windows: Vec<usize> = cells.iter().map(|c| c.window).collect();
    windows.sort_unstable();
    windows.dedup();
    let build = |title: &str, f: &dyn Fn(&CellMetrics) -> Option<f64>| MetricGrid {
        title: title.to_string(),
        rows: rows.clone(),
        windows: windows.clone(),
        values: rows
            .iter()
            .map(|(k, c)| windows.iter().map(|w| index.get(&(*k, c.clone(), *w)).and_then(|m| f(m))).collect())
            .collect(),
    };
    Ok((build("Peak test accuracy", &|m| Some(m.accuracy)), build("Area under the ROC curve", &|m| m.auc)))
}
