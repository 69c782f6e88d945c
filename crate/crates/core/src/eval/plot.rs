use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::report::code_rank;
use super::RocCurve;
use crate::error::{Error, Result};
use crate::models::ModelKind;

/// One ROC curve of the figure.
#[derive(Clone, Debug)]
pub struct RocSeries {
    pub kind: ModelKind,
    pub code: String,
    pub window: usize,
    pub curve: RocCurve,
}

const PANEL: f64 = 220.0;
const MARGIN: f64 = 44.0;
const GAP: f64 = 36.0;
const LEGEND: f64 = 70.0;
const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

/// Panels are laid out with one row per model kind and one column per code. Points are
/// rounded to the drawing resolution and consecutive duplicates dropped, so output size
/// is bounded independently of the number of scored windows.
pub fn render_roc_svg(series: &[RocSeries]) -> Result<String> {
    if series.is_empty() {
        return Err(Error::Data("no ROC curves to plot".into()));
    }
    let kinds: BTreeSet<ModelKind> = series.iter().map(|s| s.kind).collect();
    let mut codes: Vec<String> = series.iter().map(|s| s.code.clone()).collect();
    codes.sort_by_key(|c| code_rank(c));
    codes.dedup();
    let windows: BTreeSet<usize> = series.iter().map(|s| s.window).collect();
    let color = |w: usize| PALETTE[windows.iter().position(|x| *x == w).unwrap() % PALETTE.len()];

    let width = MARGIN + codes.len() as f64 * (PANEL + GAP) + LEGEND;
    let height = MARGIN + kinds.len() as f64 * (PANEL + GAP) + 10.0;
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="10">"#
    )
    .unwrap();
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for (r, kind) in kinds.iter().enumerate() {
        for (c, code) in codes.iter().enumerate() {
            let x0 = MARGIN + c as f64 * (PANEL + GAP);
            let y0 = MARGIN / 2.0 + r as f64 * (PANEL + GAP);
            let in_panel: Vec<&RocSeries> = series.iter().filter(|s| s.kind == *kind && &s.code == code).collect();
            if in_panel.is_empty() {
                continue;
            }
            let px = |f: f64| x0 + f * PANEL;
            let py = |t: f64| y0 + (1.0 - t) * PANEL;
            writeln!(svg, r#"<g class="panel" data-kind="{kind}" data-code="{code}">"#).unwrap();
            writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">{kind} {code}</text>"#, px(0.5), y0 - 6.0).unwrap();
            writeln!(svg, r##"<rect x="{x0:.1}" y="{y0:.1}" width="{PANEL:.1}" height="{PANEL:.1}" fill="none" stroke="#333"/>"##).unwrap();
            for i in 0..=4 {
                let v = i as f64 / 4.0;
                writeln!(svg, r##"<line class="tick" x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#333"/>"##, px(v), py(0.0), px(v), py(0.0) + 4.0).unwrap();
                writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.2}</text>"#, px(v), py(0.0) + 14.0).unwrap();
                writeln!(svg, r##"<line class="tick" x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#333"/>"##, px(0.0) - 4.0, py(v), px(0.0), py(v)).unwrap();
                writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"#, px(0.0) - 6.0, py(v) + 3.0).unwrap();
            }
            writeln!(
                svg,
                r##"<line class="chance" x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#999" stroke-dasharray="4 3"/>"##,
                px(0.0),
                py(0.0),
                px(1.0),
                py(1.0)
            )
            .unwrap();
            let mut sorted = in_panel;
            sorted.sort_by_key(|s| s.window);
            for s in &sorted {
                let mut pts: Vec<String> = Vec::with_capacity(s.curve.points.len());
                for &(f, t) in &s.curve.points {
                    let p = format!("{:.1},{:.1}", px(f), py(t));
                    if pts.last() != Some(&p) {
                        pts.push(p);
                    }
                }
                writeln!(
                    svg,
                    r#"<polyline class="roc" data-window="{}" fill="none" stroke="{}" stroke-width="1.2" points="{}"/>"#,
                    s.window,
                    color(s.window),
                    pts.join(" ")
                )
                .unwrap();
            }
            svg.push_str("</g>\n");
        }
    }
    let lx = MARGIN + codes.len() as f64 * (PANEL + GAP);
    svg.push_str("<g class=\"legend\">\n");
    for (i, w) in windows.iter().enumerate() {
        let y = MARGIN / 2.0 + 10.0 + i as f64 * 16.0;
        writeln!(svg, r#"<line x1="{lx:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{}" stroke-width="2"/>"#, lx + 16.0, color(*w)).unwrap();
        writeln!(svg, r#"<text class="legend-entry" x="{:.1}" y="{:.1}">WS {w}</text>"#, lx + 20.0, y + 3.0).unwrap();
    }
    svg.push_str("</g>\n</svg>\n");
    Ok(svg)
}

pub fn write_roc_svg(path: &Path, series: &[RocSeries]) -> Result<()> {
    let svg = render_roc_svg(series)?;
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{roc, scored};

    fn series(kind: ModelKind, code: &str, window: usize) -> RocSeries {
        let curve = roc(&scored(&[0.9, 0.7, 0.4, 0.3, window as f64 / 200.0], &[1, 0, 1, 0, 1])).unwrap();
        RocSeries { kind, code: code.into(), window, curve }
    }

    #[test]
    fn single_curve() {
        let svg = render_roc_svg(&[series(ModelKind::Fcn, "2648", 50)]).unwrap();
        assert_eq!(svg.matches("<polyline class=\"roc\"").count(), 1);
        assert_eq!(svg.matches("class=\"chance\"").count(), 1);
        assert!(svg.contains(">0.00<") && svg.contains(">1.00<"));
    }

    #[test]
    fn one_polyline_and_legend_entry_per_window() {
        let all: Vec<RocSeries> = (50..=120).step_by(10).map(|w| series(ModelKind::Pct, "3197", w)).collect();
        let svg = render_roc_svg(&all).unwrap();
        assert_eq!(svg.matches("<polyline class=\"roc\"").count(), 8);
        for w in (50..=120).step_by(10) {
            assert_eq!(svg.matches(&format!(">WS {w}<")).count(), 1);
        }
        assert_eq!(svg, render_roc_svg(&all).unwrap());
        assert!(render_roc_svg(&[]).is_err());
    }
}
