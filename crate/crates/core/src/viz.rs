//! Plotting without a plotting framework: standalone SVG 1.1 documents for
//! mask-probability heatmaps and smoothed learning curves. Output is
//! deterministic given inputs — no timestamps, no random ids.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::metrics::MetricsRecord;
use crate::{Error, Result};

const CELL: usize = 18;
const MARGIN: usize = 46;

/// A probability matrix destined for a grayscale heatmap; darker cells mean
/// higher probability.
#[derive(Debug, Clone)]
pub struct HeatmapSpec {
    pub matrix: Vec<Vec<f64>>,
    pub row_label: String,
    pub col_label: String,
    pub title: String,
}

impl HeatmapSpec {
    fn validate(&self) -> Result<()> {
        if self.matrix.is_empty() || self.matrix[0].is_empty() {
            return Err(Error::usage("heatmap needs a non-empty matrix".to_string()));
        }
        let cols = self.matrix[0].len();
        for row in &self.matrix {
            if row.len() != cols {
                return Err(Error::usage("heatmap rows are ragged".to_string()));
            }
            for &p in row {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::usage(format!("heatmap cell {p} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }
}

/// Render a heatmap: one rect per cell with grayscale value `255·(1 − p)`,
/// axis tick labels every 5 cells.
pub fn heatmap_svg(spec: &HeatmapSpec) -> Result<String> {
    spec.validate()?;
    let rows = spec.matrix.len();
    let cols = spec.matrix[0].len();
    let width = 2 * MARGIN + cols * CELL;
    let height = 2 * MARGIN + rows * CELL;
    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg version="1.1" xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = write!(
        svg,
        r#"<text x="{}" y="18" text-anchor="middle" font-family="monospace" font-size="12">{}</text>"#,
        width / 2,
        spec.title
    );
    for (r, row) in spec.matrix.iter().enumerate() {
        for (c, &p) in row.iter().enumerate() {
            let v = (255.0 * (1.0 - p)).round() as u8;
            let x = MARGIN + c * CELL;
            let y = MARGIN + r * CELL;
            let _ = write!(
                svg,
                r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="rgb({v},{v},{v})" stroke="#cccccc" stroke-width="0.5"/>"##
            );
        }
    }
    for c in (0..cols).step_by(5) {
        let x = MARGIN + c * CELL + CELL / 2;
        let y = MARGIN + rows * CELL + 14;
        let _ = write!(
            svg,
            r#"<text x="{x}" y="{y}" text-anchor="middle" font-family="monospace" font-size="9">{c}</text>"#
        );
    }
    for r in (0..rows).step_by(5) {
        let x = MARGIN - 6;
        let y = MARGIN + r * CELL + CELL / 2 + 3;
        let _ = write!(
            svg,
            r#"<text x="{x}" y="{y}" text-anchor="end" font-family="monospace" font-size="9">{r}</text>"#
        );
    }
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="monospace" font-size="10">{}</text>"#,
        width / 2,
        height - 8,
        spec.col_label
    );
    let _ = write!(
        svg,
        r#"<text x="12" y="{}" text-anchor="middle" font-family="monospace" font-size="10" transform="rotate(-90 12 {})">{}</text>"#,
        height / 2,
        height / 2,
        spec.row_label
    );
    svg.push_str("</svg>");
    Ok(svg)
}

pub fn emit_heatmap_svg(spec: &HeatmapSpec, path: &Path) -> Result<()> {
    let svg = heatmap_svg(spec)?;
    fs::write(path, svg)?;
    Ok(())
}

/// Exponential moving average with the effective window of the trailing
/// `window` points (decay `2 / (window + 1)`), seeded at the first value.
pub fn ema_smooth(values: &[f64], window: usize) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let k = 2.0 / (window as f64 + 1.0);
    let mut out = Vec::with_capacity(values.len());
    let mut s = values[0];
    out.push(s);
    for &v in &values[1..] {
        s = (1.0 - k) * s + k * v;
        out.push(s);
    }
    out
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1000.0 || v.abs() < 0.01 {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

/// Learning-curve plot: smoothed average accumulative reward against env
/// steps. A single record renders as a lone marker.
pub fn learning_curve_svg(records: &[MetricsRecord], window: usize) -> Result<String> {
    if records.is_empty() {
        return Err(Error::usage("learning curve needs at least one record".to_string()));
    }
    let steps: Vec<f64> = records.iter().map(|r| r.step as f64).collect();
    let raw: Vec<f64> = records.iter().map(|r| r.avg_return).collect();
    let smooth = ema_smooth(&raw, window);

    let (w, h) = (560usize, 320usize);
    let (ml, mr, mt, mb) = (64usize, 16usize, 24usize, 40usize);
    let x_min = steps.first().copied().unwrap();
    let x_max = steps.last().copied().unwrap().max(x_min + 1.0);
    let y_min = smooth.iter().copied().fold(f64::INFINITY, f64::min);
    let y_max = smooth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (y_min, y_max) = if (y_max - y_min).abs() < 1e-12 {
        (y_min - 1.0, y_max + 1.0)
    } else {
        (y_min, y_max)
    };
    let px = |x: f64| ml as f64 + (x - x_min) / (x_max - x_min) * (w - ml - mr) as f64;
    let py = |y: f64| (h - mb) as f64 - (y - y_min) / (y_max - y_min) * (h - mt - mb) as f64;

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg version="1.1" xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = write!(
        svg,
        r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/><line x1="{ml}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{ml}" y1="{mt}" x2="{ml}" y2="{}" stroke="black"/>"#,
        h - mb,
        w - mr,
        h - mb,
        h - mb
    );
    if records.len() == 1 {
        let _ = write!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="steelblue"/>"#,
            px(steps[0]),
            py(smooth[0])
        );
    } else {
        let mut points = String::new();
        for (x, y) in steps.iter().zip(&smooth) {
            let _ = write!(points, "{:.2},{:.2} ", px(*x), py(*y));
        }
        let _ = write!(
            svg,
            r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#,
            points.trim_end()
        );
    }
    for frac in [0.0, 0.5, 1.0] {
        let xv = x_min + frac * (x_max - x_min);
        let yv = y_min + frac * (y_max - y_min);
        let _ = write!(
            svg,
            r#"<text x="{:.2}" y="{}" text-anchor="middle" font-family="monospace" font-size="10">{}</text>"#,
            px(xv),
            h - mb + 16,
            fmt_tick(xv)
        );
        let _ = write!(
            svg,
            r#"<text x="{}" y="{:.2}" text-anchor="end" font-family="monospace" font-size="10">{}</text>"#,
            ml - 6,
            py(yv) + 3.0,
            fmt_tick(yv)
        );
    }
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="monospace" font-size="11">env steps</text><text x="16" y="{}" text-anchor="middle" font-family="monospace" font-size="11" transform="rotate(-90 16 {})">avg return</text>"#,
        (w + ml - mr) / 2,
        h - 8,
        h / 2,
        h / 2
    );
    svg.push_str("</svg>");
    Ok(svg)
}

pub fn emit_learning_curve_svg(
    records: &[MetricsRecord],
    window: usize,
    path: &Path,
) -> Result<()> {
    let svg = learning_curve_svg(records, window)?;
    fs::write(path, svg)?;
    Ok(())
}

/// Two-series step plot comparing decomposed rewards against the grounded
/// rewards along one rollout.
pub fn reward_comparison_svg(decomposed: &[f64], grounded: &[f64]) -> Result<String> {
    if decomposed.is_empty() || decomposed.len() != grounded.len() {
        return Err(Error::usage("reward comparison needs equal-length series".to_string()));
    }
    let (w, h) = (560usize, 320usize);
    let (ml, mr, mt, mb) = (64usize, 16usize, 24usize, 40usize);
    let n = decomposed.len();
    let all: Vec<f64> = decomposed.iter().chain(grounded).copied().collect();
    let y_min = all.iter().copied().fold(f64::INFINITY, f64::min);
    let y_max = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (y_min, y_max) = if (y_max - y_min).abs() < 1e-12 {
        (y_min - 1.0, y_max + 1.0)
    } else {
        (y_min, y_max)
    };
    let px = |i: usize| ml as f64 + i as f64 / (n - 1).max(1) as f64 * (w - ml - mr) as f64;
    let py = |y: f64| (h - mb) as f64 - (y - y_min) / (y_max - y_min) * (h - mt - mb) as f64;

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg version="1.1" xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = write!(
        svg,
        r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/><line x1="{ml}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{ml}" y1="{mt}" x2="{ml}" y2="{}" stroke="black"/>"#,
        h - mb,
        w - mr,
        h - mb,
        h - mb
    );
    for (series, color, dash) in
        [(decomposed, "steelblue", "none"), (grounded, "crimson", "4 3")]
    {
        let mut points = String::new();
        for (i, y) in series.iter().enumerate() {
            let _ = write!(points, "{:.2},{:.2} ", px(i), py(*y));
        }
        let _ = write!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-dasharray="{dash}" stroke-width="1.5" points="{}"/>"#,
            points.trim_end()
        );
    }
    let _ = write!(
        svg,
        r#"<text x="{}" y="16" font-family="monospace" font-size="10" fill="steelblue">decomposed</text><text x="{}" y="16" font-family="monospace" font-size="10" fill="crimson">grounded</text>"#,
        ml,
        ml + 110
    );
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="monospace" font-size="11">step</text>"#,
        (w + ml - mr) / 2,
        h - 8
    );
    svg.push_str("</svg>");
    Ok(svg)
}
