use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::LinearFit;
use crate::error::{Error, Result};

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 60.0;

/// What [`render_svg`] draws.
#[derive(Clone, Debug)]
pub enum Plot<'a> {
    /// Points, with the fitted line and its R² when `fit` is given.
    Scatter {
        x: &'a [f64],
        y: &'a [f64],
        fit: Option<LinearFit>,
        x_label: &'a str,
        y_label: &'a str,
    },
    /// Row-major grid of values, shaded against the grid maximum.
    Heatmap { values: &'a [f64], rows: usize, cols: usize },
    /// Named series over consecutive integer steps starting at `x0`.
    Curve {
        series: &'a [(&'a str, &'a [f64])],
        x0: usize,
        x_label: &'a str,
        y_label: &'a str,
    },
}

/// Writes `rows` with a header row; `csv` handles quoting.
pub fn emit_csv<S: Serialize>(rows: &[S], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<S: DeserializeOwned>(path: &Path) -> Result<Vec<S>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|x| x.map_err(Error::from)).collect()
}

pub fn emit_svg(plot: &Plot<'_>, title: &str, digest: &str, path: &Path) -> Result<()> {
    fs::write(path, render_svg(plot, title, digest)?)?;
    Ok(())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * MARGIN)
    }

    fn axes(&self, out: &mut String, x_label: &str, y_label: &str) {
        let (l, r, t, b) = (MARGIN, W - MARGIN, MARGIN, H - MARGIN);
        let _ = write!(
            out,
            r#"<g class="axes" stroke="black"><line x1="{l}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{l}" y1="{b}" x2="{l}" y2="{t}"/></g>"#
        );
        out.push_str(r#"<g class="ticks" font-size="10" font-family="sans-serif">"#);
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = self.x.0 + f * (self.x.1 - self.x.0);
            let yv = self.y.0 + f * (self.y.1 - self.y.0);
            let (xp, yp) = (self.px(xv), self.py(yv));
            let _ = write!(
                out,
                r#"<text x="{xp:.1}" y="{:.1}" text-anchor="middle">{xv:.3}</text><text x="{:.1}" y="{yp:.1}" text-anchor="end">{yv:.3}</text>"#,
                b + 14.0,
                l - 4.0
            );
        }
        out.push_str("</g>");
        let _ = write!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif">{}</text><text x="14" y="{:.1}" transform="rotate(-90 14 {:.1})" text-anchor="middle" font-family="sans-serif">{}</text>"#,
            W / 2.0,
            H - 16.0,
            escape(x_label),
            H / 2.0,
            H / 2.0,
            escape(y_label)
        );
    }
}

/// Self-contained SVG document; the config digest goes into `<desc>`.
pub fn render_svg(plot: &Plot<'_>, title: &str, digest: &str) -> Result<String> {
    let mut out = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}"><desc>config_digest={}</desc><rect width="100%" height="100%" fill="white"/><text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        escape(digest),
        W / 2.0,
        escape(title)
    );
    match plot {
        Plot::Scatter {
            x,
            y,
            fit,
            x_label,
            y_label,
        } => {
            if x.len() != y.len() {
                return Err(Error::dim("scatter", &[&[x.len()], &[y.len()]]));
            }
            let f = Frame {
                x: range(x.iter().copied()),
                y: range(y.iter().copied()),
            };
            f.axes(&mut out, x_label, y_label);
            out.push_str(r##"<g fill="#1f77b4" fill-opacity="0.6">"##);
            for (a, b) in x.iter().zip(y.iter()) {
                let _ = write!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5"/>"#, f.px(*a), f.py(*b));
            }
            out.push_str("</g>");
            if let Some(fit) = fit {
                let (x0, x1) = f.x;
                let _ = write!(
                    out,
                    r##"<line class="fit" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#d62728" stroke-width="2" data-slope="{}" data-intercept="{}" data-r2="{}"/>"##,
                    f.px(x0),
                    f.py(fit.intercept + fit.slope * x0),
                    f.px(x1),
                    f.py(fit.intercept + fit.slope * x1),
                    fit.slope,
                    fit.intercept,
                    fit.r2
                );
                let _ = write!(
                    out,
                    r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12">R² = {:.4}  slope = {:.4}  intercept = {:.4}</text>"#,
                    MARGIN + 8.0,
                    MARGIN + 14.0,
                    fit.r2,
                    fit.slope,
                    fit.intercept
                );
            }
        }
        Plot::Heatmap { values, rows, cols } => {
            if values.len() != rows * cols || *rows == 0 {
                return Err(Error::dim("heatmap", &[&[values.len()], &[*rows, *cols]]));
            }
            let max = values.iter().cloned().fold(0.0f64, f64::max);
            let side = ((W - 2.0 * MARGIN) / *cols as f64).min((H - 2.0 * MARGIN) / *rows as f64);
            out.push_str(r#"<g class="cells" stroke="gray" stroke-width="0.5">"#);
            for (i, v) in values.iter().enumerate() {
                let shade = if max > 0.0 { 255.0 * (1.0 - v / max) } else { 255.0 };
                let s = shade.round().clamp(0.0, 255.0) as u8;
                let _ = write!(
                    out,
                    r#"<rect x="{:.2}" y="{:.2}" width="{side:.2}" height="{side:.2}" fill="rgb({s},{s},{s})" data-value="{v}"/>"#,
                    MARGIN + (i % cols) as f64 * side,
                    MARGIN + (i / cols) as f64 * side
                );
            }
            out.push_str("</g>");
        }
        Plot::Curve {
            series,
            x0,
            x_label,
            y_label,
        } => {
            let n = series.iter().map(|s| s.1.len()).max().unwrap_or(0);
            let f = Frame {
                x: range((0..n.max(1)).map(|i| (x0 + i) as f64)),
                y: range(series.iter().flat_map(|s| s.1.iter().copied())),
            };
            f.axes(&mut out, x_label, y_label);
            const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
            for (k, (name, ys)) in series.iter().enumerate() {
                let color = COLORS[k % COLORS.len()];
                let pts: Vec<String> = ys
                    .iter()
                    .enumerate()
                    .map(|(i, y)| format!("{:.2},{:.2}", f.px((x0 + i) as f64), f.py(*y)))
                    .collect();
                let _ = write!(
                    out,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/><text x="{:.1}" y="{:.1}" fill="{color}" font-family="sans-serif" font-size="12">{}</text>"#,
                    pts.join(" "),
                    W - MARGIN - 120.0,
                    MARGIN + 14.0 * (k + 1) as f64,
                    escape(name)
                );
            }
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// 16-bit binary PGM of a row-major map, scaled to its maximum.
pub fn to_pgm(values: &[f64], width: usize, height: usize) -> Result<Vec<u8>> {
    if values.len() != width * height {
        return Err(Error::dim("pgm", &[&[values.len()], &[height, width]]));
    }
    let max = values.iter().cloned().fold(0.0f64, f64::max);
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for v in values {
        let s = if max > 0.0 { (v / max).clamp(0.0, 1.0) } else { 0.0 };
        out.extend_from_slice(&((s * 65535.0).round() as u16).to_be_bytes());
    }
    Ok(out)
}
