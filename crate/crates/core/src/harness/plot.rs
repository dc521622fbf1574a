//! Self-contained SVG and long-format CSV output for transition curves.

use std::fmt::Write as _;

use super::TransitionCurve;
use crate::problem_io::fmt_real;
use crate::{Error, Result};

/// One labelled set of fitted curves, drawn as a polyline with error bars.
#[derive(Debug, Clone)]
pub struct PlotSeries {
    pub label: String,
    pub curves: Vec<TransitionCurve>,
}

/// An externally supplied `(delta, rho)` curve drawn dashed without bars.
#[derive(Debug, Clone)]
pub struct ReferenceCurve {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn px(delta: f64) -> f64 {
    MARGIN + delta.clamp(0.0, 1.0) * (WIDTH - 2.0 * MARGIN)
}

fn py(rho: f64) -> f64 {
    HEIGHT - MARGIN - rho.clamp(0.0, 1.0) * (HEIGHT - 2.0 * MARGIN)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders the transition plane with `delta` on x and `rho` on y.
pub fn render_svg(series: &[PlotSeries], references: &[ReferenceCurve]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">
<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let (x0, x1, y0, y1) = (px(0.0), px(1.0), py(0.0), py(1.0));
    let _ = writeln!(
        s,
        r#"<g stroke="black" stroke-width="1" fill="none"><rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}"/></g>"#,
        x1 - x0,
        y0 - y1
    );
    let _ = writeln!(s, r#"<g font-family="sans-serif" font-size="11" fill="black">"#);
    for i in 0..=10 {
        let t = i as f64 / 10.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{t:.1}</text><text x="{:.2}" y="{:.2}" text-anchor="end">{t:.1}</text>"#,
            px(t),
            y0 + 16.0,
            x0 - 6.0,
            py(t) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">delta = m/n</text><text x="16" y="{:.2}" transform="rotate(-90 16 {:.2})" text-anchor="middle">rho = k/m</text></g>"#,
        0.5 * (x0 + x1),
        HEIGHT - 16.0,
        0.5 * (y0 + y1),
        0.5 * (y0 + y1)
    );

    for r in references {
        let pts: Vec<String> = r
            .points
            .iter()
            .map(|&(d, p)| format!("{:.2},{:.2}", px(d), py(p)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="reference" data-label="{}" points="{}" fill="none" stroke="gray" stroke-dasharray="6 4" stroke-width="1.5"/>"#,
            escape(&r.label),
            pts.join(" ")
        );
    }

    for (i, series) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let mut curves = series.curves.clone();
        curves.sort_by(|a, b| a.delta.total_cmp(&b.delta));
        let pts: Vec<String> = curves
            .iter()
            .map(|c| format!("{:.2},{:.2}", px(c.delta), py(c.rho_50)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-label="{}" points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            escape(&series.label),
            pts.join(" ")
        );
        let _ = writeln!(s, r#"<g stroke="{colour}" stroke-width="1">"#);
        for c in &curves {
            let x = px(c.delta);
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}"/>"#,
                py(c.rho_90),
                py(c.rho_10)
            );
        }
        let _ = writeln!(s, "</g>");
    }

    let legend = series
        .iter()
        .enumerate()
        .map(|(i, se)| (se.label.as_str(), PALETTE[i % PALETTE.len()]))
        .chain(references.iter().map(|r| (r.label.as_str(), "gray")));
    let _ = writeln!(s, r#"<g font-family="sans-serif" font-size="11">"#);
    for (i, (label, colour)) in legend.enumerate() {
        let y = y1 + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{colour}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            x1 - 150.0,
            x1 - 130.0,
            x1 - 125.0,
            y + 4.0,
            escape(label)
        );
    }
    let _ = writeln!(s, "</g>\n</svg>");
    s
}

/// Reads a `delta,rho` CSV.
pub fn parse_reference_csv(label: &str, text: &str) -> Result<ReferenceCurve> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?;
    if headers.iter().ne(["delta", "rho"]) {
        return Err(Error::Format(format!(
            "reference curve {label:?}: expected header delta,rho"
        )));
    }
    let mut points = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec[i]
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("reference curve {label:?}: bad value {:?}", &rec[i])))
        };
        points.push((parse(0)?, parse(1)?));
    }
    Ok(ReferenceCurve {
        label: label.to_string(),
        points,
    })
}

/// `series,delta,quantity,value` rows for external plotting tools.
pub fn long_format_csv(series: &[PlotSeries]) -> String {
    let mut s = String::from("series,delta,quantity,value\n");
    for se in series {
        let label = se.label.replace([',', '\n'], "_");
        for c in &se.curves {
            for (q, v) in [("rho50", c.rho_50), ("rho10", c.rho_10), ("rho90", c.rho_90)] {
                let _ = writeln!(s, "{label},{},{q},{}", fmt_real(c.delta), fmt_real(v));
            }
        }
    }
    s
}
