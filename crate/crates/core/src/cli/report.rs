//! Report files: JSON, CSV tables, line-delimited traces and a static SVG
//! loss plot.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::checkpoint::write_atomic;
use crate::bench::EvalReport;
use crate::error::{Error, Result};
use crate::solvers::TraceRecord;

/// One line of a summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dim: usize,
    pub method: String,
    pub split: String,
    pub uvp_fwd: f64,
    pub uvp_inv: f64,
    pub cs_fwd: f64,
    pub cs_inv: f64,
    pub n_eval: usize,
    pub seed: u64,
    pub train_time_s: f64,
}

impl ReportRow {
    pub fn new(dim: usize, method: &str, split: &str, r: &EvalReport, train_time_s: f64) -> Self {
        Self {
            dim,
            method: method.into(),
            split: split.into(),
            uvp_fwd: r.uvp_fwd,
            uvp_inv: r.uvp_inv,
            cs_fwd: r.cs_fwd,
            cs_inv: r.cs_inv,
            n_eval: r.n_eval,
            seed: r.seed,
            train_time_s,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Config(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_atomic(path, csv_string(rows)?.as_bytes())
}

pub fn trace_lines(trace: &[TraceRecord]) -> String {
    let mut s = String::new();
    for r in trace {
        let _ = writeln!(s, "{}", serde_json::to_string(r).expect("trace records serialize"));
    }
    s
}

pub fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    write_atomic(path, trace_lines(trace).as_bytes())
}

pub fn read_trace(text: &str) -> Result<Vec<TraceRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Config(format!("bad trace line: {e}"))))
        .collect()
}

/// Per-iteration mean of `(loss_fwd + loss_inv) / 2` over pairs.
fn curve(trace: &[TraceRecord]) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64, usize)> = Vec::new();
    for r in trace {
        let v = 0.5 * (r.loss_fwd + r.loss_inv);
        match out.last_mut() {
            Some(last) if last.0 == r.iteration => {
                last.1 += v;
                last.2 += 1;
            }
            _ => out.push((r.iteration, v, 1)),
        }
    }
    out.into_iter().map(|(i, s, n)| (i, s / n as f64)).collect()
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Loss curves, one polyline per named trace.
pub fn svg_plot(series: &[(String, Vec<TraceRecord>)]) -> String {
    let (w, h, pad) = (640.0, 360.0, 40.0);
    let curves: Vec<_> = series.iter().map(|(n, t)| (n, curve(t))).collect();
    let pts = curves.iter().flat_map(|(_, c)| c.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(i, v) in pts {
        x0 = x0.min(i as f64);
        x1 = x1.max(i as f64);
        y0 = y0.min(v);
        y1 = y1.max(v);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{pad}\" y=\"20\" font-size=\"12\">loss, iterations {x0}..{x1}, range {y0:.4}..{y1:.4}</text>\n"
    );
    for (k, (name, c)) in curves.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = c
            .iter()
            .map(|&(i, v)| format!("{:.1},{:.1}", sx(i as f64), sy(v)))
            .collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1\" points=\"{}\"/>",
            path.join(" ")
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{color}\">{}</text>",
            w - 160.0,
            40.0 + 14.0 * k as f64,
            name.replace('&', "&amp;").replace('<', "&lt;")
        );
    }
    s.push_str("</svg>\n");
    s
}
