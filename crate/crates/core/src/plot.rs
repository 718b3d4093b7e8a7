//! SVG time plots of trace columns.
//!
//! Each requested signal gets its own panel. A signal is either a column
//! name (`ebar1`, `u_sat`) or a vector group (`ebar`, `x`) that expands to
//! all of its components. Panels of `ebar` components carry the `±o`
//! envelope as dashed lines.

use std::path::Path;

use plotters::prelude::*;
use thiserror::Error;

use crate::trace::{header, Trace};

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("no signals requested")]
    NoSignals,
    #[error("unknown signal {0}")]
    Unknown(String),
    #[error("trace is empty")]
    EmptyTrace,
    #[error("only .svg output is supported: {0}")]
    Format(String),
    #[error("drawing: {0}")]
    Draw(String),
}

/// Expands group names to column names, rejecting unknown ones.
pub fn resolve_signals(n: usize, signals: &[String]) -> Result<Vec<String>, PlotError> {
    let cols = header(n);
    let mut out = Vec::new();
    for s in signals.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
        if cols.iter().any(|c| c == s) {
            out.push(s.to_string());
            continue;
        }
        let group: Vec<String> = (1..=n).map(|i| format!("{s}{i}")).filter(|c| cols.contains(c)).collect();
        if group.len() != n {
            return Err(PlotError::Unknown(s.to_string()));
        }
        out.extend(group);
    }
    if out.is_empty() {
        return Err(PlotError::NoSignals);
    }
    Ok(out)
}

fn draw_err<E: std::fmt::Display>(e: E) -> PlotError {
    PlotError::Draw(e.to_string())
}

pub fn plot(trace: &Trace, signals: &[String], out: &Path) -> Result<(), PlotError> {
    if out.extension().and_then(|e| e.to_str()) != Some("svg") {
        return Err(PlotError::Format(out.display().to_string()));
    }
    let cols = resolve_signals(trace.n, signals)?;
    if trace.is_empty() {
        return Err(PlotError::EmptyTrace);
    }
    let t = trace.times();
    let (t0, t1) = (t[0], t[t.len() - 1].max(t[0] + f64::EPSILON));

    let root = SVGBackend::new(out, (1000, 260 * cols.len() as u32)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let panels = root.split_evenly((cols.len(), 1));
    for (panel, name) in panels.iter().zip(&cols) {
        let y = trace.column(name).expect("resolved column");
        let envelope = name.strip_prefix("ebar").map(|i| trace.column(&format!("o{i}")).expect("envelope column"));
        let (mut lo, mut hi) = y
            .iter()
            .chain(envelope.iter().flatten())
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        if let Some(o) = &envelope {
            lo = lo.min(-o.iter().cloned().fold(0.0, f64::max));
        }
        if !lo.is_finite() {
            (lo, hi) = (-1.0, 1.0);
        }
        let pad = ((hi - lo) * 0.05).max(1e-12);
        let mut chart = ChartBuilder::on(panel)
            .caption(name, ("sans-serif", 18))
            .margin(8)
            .x_label_area_size(30)
            .y_label_area_size(70)
            .build_cartesian_2d(t0..t1, (lo - pad)..(hi + pad))
            .map_err(draw_err)?;
        chart.configure_mesh().x_desc("t").draw().map_err(draw_err)?;
        chart.draw_series(LineSeries::new(t.iter().cloned().zip(y.iter().cloned()), &BLUE)).map_err(draw_err)?;
        if let Some(o) = envelope {
            for sign in [1.0, -1.0] {
                let pts: Vec<(f64, f64)> = t.iter().cloned().zip(o.iter().map(|v| sign * v)).collect();
                chart
                    .draw_series(DashedLineSeries::new(pts, 6, 4, RED.stroke_width(1)))
                    .map_err(draw_err)?;
            }
        }
    }
    root.present().map_err(draw_err)?;
    Ok(())
}
