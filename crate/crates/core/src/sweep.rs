//! Parameter-sensitivity sweeps.
//!
//! A grid names dotted scenario paths (`hae.lambda`, `hacblf.gamma`, ...)
//! with value lists, combined either as a Cartesian product or zipped
//! row-wise. A scalar assigned to a vector-valued key fills every entry.
//! Points run in parallel and rows come back in declared order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, StabilityReport};
use crate::scenario::{parse_config, ScenarioConfig};
use crate::simulation::Verdict;
use crate::trace::Trace;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("grid parse error: {0}")]
    Parse(String),
    #[error("grid has no parameters")]
    Empty,
    #[error("parameter {0} has no values")]
    NoValues(String),
    #[error("zip mode needs equal value counts, got {0:?}")]
    ZipLengths(Vec<usize>),
    #[error("path {path} does not resolve: {msg}")]
    Path { path: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Product,
    Zip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Param {
    pub path: String,
    pub values: Vec<toml::Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Increasing,
    Decreasing,
    NonDecreasing,
    NonIncreasing,
    /// Spread within `slack` of the largest magnitude.
    Insensitive,
}

/// A directional claim about one metric across the rows of a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Claim {
    pub metric: String,
    pub trend: Trend,
    /// Relative to the largest magnitude in the column.
    #[serde(default = "default_slack")]
    pub slack: f64,
}

fn default_slack() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    /// Bundled scenario name or path, used when no base config is supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<String>,
    #[serde(default)]
    pub mode: Mode,
    /// Trailing fraction of the run treated as steady state.
    #[serde(default = "default_steady")]
    pub steady_fraction: f64,
    #[serde(rename = "param")]
    pub params: Vec<Param>,
    #[serde(default, rename = "claim")]
    pub claims: Vec<Claim>,
}

fn default_steady() -> f64 {
    0.5
}

impl SweepGrid {
    pub fn parse(text: &str) -> Result<Self, SweepError> {
        let grid: SweepGrid = toml::from_str(text).map_err(|e| SweepError::Parse(e.message().to_string()))?;
        grid.check()?;
        Ok(grid)
    }

    /// Grid over a single parameter.
    pub fn single(path: &str, values: impl IntoIterator<Item = f64>) -> Self {
        Self {
            base: None,
            mode: Mode::Product,
            steady_fraction: default_steady(),
            params: vec![Param { path: path.into(), values: values.into_iter().map(toml::Value::Float).collect() }],
            claims: Vec::new(),
        }
    }

    fn check(&self) -> Result<(), SweepError> {
        if self.params.is_empty() {
            return Err(SweepError::Empty);
        }
        if let Some(p) = self.params.iter().find(|p| p.values.is_empty()) {
            return Err(SweepError::NoValues(p.path.clone()));
        }
        if self.mode == Mode::Zip {
            let lens: Vec<usize> = self.params.iter().map(|p| p.values.len()).collect();
            if lens.iter().any(|l| *l != lens[0]) {
                return Err(SweepError::ZipLengths(lens));
            }
        }
        Ok(())
    }

    /// Parameter assignments in row order.
    pub fn points(&self) -> Vec<Vec<toml::Value>> {
        match self.mode {
            Mode::Zip => (0..self.params[0].values.len())
                .map(|k| self.params.iter().map(|p| p.values[k].clone()).collect())
                .collect(),
            Mode::Product => {
                let mut out: Vec<Vec<toml::Value>> = vec![Vec::new()];
                for p in &self.params {
                    out = out
                        .into_iter()
                        .flat_map(|prefix| {
                            p.values.iter().map(move |v| {
                                let mut row = prefix.clone();
                                row.push(v.clone());
                                row
                            })
                        })
                        .collect();
                }
                out
            }
        }
    }

    /// Checks that every path resolves on `base` using the first value.
    pub fn resolve(&self, base: &ScenarioConfig) -> Result<(), SweepError> {
        self.check()?;
        for p in &self.params {
            apply(base, &[(p.path.as_str(), &p.values[0])])?;
        }
        Ok(())
    }
}

fn numeric(v: &toml::Value) -> Option<f64> {
    match v {
        toml::Value::Float(f) => Some(*f),
        toml::Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

/// Returns `base` with each dotted path replaced.
pub fn apply(base: &ScenarioConfig, assignments: &[(&str, &toml::Value)]) -> Result<ScenarioConfig, SweepError> {
    let mut doc = toml::Value::try_from(base).map_err(|e| SweepError::Parse(e.to_string()))?;
    for (path, value) in assignments {
        let err = |msg: &str| SweepError::Path { path: path.to_string(), msg: msg.to_string() };
        let keys: Vec<&str> = path.split('.').collect();
        let (last, parents) = keys.split_last().ok_or_else(|| err("empty path"))?;
        let mut node = &mut doc;
        for k in parents {
            node = node.get_mut(*k).ok_or_else(|| err(&format!("no table {k}")))?;
        }
        let table = node.as_table_mut().ok_or_else(|| err("parent is not a table"))?;
        let new = match (table.get(*last), value) {
            (Some(toml::Value::Array(old)), v) if !v.is_array() => {
                let x = numeric(v).ok_or_else(|| err("expected a number"))?;
                toml::Value::Array(vec![toml::Value::Float(x); old.len().max(1)])
            }
            (Some(toml::Value::Integer(_)), v) => (*v).clone(),
            (_, toml::Value::Integer(i)) => toml::Value::Float(*i as f64),
            (_, toml::Value::Array(items)) => {
                toml::Value::Array(items.iter().map(|v| numeric(v).map(toml::Value::Float).unwrap_or(v.clone())).collect())
            }
            (_, v) => (*v).clone(),
        };
        table.insert(last.to_string(), new);
    }
    let text = toml::to_string(&doc).map_err(|e| SweepError::Parse(e.to_string()))?;
    parse_config(&text).map_err(|e| SweepError::Path {
        path: assignments.iter().map(|(p, _)| *p).collect::<Vec<_>>().join(","),
        msg: e.to_string(),
    })
}

/// Measured quantities of one grid point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metrics {
    pub fitted_decay: f64,
    pub fitted_decay_bar: f64,
    pub sup_e_steady: f64,
    pub sup_ebar_steady: f64,
    /// Largest `Σ log(o²/Q)` over the steady window.
    pub barrier_steady: f64,
    /// Mean of `Σ log(o²/Q)` over the steady window.
    pub barrier_steady_mean: f64,
    pub sup_fstar_n: f64,
    pub sup_e_n: f64,
    pub sup_u: f64,
    pub sup_delta_u: f64,
    pub violations: usize,
    pub rho_ob: f64,
    pub ell_ob: f64,
    pub rho_cont: f64,
    pub ell_cont: f64,
    pub rho_all: f64,
    pub ell_all: f64,
}

pub const METRICS: [&str; 17] = [
    "fitted_decay",
    "fitted_decay_bar",
    "sup_e_steady",
    "sup_ebar_steady",
    "barrier_steady",
    "barrier_steady_mean",
    "sup_fstar_n",
    "sup_e_n",
    "sup_u",
    "sup_delta_u",
    "violations",
    "rho_ob",
    "ell_ob",
    "rho_cont",
    "ell_cont",
    "rho_all",
    "ell_all",
];

impl Metrics {
    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "fitted_decay" => self.fitted_decay,
            "fitted_decay_bar" => self.fitted_decay_bar,
            "sup_e_steady" => self.sup_e_steady,
            "sup_ebar_steady" => self.sup_ebar_steady,
            "barrier_steady" => self.barrier_steady,
            "barrier_steady_mean" => self.barrier_steady_mean,
            "sup_fstar_n" => self.sup_fstar_n,
            "sup_e_n" => self.sup_e_n,
            "sup_u" => self.sup_u,
            "sup_delta_u" => self.sup_delta_u,
            "violations" => self.violations as f64,
            "rho_ob" => self.rho_ob,
            "ell_ob" => self.ell_ob,
            "rho_cont" => self.rho_cont,
            "ell_cont" => self.ell_cont,
            "rho_all" => self.rho_all,
            "ell_all" => self.ell_all,
            _ => return None,
        })
    }

    pub fn measure(trace: &Trace, report: &StabilityReport, steady_fraction: f64) -> Self {
        let n = trace.n;
        let (t0, t1) = match (trace.records.first(), trace.records.last()) {
            (Some(a), Some(b)) => (a.t, b.t),
            _ => return Self::default(),
        };
        let cut = t1 - steady_fraction * (t1 - t0);
        let steady: Vec<_> = trace.records.iter().filter(|r| r.t >= cut).collect();
        let sup = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0, f64::max);
        let barrier: Vec<f64> =
            steady.iter().map(|r| analysis::barrier_sum(&r.e_bar, &r.o).unwrap_or(f64::INFINITY)).collect();
        Self {
            fitted_decay: report.fitted_decay,
            fitted_decay_bar: report.fitted_decay_bar,
            sup_e_steady: sup(&mut steady.iter().map(|r| r.e.iter().map(|e| e * e).sum::<f64>().sqrt())),
            sup_ebar_steady: sup(&mut steady.iter().flat_map(|r| r.e_bar.iter().map(|e| e.abs()))),
            barrier_steady: sup(&mut barrier.iter().copied()),
            barrier_steady_mean: if barrier.is_empty() { 0.0 } else { barrier.iter().sum::<f64>() / barrier.len() as f64 },
            sup_fstar_n: sup(&mut trace.records.iter().map(|r| r.f_star[n - 1].abs())),
            sup_e_n: sup(&mut trace.records.iter().map(|r| r.e[n - 1].abs())),
            sup_u: sup(&mut trace.records.iter().map(|r| r.u_sat.abs())),
            sup_delta_u: report.sup_delta_u,
            violations: report.violations.len(),
            rho_ob: report.rho_ob,
            ell_ob: report.ell_ob,
            rho_cont: report.rho_cont,
            ell_cont: report.ell_cont,
            rho_all: report.rho_all,
            ell_all: report.ell_all,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub values: Vec<toml::Value>,
    /// `completed`, a failure verdict, or `invalid: ...`.
    pub verdict: String,
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub paths: Vec<String>,
    pub rows: Vec<SweepRow>,
}

fn value_text(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        v => v.to_string(),
    }
}

impl SweepTable {
    pub fn column(&self, metric: &str) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.metrics.as_ref().and_then(|m| m.get(metric))).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        let mut head = vec!["index".to_string()];
        head.extend(self.paths.iter().cloned());
        head.push("verdict".into());
        head.extend(METRICS.iter().map(|s| s.to_string()));
        out.write_record(&head)?;
        for (k, r) in self.rows.iter().enumerate() {
            let mut rec = vec![k.to_string()];
            rec.extend(r.values.iter().map(value_text));
            rec.push(r.verdict.clone());
            for m in METRICS {
                rec.push(r.metrics.as_ref().and_then(|x| x.get(m)).map(|v| format!("{v:e}")).unwrap_or_default());
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8 output")
    }
}

fn run_point(base: &ScenarioConfig, grid: &SweepGrid, values: &[toml::Value]) -> SweepRow {
    let assignments: Vec<(&str, &toml::Value)> =
        grid.params.iter().map(|p| p.path.as_str()).zip(values.iter()).collect();
    let invalid = |msg: String| SweepRow { values: values.to_vec(), verdict: format!("invalid: {msg}"), metrics: None };
    let cfg = match apply(base, &assignments) {
        Ok(c) => c,
        Err(e) => return invalid(e.to_string()),
    };
    let sim = match cfg.build() {
        Ok(s) => s,
        Err(errs) => return invalid(errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")),
    };
    let outcome = sim.run();
    let metrics = analysis::analyze_scenario(&outcome.trace, &cfg).ok().map(|rep| {
        let mut m = Metrics::measure(&outcome.trace, &rep, grid.steady_fraction);
        if let Verdict::EnvelopeViolation { .. } = outcome.verdict {
            m.violations += 1;
        }
        m
    });
    SweepRow { values: values.to_vec(), verdict: outcome.verdict.to_string(), metrics }
}

/// One run and analysis per grid point, in declared order. Failing points
/// become rows with their verdicts.
pub fn sweep(base: &ScenarioConfig, grid: &SweepGrid) -> Result<SweepTable, SweepError> {
    grid.resolve(base)?;
    let rows = grid.points().par_iter().map(|values| run_point(base, grid, values)).collect();
    Ok(SweepTable { paths: grid.params.iter().map(|p| p.path.clone()).collect(), rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendVerdict {
    pub claim: Claim,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for TrendVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {} {:?}: {}", self.claim.metric, self.claim.trend, self.detail)
    }
}

/// Checks one claim against a column of values in row order.
pub fn check_trend(values: &[f64], trend: Trend, slack: f64) -> (bool, String) {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return (false, format!("missing or non-finite values {values:?}"));
    }
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = slack * scale;
    let steps = || values.windows(2).map(|w| w[1] - w[0]);
    let first_last = values[values.len() - 1] - values[0];
    let ok = match trend {
        Trend::NonDecreasing => steps().all(|d| d >= -tol),
        Trend::NonIncreasing => steps().all(|d| d <= tol),
        Trend::Increasing => steps().all(|d| d >= -tol) && first_last > tol,
        Trend::Decreasing => steps().all(|d| d <= tol) && -first_last > tol,
        Trend::Insensitive => {
            let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
            hi - lo <= tol
        }
    };
    (ok, format!("{values:?}"))
}

/// One verdict per claim. A claim fails if any row did not complete.
pub fn trend_report(table: &SweepTable, claims: &[Claim]) -> Vec<TrendVerdict> {
    claims
        .iter()
        .map(|c| {
            let col = table.column(&c.metric);
            let failed: Vec<usize> = table.rows.iter().enumerate().filter(|(_, r)| r.verdict != "completed").map(|(k, _)| k).collect();
            let (passed, detail) = if !failed.is_empty() {
                (false, format!("rows {failed:?} did not complete"))
            } else if col.iter().any(Option::is_none) {
                (false, format!("metric {} unavailable for some rows", c.metric))
            } else {
                let v: Vec<f64> = col.into_iter().flatten().collect();
                check_trend(&v, c.trend, c.slack)
            };
            TrendVerdict { claim: c.clone(), passed, detail }
        })
        .collect()
}
