//! Offline Lyapunov monitors over a recorded [`Trace`].
//!
//! Every decay rate `ρ` and uncertainty level `ℓ` comes from the closed-loop
//! stability proofs with the free constants of [`FreeConstants`]; the
//! checks then verify the proved inequalities sample by sample.

use thiserror::Error;

use crate::hacblf::{HacBlfConfig, Q_GUARD};
use crate::hae::HaeConfig;
use crate::scenario::{ConfigError, ScenarioConfig};
use crate::trace::{Record, Trace};

/// Floor below which samples are excluded from decay fits.
pub const FIT_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("positivity condition fails in subsystem {subsystem}: {detail}")]
    Positivity { subsystem: usize, detail: String },
    #[error("envelope violation in subsystem {subsystem}: e_bar = {e_bar} vs o = {o}")]
    Envelope { subsystem: usize, e_bar: f64, o: f64 },
    #[error("trace has order {trace}, configuration has order {config}")]
    Order { trace: usize, config: usize },
    #[error("empty trace")]
    Empty,
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Young's-inequality splits used in the proofs: `δ_i`, `ζ_i` for the
/// estimator and `v_n` for the saturation deficit.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeConstants {
    pub delta: Vec<f64>,
    pub zeta: Vec<f64>,
    pub v_n: f64,
}

impl FreeConstants {
    /// `δ_i = ζ_i = λ_i/4`, `v_n = γ_n/2`.
    pub fn defaults(hae: &HaeConfig, ctl: &HacBlfConfig) -> Self {
        let quarter: Vec<f64> = hae.lambda.iter().map(|l| l / 4.0).collect();
        Self { delta: quarter.clone(), zeta: quarter, v_n: ctl.gamma.last().copied().unwrap_or(0.0) / 2.0 }
    }

    pub fn check(&self, hae: &HaeConfig, ctl: &HacBlfConfig) -> Result<(), AnalysisError> {
        let n = hae.lambda.len();
        for i in 0..n {
            let (d, z) = (self.delta[i], self.zeta[i]);
            if !(d > 0.0 && z > 0.0) {
                return Err(AnalysisError::Positivity {
                    subsystem: i + 1,
                    detail: format!("need delta, zeta > 0, got {d}, {z}"),
                });
            }
            if !(hae.lambda[i] > d + z) {
                return Err(AnalysisError::Positivity {
                    subsystem: i + 1,
                    detail: format!("need lambda > delta + zeta, got {} <= {}", hae.lambda[i], d + z),
                });
            }
        }
        let gamma_n = ctl.gamma[ctl.gamma.len() - 1];
        if !(self.v_n > 0.0 && gamma_n > self.v_n) {
            return Err(AnalysisError::Positivity {
                subsystem: ctl.gamma.len(),
                detail: format!("need gamma_n > v_n > 0, got gamma_n = {gamma_n}, v_n = {}", self.v_n),
            });
        }
        Ok(())
    }
}

pub fn v_ob(e: &[f64], psi: &[f64]) -> f64 {
    e.iter().zip(psi).map(|(e, p)| 0.5 * (e * e + p * p)).sum()
}

/// `Σ log(o_i²/Q_i)`; fails outside an envelope.
pub fn barrier_sum(e_bar: &[f64], o: &[f64]) -> Result<f64, AnalysisError> {
    let mut s = 0.0;
    for (i, (&e, &o)) in e_bar.iter().zip(o).enumerate() {
        let q = o * o - e * e;
        if e.abs() >= o || !(q > 0.0) {
            return Err(AnalysisError::Envelope { subsystem: i + 1, e_bar: e, o });
        }
        s += (o * o / q).ln();
    }
    Ok(s)
}

pub fn v_cont(e_bar: &[f64], o: &[f64], theta: &[f64]) -> Result<f64, AnalysisError> {
    let theta_part: f64 = theta.iter().map(|t| 0.5 * t * t).sum();
    Ok(0.5 * barrier_sum(e_bar, o)? + theta_part)
}

pub fn v_all(e: &[f64], psi: &[f64], e_bar: &[f64], o: &[f64], theta: &[f64]) -> Result<f64, AnalysisError> {
    Ok(v_ob(e, psi) + v_cont(e_bar, o, theta)?)
}

/// `s_i = e_i e_{i+1}`.
pub fn connectors(e: &[f64]) -> Vec<f64> {
    e.windows(2).map(|w| w[0] * w[1]).collect()
}

/// `s̄_i = (ē_i / Q_i) ē_{i+1}`.
pub fn connectors_bar(e_bar: &[f64], q: &[f64]) -> Vec<f64> {
    e_bar.windows(2).zip(q).map(|(w, q)| w[0] / q * w[1]).collect()
}

/// Per-subsystem share of the connector terms in `V̇`: subsystem `i` gains
/// `+s_i` and subsystem `i+1` loses it.
pub fn connector_contributions(s: &[f64]) -> Vec<f64> {
    let n = s.len() + 1;
    (0..n)
        .map(|i| {
            let plus = if i < n - 1 { s[i] } else { 0.0 };
            let minus = if i > 0 { s[i - 1] } else { 0.0 };
            plus - minus
        })
        .collect()
}

/// Sum of [`connector_contributions`]; zero up to rounding.
pub fn telescoped_sum(s: &[f64]) -> f64 {
    connector_contributions(s).iter().sum()
}

fn check_order(trace: &Trace, n: usize) -> Result<(), AnalysisError> {
    if trace.is_empty() {
        return Err(AnalysisError::Empty);
    }
    if trace.n != n {
        return Err(AnalysisError::Order { trace: trace.n, config: n });
    }
    Ok(())
}

/// Instantaneous `Σ d_i*²/(2δ_i) + Γ_i²/(2ζ_i)`.
pub fn ell_ob_at(r: &Record, c: &FreeConstants) -> f64 {
    (0..r.d_star.len())
        .map(|i| r.d_star[i].powi(2) / (2.0 * c.delta[i]) + r.gamma[i].powi(2) / (2.0 * c.zeta[i]))
        .sum()
}

/// Instantaneous `Δ_u² / (2 v_n Q_n)`.
pub fn ell_cont_at(r: &Record, c: &FreeConstants) -> f64 {
    let n = r.e_bar.len();
    let q = r.o[n - 1].powi(2) - r.e_bar[n - 1].powi(2);
    if r.delta_u == 0.0 {
        0.0
    } else {
        r.delta_u.powi(2) / (2.0 * c.v_n * q)
    }
}

/// `ρ_ob = min_i{λ_i − δ_i − ζ_i, 2β_i}`, `ℓ_ob` the sup of [`ell_ob_at`].
pub fn decay_params_ob(cfg: &HaeConfig, c: &FreeConstants, trace: &Trace) -> Result<(f64, f64), AnalysisError> {
    let n = cfg.lambda.len();
    check_order(trace, n)?;
    let mut rho = f64::INFINITY;
    for i in 0..n {
        let r = cfg.lambda[i] - c.delta[i] - c.zeta[i];
        if !(r > 0.0) || !(c.delta[i] > 0.0) || !(c.zeta[i] > 0.0) || !(cfg.beta[i] > 0.0) {
            return Err(AnalysisError::Positivity {
                subsystem: i + 1,
                detail: format!("lambda - delta - zeta = {r}, beta = {}", cfg.beta[i]),
            });
        }
        rho = rho.min(r).min(2.0 * cfg.beta[i]);
    }
    let ell = trace.records.iter().map(|r| ell_ob_at(r, c)).fold(0.0, f64::max);
    Ok((rho, ell))
}

/// `ρ̄ = min_i{γ_i − v_i, 2κ_i}` with `v_i = 0` below `n`; `ℓ̄` the sup of
/// [`ell_cont_at`].
pub fn decay_params_cont(cfg: &HacBlfConfig, c: &FreeConstants, trace: &Trace) -> Result<(f64, f64), AnalysisError> {
    let n = cfg.gamma.len();
    check_order(trace, n)?;
    let mut rho = f64::INFINITY;
    for i in 0..n {
        let v = if i + 1 == n { c.v_n } else { 0.0 };
        let r = cfg.gamma[i] - v;
        if !(r > 0.0) || !(cfg.kappa[i] > 0.0) || (i + 1 == n && !(c.v_n > 0.0)) {
            return Err(AnalysisError::Positivity {
                subsystem: i + 1,
                detail: format!("gamma - v = {r}, kappa = {}, v_n = {}", cfg.kappa[i], c.v_n),
            });
        }
        rho = rho.min(r).min(2.0 * cfg.kappa[i]);
    }
    let ell = trace.records.iter().map(|r| ell_cont_at(r, c)).fold(0.0, f64::max);
    Ok((rho, ell))
}

/// Inequality slack: `lhs ≤ rhs + abs + rel·|rhs|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { abs: 1e-6, rel: 1e-3 }
    }
}

impl Tolerance {
    pub fn holds(&self, lhs: f64, rhs: f64) -> bool {
        lhs <= rhs + self.abs + self.rel * rhs.abs()
    }
}

fn fraction(ok: usize, total: usize) -> f64 {
    if total == 0 {
        1.0
    } else {
        ok as f64 / total as f64
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Fraction of samples with
/// `‖e(t)‖ ≤ √(2V_ob(t₀)) e^{−ρ(t−t₀)/2} + √(2ℓ/ρ)`.
pub fn check_bound_ob(trace: &Trace, rho: f64, ell: f64) -> f64 {
    let Some(first) = trace.records.first() else { return 1.0 };
    let tol = Tolerance::default();
    let v0 = v_ob(&first.e, &first.psi);
    let radius = (2.0 * ell / rho).sqrt();
    let ok = trace
        .records
        .iter()
        .filter(|r| {
            let rhs = (2.0 * v0).sqrt() * (-rho * (r.t - first.t) / 2.0).exp() + radius;
            tol.holds(norm(&r.e), rhs)
        })
        .count();
    fraction(ok, trace.len())
}

/// Fraction of samples with
/// `Σ log(o²/Q) ≤ 2V̄(t₀) e^{−ρ̄(t−t₀)} + 2ℓ̄/ρ̄`; samples outside an envelope fail.
pub fn check_bound_cont(trace: &Trace, rho: f64, ell: f64) -> f64 {
    let Some(first) = trace.records.first() else { return 1.0 };
    let Ok(v0) = v_cont(&first.e_bar, &first.o, &first.theta) else { return 0.0 };
    let tol = Tolerance::default();
    let ok = trace
        .records
        .iter()
        .filter(|r| match barrier_sum(&r.e_bar, &r.o) {
            Ok(lhs) => tol.holds(lhs, 2.0 * v0 * (-rho * (r.t - first.t)).exp() + 2.0 * ell / rho),
            Err(_) => false,
        })
        .count();
    fraction(ok, trace.len())
}

/// Fraction of samples with
/// `Σ e_i² + log(o_i²/Q_i) ≤ 2V_all(t₀) e^{−ρ(t−t₀)} + 2ℓ/ρ` (un-rooted form).
pub fn check_bound_all(trace: &Trace, rho: f64, ell: f64) -> f64 {
    let Some(first) = trace.records.first() else { return 1.0 };
    let Ok(v0) = v_all(&first.e, &first.psi, &first.e_bar, &first.o, &first.theta) else { return 0.0 };
    let tol = Tolerance::default();
    let ok = trace
        .records
        .iter()
        .filter(|r| match barrier_sum(&r.e_bar, &r.o) {
            Ok(log) => {
                let lhs = r.e.iter().map(|e| e * e).sum::<f64>() + log;
                tol.holds(lhs, 2.0 * v0 * (-rho * (r.t - first.t)).exp() + 2.0 * ell / rho)
            }
            Err(_) => false,
        })
        .count();
    fraction(ok, trace.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monitor {
    Ob,
    Cont,
    All,
}

impl Monitor {
    pub fn value(&self, r: &Record) -> Result<f64, AnalysisError> {
        match self {
            Monitor::Ob => Ok(v_ob(&r.e, &r.psi)),
            Monitor::Cont => v_cont(&r.e_bar, &r.o, &r.theta),
            Monitor::All => v_all(&r.e, &r.psi, &r.e_bar, &r.o, &r.theta),
        }
    }

    pub fn ell(&self, r: &Record, c: &FreeConstants) -> f64 {
        match self {
            Monitor::Ob => ell_ob_at(r, c),
            Monitor::Cont => ell_cont_at(r, c),
            Monitor::All => ell_ob_at(r, c) + ell_cont_at(r, c),
        }
    }
}

/// Fraction of interior samples where the central-difference `V̇` satisfies
/// `V̇ ≤ −ρV + ℓ(t)`. `ℓ(t)` is the largest instantaneous value over the
/// three-point stencil.
pub fn check_lyapunov_rate(trace: &Trace, rho: f64, which: Monitor, c: &FreeConstants) -> f64 {
    let r = &trace.records;
    if r.len() < 3 {
        return 1.0;
    }
    let tol = Tolerance::default();
    let v: Vec<Option<f64>> = r.iter().map(|rec| which.value(rec).ok()).collect();
    let ell: Vec<f64> = r.iter().map(|rec| which.ell(rec, c)).collect();
    let ok = (1..r.len() - 1)
        .filter(|&k| match (v[k - 1], v[k], v[k + 1]) {
            (Some(a), Some(b), Some(z)) => {
                let v_dot = (z - a) / (r[k + 1].t - r[k - 1].t);
                let ell_k = ell[k - 1].max(ell[k]).max(ell[k + 1]);
                tol.holds(v_dot, -rho * b + ell_k)
            }
            _ => false,
        })
        .count();
    fraction(ok, r.len() - 2)
}

/// Exponential decay rate: the negated least-squares slope of `ln(value)`
/// against `t`, over samples above [`FIT_FLOOR`].
pub fn fit_decay_rate(series: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = series.iter().filter(|(_, v)| *v > FIT_FLOOR).map(|&(t, v)| (t, v.ln())).collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let m = pts.len() as f64;
    let (mt, my) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t / m, b + y / m));
    let (sty, stt) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, y)| (a + (t - mt) * (y - my), b + (t - mt) * (t - mt)));
    if stt == 0.0 {
        return 0.0;
    }
    let slope = sty / stt;
    if slope == 0.0 {
        0.0
    } else {
        -slope
    }
}

/// A sample at or inside the guard band of an envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub subsystem: usize,
    pub t: f64,
    pub e_bar: f64,
    pub o: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub samples: usize,
    pub rho_ob: f64,
    pub ell_ob: f64,
    pub rho_cont: f64,
    pub ell_cont: f64,
    pub rho_all: f64,
    pub ell_all: f64,
    pub bound_ob_ok: f64,
    pub bound_cont_ok: f64,
    pub bound_all_ok: f64,
    pub rate_ob_ok: f64,
    pub rate_cont_ok: f64,
    pub rate_all_ok: f64,
    /// Fitted decay rate of `‖e‖`.
    pub fitted_decay: f64,
    /// Fitted decay rate of `‖ē‖`.
    pub fitted_decay_bar: f64,
    /// `√(2ℓ_ob/ρ_ob)`.
    pub radius_ob: f64,
    /// `2ℓ̄/ρ̄`.
    pub radius_cont: f64,
    /// `2ℓ_all/ρ_all`, the form the combined check uses.
    pub radius_all: f64,
    /// `√(2ℓ_all/ρ_all)`.
    pub radius_all_rooted: f64,
    pub connector_residual: f64,
    pub connector_bar_residual: f64,
    pub sup_delta_u: f64,
    pub saturated_samples: usize,
    pub violations: Vec<Violation>,
}

const REPORT_KEYS: [&str; 23] = [
    "samples",
    "rho_ob",
    "ell_ob",
    "rho_cont",
    "ell_cont",
    "rho_all",
    "ell_all",
    "bound_ob_ok",
    "bound_cont_ok",
    "bound_all_ok",
    "rate_ob_ok",
    "rate_cont_ok",
    "rate_all_ok",
    "fitted_decay",
    "fitted_decay_bar",
    "radius_ob",
    "radius_cont",
    "radius_all",
    "radius_all_rooted",
    "connector_residual",
    "connector_bar_residual",
    "sup_delta_u",
    "saturated_samples",
];

impl StabilityReport {
    fn scalar_values(&self) -> [String; 23] {
        let f = |v: f64| format!("{v:e}");
        [
            self.samples.to_string(),
            f(self.rho_ob),
            f(self.ell_ob),
            f(self.rho_cont),
            f(self.ell_cont),
            f(self.rho_all),
            f(self.ell_all),
            f(self.bound_ob_ok),
            f(self.bound_cont_ok),
            f(self.bound_all_ok),
            f(self.rate_ob_ok),
            f(self.rate_cont_ok),
            f(self.rate_all_ok),
            f(self.fitted_decay),
            f(self.fitted_decay_bar),
            f(self.radius_ob),
            f(self.radius_cont),
            f(self.radius_all),
            f(self.radius_all_rooted),
            f(self.connector_residual),
            f(self.connector_bar_residual),
            f(self.sup_delta_u),
            self.saturated_samples.to_string(),
        ]
    }

    /// `key = value` lines, one per field, then one `violation` line per
    /// envelope breach.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in REPORT_KEYS.iter().zip(self.scalar_values()) {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s.push_str(&format!("violations = {}\n", self.violations.len()));
        for v in &self.violations {
            s.push_str(&format!("violation = subsystem={} t={:e} e_bar={:e} o={:e}\n", v.subsystem, v.t, v.e_bar, v.o));
        }
        s
    }

    pub fn csv_header() -> Vec<String> {
        let mut h: Vec<String> = REPORT_KEYS.iter().map(|s| s.to_string()).collect();
        h.push("violations".into());
        h
    }

    pub fn csv_row(&self) -> Vec<String> {
        let mut r = self.scalar_values().to_vec();
        r.push(self.violations.len().to_string());
        r
    }
}

pub fn violations(trace: &Trace) -> Vec<Violation> {
    let mut out = Vec::new();
    for r in &trace.records {
        for i in 0..trace.n {
            let q = r.o[i] * r.o[i] - r.e_bar[i] * r.e_bar[i];
            if r.e_bar[i].abs() >= r.o[i] || !(q >= Q_GUARD) {
                out.push(Violation { subsystem: i + 1, t: r.t, e_bar: r.e_bar[i], o: r.o[i] });
            }
        }
    }
    out
}

/// Every monitor over one trace.
pub fn analyze(
    trace: &Trace,
    hae: &HaeConfig,
    ctl: &HacBlfConfig,
    c: &FreeConstants,
) -> Result<StabilityReport, AnalysisError> {
    let (rho_ob, ell_ob) = decay_params_ob(hae, c, trace)?;
    let (rho_cont, ell_cont) = decay_params_cont(ctl, c, trace)?;
    let rho_all = rho_ob.min(rho_cont);
    let ell_all = ell_ob + ell_cont;

    let mut connector_residual = 0.0f64;
    let mut connector_bar_residual = 0.0f64;
    for r in &trace.records {
        connector_residual = connector_residual.max(telescoped_sum(&connectors(&r.e)).abs());
        connector_bar_residual = connector_bar_residual.max(telescoped_sum(&connectors_bar(&r.e_bar, &r.q)).abs());
    }
    let e_norm: Vec<(f64, f64)> = trace.records.iter().map(|r| (r.t, norm(&r.e))).collect();
    let e_bar_norm: Vec<(f64, f64)> = trace.records.iter().map(|r| (r.t, norm(&r.e_bar))).collect();

    Ok(StabilityReport {
        samples: trace.len(),
        rho_ob,
        ell_ob,
        rho_cont,
        ell_cont,
        rho_all,
        ell_all,
        bound_ob_ok: check_bound_ob(trace, rho_ob, ell_ob),
        bound_cont_ok: check_bound_cont(trace, rho_cont, ell_cont),
        bound_all_ok: check_bound_all(trace, rho_all, ell_all),
        rate_ob_ok: check_lyapunov_rate(trace, rho_ob, Monitor::Ob, c),
        rate_cont_ok: check_lyapunov_rate(trace, rho_cont, Monitor::Cont, c),
        rate_all_ok: check_lyapunov_rate(trace, rho_all, Monitor::All, c),
        fitted_decay: fit_decay_rate(&e_norm),
        fitted_decay_bar: fit_decay_rate(&e_bar_norm),
        radius_ob: (2.0 * ell_ob / rho_ob).sqrt(),
        radius_cont: 2.0 * ell_cont / rho_cont,
        radius_all: 2.0 * ell_all / rho_all,
        radius_all_rooted: (2.0 * ell_all / rho_all).sqrt(),
        connector_residual,
        connector_bar_residual,
        sup_delta_u: trace.records.iter().map(|r| r.delta_u.abs()).fold(0.0, f64::max),
        saturated_samples: trace.records.iter().filter(|r| r.delta_u != 0.0).count(),
        violations: violations(trace),
    })
}

/// [`analyze`] with the gains and constants of a scenario.
pub fn analyze_scenario(trace: &Trace, cfg: &ScenarioConfig) -> Result<StabilityReport, AnalysisError> {
    let hae = cfg.hae_config()?;
    let ctl = cfg.hacblf_config()?;
    let c = cfg.free_constants()?;
    analyze(trace, &hae, &ctl, &c)
}
