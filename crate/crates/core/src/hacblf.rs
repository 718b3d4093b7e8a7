//! Barrier-constrained feedforward controller driving the reference model
//! inside decaying performance envelopes, with amplitude saturation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Below this gap `o² - ē²` the barrier is treated as breached.
pub const Q_GUARD: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HacBlfError {
    #[error("envelope violation in subsystem {subsystem} at t = {t}: e_bar = {e_bar} vs o = {o}")]
    EnvelopeViolation { subsystem: usize, t: f64, e_bar: f64, o: f64 },
    #[error("hacblf.{name} must have {expected} entries, got {got}")]
    Length { name: &'static str, expected: usize, got: usize },
    #[error("hacblf.{name}[{index}] must be strictly positive, got {value}")]
    NonPositive { name: &'static str, index: usize, value: f64 },
    #[error("envelope {index}: need o_shoot > o_bound > 0 and o_rate > 0")]
    Envelope { index: usize },
    #[error("saturation limits need u_min < u_max, got [{u_min}, {u_max}]")]
    Limits { u_min: f64, u_max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeParams {
    pub o_shoot: f64,
    pub o_bound: f64,
    /// Convergence rate in 1/s.
    pub o_rate: f64,
}

impl EnvelopeParams {
    pub fn new(o_shoot: f64, o_bound: f64, o_rate: f64) -> Self {
        Self { o_shoot, o_bound, o_rate }
    }

    pub fn is_valid(&self) -> bool {
        self.o_shoot > self.o_bound && self.o_bound > 0.0 && self.o_rate > 0.0
    }
}

/// `o(t) = (o_shoot - o_bound) e^{-o_rate t} + o_bound`, with `t` measured
/// from the start of the run.
pub fn envelope(t: f64, p: &EnvelopeParams) -> f64 {
    (p.o_shoot - p.o_bound) * (-p.o_rate * t).exp() + p.o_bound
}

/// Barrier gap `Q = o² - ē²`; fails at or near the envelope edge.
pub fn envelope_gap(subsystem: usize, t: f64, e_bar: f64, o: f64) -> Result<f64, HacBlfError> {
    let q = o * o - e_bar * e_bar;
    if e_bar.abs() >= o || !(q >= Q_GUARD) {
        return Err(HacBlfError::EnvelopeViolation { subsystem, t, e_bar, o });
    }
    Ok(q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HacBlfConfig {
    pub gamma: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub kappa: Vec<f64>,
    pub envelopes: Vec<EnvelopeParams>,
    pub u_min: f64,
    pub u_max: f64,
}

impl HacBlfConfig {
    pub fn order(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self, n: usize) -> Result<(), HacBlfError> {
        for (name, v) in [("gamma", &self.gamma), ("epsilon", &self.epsilon), ("kappa", &self.kappa)] {
            if v.len() != n {
                return Err(HacBlfError::Length { name, expected: n, got: v.len() });
            }
            if let Some((index, &value)) = v.iter().enumerate().find(|(_, x)| !(**x > 0.0)) {
                return Err(HacBlfError::NonPositive { name, index, value });
            }
        }
        if self.envelopes.len() != n {
            return Err(HacBlfError::Length { name: "envelopes", expected: n, got: self.envelopes.len() });
        }
        if let Some(index) = self.envelopes.iter().position(|p| !p.is_valid()) {
            return Err(HacBlfError::Envelope { index });
        }
        if !(self.u_min < self.u_max) {
            return Err(HacBlfError::Limits { u_min: self.u_min, u_max: self.u_max });
        }
        Ok(())
    }
}

/// Controller memory: adaptation states, the reference chain and the
/// lagged copy of each `x_id` used by the dirty-derivative filter.
#[derive(Debug, Clone, PartialEq)]
pub struct HacBlfState {
    pub theta: Vec<f64>,
    pub xd: Vec<f64>,
    pub xd_filter: Vec<f64>,
}

/// `f̄_i = -½ γ_i ē_i - ε_i θ̃_i ē_i / Q_i - (Q_i / Q_{i-1}) ē_{i-1}`.
pub fn ff_compensation(i: usize, e_bar: &[f64], q: &[f64], theta_i: f64, cfg: &HacBlfConfig) -> f64 {
    let coupling = if i == 0 { 0.0 } else { q[i] / q[i - 1] * e_bar[i - 1] };
    -0.5 * cfg.gamma[i] * e_bar[i] - cfg.epsilon[i] * theta_i * e_bar[i] / q[i] - coupling
}

/// `θ̃̇_i = -κ_i θ̃_i + ε_i (ē_i / Q_i)²`.
pub fn theta_rate(i: usize, e_bar_i: f64, q_i: f64, theta_i: f64, cfg: &HacBlfConfig) -> f64 {
    let r = e_bar_i / q_i;
    -cfg.kappa[i] * theta_i + cfg.epsilon[i] * r * r
}

/// Next reference of the inverse-dynamics chain, `x_{(i+1)d} = ẋ_id + f̄_i - f_i*`.
pub fn reference_chain(xd_i_dot: f64, ff_i: f64, f_star_i: f64) -> f64 {
    xd_i_dot + ff_i - f_star_i
}

/// Raw control input `u = ẋ_nd + f̄_n - f_n*`.
pub fn control_law(xd_n_dot: f64, ff_n: f64, f_star_n: f64) -> f64 {
    xd_n_dot + ff_n - f_star_n
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Saturation {
    pub applied: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// `α(u) - u`.
    pub delta: f64,
}

/// Amplitude saturation written as `α(u) = α_1 u + α_2`. The applied value is
/// taken from the active branch so it equals the clamp bit for bit.
pub fn saturate(u: f64, u_min: f64, u_max: f64) -> Saturation {
    let (alpha1, alpha2, applied) = if u >= u_max {
        let a1 = 1.0 / (u.abs() + 1.0);
        (a1, u_max - a1 * u, u_max)
    } else if u <= u_min {
        let a1 = 1.0 / (u.abs() + 1.0);
        (a1, u_min - a1 * u, u_min)
    } else {
        (1.0, 0.0, u)
    };
    Saturation { applied, alpha1, alpha2, delta: applied - u }
}
