//! Uncertain n-order strict-feedback plant and its electromechanical
//! linear actuator (EMLA) instantiation.
//!
//! Every per-subsystem term receives only the leading slice `x[..=i]` of the
//! state vector, so the triangular structure holds by construction.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A term evaluated on the leading states `x_1..x_i` and time.
pub type StateFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// An external disturbance driven by time and the applied load force.
pub type DisturbanceFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("non-finite plant evaluation in subsystem {index} at t = {t}")]
    NonFinite { index: usize, t: f64 },
    #[error("invalid plant parameter: {0}")]
    InvalidParameter(String),
}

/// Exogenous signals that are not functions of the state: the load force
/// `F_L` and the sensor-noise sample held over the current step.
#[derive(Debug, Clone, Copy)]
pub struct Exogenous<'a> {
    pub load: f64,
    pub noise: &'a [f64],
}

/// Ground-truth uncertainty, known to the simulator and monitors only.
#[derive(Clone)]
pub struct UncertaintyProfile {
    pub d: Vec<StateFn>,
    pub g: Vec<StateFn>,
    pub gamma: Vec<DisturbanceFn>,
    /// Standard deviation of the held Gaussian noise added to each `Γ_i`.
    pub noise_sigma: Vec<f64>,
    pub noise_seed: u64,
}

#[derive(Clone)]
pub struct PlantModel {
    pub n: usize,
    pub known_terms: Vec<StateFn>,
    pub uncertainty: UncertaintyProfile,
    /// Actuator capacity; load fractions are scaled by it.
    pub capacity: f64,
}

impl fmt::Debug for PlantModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlantModel")
            .field("n", &self.n)
            .field("capacity", &self.capacity)
            .field("noise_sigma", &self.uncertainty.noise_sigma)
            .field("noise_seed", &self.uncertainty.noise_seed)
            .finish_non_exhaustive()
    }
}

fn constant(c: f64) -> StateFn {
    Arc::new(move |_, _| c)
}

impl PlantModel {
    pub fn new(
        known_terms: Vec<StateFn>,
        uncertainty: UncertaintyProfile,
        capacity: f64,
    ) -> Result<Self, PlantError> {
        let n = known_terms.len();
        if n == 0 {
            return Err(PlantError::InvalidParameter("order must be at least 1".into()));
        }
        let u = &uncertainty;
        if u.d.len() != n || u.g.len() != n || u.gamma.len() != n || u.noise_sigma.len() != n {
            return Err(PlantError::InvalidParameter(format!(
                "uncertainty profile must have {n} entries per term"
            )));
        }
        if !(capacity > 0.0) {
            return Err(PlantError::InvalidParameter("capacity must be positive".into()));
        }
        if u.noise_sigma.iter().any(|s| !(*s >= 0.0)) {
            return Err(PlantError::InvalidParameter("noise sigma must be non-negative".into()));
        }
        Ok(Self { n, known_terms, uncertainty, capacity })
    }

    /// Known modeling term `f_i`, zero-based index.
    pub fn known(&self, i: usize, x: &[f64], t: f64) -> f64 {
        (self.known_terms[i])(&x[..=i], t)
    }

    pub fn modeling_error(&self, i: usize, x: &[f64], t: f64) -> f64 {
        (self.uncertainty.d[i])(&x[..=i], t)
    }

    pub fn control_gain(&self, i: usize, x: &[f64], t: f64) -> f64 {
        (self.uncertainty.g[i])(&x[..=i], t)
    }

    /// Total external disturbance `Γ_i`, including the held noise sample.
    pub fn disturbance(&self, i: usize, t: f64, exo: &Exogenous<'_>) -> f64 {
        let noise = exo.noise.get(i).copied().unwrap_or(0.0);
        (self.uncertainty.gamma[i])(t, exo.load) + noise
    }

    pub fn has_noise(&self) -> bool {
        self.uncertainty.noise_sigma.iter().any(|s| *s > 0.0)
    }
}

/// Plant state derivative with the already-saturated input `u_applied`.
pub fn sff_derivative(
    x: &[f64],
    u_applied: f64,
    t: f64,
    exo: &Exogenous<'_>,
    model: &PlantModel,
) -> Result<Vec<f64>, PlantError> {
    let n = model.n;
    let mut dx = vec![0.0; n];
    for i in 0..n {
        let next = if i + 1 < n { x[i + 1] } else { u_applied };
        let v = model.control_gain(i, x, t) * next
            + model.known(i, x, t)
            + model.modeling_error(i, x, t)
            + model.disturbance(i, t, exo);
        if !v.is_finite() {
            return Err(PlantError::NonFinite { index: i + 1, t });
        }
        dx[i] = v;
    }
    Ok(dx)
}

/// Lumped uncertainty `d_i* = d_i + (g_i - 1)·next_input` seen by the
/// estimator in subsystem `i` (zero-based). Ground truth, monitors only.
pub fn effective_uncertainty(
    x: &[f64],
    next_input: f64,
    t: f64,
    model: &PlantModel,
    i: usize,
) -> f64 {
    model.modeling_error(i, x, t) + (model.control_gain(i, x, t) - 1.0) * next_input
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmlaParams {
    /// Equivalent inertia.
    pub i_eq: f64,
    /// Viscous damping.
    pub b_eq: f64,
    /// Spring effect.
    pub k_eq: f64,
    /// Load coefficient.
    pub f_eq: f64,
    pub torque_capacity: f64,
}

impl Default for EmlaParams {
    fn default() -> Self {
        Self { i_eq: 0.5, b_eq: 0.5, k_eq: 0.0, f_eq: 0.75, torque_capacity: 44.5 }
    }
}

impl EmlaParams {
    pub fn validate(&self) -> Result<(), PlantError> {
        if !(self.i_eq > 0.0) {
            return Err(PlantError::InvalidParameter("i_eq must be positive".into()));
        }
        if !(self.b_eq >= 0.0) || !(self.k_eq >= 0.0) || !(self.f_eq >= 0.0) {
            return Err(PlantError::InvalidParameter(
                "b_eq, k_eq and f_eq must be non-negative".into(),
            ));
        }
        if !(self.torque_capacity > 0.0) {
            return Err(PlantError::InvalidParameter("torque_capacity must be positive".into()));
        }
        Ok(())
    }
}

/// Position-sensor imperfections on the first subsystem. The gain ripple
/// makes `ẋ_1 = (1 + a·sin(ωt))·x_2`; `sigma` is the held Gaussian noise
/// standard deviation added to `Γ_1`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorNoise {
    #[serde(default)]
    pub gain_amplitude: f64,
    #[serde(default)]
    pub gain_frequency: f64,
    #[serde(default)]
    pub sigma: f64,
}

/// Second-order EMLA plant. Only `f_1 = 0` and `f_2 = -K_eq x_1 / I_eq` are
/// exposed as known terms; gain, damping and load enter the hidden profile.
pub fn emla_model(params: &EmlaParams, noise: &SensorNoise, seed: u64) -> Result<PlantModel, PlantError> {
    params.validate()?;
    let inv_i = 1.0 / params.i_eq;
    let k = params.k_eq;
    let b = params.b_eq;
    let f_eq = params.f_eq;
    let (a, w) = (noise.gain_amplitude, noise.gain_frequency);

    let known: Vec<StateFn> = vec![constant(0.0), Arc::new(move |x, _| -inv_i * k * x[0])];
    let g1: StateFn = if a == 0.0 {
        constant(1.0)
    } else {
        Arc::new(move |_, t| 1.0 + a * (w * t).sin())
    };
    let uncertainty = UncertaintyProfile {
        d: vec![constant(0.0), Arc::new(move |x, _| -inv_i * b * x[1])],
        g: vec![g1, constant(inv_i)],
        gamma: vec![Arc::new(|_, _| 0.0), Arc::new(move |_, load| -inv_i * f_eq * load)],
        noise_sigma: vec![noise.sigma, 0.0],
        noise_seed: seed,
    };
    PlantModel::new(known, uncertainty, params.torque_capacity)
}

/// Integrator chain with constant coefficients per subsystem:
/// `ẋ_i = g_i x_{i+1} + k_i x_i + c_i x_i + b_i F_L`, where only `k_i` is
/// known to the controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainParams {
    pub order: usize,
    #[serde(default)]
    pub known: Vec<f64>,
    #[serde(default)]
    pub gain: Vec<f64>,
    #[serde(default)]
    pub damping: Vec<f64>,
    #[serde(default)]
    pub load_coupling: Vec<f64>,
    #[serde(default = "default_capacity")]
    pub capacity: f64,
}

fn default_capacity() -> f64 {
    1.0
}

fn coefficients(v: &[f64], n: usize, fill: f64, name: &str) -> Result<Vec<f64>, PlantError> {
    match v.len() {
        0 => Ok(vec![fill; n]),
        1 => Ok(vec![v[0]; n]),
        l if l == n => Ok(v.to_vec()),
        l => Err(PlantError::InvalidParameter(format!("{name} has {l} entries, expected {n}"))),
    }
}

pub fn chain_model(params: &ChainParams, noise_sigma: Vec<f64>, seed: u64) -> Result<PlantModel, PlantError> {
    let n = params.order;
    if n == 0 {
        return Err(PlantError::InvalidParameter("order must be at least 1".into()));
    }
    let known = coefficients(&params.known, n, 0.0, "known")?;
    let gain = coefficients(&params.gain, n, 1.0, "gain")?;
    let damping = coefficients(&params.damping, n, 0.0, "damping")?;
    let coupling = coefficients(&params.load_coupling, n, 0.0, "load_coupling")?;
    if gain.contains(&0.0) {
        return Err(PlantError::InvalidParameter("control gain must be non-zero".into()));
    }
    let noise_sigma = if noise_sigma.is_empty() { vec![0.0; n] } else { noise_sigma };
    let uncertainty = UncertaintyProfile {
        d: damping
            .iter()
            .enumerate()
            .map(|(i, &c)| Arc::new(move |x: &[f64], _| c * x[i]) as StateFn)
            .collect(),
        g: gain.iter().map(|&g| constant(g)).collect(),
        gamma: coupling
            .iter()
            .map(|&b| Arc::new(move |_, load: f64| b * load) as DisturbanceFn)
            .collect(),
        noise_sigma,
        noise_seed: seed,
    };
    let known = known
        .iter()
        .enumerate()
        .map(|(i, &k)| Arc::new(move |x: &[f64], _| k * x[i]) as StateFn)
        .collect();
    PlantModel::new(known, uncertainty, params.capacity)
}

/// Per-run stream of Gaussian noise samples, one vector per outer step.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    sigma: Vec<f64>,
}

impl NoiseStream {
    pub fn new(model: &PlantModel) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(model.uncertainty.noise_seed),
            sigma: model.uncertainty.noise_sigma.clone(),
        }
    }

    pub fn sample(&mut self, out: &mut [f64]) {
        for (o, s) in out.iter_mut().zip(&self.sigma) {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *o = if *s > 0.0 { s * z } else { 0.0 };
        }
    }
}
