//! Homogeneous adaptive estimators: a certain reference model whose
//! modeling terms `f_i*` adapt so that its states shadow the uncertain plant.
//!
//! Indices are zero-based; the coupling term of the first subsystem uses
//! `e_{-1} = 0`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HaeError {
    #[error("hae.{name} must have {expected} entries, got {got}")]
    Length { name: &'static str, expected: usize, got: usize },
    #[error("hae.{name}[{index}] must be strictly positive, got {value}")]
    NonPositive { name: &'static str, index: usize, value: f64 },
}

/// Estimator gains: `xi` scales the adaptive damping, `lambda` the static
/// matching gain, `beta` the adaptation leakage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HaeConfig {
    pub xi: Vec<f64>,
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
}

impl HaeConfig {
    /// Gains used in the actuator experiments, repeated for each subsystem.
    pub fn experiment_defaults(n: usize) -> Self {
        Self { xi: vec![0.08; n], lambda: vec![500.0; n], beta: vec![0.8; n] }
    }

    pub fn order(&self) -> usize {
        self.lambda.len()
    }

    pub fn validate(&self, n: usize) -> Result<(), HaeError> {
        for (name, v) in [("xi", &self.xi), ("lambda", &self.lambda), ("beta", &self.beta)] {
            if v.len() != n {
                return Err(HaeError::Length { name, expected: n, got: v.len() });
            }
            if let Some((index, &value)) = v.iter().enumerate().find(|(_, x)| !(**x > 0.0)) {
                return Err(HaeError::NonPositive { name, index, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HaeState {
    pub x_hat: Vec<f64>,
    pub psi: Vec<f64>,
}

impl HaeState {
    /// Reference model started on the measured plant state with zero adaptation.
    pub fn matched(x: &[f64]) -> Self {
        Self { x_hat: x.to_vec(), psi: vec![0.0; x.len()] }
    }
}

/// `e_i = x_i - x̂_i`.
pub fn estimation_errors(x: &[f64], state: &HaeState) -> Vec<f64> {
    x.iter().zip(&state.x_hat).map(|(a, b)| a - b).collect()
}

/// `f_i* = f_i + ξ_i Ψ̃_i e_i + ½ λ_i e_i + e_{i-1}`.
pub fn modeling_term(i: usize, f_known: f64, e: &[f64], psi_i: f64, cfg: &HaeConfig) -> f64 {
    let prev = if i == 0 { 0.0 } else { e[i - 1] };
    f_known + cfg.xi[i] * psi_i * e[i] + 0.5 * cfg.lambda[i] * e[i] + prev
}

/// `Ψ̃̇_i = -β_i Ψ̃_i + ξ_i e_i²`.
pub fn psi_rate(i: usize, e_i: f64, psi_i: f64, cfg: &HaeConfig) -> f64 {
    -cfg.beta[i] * psi_i + cfg.xi[i] * e_i * e_i
}

/// Reference model derivative driven by the saturated input.
pub fn reference_derivative(state: &HaeState, f_star: &[f64], u_sat: f64) -> Vec<f64> {
    let n = state.x_hat.len();
    (0..n)
        .map(|i| {
            let next = if i + 1 < n { state.x_hat[i + 1] } else { u_sat };
            next + f_star[i]
        })
        .collect()
}
