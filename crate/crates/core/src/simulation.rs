//! Deterministic fixed-step closed loop: plant, reference model and
//! controller integrated together with classical RK4.
//!
//! The integrated vector is `[x, x̂, Ψ̃, θ̃]`. The controller is re-evaluated
//! in every RK4 stage. The derivative filter for `ẋ_id` (i ≥ 2) is advanced
//! at the start of each outer step and then held, as is the sensor-noise
//! sample.

use thiserror::Error;

use crate::hacblf::{self, HacBlfConfig, HacBlfError, HacBlfState, Saturation};
use crate::hae::{self, HaeConfig, HaeState};
use crate::plant::{self, Exogenous, NoiseStream, PlantError, PlantModel};
use crate::scenario::{LoadProfile, TrajectorySpec};
use crate::trace::{Record, Trace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Envelope(#[from] HacBlfError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error("non-finite {what} at t = {t}")]
    NonFinite { what: &'static str, t: f64 },
}

/// Classical fourth-order Runge-Kutta step for `ẏ = f(t, y)`.
pub fn rk4_step<F, E>(t: f64, y: &[f64], dt: f64, mut f: F) -> Result<Vec<f64>, E>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, E>,
{
    let axpy = |a: f64, k: &[f64]| -> Vec<f64> { y.iter().zip(k).map(|(y, k)| y + a * k).collect() };
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * dt, &axpy(0.5 * dt, &k1))?;
    let k3 = f(t + 0.5 * dt, &axpy(0.5 * dt, &k2))?;
    let k4 = f(t + dt, &axpy(dt, &k3))?;
    Ok(y.iter()
        .enumerate()
        .map(|(i, y)| y + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub x: Vec<f64>,
    pub hae: HaeState,
    pub hacblf: HacBlfState,
}

impl SimState {
    fn pack(&self) -> Vec<f64> {
        let mut y = self.x.clone();
        y.extend_from_slice(&self.hae.x_hat);
        y.extend_from_slice(&self.hae.psi);
        y.extend_from_slice(&self.hacblf.theta);
        y
    }
}

/// Everything the controller computes in one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlEval {
    pub e: Vec<f64>,
    pub e_bar: Vec<f64>,
    pub xd: Vec<f64>,
    pub xd_dot: Vec<f64>,
    pub o: Vec<f64>,
    pub q: Vec<f64>,
    pub f_star: Vec<f64>,
    pub f_bar: Vec<f64>,
    pub u_raw: f64,
    pub sat: Saturation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    Completed,
    EnvelopeViolation { subsystem: usize, t: f64 },
    NumericFailure { t: f64 },
}

impl Verdict {
    pub fn exit_code(&self) -> i32 {
        match self {
            Verdict::Completed => 0,
            Verdict::EnvelopeViolation { .. } => 2,
            Verdict::NumericFailure { .. } => 3,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Completed => write!(f, "completed"),
            Verdict::EnvelopeViolation { subsystem, t } => {
                write!(f, "envelope-violation subsystem={subsystem} t={t}")
            }
            Verdict::NumericFailure { t } => write!(f, "numeric-failure t={t}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: Trace,
    pub verdict: Verdict,
    /// Diagnostic for a non-completed run.
    pub failure: Option<SimError>,
}

/// A fully built closed-loop problem.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub plant: PlantModel,
    pub hae: HaeConfig,
    pub ctl: HacBlfConfig,
    pub reference: TrajectorySpec,
    pub load: LoadProfile,
    pub t0: f64,
    pub t_end: f64,
    pub dt: f64,
    /// Time constant of the dirty-derivative filter.
    pub filter_tau: f64,
    pub x0: Vec<f64>,
    pub initial_hae: HaeState,
    pub theta0: Vec<f64>,
}

impl Simulation {
    pub fn n(&self) -> usize {
        self.plant.n
    }

    fn filter_gain(&self) -> f64 {
        1.0 - (-self.dt / self.filter_tau).exp()
    }

    /// Controller evaluation at `(t, x, x̂, Ψ̃, θ̃)` with the given filter memory.
    pub fn evaluate(
        &self,
        t: f64,
        x: &[f64],
        hae_state: &HaeState,
        theta: &[f64],
        xd_filter: &[f64],
    ) -> Result<ControlEval, SimError> {
        let mut filter = xd_filter.to_vec();
        self.evaluate_inner(t, x, hae_state, theta, &mut filter, 0.0, true)
    }

    /// Evaluates the controller while moving each filter entry a fraction
    /// `gain` of the way towards the freshly computed `x_id`, walking up the
    /// chain so every `ẋ_id` estimate already sees the advanced memory. `gain
    /// = 0` leaves the filter alone; `gain = 1` primes it.
    #[allow(clippy::too_many_arguments)]
    fn evaluate_inner(
        &self,
        t: f64,
        x: &[f64],
        hae_state: &HaeState,
        theta: &[f64],
        xd_filter: &mut [f64],
        gain: f64,
        strict: bool,
    ) -> Result<ControlEval, SimError> {
        let n = self.n();
        let e = hae::estimation_errors(x, hae_state);
        let f_star: Vec<f64> = (0..n)
            .map(|i| hae::modeling_term(i, self.plant.known(i, x, t), &e, hae_state.psi[i], &self.hae))
            .collect();

        let (x1d, x1d_dot) = self.reference.eval(t);
        let mut xd = vec![0.0; n];
        let mut xd_dot = vec![0.0; n];
        let mut e_bar = vec![0.0; n];
        let mut o = vec![0.0; n];
        let mut q = vec![0.0; n];
        let mut f_bar = vec![0.0; n];
        xd[0] = x1d;
        xd_dot[0] = x1d_dot;
        let mut u_raw = 0.0;
        for i in 0..n {
            if i > 0 {
                if gain != 0.0 {
                    xd_filter[i] += gain * (xd[i] - xd_filter[i]);
                }
                xd_dot[i] = (xd[i] - xd_filter[i]) / self.filter_tau;
            }
            e_bar[i] = hae_state.x_hat[i] - xd[i];
            o[i] = hacblf::envelope(t - self.t0, &self.ctl.envelopes[i]);
            q[i] = if strict {
                hacblf::envelope_gap(i + 1, t, e_bar[i], o[i])?
            } else {
                o[i] * o[i] - e_bar[i] * e_bar[i]
            };
            f_bar[i] = hacblf::ff_compensation(i, &e_bar, &q, theta[i], &self.ctl);
            if i + 1 < n {
                xd[i + 1] = hacblf::reference_chain(xd_dot[i], f_bar[i], f_star[i]);
            } else {
                u_raw = hacblf::control_law(xd_dot[i], f_bar[i], f_star[i]);
            }
        }
        // The lenient pass only needs the reference chain.
        if strict && !u_raw.is_finite() {
            return Err(SimError::NonFinite { what: "control input", t });
        }
        let sat = hacblf::saturate(u_raw, self.ctl.u_min, self.ctl.u_max);
        Ok(ControlEval { e, e_bar, xd, xd_dot, o, q, f_star, f_bar, u_raw, sat })
    }

    /// Derivative of the packed state `[x, x̂, Ψ̃, θ̃]` plus the controller
    /// evaluation it was built from.
    pub fn closed_loop_derivative(
        &self,
        t: f64,
        y: &[f64],
        xd_filter: &[f64],
        noise: &[f64],
    ) -> Result<(Vec<f64>, ControlEval), SimError> {
        let n = self.n();
        let (x, rest) = y.split_at(n);
        let (x_hat, rest) = rest.split_at(n);
        let (psi, theta) = rest.split_at(n);
        let hae_state = HaeState { x_hat: x_hat.to_vec(), psi: psi.to_vec() };
        let eval = self.evaluate(t, x, &hae_state, theta, xd_filter)?;

        let exo = Exogenous { load: self.load.force(t, self.plant.capacity), noise };
        let mut dy = plant::sff_derivative(x, eval.sat.applied, t, &exo, &self.plant)?;
        dy.extend(hae::reference_derivative(&hae_state, &eval.f_star, eval.sat.applied));
        dy.extend((0..n).map(|i| hae::psi_rate(i, eval.e[i], psi[i], &self.hae)));
        dy.extend((0..n).map(|i| hacblf::theta_rate(i, eval.e_bar[i], eval.q[i], theta[i], &self.ctl)));
        if let Some(k) = dy.iter().position(|v| !v.is_finite()) {
            let what = ["plant state", "reference state", "estimator adaptation", "controller adaptation"][k / n];
            return Err(SimError::NonFinite { what, t });
        }
        Ok((dy, eval))
    }

    /// Initial state: the configured plant and reference-model states, with
    /// the derivative filter primed on the initial reference chain so that
    /// every `ẋ_id` estimate starts at zero. Fails if the start is outside
    /// any envelope.
    pub fn initial_state(&self) -> Result<SimState, SimError> {
        let mut filter = vec![0.0; self.n()];
        let eval = self.evaluate_inner(self.t0, &self.x0, &self.initial_hae, &self.theta0, &mut filter, 1.0, true)?;
        Ok(SimState {
            t: self.t0,
            x: self.x0.clone(),
            hae: self.initial_hae.clone(),
            hacblf: HacBlfState { theta: self.theta0.clone(), xd: eval.xd, xd_filter: filter },
        })
    }

    /// Reference chain `x_id(t0)` for the configured start, ignoring envelopes.
    pub fn initial_reference(&self, x_hat: &[f64]) -> Result<Vec<f64>, SimError> {
        let hae_state = HaeState { x_hat: x_hat.to_vec(), psi: self.initial_hae.psi.clone() };
        let mut filter = vec![0.0; self.n()];
        let eval = self.evaluate_inner(self.t0, &self.x0, &hae_state, &self.theta0, &mut filter, 1.0, false)?;
        Ok(eval.xd)
    }

    fn record(&self, s: &SimState, eval: &ControlEval, noise: &[f64]) -> Record {
        let n = self.n();
        let exo = Exogenous { load: self.load.force(s.t, self.plant.capacity), noise };
        let d_star = (0..n)
            .map(|i| {
                let next = if i + 1 < n { s.x[i + 1] } else { eval.sat.applied };
                plant::effective_uncertainty(&s.x, next, s.t, &self.plant, i)
            })
            .collect();
        let gamma = (0..n).map(|i| self.plant.disturbance(i, s.t, &exo)).collect();
        Record {
            t: s.t,
            x: s.x.clone(),
            x_hat: s.hae.x_hat.clone(),
            e: eval.e.clone(),
            e_bar: eval.e_bar.clone(),
            xd: eval.xd.clone(),
            u_raw: eval.u_raw,
            u_sat: eval.sat.applied,
            delta_u: eval.sat.delta,
            load: exo.load,
            o: eval.o.clone(),
            q: eval.q.clone(),
            psi: s.hae.psi.clone(),
            theta: s.hacblf.theta.clone(),
            f_star: eval.f_star.clone(),
            f_bar: eval.f_bar.clone(),
            d_star,
            gamma,
            xd_filter: s.hacblf.xd_filter.clone(),
        }
    }

    /// Advances the derivative filter on the reference chain at `s`, as
    /// done at the start of every step. Returns the updated state and the
    /// controller evaluation with the advanced memory.
    pub fn advance_filter(&self, s: &SimState, dt: f64) -> Result<(SimState, ControlEval), SimError> {
        let gain = if dt == self.dt { self.filter_gain() } else { 1.0 - (-dt / self.filter_tau).exp() };
        let mut filter = s.hacblf.xd_filter.clone();
        let eval = self.evaluate_inner(s.t, &s.x, &s.hae, &s.hacblf.theta, &mut filter, gain, true)?;
        let mut s = s.clone();
        s.hacblf.xd_filter = filter;
        s.hacblf.xd = eval.xd.clone();
        Ok((s, eval))
    }

    /// One RK4 step of length `dt` from `s`, whose filter memory has already
    /// been advanced and is held across the stages.
    pub fn step(&self, s: &SimState, dt: f64, noise: &[f64]) -> Result<SimState, SimError> {
        let n = self.n();
        let filter = &s.hacblf.xd_filter;
        let y_next = rk4_step(s.t, &s.pack(), dt, |t, y| {
            self.closed_loop_derivative(t, y, filter, noise).map(|(dy, _)| dy)
        })?;
        Ok(SimState {
            t: s.t + dt,
            x: y_next[..n].to_vec(),
            hae: HaeState { x_hat: y_next[n..2 * n].to_vec(), psi: y_next[2 * n..3 * n].to_vec() },
            hacblf: HacBlfState { theta: y_next[3 * n..].to_vec(), xd: s.hacblf.xd.clone(), xd_filter: filter.clone() },
        })
    }

    pub fn steps(&self) -> usize {
        ((self.t_end - self.t0) / self.dt).round().max(0.0) as usize
    }

    /// Integrates from `t0` to `t_end`, recording every sample.
    pub fn run(&self) -> RunOutcome {
        let n = self.n();
        let mut trace = Trace::new(n);
        let mut s = match self.initial_state() {
            Ok(s) => s,
            Err(e) => return failed(trace, e, self.t0),
        };
        let mut noise_stream = NoiseStream::new(&self.plant);
        let mut noise = vec![0.0; n];
        let steps = self.steps();
        trace.records.reserve(steps + 1);
        for k in 0..=steps {
            noise_stream.sample(&mut noise);
            let (current, eval) = match self.advance_filter(&s, self.dt) {
                Ok(v) => v,
                Err(e) => return failed(trace, e, s.t),
            };
            trace.records.push(self.record(&current, &eval, &noise));
            if k == steps {
                break;
            }
            match self.step(&current, self.dt, &noise) {
                Ok(mut next) => {
                    next.t = self.t0 + (k + 1) as f64 * self.dt;
                    s = next;
                }
                Err(e) => return failed(trace, e, s.t),
            }
        }
        RunOutcome { trace, verdict: Verdict::Completed, failure: None }
    }
}

fn failed(trace: Trace, e: SimError, t: f64) -> RunOutcome {
    let verdict = match &e {
        SimError::Envelope(HacBlfError::EnvelopeViolation { subsystem, t, .. }) => {
            Verdict::EnvelopeViolation { subsystem: *subsystem, t: *t }
        }
        _ => Verdict::NumericFailure { t },
    };
    RunOutcome { trace, verdict, failure: Some(e) }
}
