//! Scenario files.
//!
//! A scenario is a TOML document: top-level run settings followed by the
//! `[plant]`, `[hae]`, `[hacblf]`, `[trajectory]`, `[load]` and `[analysis]`
//! tables. Vector-valued gains accept either one entry per subsystem or a
//! single entry applied to all of them. Unknown keys are rejected.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::FreeConstants;
use crate::hacblf::{EnvelopeParams, HacBlfConfig, HacBlfError};
use crate::hae::{HaeConfig, HaeError, HaeState};
use crate::plant::{self, ChainParams, EmlaParams, PlantError, PlantModel, SensorNoise};
use crate::scenario::load::{LoadError, LoadProfile};
use crate::scenario::trajectory::{TrajectoryError, TrajectorySpec};
use crate::simulation::{SimError, Simulation};

/// Environment variable that overrides the configured noise seed.
pub const SEED_ENV: &str = "MRBC_SEED";

/// Largest seed a scenario file can hold (TOML integers are signed 64-bit).
pub const MAX_SEED: u64 = i64::MAX as u64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("dt must be positive, got {0}")]
    TimeStep(f64),
    #[error("t_end ({t_end}) precedes t0 ({t0})")]
    Horizon { t0: f64, t_end: f64 },
    #[error("{name} has {got} entries, expected 1 or {expected}")]
    Length { name: String, expected: usize, got: usize },
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Hae(#[from] HaeError),
    #[error(transparent)]
    HacBlf(#[from] HacBlfError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("filter_tau must be positive, got {0}")]
    FilterTau(f64),
    #[error("reference peak {peak} exceeds eta_1 = {eta}")]
    ReferenceBound { peak: f64, eta: f64 },
    #[error("analysis constants: {0}")]
    Constants(String),
    #[error("inadmissible start in subsystem {subsystem}: e_bar = {e_bar}, o = {o}")]
    Admissibility { subsystem: usize, e_bar: f64, o: f64 },
    #[error("initial state: {0}")]
    Initial(String),
    #[error("seed must be an integer in 0..={max}, got {0:?}", max = MAX_SEED)]
    Seed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantSpec {
    Emla {
        x0: Vec<f64>,
        i_eq: f64,
        b_eq: f64,
        k_eq: f64,
        f_eq: f64,
        torque_capacity: f64,
        #[serde(default)]
        noise: SensorNoise,
    },
    Chain {
        x0: Vec<f64>,
        order: usize,
        #[serde(default)]
        known: Vec<f64>,
        #[serde(default)]
        gain: Vec<f64>,
        #[serde(default)]
        damping: Vec<f64>,
        #[serde(default)]
        load_coupling: Vec<f64>,
        #[serde(default = "one")]
        capacity: f64,
        #[serde(default)]
        noise_sigma: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl PlantSpec {
    pub fn order(&self) -> usize {
        match self {
            PlantSpec::Emla { .. } => 2,
            PlantSpec::Chain { order, .. } => *order,
        }
    }

    pub fn x0(&self) -> &[f64] {
        match self {
            PlantSpec::Emla { x0, .. } | PlantSpec::Chain { x0, .. } => x0,
        }
    }

    pub fn build(&self, seed: u64) -> Result<PlantModel, ConfigError> {
        let model = match self {
            PlantSpec::Emla { i_eq, b_eq, k_eq, f_eq, torque_capacity, noise, .. } => {
                let params = EmlaParams {
                    i_eq: *i_eq,
                    b_eq: *b_eq,
                    k_eq: *k_eq,
                    f_eq: *f_eq,
                    torque_capacity: *torque_capacity,
                };
                plant::emla_model(&params, noise, seed)?
            }
            PlantSpec::Chain { order, known, gain, damping, load_coupling, capacity, noise_sigma, .. } => {
                let params = ChainParams {
                    order: *order,
                    known: known.clone(),
                    gain: gain.clone(),
                    damping: damping.clone(),
                    load_coupling: load_coupling.clone(),
                    capacity: *capacity,
                };
                let sigma = expand("plant.noise_sigma", noise_sigma, *order, 0.0)?;
                plant::chain_model(&params, sigma, seed)?
            }
        };
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// `x̂(t0) = x(t0)`.
    Matched,
    /// `x̂_1(t0) = x_1(t0)` and `x̂_i(t0) = x_id(t0)` above it, so only the
    /// first tracking error can start non-zero.
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum XhatInit {
    Mode(InitMode),
    Explicit(Vec<f64>),
}

impl Default for XhatInit {
    fn default() -> Self {
        XhatInit::Mode(InitMode::Matched)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HaeSection {
    pub xi: Vec<f64>,
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
    #[serde(default)]
    pub xhat0: XhatInit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HacBlfSection {
    pub gamma: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub kappa: Vec<f64>,
    pub o_shoot: Vec<f64>,
    pub o_bound: Vec<f64>,
    pub o_rate: Vec<f64>,
    pub u_min: f64,
    pub u_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
    /// Dirty-derivative time constant; defaults to `10·dt`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_tau: Option<f64>,
}

/// Free constants of the stability monitors. Defaults: `δ_i = ζ_i = λ_i/4`
/// and `v_n = γ_n/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_n: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(default)]
    pub t0: f64,
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    /// Reference bounds `η_i`; only `η_1` is checked against the trajectory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<Vec<f64>>,
    pub plant: PlantSpec,
    pub hae: HaeSection,
    pub hacblf: HacBlfSection,
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub load: LoadProfile,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

fn default_dt() -> f64 {
    1e-3
}

fn expand(name: &str, v: &[f64], n: usize, fill: f64) -> Result<Vec<f64>, ConfigError> {
    match v.len() {
        0 => Ok(vec![fill; n]),
        1 => Ok(vec![v[0]; n]),
        l if l == n => Ok(v.to_vec()),
        got => Err(ConfigError::Length { name: name.to_string(), expected: n, got }),
    }
}

fn expand_required(name: &str, v: &[f64], n: usize) -> Result<Vec<f64>, ConfigError> {
    if v.is_empty() {
        return Err(ConfigError::Length { name: name.to_string(), expected: n, got: 0 });
    }
    expand(name, v, n, 0.0)
}

pub fn parse_seed(text: &str) -> Result<u64, ConfigError> {
    match text.trim().parse::<u64>() {
        Ok(seed) if seed <= MAX_SEED => Ok(seed),
        _ => Err(ConfigError::Seed(text.to_string())),
    }
}

/// Parses a scenario without validating it.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_string()))
}

/// Parses and validates.
pub fn load_config(text: &str) -> Result<ScenarioConfig, Vec<ConfigError>> {
    let cfg = parse_config(text).map_err(|e| vec![e])?;
    validate(&cfg)?;
    Ok(cfg)
}

pub fn validate(cfg: &ScenarioConfig) -> Result<(), Vec<ConfigError>> {
    cfg.build().map(|_| ())
}

impl ScenarioConfig {
    pub fn order(&self) -> usize {
        self.plant.order()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Applies the `MRBC_SEED` override, if set.
    pub fn with_env_seed(mut self) -> Result<Self, ConfigError> {
        if let Ok(text) = std::env::var(SEED_ENV) {
            self.seed = parse_seed(&text)?;
        }
        Ok(self)
    }

    pub fn hae_config(&self) -> Result<HaeConfig, ConfigError> {
        let n = self.order();
        Ok(HaeConfig {
            xi: expand_required("hae.xi", &self.hae.xi, n)?,
            lambda: expand_required("hae.lambda", &self.hae.lambda, n)?,
            beta: expand_required("hae.beta", &self.hae.beta, n)?,
        })
    }

    pub fn hacblf_config(&self) -> Result<HacBlfConfig, ConfigError> {
        let n = self.order();
        let h = &self.hacblf;
        let shoot = expand_required("hacblf.o_shoot", &h.o_shoot, n)?;
        let bound = expand_required("hacblf.o_bound", &h.o_bound, n)?;
        let rate = expand_required("hacblf.o_rate", &h.o_rate, n)?;
        Ok(HacBlfConfig {
            gamma: expand_required("hacblf.gamma", &h.gamma, n)?,
            epsilon: expand_required("hacblf.epsilon", &h.epsilon, n)?,
            kappa: expand_required("hacblf.kappa", &h.kappa, n)?,
            envelopes: (0..n).map(|i| EnvelopeParams::new(shoot[i], bound[i], rate[i])).collect(),
            u_min: h.u_min,
            u_max: h.u_max,
        })
    }

    pub fn free_constants(&self) -> Result<FreeConstants, ConfigError> {
        let n = self.order();
        let hae = self.hae_config()?;
        let ctl = self.hacblf_config()?;
        let mut c = FreeConstants::defaults(&hae, &ctl);
        if let Some(d) = &self.analysis.delta {
            c.delta = expand_required("analysis.delta", d, n)?;
        }
        if let Some(z) = &self.analysis.zeta {
            c.zeta = expand_required("analysis.zeta", z, n)?;
        }
        if let Some(v) = self.analysis.v_n {
            c.v_n = v;
        }
        c.check(&hae, &ctl).map_err(|e| ConfigError::Constants(e.to_string()))?;
        Ok(c)
    }

    /// Builds the closed-loop problem, collecting every validation failure.
    pub fn build(&self) -> Result<Simulation, Vec<ConfigError>> {
        let mut errors = Vec::new();
        let n = self.order();
        if !(self.dt > 0.0) {
            errors.push(ConfigError::TimeStep(self.dt));
        }
        if !(self.t_end >= self.t0) {
            errors.push(ConfigError::Horizon { t0: self.t0, t_end: self.t_end });
        }
        let mut keep = |r: Result<(), ConfigError>| {
            if let Err(e) = r {
                errors.push(e);
            }
        };
        keep(self.trajectory.validate().map_err(Into::into));
        keep(self.load.validate().map_err(Into::into));
        if let Some(eta) = &self.eta {
            if let Some(&eta1) = eta.first() {
                let peak = self.trajectory.peak();
                if peak > eta1 {
                    keep(Err(ConfigError::ReferenceBound { peak, eta: eta1 }));
                }
            }
        }
        let x0 = self.plant.x0().to_vec();
        if x0.len() != n {
            keep(Err(ConfigError::Length { name: "plant.x0".into(), expected: n, got: x0.len() }));
        }
        let plant = self.plant.build(self.seed).map_err(|e| keep(Err(e))).ok();
        let hae = self
            .hae_config()
            .and_then(|c| c.validate(n).map(|_| c).map_err(Into::into))
            .map_err(|e| keep(Err(e)))
            .ok();
        let ctl = self
            .hacblf_config()
            .and_then(|c| c.validate(n).map(|_| c).map_err(Into::into))
            .map_err(|e| keep(Err(e)))
            .ok();
        if hae.is_some() && ctl.is_some() {
            if let Err(e) = self.free_constants() {
                keep(Err(e));
            }
        }
        let filter_tau = self.hacblf.filter_tau.unwrap_or(10.0 * self.dt);
        if !(filter_tau > 0.0) {
            keep(Err(ConfigError::FilterTau(filter_tau)));
        }
        let psi0 = self
            .hae
            .psi0
            .as_deref()
            .map(|p| expand("hae.psi0", p, n, 0.0))
            .unwrap_or_else(|| Ok(vec![0.0; n]))
            .map_err(|e| keep(Err(e)))
            .ok();
        let theta0 = self
            .hacblf
            .theta0
            .as_deref()
            .map(|p| expand("hacblf.theta0", p, n, 0.0))
            .unwrap_or_else(|| Ok(vec![0.0; n]))
            .map_err(|e| keep(Err(e)))
            .ok();
        if let XhatInit::Explicit(v) = &self.hae.xhat0 {
            if v.len() != n {
                keep(Err(ConfigError::Length { name: "hae.xhat0".into(), expected: n, got: v.len() }));
            }
        }
        let (Some(plant), Some(hae), Some(ctl), Some(psi0), Some(theta0)) = (plant, hae, ctl, psi0, theta0)
        else {
            return Err(errors);
        };
        if !errors.is_empty() {
            return Err(errors);
        }

        let mut sim = Simulation {
            plant,
            hae,
            ctl,
            reference: self.trajectory.clone(),
            load: self.load.clone(),
            t0: self.t0,
            t_end: self.t_end,
            dt: self.dt,
            filter_tau,
            x0: x0.clone(),
            initial_hae: HaeState { x_hat: x0.clone(), psi: psi0 },
            theta0,
        };
        match &self.hae.xhat0 {
            XhatInit::Mode(InitMode::Matched) => {}
            XhatInit::Explicit(v) => sim.initial_hae.x_hat = v.clone(),
            XhatInit::Mode(InitMode::Reference) => {
                // Lift x̂_i one level at a time; x_id depends on x̂ below i only.
                for i in 1..n {
                    match sim.initial_reference(&sim.initial_hae.x_hat) {
                        Ok(xd) => sim.initial_hae.x_hat[i] = xd[i],
                        Err(e) => return Err(vec![ConfigError::Initial(e.to_string())]),
                    }
                }
            }
        }
        match sim.initial_state() {
            Ok(_) => Ok(sim),
            Err(SimError::Envelope(HacBlfError::EnvelopeViolation { subsystem, e_bar, o, .. })) => {
                Err(vec![ConfigError::Admissibility { subsystem, e_bar: e_bar.abs(), o }])
            }
            Err(e) => Err(vec![ConfigError::Initial(e.to_string())]),
        }
    }

    /// Non-fatal observations about the configuration.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if let (Some(eta), Ok(ctl)) = (&self.eta, self.hacblf_config()) {
            for (i, (eta_i, env)) in eta.iter().zip(&ctl.envelopes).enumerate() {
                if env.o_bound <= *eta_i {
                    w.push(format!(
                        "subsystem {}: o_bound = {} does not exceed eta = {}",
                        i + 1,
                        env.o_bound,
                        eta_i
                    ));
                }
            }
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"
name = "minimal"
t_end = 1.0

[plant]
kind = "chain"
order = 2
x0 = [0.0, 0.0]

[hae]
xi = [0.08]
lambda = [500]
beta = [0.8]

[hacblf]
gamma = [40]
epsilon = [0.8]
kappa = [1]
o_shoot = [0.1, 0.3]
o_bound = [0.005]
o_rate = [2e-4]
u_min = -100
u_max = 100

[trajectory]
kind = "setpoint"
value = 0.01
"#;

    #[test]
    fn minimal_config_is_valid() {
        let cfg = load_config(MINIMAL).unwrap();
        assert_eq!(cfg.order(), 2);
        assert_eq!(cfg.dt, 1e-3);
        assert_eq!(cfg.load, LoadProfile::None);
        let sim = cfg.build().unwrap();
        assert_eq!(sim.filter_tau, 1e-2);
        assert_eq!(sim.hae.lambda, vec![500.0, 500.0]);
    }

    #[test]
    fn zero_dt_rejected() {
        let text = MINIMAL.replace("t_end = 1.0", "t_end = 1.0\ndt = 0.0");
        let errs = load_config(&text).unwrap_err();
        assert!(errs.contains(&ConfigError::TimeStep(0.0)));
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = MINIMAL.replace("beta = [0.8]", "beta = [0.8]\nbogus = 1");
        assert!(matches!(load_config(&text).unwrap_err()[0], ConfigError::Parse(_)));
        let text = MINIMAL.replace("t_end = 1.0", "t_end = 1.0\nwhatever = 2");
        assert!(load_config(&text).is_err());
    }

    #[test]
    fn inadmissible_start_names_subsystem() {
        // |e_bar_1(t0)| = |0 - 0.15| >= o_1(0) = 0.1
        let text = MINIMAL.replace("value = 0.01", "value = 0.15");
        let errs = load_config(&text).unwrap_err();
        match &errs[0] {
            ConfigError::Admissibility { subsystem, e_bar, o } => {
                assert_eq!(*subsystem, 1);
                assert!((e_bar - 0.15).abs() < 1e-15);
                assert_eq!(*o, 0.1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reference_init_zeroes_upper_tracking_errors() {
        // setpoint 0.05 makes x_2d(t0) = 0.5·40·0.05 = 1.0 > o_2(0) under matched init
        let text = MINIMAL.replace("value = 0.01", "value = 0.05");
        assert!(matches!(load_config(&text).unwrap_err()[0], ConfigError::Admissibility { subsystem: 2, .. }));
        let text = text.replace("beta = [0.8]", "beta = [0.8]\nxhat0 = \"reference\"");
        let sim = load_config(&text).unwrap().build().unwrap();
        assert!((sim.initial_hae.x_hat[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn seed_range() {
        assert_eq!(parse_seed(" 42\n"), Ok(42));
        assert_eq!(parse_seed("9223372036854775807"), Ok(MAX_SEED));
        assert!(parse_seed("9223372036854775808").is_err());
        assert!(parse_seed("-1").is_err());
        assert!(parse_seed("seven").is_err());
        let mut cfg = parse_config(MINIMAL).unwrap();
        cfg.seed = MAX_SEED;
        assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn reference_init_survives_matched_start_on_the_edge() {
        // matched start puts ē_2 exactly on -o_2, so Q_2 = 0 before lifting
        let text = MINIMAL.replace("o_shoot = [0.1, 0.3]", "o_shoot = [0.2]");
        let text = text.replace("beta = [0.8]", "beta = [0.8]\nxhat0 = \"reference\"");
        let sim = load_config(&text).unwrap().build().unwrap();
        assert!((sim.initial_hae.x_hat[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn collects_multiple_errors() {
        let text = MINIMAL
            .replace("t_end = 1.0", "t_end = -1.0\ndt = -1.0")
            .replace("kappa = [1]", "kappa = [1, 2, 3]");
        let errs = load_config(&text).unwrap_err();
        assert!(errs.len() >= 3, "{errs:?}");
    }

    #[test]
    fn eta_checked_against_reference() {
        let text = MINIMAL.replace("t_end = 1.0", "t_end = 1.0\neta = [0.005, 1.0]");
        let errs = load_config(&text).unwrap_err();
        assert!(matches!(errs[0], ConfigError::ReferenceBound { .. }));
        let text = MINIMAL.replace("t_end = 1.0", "t_end = 1.0\neta = [0.02, 1.0]");
        let cfg = load_config(&text).unwrap();
        assert_eq!(cfg.warnings().len(), 2);
    }

    #[test]
    fn serialization_is_idempotent() {
        let cfg = parse_config(MINIMAL).unwrap();
        let once = cfg.to_toml();
        let twice = parse_config(&once).unwrap().to_toml();
        assert_eq!(once, twice);
        assert_eq!(parse_config(&once).unwrap(), cfg);
    }
}
