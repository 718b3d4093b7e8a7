//! Scenario definition: configuration, reference trajectories, load
//! schedules and the bundled actuator experiments.

mod config;
mod load;
mod trajectory;

pub use config::{
    load_config, parse_config, validate, AnalysisSection, ConfigError, HacBlfSection, HaeSection, InitMode,
    parse_seed, PlantSpec, ScenarioConfig, XhatInit, MAX_SEED, SEED_ENV,
};
pub use load::{load_profile, LoadError, LoadProfile};
pub use trajectory::{quintic_trajectory, Segment, TrajectoryError, TrajectorySpec};

use crate::simulation::RunOutcome;

/// Bundled scenarios shipped with the crate, by name.
pub const BUNDLED: [(&str, &str); 6] = [
    ("exp1", include_str!("../../configs/exp1.toml")),
    ("exp2", include_str!("../../configs/exp2.toml")),
    ("exp3", include_str!("../../configs/exp3.toml")),
    ("exp4", include_str!("../../configs/exp4.toml")),
    ("clean", include_str!("../../configs/clean.toml")),
    ("saturating", include_str!("../../configs/saturating.toml")),
];

pub fn bundled(name: &str) -> Option<ScenarioConfig> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| parse_config(text).expect("bundled scenario parses"))
}

/// Validates, builds and runs a scenario.
pub fn run(cfg: &ScenarioConfig) -> Result<RunOutcome, Vec<ConfigError>> {
    Ok(cfg.build()?.run())
}
