//! Load-force schedules, expressed as fractions of actuator capacity.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LoadError {
    #[error("load schedule: times and fractions differ in length ({0} vs {1})")]
    Length(usize, usize),
    #[error("load schedule: breakpoints must be strictly increasing")]
    Unordered,
    #[error("load pulse train: {0}")]
    Pulse(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LoadProfile {
    #[default]
    None,
    Constant { fraction: f64 },
    /// Linear interpolation between breakpoints, held flat outside them.
    Linear { times: Vec<f64>, fractions: Vec<f64> },
    /// Piecewise constant; zero before the first breakpoint and the right
    /// limit at every breakpoint.
    Step { times: Vec<f64>, fractions: Vec<f64> },
    Sine {
        #[serde(default)]
        offset: f64,
        amplitude: f64,
        /// Hz.
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Trapezoidal pulses repeating every `period` from `start`. Pulse `k`
    /// climbs from `low` to `levels[k % levels.len()]` over `ramp`, dwells
    /// for `dwell`, then ramps back down.
    PulseTrain {
        start: f64,
        period: f64,
        ramp: f64,
        dwell: f64,
        #[serde(default)]
        low: f64,
        levels: Vec<f64>,
    },
}

fn check_breakpoints(times: &[f64], fractions: &[f64]) -> Result<(), LoadError> {
    if times.len() != fractions.len() {
        return Err(LoadError::Length(times.len(), fractions.len()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(LoadError::Unordered);
    }
    Ok(())
}

impl LoadProfile {
    pub fn validate(&self) -> Result<(), LoadError> {
        match self {
            LoadProfile::Linear { times, fractions } | LoadProfile::Step { times, fractions } => {
                check_breakpoints(times, fractions)
            }
            LoadProfile::PulseTrain { period, ramp, dwell, levels, .. } => {
                if levels.is_empty() {
                    return Err(LoadError::Pulse("levels must not be empty"));
                }
                if !(*ramp >= 0.0) || !(*dwell >= 0.0) {
                    return Err(LoadError::Pulse("ramp and dwell must be non-negative"));
                }
                if !(*period >= 2.0 * ramp + dwell) || !(*period > 0.0) {
                    return Err(LoadError::Pulse("period must fit two ramps and the dwell"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Load fraction at time `t`.
    pub fn fraction(&self, t: f64) -> f64 {
        match self {
            LoadProfile::None => 0.0,
            LoadProfile::Constant { fraction } => *fraction,
            LoadProfile::Linear { times, fractions } => {
                if times.is_empty() {
                    return 0.0;
                }
                let k = times.partition_point(|&b| b <= t);
                if k == 0 {
                    fractions[0]
                } else if k == times.len() {
                    fractions[k - 1]
                } else {
                    let (ta, tb) = (times[k - 1], times[k]);
                    let w = (t - ta) / (tb - ta);
                    fractions[k - 1] + w * (fractions[k] - fractions[k - 1])
                }
            }
            LoadProfile::Step { times, fractions } => {
                let k = times.partition_point(|&b| b <= t);
                if k == 0 {
                    0.0
                } else {
                    fractions[k - 1]
                }
            }
            LoadProfile::Sine { offset, amplitude, frequency, phase } => {
                offset + amplitude * (2.0 * std::f64::consts::PI * frequency * t + phase).sin()
            }
            LoadProfile::PulseTrain { start, period, ramp, dwell, low, levels } => {
                if t < *start {
                    return *low;
                }
                let k = ((t - start) / period).floor();
                let tau = t - start - k * period;
                let high = levels[(k as usize) % levels.len()];
                let shape = if tau < *ramp {
                    tau / ramp
                } else if tau < ramp + dwell {
                    1.0
                } else if tau < 2.0 * ramp + dwell {
                    1.0 - (tau - ramp - dwell) / ramp
                } else {
                    0.0
                };
                low + (high - low) * shape
            }
        }
    }

    /// Load force `F_L = fraction · capacity`.
    pub fn force(&self, t: f64, capacity: f64) -> f64 {
        self.fraction(t) * capacity
    }

    pub fn peak_fraction(&self) -> f64 {
        match self {
            LoadProfile::None => 0.0,
            LoadProfile::Constant { fraction } => fraction.abs(),
            LoadProfile::Linear { fractions, .. } | LoadProfile::Step { fractions, .. } => {
                fractions.iter().fold(0.0, |m, f| m.max(f.abs()))
            }
            LoadProfile::Sine { offset, amplitude, .. } => offset.abs() + amplitude.abs(),
            LoadProfile::PulseTrain { low, levels, .. } => {
                levels.iter().fold(low.abs(), |m, f| m.max(f.abs()))
            }
        }
    }
}

/// Load force `F_L(t)` in capacity units.
pub fn load_profile(t: f64, spec: &LoadProfile, capacity: f64) -> f64 {
    spec.force(t, capacity)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_schedules_are_zero() {
        assert_eq!(load_profile(3.0, &LoadProfile::None, 44.5), 0.0);
        let empty = LoadProfile::Linear { times: vec![], fractions: vec![] };
        assert_eq!(load_profile(3.0, &empty, 44.5), 0.0);
        let empty = LoadProfile::Step { times: vec![], fractions: vec![] };
        assert_eq!(load_profile(3.0, &empty, 44.5), 0.0);
    }

    #[test]
    fn constant_fraction_scales_capacity() {
        let p = LoadProfile::Constant { fraction: 0.125 };
        assert_eq!(load_profile(0.0, &p, 44.5), 5.5625);
    }

    #[test]
    fn step_uses_right_limit() {
        let p = LoadProfile::Step { times: vec![1.0, 2.0], fractions: vec![0.5, 0.9] };
        p.validate().unwrap();
        assert_eq!(p.fraction(0.999), 0.0);
        assert_eq!(p.fraction(1.0), 0.5);
        assert_eq!(p.fraction(2.0), 0.9);
        assert_eq!(p.fraction(50.0), 0.9);
    }

    #[test]
    fn linear_interpolates() {
        let p = LoadProfile::Linear { times: vec![0.0, 10.0], fractions: vec![0.0, 0.125] };
        assert_eq!(p.fraction(-1.0), 0.0);
        assert!((p.fraction(4.0) - 0.05).abs() < 1e-15);
        assert_eq!(p.fraction(20.0), 0.125);
    }

    #[test]
    fn pulse_train_shape() {
        let p = LoadProfile::PulseTrain {
            start: 1.0,
            period: 4.0,
            ramp: 0.5,
            dwell: 1.0,
            low: 0.0,
            levels: vec![0.92, 0.95],
        };
        p.validate().unwrap();
        assert_eq!(p.fraction(0.5), 0.0);
        assert!((p.fraction(1.25) - 0.46).abs() < 1e-12);
        assert_eq!(p.fraction(2.0), 0.92);
        assert_eq!(p.fraction(3.5), 0.0);
        assert_eq!(p.fraction(6.0), 0.95);
        assert_eq!(p.peak_fraction(), 0.95);
    }

    #[test]
    fn validation() {
        let bad = LoadProfile::Linear { times: vec![0.0, 0.0], fractions: vec![0.0, 1.0] };
        assert_eq!(bad.validate(), Err(LoadError::Unordered));
        let bad = LoadProfile::Step { times: vec![0.0], fractions: vec![] };
        assert_eq!(bad.validate(), Err(LoadError::Length(1, 0)));
    }
}
