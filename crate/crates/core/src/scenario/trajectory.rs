//! Desired output `x_1d(t)` and its analytic derivative.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("quintic duration must be positive, got {0}")]
    Duration(f64),
    #[error("quintic trajectory needs at least one segment")]
    Empty,
    #[error("segment {index} starts at {start} but the previous one ends at {previous}")]
    Discontinuous { index: usize, start: f64, previous: f64 },
}

/// Rest-to-rest quintic blend from `x0` to `xf` over `[0, T]`, clamped
/// outside that interval. Returns `(x_d, ẋ_d)`.
pub fn quintic_trajectory(t: f64, x0: f64, xf: f64, duration: f64) -> Result<(f64, f64), TrajectoryError> {
    if !(duration > 0.0) {
        return Err(TrajectoryError::Duration(duration));
    }
    let s = (t / duration).clamp(0.0, 1.0);
    let s2 = s * s;
    let s3 = s2 * s;
    let blend = s3 * (10.0 - 15.0 * s + 6.0 * s2);
    let rate = 30.0 * s2 * (1.0 - s) * (1.0 - s) / duration;
    Ok((x0 + (xf - x0) * blend, (xf - x0) * rate))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub x0: f64,
    pub xf: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectorySpec {
    Setpoint { value: f64 },
    /// Segments played back to back from `start`; the first position is held
    /// before `start` and the last one after the final segment.
    Quintic {
        #[serde(default)]
        start: f64,
        segments: Vec<Segment>,
    },
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if let TrajectorySpec::Quintic { segments, .. } = self {
            if segments.is_empty() {
                return Err(TrajectoryError::Empty);
            }
            for (index, seg) in segments.iter().enumerate() {
                if !(seg.duration > 0.0) {
                    return Err(TrajectoryError::Duration(seg.duration));
                }
                if index > 0 && segments[index - 1].xf != seg.x0 {
                    return Err(TrajectoryError::Discontinuous {
                        index,
                        start: seg.x0,
                        previous: segments[index - 1].xf,
                    });
                }
            }
        }
        Ok(())
    }

    /// `(x_1d, ẋ_1d)` at absolute time `t`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        match self {
            TrajectorySpec::Setpoint { value } => (*value, 0.0),
            TrajectorySpec::Quintic { start, segments } => {
                let mut t0 = *start;
                if t < t0 {
                    return (segments[0].x0, 0.0);
                }
                for seg in segments {
                    if t <= t0 + seg.duration {
                        return quintic_trajectory(t - t0, seg.x0, seg.xf, seg.duration)
                            .expect("validated duration");
                    }
                    t0 += seg.duration;
                }
                (segments.last().map_or(0.0, |s| s.xf), 0.0)
            }
        }
    }

    /// Largest `|x_1d|` reached.
    pub fn peak(&self) -> f64 {
        match self {
            TrajectorySpec::Setpoint { value } => value.abs(),
            TrajectorySpec::Quintic { segments, .. } => segments
                .iter()
                .flat_map(|s| [s.x0.abs(), s.xf.abs()])
                .fold(0.0, f64::max),
        }
    }
}
