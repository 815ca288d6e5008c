//! Quintic reference trajectories.
//!
//! Straight-line paths with the minimal-jerk time scaling
//! `s(tau) = 10 tau^3 - 15 tau^4 + 6 tau^5`, the unique quintic with zero
//! boundary velocity and acceleration. Each Cartesian axis shares the same
//! scalar profile, so every coordinate moves monotonically from start to
//! target.

use crate::kinematics::Position3;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum TrajectoryError {
    #[error("duration {0} must be positive and finite")]
    InvalidDuration(f64),
    #[error("non-finite endpoint: {0}")]
    NonFinite(String),
}

/// Duration selection: pick the duration at which the quintic's peak speed
/// equals `peak_speed`, clamped to `[min_duration, max_duration]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedProfile {
    /// Peak end-effector speed the trajectory aims for, m/s.
    pub peak_speed: f64,
    /// Shortest admissible move duration, s.
    pub min_duration: f64,
    /// Longest admissible move duration, s.
    pub max_duration: f64,
}

impl Default for SpeedProfile {
    fn default() -> Self {
        Self {
            peak_speed: 1.0,
            min_duration: 0.75,
            max_duration: 1.4,
        }
    }
}

impl SpeedProfile {
    /// Duration for a move of length `distance`. The quintic's peak speed is
    /// `15/8 * distance / T`, so the unclamped duration is
    /// `15/8 * distance / peak_speed`.
    pub fn duration_for(&self, distance: f64) -> f64 {
        let raw = 1.875 * distance / self.peak_speed;
        raw.clamp(self.min_duration, self.max_duration)
    }
}

/// Position, velocity, and acceleration at one sample instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub position: Position3,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
}

/// A per-axis degree-5 polynomial from `start` to `target` over `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuinticTrajectory {
    start: Position3,
    target: Position3,
    duration: f64,
    /// Per-axis coefficients `c[0] + c[1] t + ... + c[5] t^5`.
    coeffs: [[f64; 6]; 3],
}

impl QuinticTrajectory {
    pub fn new(
        start: Position3,
        target: Position3,
        duration: f64,
    ) -> Result<Self, TrajectoryError> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(TrajectoryError::InvalidDuration(duration));
        }
        for (name, p) in [("start", &start), ("target", &target)] {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(TrajectoryError::NonFinite(format!("{name} {p:?}")));
            }
        }
        let t3 = duration.powi(3);
        let t4 = t3 * duration;
        let t5 = t4 * duration;
        let mut coeffs = [[0.0; 6]; 3];
        for axis in 0..3 {
            let delta = target[axis] - start[axis];
            coeffs[axis] = [
                start[axis],
                0.0,
                0.0,
                10.0 * delta / t3,
                -15.0 * delta / t4,
                6.0 * delta / t5,
            ];
        }
        Ok(Self {
            start,
            target,
            duration,
            coeffs,
        })
    }

    /// Builds the trajectory with its duration chosen from the speed profile.
    pub fn with_profile(start: Position3, target: Position3, profile: &SpeedProfile) -> Self {
        let duration = profile.duration_for((target - start).norm());
        Self::new(start, target, duration).expect("profile durations are positive")
    }

    pub fn start(&self) -> Position3 {
        self.start
    }

    pub fn target(&self) -> Position3 {
        self.target
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    /// Evaluates position and its first two derivatives. Time is clamped to
    /// `[0, T]`: before the start the initial state is held, beyond the end
    /// the terminal state (target, zero velocity, zero acceleration).
    pub fn sample(&self, t: f64) -> TrajectorySample {
        if t <= 0.0 {
            return TrajectorySample {
                position: self.start,
                velocity: Vector3::zeros(),
                acceleration: Vector3::zeros(),
            };
        }
        if t >= self.duration {
            return TrajectorySample {
                position: self.target,
                velocity: Vector3::zeros(),
                acceleration: Vector3::zeros(),
            };
        }
        let mut position = Vector3::zeros();
        let mut velocity = Vector3::zeros();
        let mut acceleration = Vector3::zeros();
        for axis in 0..3 {
            let c = &self.coeffs[axis];
            // Horner evaluation of p, p', p''.
            position[axis] =
                ((((c[5] * t + c[4]) * t + c[3]) * t + c[2]) * t + c[1]) * t + c[0];
            velocity[axis] =
                (((5.0 * c[5] * t + 4.0 * c[4]) * t + 3.0 * c[3]) * t + 2.0 * c[2]) * t + c[1];
            acceleration[axis] =
                ((20.0 * c[5] * t + 12.0 * c[4]) * t + 6.0 * c[3]) * t + 2.0 * c[2];
        }
        TrajectorySample {
            position,
            velocity,
            acceleration,
        }
    }
}
