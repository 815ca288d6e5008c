//! Lyapunov velocity control and closed-loop kinematic simulation.
//!
//! The controller inverts the differential kinematics channel by channel:
//! the pan rate regulates y, the tilt rate regulates z (compensating the pan
//! coupling), and the extension rate regulates x (compensating both). With
//! errors `e = p - p_r` the closed loop satisfies `de/dt = -K e` exactly, so
//! `V = |e|^2 / 2` decays monotonically while the joints stay away from the
//! denominator singularities at `cos(phi) -> 0`.

use crate::kinematics::{
    fk_unchecked, velocity_unchecked, Joint, JointRates, JointState, KinematicsError,
    ManipulatorGeometry, Position3,
};
use crate::trajectory::QuinticTrajectory;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Channel whose denominator vanished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlChannel {
    /// Pan denominator `d_x3 cos(phi)`.
    Lateral,
    /// Tilt denominator `d_x3 cos(theta) cos(phi) + d_x2 cos(theta) + d_z2 sin(theta)`.
    Vertical,
}

impl std::fmt::Display for ControlChannel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ControlChannel::Lateral => write!(f, "y"),
            ControlChannel::Vertical => write!(f, "z"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ControlError {
    #[error("{channel}-channel denominator {value} below {min}", min = EPS_DENOMINATOR)]
    Singularity { channel: ControlChannel, value: f64 },
    #[error("controller gains must be positive, got ({0}, {1}, {2})")]
    NonPositiveGain(f64, f64, f64),
    #[error("time step {0} must lie in (0, 0.01]")]
    InvalidTimeStep(f64),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// Minimum magnitude allowed for the Eq-denominators before the commanded
/// rates are considered singular.
pub const EPS_DENOMINATOR: f64 = 1e-6;

/// Positive feedback gains (1/s) for the x, y, z channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    pub k_x: f64,
    pub k_y: f64,
    pub k_z: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            k_x: 2.0,
            k_y: 2.0,
            k_z: 2.0,
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<(), ControlError> {
        if self.k_x > 0.0 && self.k_y > 0.0 && self.k_z > 0.0 {
            Ok(())
        } else {
            Err(ControlError::NonPositiveGain(self.k_x, self.k_y, self.k_z))
        }
    }
}

/// Saturation bounds applied to the commanded joint rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorLimits {
    /// Bound on |omega_phi| and |omega_theta|, rad/s.
    pub max_joint_speed: f64,
    /// Bound on |v_D|, m/s.
    pub max_extension_speed: f64,
}

impl Default for ActuatorLimits {
    fn default() -> Self {
        Self {
            max_joint_speed: 2.0,
            max_extension_speed: 1.0,
        }
    }
}

/// Output of the velocity controller.
///
/// `raw` is the pure control law; `applied` propagates saturation through the
/// cascade (a clamped pan rate feeds the tilt compensation, and so on), which
/// is what the actuators would execute. When nothing saturates the two agree
/// bit for bit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityCommand {
    pub raw: JointRates,
    pub applied: JointRates,
    pub saturated: bool,
}

/// Velocity control law mapping tracking error and reference velocity to
/// joint rates.
pub fn velocity_command(
    geom: &ManipulatorGeometry,
    q: &JointState,
    ref_pos: &Position3,
    ref_vel: &Vector3<f64>,
    gains: &ControllerGains,
    limits: &ActuatorLimits,
) -> Result<VelocityCommand, ControlError> {
    gains.validate()?;
    geom.check_state(q)?;
    command_unchecked(geom, q.phi, q.theta, q.d, ref_pos, ref_vel, gains, limits)
}

#[allow(clippy::too_many_arguments)]
fn command_unchecked(
    geom: &ManipulatorGeometry,
    phi: f64,
    theta: f64,
    d: f64,
    ref_pos: &Position3,
    ref_vel: &Vector3<f64>,
    gains: &ControllerGains,
    limits: &ActuatorLimits,
) -> Result<VelocityCommand, ControlError> {
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let p = fk_unchecked(geom, phi, theta, d);
    let e = p - ref_pos;

    let den_y = geom.d_x3 * cp;
    if den_y.abs() < EPS_DENOMINATOR {
        return Err(ControlError::Singularity {
            channel: ControlChannel::Lateral,
            value: den_y,
        });
    }
    let den_z = geom.d_x3 * ct * cp + geom.d_x2 * ct + geom.d_z2 * st;
    if den_z.abs() < EPS_DENOMINATOR {
        return Err(ControlError::Singularity {
            channel: ControlChannel::Vertical,
            value: den_z,
        });
    }

    let omega_phi = (-gains.k_y * e.y + ref_vel.y) / den_y;
    let omega_theta_from =
        |wp: f64| (gains.k_z * e.z + geom.d_x3 * st * sp * wp - ref_vel.z) / den_z;
    let v_d_from = |wp: f64, wt: f64| {
        -gains.k_x * e.x + geom.d_x3 * (st * cp * wt + ct * sp * wp) + geom.d_x2 * st * wt
            - geom.d_z2 * ct * wt
            + ref_vel.x
    };

    let raw = JointRates::new(
        omega_phi,
        omega_theta_from(omega_phi),
        v_d_from(omega_phi, omega_theta_from(omega_phi)),
    );

    let clamp = |v: f64, lim: f64| v.clamp(-lim, lim);
    let wp_app = clamp(omega_phi, limits.max_joint_speed);
    let wt_app = clamp(omega_theta_from(wp_app), limits.max_joint_speed);
    let vd_app = clamp(v_d_from(wp_app, wt_app), limits.max_extension_speed);
    let applied = JointRates::new(wp_app, wt_app, vd_app);

    let saturated = wp_app != raw.omega_phi
        || wt_app != omega_theta_from(wp_app)
        || vd_app != v_d_from(wp_app, wt_app);

    Ok(VelocityCommand {
        raw,
        applied,
        saturated,
    })
}

/// Why a simulation ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrackingOutcome {
    /// Ran to the requested horizon.
    Completed,
    /// A controller denominator fell below [`EPS_DENOMINATOR`].
    Singularity { t: f64, channel: String },
    /// The integrated state crossed a joint limit.
    JointLimit { t: f64, joint: String },
}

impl TrackingOutcome {
    pub fn event_label(&self) -> &'static str {
        match self {
            TrackingOutcome::Completed => "",
            TrackingOutcome::Singularity { .. } => "singularity",
            TrackingOutcome::JointLimit { .. } => "joint_limit",
        }
    }
}

/// One logged instant of a closed-loop run. The end-effector position is
/// recomputed from the joint state on every sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingSample {
    pub t: f64,
    pub q: JointState,
    pub position: Position3,
    pub error: Vector3<f64>,
    pub lyapunov: f64,
    pub command: JointRates,
    pub saturated: bool,
}

/// Time history of one closed-loop simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingLog {
    pub samples: Vec<TrackingSample>,
    pub outcome: TrackingOutcome,
}

impl TrackingLog {
    pub fn final_sample(&self) -> &TrackingSample {
        self.samples.last().expect("log always holds t = 0")
    }

    /// CSV export with one row per sample:
    /// `t,phi,theta,d,x,y,z,ex,ey,ez,V,omega_phi,omega_theta,v_d,saturated,event`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "t,phi,theta,d,x,y,z,ex,ey,ez,V,omega_phi,omega_theta,v_d,saturated,event"
        )?;
        let last = self.samples.len() - 1;
        for (i, s) in self.samples.iter().enumerate() {
            let event = if i == last {
                self.outcome.event_label()
            } else {
                ""
            };
            writeln!(
                w,
                "{:.6},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.3e},{:.3e},{:.3e},{:.6e},{:.9},{:.9},{:.9},{},{}",
                s.t,
                s.q.phi,
                s.q.theta,
                s.q.d,
                s.position.x,
                s.position.y,
                s.position.z,
                s.error.x,
                s.error.y,
                s.error.z,
                s.lyapunov,
                s.command.omega_phi,
                s.command.omega_theta,
                s.command.v_d,
                u8::from(s.saturated),
                event
            )?;
        }
        Ok(())
    }
}

/// Fixed-step RK4 integration of the closed loop `dq/dt = u(q, t)` tracking
/// the reference trajectory.
///
/// Singularities and joint-limit contact terminate the run early; both are
/// reported as labeled outcomes rather than errors, with the log retaining
/// every admissible sample.
pub fn simulate_tracking(
    geom: &ManipulatorGeometry,
    q0: &JointState,
    traj: &QuinticTrajectory,
    gains: &ControllerGains,
    limits: &ActuatorLimits,
    dt: f64,
    horizon: f64,
) -> Result<TrackingLog, ControlError> {
    if !(dt.is_finite() && dt > 0.0 && dt <= 0.01) {
        return Err(ControlError::InvalidTimeStep(dt));
    }
    gains.validate()?;
    geom.check_state(q0)?;

    let n_steps = (horizon / dt).round().max(0.0) as usize;
    let mut samples = Vec::with_capacity(n_steps + 1);
    let mut state = Vector3::new(q0.phi, q0.theta, q0.d);

    let derivative = |s: &Vector3<f64>, t: f64| -> Result<Vector3<f64>, ControlError> {
        let r = traj.sample(t);
        let cmd = command_unchecked(
            geom,
            s.x,
            s.y,
            s.z,
            &r.position,
            &r.velocity,
            gains,
            limits,
        )?;
        Ok(Vector3::new(
            cmd.applied.omega_phi,
            cmd.applied.omega_theta,
            cmd.applied.v_d,
        ))
    };

    let log_sample = |samples: &mut Vec<TrackingSample>,
                      s: &Vector3<f64>,
                      t: f64|
     -> Result<(), ControlError> {
        let r = traj.sample(t);
        let cmd = command_unchecked(
            geom,
            s.x,
            s.y,
            s.z,
            &r.position,
            &r.velocity,
            gains,
            limits,
        )?;
        let q = JointState {
            phi: s.x,
            theta: s.y,
            d: s.z,
        };
        let position = fk_unchecked(geom, q.phi, q.theta, q.d);
        let error = position - r.position;
        samples.push(TrackingSample {
            t,
            q,
            position,
            error,
            lyapunov: 0.5 * error.norm_squared(),
            command: cmd.applied,
            saturated: cmd.saturated,
        });
        Ok(())
    };

    log_sample(&mut samples, &state, 0.0)?;

    for step in 0..n_steps {
        let t = step as f64 * dt;
        let rk4 = (|| -> Result<Vector3<f64>, ControlError> {
            let k1 = derivative(&state, t)?;
            let k2 = derivative(&(state + 0.5 * dt * k1), t + 0.5 * dt)?;
            let k3 = derivative(&(state + 0.5 * dt * k2), t + 0.5 * dt)?;
            let k4 = derivative(&(state + dt * k3), t + dt)?;
            Ok(state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        })();
        let next = match rk4 {
            Ok(next) => next,
            Err(ControlError::Singularity { channel, .. }) => {
                return Ok(TrackingLog {
                    samples,
                    outcome: TrackingOutcome::Singularity {
                        t,
                        channel: channel.to_string(),
                    },
                });
            }
            Err(e) => return Err(e),
        };

        let q_next = JointState {
            phi: next.x,
            theta: next.y,
            d: next.z,
        };
        if let Err(KinematicsError::JointLimit { joint, .. }) = geom.check_state(&q_next) {
            return Ok(TrackingLog {
                samples,
                outcome: TrackingOutcome::JointLimit {
                    t,
                    joint: joint.to_string(),
                },
            });
        }

        state = next;
        let t_next = (step + 1) as f64 * dt;
        if let Err(ControlError::Singularity { channel, .. }) =
            log_sample(&mut samples, &state, t_next)
        {
            return Ok(TrackingLog {
                samples,
                outcome: TrackingOutcome::Singularity {
                    t: t_next,
                    channel: channel.to_string(),
                },
            });
        }
    }

    Ok(TrackingLog {
        samples,
        outcome: TrackingOutcome::Completed,
    })
}

/// Checks whether the simulated rates reproduce the designed Cartesian
/// closed-loop velocity: substituting the command into the differential
/// kinematics must give `v = -K e + v_ref` channel by channel.
pub fn closure_residual(
    geom: &ManipulatorGeometry,
    q: &JointState,
    ref_pos: &Position3,
    ref_vel: &Vector3<f64>,
    gains: &ControllerGains,
    rates: &JointRates,
) -> f64 {
    let p = fk_unchecked(geom, q.phi, q.theta, q.d);
    let e = p - ref_pos;
    let designed = Vector3::new(
        -gains.k_x * e.x + ref_vel.x,
        -gains.k_y * e.y + ref_vel.y,
        -gains.k_z * e.z + ref_vel.z,
    );
    let actual = velocity_unchecked(geom, q, rates);
    (actual - designed).amax()
}
