//! Closed-form kinematics of the 3-DOF manipulator.
//!
//! The manipulator consists of a prismatic base joint `D` along the x-axis
//! and a pan-and-tilt head: tilt `theta` about the y-axis followed by pan
//! `phi` about the tilted z-axis, with the suction tube of length `d_x3`
//! mounted after the pan joint. End-effector position in the base frame:
//!
//! ```text
//! x = d_x3 cos(theta) cos(phi) + d_x2 cos(theta) + d_z2 sin(theta) + d_x1 + D
//! y = d_x3 sin(phi) + d_y2 + d_y1
//! z = -d_x3 sin(theta) cos(phi) - d_x2 sin(theta) + d_z2 cos(theta) + d_z1
//! ```

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// A point in the manipulator base frame, meters.
pub type Position3 = Vector3<f64>;

/// Joint identifier used in limit/singular diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Joint {
    Pan,
    Tilt,
    Extension,
}

impl std::fmt::Display for Joint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Joint::Pan => write!(f, "phi"),
            Joint::Tilt => write!(f, "theta"),
            Joint::Extension => write!(f, "D"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum KinematicsError {
    #[error("joint {joint} = {value} outside limits [{min}, {max}]")]
    JointLimit {
        joint: Joint,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("target unreachable: {0}")]
    Unreachable(String),
    #[error("non-finite input: {0}")]
    NonFinite(String),
}

/// Closed interval used for joint limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub min: f64,
    pub max: f64,
}

impl Interval {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }
}

/// Link lengths (meters) and joint limits of the manipulator.
///
/// Angle limits are radians and must stay inside (-pi/2, pi/2) so that
/// `cos(phi) > 0` and the controller denominators remain well defined on the
/// whole admissible set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManipulatorGeometry {
    pub d_x1: f64,
    pub d_x2: f64,
    pub d_x3: f64,
    pub d_y1: f64,
    pub d_y2: f64,
    pub d_z1: f64,
    pub d_z2: f64,
    pub phi_limits: Interval,
    pub theta_limits: Interval,
    pub d_limits: Interval,
}

impl ManipulatorGeometry {
    /// Default link profile. The physical prototype's lengths are not public;
    /// these values are a plausible stand-in sized to the published joint
    /// ranges and are meant to be overridden from configuration.
    pub fn default_profile() -> Self {
        let deg25 = 25.0_f64.to_radians();
        Self {
            d_x1: 0.10,
            d_x2: 0.09,
            d_x3: 0.70,
            d_y1: 0.03,
            d_y2: 0.03,
            d_z1: 0.40,
            d_z2: 0.06,
            phi_limits: Interval::new(-deg25, deg25),
            theta_limits: Interval::new(-deg25, deg25),
            d_limits: Interval::new(0.0, 0.61),
        }
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        let lengths = [
            self.d_x1, self.d_x2, self.d_x3, self.d_y1, self.d_y2, self.d_z1, self.d_z2,
        ];
        if lengths.iter().any(|v| !v.is_finite()) {
            return Err(KinematicsError::InvalidGeometry(
                "link lengths must be finite".into(),
            ));
        }
        if self.d_x3 <= 0.0 {
            return Err(KinematicsError::InvalidGeometry(format!(
                "d_x3 = {} must be positive (controller denominator)",
                self.d_x3
            )));
        }
        let half_pi = std::f64::consts::FRAC_PI_2;
        for (name, iv) in [("phi", &self.phi_limits), ("theta", &self.theta_limits)] {
            if !(iv.min < iv.max && iv.min > -half_pi && iv.max < half_pi) {
                return Err(KinematicsError::InvalidGeometry(format!(
                    "{name} limits [{}, {}] must be a nonempty subset of (-pi/2, pi/2)",
                    iv.min, iv.max
                )));
            }
        }
        if !(self.d_limits.min >= 0.0 && self.d_limits.min < self.d_limits.max) {
            return Err(KinematicsError::InvalidGeometry(format!(
                "extension limits [{}, {}] must be nonempty with lower bound >= 0",
                self.d_limits.min, self.d_limits.max
            )));
        }
        Ok(())
    }

    fn check_joint(&self, joint: Joint, value: f64) -> Result<(), KinematicsError> {
        let iv = match joint {
            Joint::Pan => &self.phi_limits,
            Joint::Tilt => &self.theta_limits,
            Joint::Extension => &self.d_limits,
        };
        if !value.is_finite() || !iv.contains(value) {
            return Err(KinematicsError::JointLimit {
                joint,
                value,
                min: iv.min,
                max: iv.max,
            });
        }
        Ok(())
    }

    pub fn check_state(&self, q: &JointState) -> Result<(), KinematicsError> {
        self.check_joint(Joint::Pan, q.phi)?;
        self.check_joint(Joint::Tilt, q.theta)?;
        self.check_joint(Joint::Extension, q.d)?;
        Ok(())
    }
}

/// Manipulator configuration: pan `phi` (rad), tilt `theta` (rad), extension
/// `d` (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub phi: f64,
    pub theta: f64,
    pub d: f64,
}

impl JointState {
    /// Builds a state after checking joint limits. Out-of-range values are an
    /// error, never clamped.
    pub fn new(
        phi: f64,
        theta: f64,
        d: f64,
        geom: &ManipulatorGeometry,
    ) -> Result<Self, KinematicsError> {
        let q = Self { phi, theta, d };
        geom.check_state(&q)?;
        Ok(q)
    }
}

/// Joint-space velocities: pan/tilt rates (rad/s) and extension rate (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointRates {
    pub omega_phi: f64,
    pub omega_theta: f64,
    pub v_d: f64,
}

impl JointRates {
    pub fn new(omega_phi: f64, omega_theta: f64, v_d: f64) -> Self {
        Self {
            omega_phi,
            omega_theta,
            v_d,
        }
    }
}

/// End-effector position for a joint state, without limit checks. Used by the
/// integrator, whose intermediate Runge-Kutta stages may graze the limits.
pub(crate) fn fk_unchecked(geom: &ManipulatorGeometry, phi: f64, theta: f64, d: f64) -> Position3 {
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    Vector3::new(
        geom.d_x3 * ct * cp + geom.d_x2 * ct + geom.d_z2 * st + geom.d_x1 + d,
        geom.d_x3 * sp + geom.d_y2 + geom.d_y1,
        -geom.d_x3 * st * cp - geom.d_x2 * st + geom.d_z2 * ct + geom.d_z1,
    )
}

/// End-effector position in the base frame.
pub fn forward_kinematics(
    geom: &ManipulatorGeometry,
    q: &JointState,
) -> Result<Position3, KinematicsError> {
    geom.check_state(q)?;
    Ok(fk_unchecked(geom, q.phi, q.theta, q.d))
}

pub(crate) fn velocity_unchecked(
    geom: &ManipulatorGeometry,
    q: &JointState,
    rates: &JointRates,
) -> Vector3<f64> {
    let (sp, cp) = q.phi.sin_cos();
    let (st, ct) = q.theta.sin_cos();
    let JointRates {
        omega_phi: wp,
        omega_theta: wt,
        v_d,
    } = *rates;
    Vector3::new(
        -geom.d_x3 * (st * cp * wt + ct * sp * wp) - geom.d_x2 * st * wt + geom.d_z2 * ct * wt
            + v_d,
        geom.d_x3 * cp * wp,
        -geom.d_x3 * (ct * cp * wt - st * sp * wp) - geom.d_x2 * ct * wt - geom.d_z2 * st * wt,
    )
}

/// Cartesian end-effector velocity induced by joint rates at configuration
/// `q` (the analytic Jacobian applied to `rates`).
pub fn velocity_map(
    geom: &ManipulatorGeometry,
    q: &JointState,
    rates: &JointRates,
) -> Result<Vector3<f64>, KinematicsError> {
    geom.check_state(q)?;
    Ok(velocity_unchecked(geom, q, rates))
}

/// Analytic inverse kinematics.
///
/// Solves the y-equation first (`phi = asin((y - d_y1 - d_y2)/d_x3)`, principal
/// branch), then the z-equation for `theta`, then the x-equation for `D`.
/// When both `theta` roots are admissible the solution with extension in range
/// and the smaller `|theta|` wins, which makes the solver deterministic. With
/// angle limits well inside (-pi/2, pi/2) — as on the default profile — only
/// one root can be admissible, so round-trips through the forward map recover
/// the original state.
///
/// This solver exists for tooling (reachability gates, fixture generation);
/// the tracking controller never needs it.
pub fn inverse_kinematics(
    geom: &ManipulatorGeometry,
    target: &Position3,
) -> Result<JointState, KinematicsError> {
    if !(target.x.is_finite() && target.y.is_finite() && target.z.is_finite()) {
        return Err(KinematicsError::NonFinite(format!("target {target:?}")));
    }

    let s_phi = (target.y - geom.d_y1 - geom.d_y2) / geom.d_x3;
    if s_phi.abs() > 1.0 {
        return Err(KinematicsError::Unreachable(format!(
            "lateral offset |y - d_y1 - d_y2| = {} exceeds d_x3 = {}",
            (target.y - geom.d_y1 - geom.d_y2).abs(),
            geom.d_x3
        )));
    }
    let phi = s_phi.asin();
    if !geom.phi_limits.contains(phi) {
        return Err(KinematicsError::Unreachable(format!(
            "required pan {phi} rad outside limits [{}, {}]",
            geom.phi_limits.min, geom.phi_limits.max
        )));
    }

    // z - d_z1 = A sin(theta) + B cos(theta),  A = -(d_x3 cos(phi) + d_x2), B = d_z2
    let a = -(geom.d_x3 * phi.cos() + geom.d_x2);
    let b = geom.d_z2;
    let c = target.z - geom.d_z1;
    let r = a.hypot(b);
    if c.abs() > r {
        return Err(KinematicsError::Unreachable(format!(
            "vertical offset |z - d_z1| = {} exceeds head reach {r}",
            c.abs()
        )));
    }
    let beta = (c / r).asin();
    let delta = b.atan2(a);
    let normalize = |mut t: f64| {
        while t > std::f64::consts::PI {
            t -= 2.0 * std::f64::consts::PI;
        }
        while t <= -std::f64::consts::PI {
            t += 2.0 * std::f64::consts::PI;
        }
        t
    };
    let roots = [
        normalize(beta - delta),
        normalize(std::f64::consts::PI - beta - delta),
    ];

    let solve_d = |theta: f64| {
        target.x
            - geom.d_x3 * theta.cos() * phi.cos()
            - geom.d_x2 * theta.cos()
            - geom.d_z2 * theta.sin()
            - geom.d_x1
    };

    let mut admissible: Vec<(f64, f64)> = roots
        .iter()
        .filter(|t| geom.theta_limits.contains(**t))
        .map(|&t| (t, solve_d(t)))
        .collect();
    if admissible.is_empty() {
        return Err(KinematicsError::Unreachable(format!(
            "no tilt solution inside limits [{}, {}] for z = {}",
            geom.theta_limits.min, geom.theta_limits.max, target.z
        )));
    }
    admissible.sort_by(|x, y| {
        let in_x = geom.d_limits.contains(x.1);
        let in_y = geom.d_limits.contains(y.1);
        in_y.cmp(&in_x)
            .then(x.0.abs().partial_cmp(&y.0.abs()).unwrap())
            .then(x.0.partial_cmp(&y.0).unwrap())
    });
    let (theta, d) = admissible[0];
    if !geom.d_limits.contains(d) {
        return Err(KinematicsError::Unreachable(format!(
            "required extension {d} m outside limits [{}, {}]",
            geom.d_limits.min, geom.d_limits.max
        )));
    }
    Ok(JointState { phi, theta, d })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{Matrix4, Vector4};
    use proptest::prelude::*;

    fn geom() -> ManipulatorGeometry {
        ManipulatorGeometry::default_profile()
    }

    // Independent oracle: the same mechanism expressed as a product of
    // homogeneous transforms instead of the closed-form expressions.
    fn fk_transform_chain(g: &ManipulatorGeometry, phi: f64, theta: f64, d: f64) -> Position3 {
        fn trans(x: f64, y: f64, z: f64) -> Matrix4<f64> {
            let mut m = Matrix4::identity();
            m[(0, 3)] = x;
            m[(1, 3)] = y;
            m[(2, 3)] = z;
            m
        }
        fn rot_y(a: f64) -> Matrix4<f64> {
            let (s, c) = a.sin_cos();
            let mut m = Matrix4::identity();
            m[(0, 0)] = c;
            m[(0, 2)] = s;
            m[(2, 0)] = -s;
            m[(2, 2)] = c;
            m
        }
        fn rot_z(a: f64) -> Matrix4<f64> {
            let (s, c) = a.sin_cos();
            let mut m = Matrix4::identity();
            m[(0, 0)] = c;
            m[(0, 1)] = -s;
            m[(1, 0)] = s;
            m[(1, 1)] = c;
            m
        }
        let t = trans(g.d_x1 + d, g.d_y1, g.d_z1)
            * rot_y(theta)
            * trans(g.d_x2, g.d_y2, g.d_z2)
            * rot_z(phi)
            * trans(g.d_x3, 0.0, 0.0);
        let p = t * Vector4::new(0.0, 0.0, 0.0, 1.0);
        Vector3::new(p.x, p.y, p.z)
    }

    #[test]
    fn zero_pose_reaches_link_sums() {
        let g = geom();
        let q = JointState::new(0.0, 0.0, 0.0, &g).unwrap();
        let p = forward_kinematics(&g, &q).unwrap();
        assert_eq!(p.x, g.d_x1 + g.d_x2 + g.d_x3);
        assert_eq!(p.y, g.d_y1 + g.d_y2);
        assert_eq!(p.z, g.d_z1 + g.d_z2);
    }

    #[test]
    fn extension_shifts_x_only() {
        let g = geom();
        let q0 = JointState::new(0.2, -0.1, 0.1, &g).unwrap();
        let delta = 0.25;
        let q1 = JointState::new(0.2, -0.1, 0.1 + delta, &g).unwrap();
        let p0 = forward_kinematics(&g, &q0).unwrap();
        let p1 = forward_kinematics(&g, &q1).unwrap();
        assert_abs_diff_eq!(p1.x - p0.x, delta, epsilon = 1e-15);
        assert_eq!(p1.y, p0.y);
        assert_eq!(p1.z, p0.z);
    }

    #[test]
    fn matches_transform_chain_oracle() {
        let g = geom();
        // Frozen from the transform-chain oracle at phi=20deg, theta=-10deg, D=0.3.
        let q = JointState::new(20f64.to_radians(), (-10f64).to_radians(), 0.3, &g).unwrap();
        let p = forward_kinematics(&g, &q).unwrap();
        assert_abs_diff_eq!(p.x, 1.126005411989909, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 0.299414100327968, epsilon = 1e-12);
        assert_abs_diff_eq!(p.z, 0.588939938987331, epsilon = 1e-12);

        let oracle = fk_transform_chain(&g, q.phi, q.theta, q.d);
        assert_abs_diff_eq!(p.x, oracle.x, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, oracle.y, epsilon = 1e-12);
        assert_abs_diff_eq!(p.z, oracle.z, epsilon = 1e-12);
    }

    #[test]
    fn limit_violation_names_joint() {
        let g = geom();
        let q = JointState {
            phi: 0.6,
            theta: 0.0,
            d: 0.0,
        };
        match forward_kinematics(&g, &q) {
            Err(KinematicsError::JointLimit { joint, .. }) => assert_eq!(joint, Joint::Pan),
            other => panic!("expected pan limit error, got {other:?}"),
        }
        assert!(JointState::new(0.0, 0.0, 0.7, &g).is_err());
    }

    #[test]
    fn velocity_prismatic_only() {
        let g = geom();
        let q = JointState::new(0.1, -0.2, 0.3, &g).unwrap();
        let v = velocity_map(&g, &q, &JointRates::new(0.0, 0.0, 0.7)).unwrap();
        assert_eq!(v, Vector3::new(0.7, 0.0, 0.0));
    }

    #[test]
    fn velocity_pan_at_zero_pose() {
        let g = geom();
        let q = JointState::new(0.0, 0.0, 0.0, &g).unwrap();
        let w = 0.4;
        let v = velocity_map(&g, &q, &JointRates::new(w, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(v.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.y, g.d_x3 * w, epsilon = 1e-15);
        assert_abs_diff_eq!(v.z, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn velocity_matches_finite_differences() {
        let g = geom();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        use rand::Rng;
        use rand::SeedableRng;
        let eps = 1e-6;
        for _ in 0..1000 {
            let q = JointState {
                phi: rng.random_range(-0.4..0.4),
                theta: rng.random_range(-0.4..0.4),
                d: rng.random_range(0.01..0.6),
            };
            let rates = JointRates::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let v = velocity_map(&g, &q, &rates).unwrap();
            let plus = fk_unchecked(
                &g,
                q.phi + eps * rates.omega_phi,
                q.theta + eps * rates.omega_theta,
                q.d + eps * rates.v_d,
            );
            let minus = fk_unchecked(
                &g,
                q.phi - eps * rates.omega_phi,
                q.theta - eps * rates.omega_theta,
                q.d - eps * rates.v_d,
            );
            let fd = (plus - minus) / (2.0 * eps);
            let scale = v.norm().max(1.0);
            assert!(
                (v - fd).norm() / scale <= 1e-6,
                "fd mismatch at {q:?}: analytic {v:?} vs fd {fd:?}"
            );
        }
    }

    #[test]
    fn ik_round_trip_exact() {
        let g = geom();
        let q = JointState::new(0.3, -0.2, 0.45, &g).unwrap();
        let p = forward_kinematics(&g, &q).unwrap();
        let qr = inverse_kinematics(&g, &p).unwrap();
        assert_abs_diff_eq!(qr.phi, q.phi, epsilon = 1e-9);
        assert_abs_diff_eq!(qr.theta, q.theta, epsilon = 1e-9);
        assert_abs_diff_eq!(qr.d, q.d, epsilon = 1e-9);
        let p2 = forward_kinematics(&g, &qr).unwrap();
        assert!((p2 - p).norm() <= 1e-9);
    }

    #[test]
    fn ik_unreachable_lateral() {
        let g = geom();
        let target = Vector3::new(1.0, g.d_y1 + g.d_y2 + 2.0 * g.d_x3, 0.4);
        match inverse_kinematics(&g, &target) {
            Err(KinematicsError::Unreachable(msg)) => {
                assert!(msg.contains("lateral"), "unexpected message: {msg}")
            }
            other => panic!("expected unreachable, got {other:?}"),
        }
    }

    #[test]
    fn ik_rejects_out_of_range_extension() {
        let g = geom();
        // Straight ahead but beyond full extension.
        let target = Vector3::new(g.d_x1 + g.d_x2 + g.d_x3 + g.d_limits.max + 0.05, 0.06, 0.46);
        match inverse_kinematics(&g, &target) {
            Err(KinematicsError::Unreachable(msg)) => {
                assert!(msg.contains("extension"), "unexpected message: {msg}")
            }
            other => panic!("expected unreachable, got {other:?}"),
        }
    }

    #[test]
    fn target_grid_round_trips() {
        // The 48 evaluation targets: phi, theta in {-20, -10, 10, 20} deg,
        // D in {0.1, 0.3, 0.5} m.
        let g = geom();
        let angles: Vec<f64> = [-20.0, -10.0, 10.0, 20.0]
            .iter()
            .map(|a: &f64| a.to_radians())
            .collect();
        let exts = [0.1, 0.3, 0.5];
        let mut count = 0;
        for &phi in &angles {
            for &theta in &angles {
                for &d in &exts {
                    let q = JointState::new(phi, theta, d, &g).unwrap();
                    let p = forward_kinematics(&g, &q).unwrap();
                    let qr = inverse_kinematics(&g, &p).unwrap();
                    assert_abs_diff_eq!(qr.phi, phi, epsilon = 1e-9);
                    assert_abs_diff_eq!(qr.theta, theta, epsilon = 1e-9);
                    assert_abs_diff_eq!(qr.d, d, epsilon = 1e-9);
                    let p2 = forward_kinematics(&g, &qr).unwrap();
                    assert!((p2 - p).norm() <= 1e-9);
                    count += 1;
                }
            }
        }
        assert_eq!(count, 48);
    }

    #[test]
    fn deterministic_outputs() {
        let g = geom();
        let q = JointState::new(0.123456, -0.23456, 0.456, &g).unwrap();
        let p1 = forward_kinematics(&g, &q).unwrap();
        let p2 = forward_kinematics(&g, &q).unwrap();
        assert_eq!(p1, p2);
    }

    proptest! {
        #[test]
        fn fk_ik_round_trip(phi in -0.43f64..0.43, theta in -0.43f64..0.43, d in 0.0f64..0.61) {
            let g = geom();
            let q = JointState::new(phi, theta, d, &g).unwrap();
            let p = forward_kinematics(&g, &q).unwrap();
            let qr = inverse_kinematics(&g, &p).unwrap();
            prop_assert!((qr.phi - phi).abs() <= 1e-9);
            prop_assert!((qr.theta - theta).abs() <= 1e-9);
            prop_assert!((qr.d - d).abs() <= 1e-9);
        }

        #[test]
        fn lateral_reach_bound(phi in -0.43f64..0.43, theta in -0.43f64..0.43, d in 0.0f64..0.61) {
            let g = geom();
            let q = JointState::new(phi, theta, d, &g).unwrap();
            let p = forward_kinematics(&g, &q).unwrap();
            prop_assert!((p.y - g.d_y1 - g.d_y2).abs() <= g.d_x3 + 1e-12);
        }

        #[test]
        fn chain_oracle_agrees(phi in -0.43f64..0.43, theta in -0.43f64..0.43, d in 0.0f64..0.61) {
            let g = geom();
            let q = JointState::new(phi, theta, d, &g).unwrap();
            let p = forward_kinematics(&g, &q).unwrap();
            let o = fk_transform_chain(&g, phi, theta, d);
            prop_assert!((p - o).norm() <= 1e-12);
        }
    }
}
