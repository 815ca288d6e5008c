//! Simulation stack for a vacuum-based apple-harvesting robot built around a
//! 3-DOF manipulator (pan, tilt, prismatic extension).
//!
//! The crate mirrors the software pipeline of the physical system:
//!
//! - [`perception`] — multi-view detection fusion: side-camera boxes are
//!   re-projected into the main view, associated by IoU, scored through a
//!   Mamdani fuzzy unit, and localized by mean-depth back-projection.
//! - [`planning`] — unified picking-sequence / dropping-spot optimization:
//!   per-pair optimal release points inside the dropping region, composite
//!   travel costs, and a nearest-neighbor tour with an exhaustive oracle.
//! - [`trajectory`] — quintic reference trajectories with zero boundary
//!   velocity and acceleration.
//! - [`kinematics`] / [`control`] — closed-form forward and differential
//!   kinematics plus the Lyapunov velocity controller and a fixed-step RK4
//!   closed-loop simulator.
//! - [`cycle`] — the harvesting-cycle state machine, timing model, random
//!   scenario generation, and batch campaign runner.
//! - [`config`] — file-facing configuration with degree-valued angles.
//!
//! All simulation is deterministic: identical inputs (and seeds) produce
//! bit-identical outputs.

pub mod config;
pub mod control;
pub mod cycle;
pub mod kinematics;
pub mod perception;
pub mod planning;
pub mod trajectory;

pub use kinematics::{
    forward_kinematics, inverse_kinematics, velocity_map, JointRates, JointState,
    ManipulatorGeometry, Position3,
};
