//! Desk-scale simulation of an 8-DoF upper-limb exoskeleton.
//!
//! The device has six active joints (a shoulder-girdle revolute + prismatic
//! pair, a three-axis spherical shoulder linkage, and an elbow) and two
//! passive wrist joints. Two instrumented ports connect it to the wearer:
//! an upper-arm cuff (port A) and a hand handle (port B).
//!
//! Crate layout mirrors the control stack:
//!
//! * [`kinematics`] — DH chain, forward kinematics, port Jacobians,
//!   damped least-squares velocity resolution.
//! * [`dynamics`] — joint-space inertia, Coriolis, gravity terms and
//!   forward dynamics for the simulated plant.
//! * [`controller`] — admittance filter, impedance rendering, PD tracking
//!   with gravity feedforward.
//! * [`reference`] — minimum-jerk reaching trajectories with the
//!   shoulder-girdle joints slaved to arm elevation.
//! * [`sim`] — deterministic fixed-step closed-loop executive with the
//!   5:1 sensor/control rate structure, CSV logging and metrics.
//! * [`config`] — scenario files (strict JSON) driving all of the above.
//!
//! All math is `f64`; vectors stack linear before angular components
//! (`[vx vy vz wx wy wz]`, wrenches `[fx fy fz tx ty tz]`).

pub mod config;
pub mod controller;
pub mod dynamics;
mod error;
pub mod kinematics;
pub mod reference;
pub mod sim;
pub mod types;

pub use error::Error;
pub use types::{JointMat, JointVec, PortId, PortPair, Pose, SpatialMat, SpatialVec, Wrench};

/// Convenience alias used throughout.
pub type Result<T> = std::result::Result<T, Error>;

/// Number of joints in the chain (6 active + 2 passive wrist).
pub const NUM_JOINTS: usize = 8;
/// Number of actuated joints (1..=6).
pub const NUM_ACTIVE: usize = 6;

/// Per-joint actuation mask: joints 1–6 active, 7–8 passive.
pub const ACTIVE_JOINTS: [bool; NUM_JOINTS] = [true, true, true, true, true, true, false, false];
