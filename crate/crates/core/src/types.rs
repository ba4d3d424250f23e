//! Shared small types: joint-space and task-space vectors, poses, wrenches.

use nalgebra::{IsometryMatrix3, Matrix3, Matrix6, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::NUM_JOINTS;

/// 8-vector over the joints (rad / m, or their rates and torques/forces).
pub type JointVec = SVector<f64, NUM_JOINTS>;
/// 8×8 joint-space matrix (inertia, Coriolis).
pub type JointMat = SMatrix<f64, NUM_JOINTS, NUM_JOINTS>;
/// Task-space 6-vector, linear components first: `[vx vy vz wx wy wz]`.
pub type SpatialVec = SVector<f64, 6>;
/// 6×6 task-space matrix (virtual inertia, damping, stiffness).
pub type SpatialMat = Matrix6<f64>;

/// The two human–robot interaction ports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PortId {
    /// Upper-arm cuff, proximal to the elbow.
    A,
    /// Hand handle, distal end of the chain.
    B,
}

/// A value per interaction port.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortPair<T> {
    pub a: T,
    pub b: T,
}

impl<T> PortPair<T> {
    pub fn new(a: T, b: T) -> Self {
        Self { a, b }
    }

    pub fn get(&self, port: PortId) -> &T {
        match port {
            PortId::A => &self.a,
            PortId::B => &self.b,
        }
    }

    pub fn get_mut(&mut self, port: PortId) -> &mut T {
        match port {
            PortId::A => &mut self.a,
            PortId::B => &mut self.b,
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> PortPair<U> {
        PortPair {
            a: f(&self.a),
            b: f(&self.b),
        }
    }
}

/// Rigid-body pose: orthonormal rotation (det +1) plus translation in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// ‖RᵀR − I‖∞; should stay below 1e-10 for any composed pose.
    pub fn orthonormality_defect(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity())
            .abs()
            .max()
    }

    /// Map a point from the pose's local frame to world.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }
}

impl From<IsometryMatrix3<f64>> for Pose {
    fn from(iso: IsometryMatrix3<f64>) -> Self {
        Self {
            rotation: *iso.rotation.matrix(),
            translation: iso.translation.vector,
        }
    }
}

/// 6-axis force/torque at a port, expressed in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
}

impl Wrench {
    pub fn zero() -> Self {
        Self {
            force: Vector3::zeros(),
            torque: Vector3::zeros(),
        }
    }

    /// Stack as `[fx fy fz tx ty tz]`, matching the velocity ordering so
    /// that `v · w` is mechanical power.
    pub fn as_vector(&self) -> SpatialVec {
        SpatialVec::new(
            self.force.x,
            self.force.y,
            self.force.z,
            self.torque.x,
            self.torque.y,
            self.torque.z,
        )
    }

    pub fn from_vector(v: &SpatialVec) -> Self {
        Self {
            force: Vector3::new(v[0], v[1], v[2]),
            torque: Vector3::new(v[3], v[4], v[5]),
        }
    }
}

impl std::ops::Add for Wrench {
    type Output = Wrench;
    fn add(self, rhs: Wrench) -> Wrench {
        Wrench {
            force: self.force + rhs.force,
            torque: self.torque + rhs.torque,
        }
    }
}
