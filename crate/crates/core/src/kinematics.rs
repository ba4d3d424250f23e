//! 8-DoF kinematic chain: DH table, forward kinematics, port Jacobians,
//! glenohumeral elevation, and damped least-squares velocity resolution.
//!
//! Chain topology (world frame: x anterior, y lateral toward the
//! instrumented arm, z up; base offset `p1` above the world origin):
//!
//! 1. revolute about world x — shoulder-girdle angle in the frontal plane
//! 2. prismatic along the rotated radial direction, offset `p2 + q2`;
//!    the carriage plus the anterior offset `p3` locates the GH center
//! 3–5. revolutes with consecutive ±90° twists, axes concurrent at the
//!    GH center (spherical linkage)
//! 6. elbow flexion, axis orthogonal to the upper arm; `p4` proximal,
//!    `p5` distal link lengths
//! 7–8. passive wrist: intersecting orthogonal axes, handle offset `p6`
//!
//! Home posture `q = 0`: upper arm vertical (hanging), elbow extended,
//! so the GH elevation angle is zero.

use nalgebra::{
    DMatrix, DVector, IsometryMatrix3, Matrix3, Rotation3, SMatrix, Translation3, Unit, Vector3,
};
use serde::{Deserialize, Serialize};

use crate::types::{PortId, Pose};
use crate::{Error, Result, ACTIVE_JOINTS, NUM_JOINTS};

/// Which arm the device instruments. A left chain is the exact mirror
/// (through the world x–z plane) of the right chain at the same joint
/// vector, so joint conventions read identically on both sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    #[default]
    Right,
    Left,
}

/// Physical parameters of the device. `p1`, `p2` are fixed per instance;
/// `p3`–`p6` adjust to the patient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BodyParams {
    /// Base vertical offset (m).
    pub p1: f64,
    /// Girdle linkage base radius (m).
    pub p2: f64,
    /// Girdle-carriage-to-GH anterior offset (m).
    pub p3: f64,
    /// Upper-arm length, GH center to elbow (m).
    pub p4: f64,
    /// Forearm length, elbow to wrist (m).
    pub p5: f64,
    /// Wrist-to-handle offset (m).
    pub p6: f64,
    /// Arm side.
    pub side: Side,
    /// Cuff position as a fraction of `p4` below the GH center, in (0, 1).
    pub beta: f64,
}

impl Default for BodyParams {
    fn default() -> Self {
        Self {
            p1: 0.30,
            p2: 0.20,
            p3: 0.10,
            p4: 0.28,
            p5: 0.25,
            p6: 0.08,
            side: Side::Right,
            beta: 0.5,
        }
    }
}

impl BodyParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("p1", self.p1),
            ("p2", self.p2),
            ("p3", self.p3),
            ("p4", self.p4),
            ("p5", self.p5),
            ("p6", self.p6),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Parameter(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Parameter(format!(
                "beta must lie in (0, 1), got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// Per-joint position limits. Units follow the joint kind (rad, m for q2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointLimits {
    pub lower: [f64; NUM_JOINTS],
    pub upper: [f64; NUM_JOINTS],
}

impl Default for JointLimits {
    fn default() -> Self {
        Self {
            lower: [-1.0, 0.0, -2.5, -2.5, -2.5, 0.0, -0.8, -0.8],
            upper: [1.5, 0.1, 2.5, 2.5, 2.5, 2.5, 0.8, 0.8],
        }
    }
}

impl JointLimits {
    pub fn validate(&self) -> Result<()> {
        for i in 0..NUM_JOINTS {
            if !(self.lower[i] < self.upper[i]) {
                return Err(Error::Parameter(format!(
                    "joint {} limits inverted: [{}, {}]",
                    i + 1,
                    self.lower[i],
                    self.upper[i]
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, q: &crate::JointVec) -> bool {
        (0..NUM_JOINTS).all(|i| q[i] >= self.lower[i] && q[i] <= self.upper[i])
    }

    /// Clamp `q` in place; returns a per-joint flag of which were clamped.
    pub fn clamp(&self, q: &mut crate::JointVec) -> [bool; NUM_JOINTS] {
        let mut hit = [false; NUM_JOINTS];
        for i in 0..NUM_JOINTS {
            let c = q[i].clamp(self.lower[i], self.upper[i]);
            if c != q[i] {
                q[i] = c;
                hit[i] = true;
            }
        }
        hit
    }

    pub fn midpoint(&self) -> crate::JointVec {
        crate::JointVec::from_fn(|i, _| 0.5 * (self.lower[i] + self.upper[i]))
    }
}

/// Joint positions and velocities. Joints 1–6 are active, 7–8 passive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointState {
    pub q: crate::JointVec,
    pub qd: crate::JointVec,
}

impl JointState {
    pub fn new(q: crate::JointVec, qd: crate::JointVec) -> Self {
        Self { q, qd }
    }

    pub fn zero() -> Self {
        Self {
            q: crate::JointVec::zeros(),
            qd: crate::JointVec::zeros(),
        }
    }

    pub fn is_active(joint: usize) -> bool {
        ACTIVE_JOINTS[joint]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

/// One classic DH row `Rz(θ)·Tz(d)·Tx(a)·Rx(α)`. The joint variable adds to
/// `theta` (revolute) or `d` (prismatic); the stored values are the fixed
/// offsets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhRow {
    pub kind: JointKind,
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    pub theta: f64,
}

/// The compiled chain: DH rows plus the fixed base transform.
#[derive(Debug, Clone)]
pub struct DhChain {
    pub rows: [DhRow; NUM_JOINTS],
    pub params: BodyParams,
    base: IsometryMatrix3<f64>,
    /// Fixed part of each row; row i maps frame i-1 → i as
    /// `V(q_i · axis_sign_i) · fixed_i`.
    fixed: [IsometryMatrix3<f64>; NUM_JOINTS],
    /// −1 on revolute rows of a left-side chain (mirrored rotation sense).
    axis_sign: [f64; NUM_JOINTS],
}

fn dh_isometry(a: f64, alpha: f64, d: f64, theta: f64) -> IsometryMatrix3<f64> {
    let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), theta)
        * Rotation3::from_axis_angle(&Vector3::x_axis(), alpha);
    let trans = Translation3::new(a * theta.cos(), a * theta.sin(), d);
    IsometryMatrix3::from_parts(trans, rot)
}

/// Build the 8-row chain for the given parameters.
///
/// Row kinds are `[R, P, R, R, R, R, R, R]`; rows 3–5 have zero offsets so
/// their axes stay concurrent at the GH center for every configuration.
pub fn build_chain(params: BodyParams) -> Result<DhChain> {
    params.validate()?;
    use std::f64::consts::FRAC_PI_2;
    let p = &params;

    // (kind, a, alpha, d, theta) for the right side.
    let right: [(JointKind, f64, f64, f64, f64); NUM_JOINTS] = [
        (JointKind::Revolute, 0.0, -FRAC_PI_2, 0.0, 0.0),
        (JointKind::Prismatic, p.p3, 0.0, p.p2, -FRAC_PI_2),
        (JointKind::Revolute, 0.0, FRAC_PI_2, 0.0, FRAC_PI_2),
        (JointKind::Revolute, 0.0, FRAC_PI_2, 0.0, FRAC_PI_2),
        (JointKind::Revolute, 0.0, -FRAC_PI_2, p.p4, FRAC_PI_2),
        (JointKind::Revolute, p.p5, -FRAC_PI_2, 0.0, -FRAC_PI_2),
        (JointKind::Revolute, 0.0, -FRAC_PI_2, 0.0, 0.0),
        (JointKind::Revolute, p.p6, 0.0, 0.0, 0.0),
    ];

    // A left chain is the x–z-plane mirror image: negate θ offsets and
    // twists, and flip the rotation sense of every revolute joint.
    let mirror = params.side == Side::Left;
    let mut rows = [DhRow {
        kind: JointKind::Revolute,
        a: 0.0,
        alpha: 0.0,
        d: 0.0,
        theta: 0.0,
    }; NUM_JOINTS];
    let mut fixed = [IsometryMatrix3::identity(); NUM_JOINTS];
    let mut axis_sign = [1.0; NUM_JOINTS];
    for (i, &(kind, a, alpha, d, theta)) in right.iter().enumerate() {
        let (alpha, theta) = if mirror { (-alpha, -theta) } else { (alpha, theta) };
        rows[i] = DhRow {
            kind,
            a,
            alpha,
            d,
            theta,
        };
        fixed[i] = dh_isometry(a, alpha, d, theta);
        if mirror && kind == JointKind::Revolute {
            axis_sign[i] = -1.0;
        }
    }

    let base = IsometryMatrix3::from_parts(
        Translation3::new(0.0, 0.0, p.p1),
        Rotation3::from_axis_angle(&Vector3::y_axis(), FRAC_PI_2),
    );

    Ok(DhChain {
        rows,
        params,
        base,
        fixed,
        axis_sign,
    })
}

impl DhChain {
    /// Frame i-1 → i transform at joint value `q`.
    fn row_transform(&self, i: usize, q: f64) -> IsometryMatrix3<f64> {
        let moved = match self.rows[i].kind {
            JointKind::Revolute => IsometryMatrix3::from_parts(
                Translation3::identity(),
                Rotation3::from_axis_angle(&Vector3::z_axis(), q * self.axis_sign[i]),
            ),
            JointKind::Prismatic => IsometryMatrix3::from_parts(
                Translation3::new(0.0, 0.0, q),
                Rotation3::identity(),
            ),
        };
        moved * self.fixed[i]
    }

    /// World pose of every joint frame at configuration `q`.
    pub fn frames(&self, q: &crate::JointVec) -> FrameSet {
        let mut f = [IsometryMatrix3::identity(); NUM_JOINTS];
        let mut t = self.base;
        for i in 0..NUM_JOINTS {
            t *= self.row_transform(i, q[i]);
            f[i] = t;
        }
        FrameSet {
            base: self.base,
            frames: f,
        }
    }

    pub fn base(&self) -> IsometryMatrix3<f64> {
        self.base
    }

    /// Rotation sense of joint `i` (−1 on left-side revolutes).
    pub fn joint_sign(&self, i: usize) -> f64 {
        self.axis_sign[i]
    }
}

/// World frames of the chain at one configuration. `frames[i]` is the
/// frame after row `i`; joint `i` moves about the z axis of `frames[i-1]`
/// (the base frame for `i = 0`).
#[derive(Debug, Clone)]
pub struct FrameSet {
    pub base: IsometryMatrix3<f64>,
    pub frames: [IsometryMatrix3<f64>; NUM_JOINTS],
}

impl FrameSet {
    fn parent(&self, joint: usize) -> &IsometryMatrix3<f64> {
        if joint == 0 {
            &self.base
        } else {
            &self.frames[joint - 1]
        }
    }

    /// Unit vector of joint `joint`'s axis in world coordinates.
    pub fn joint_axis(&self, joint: usize) -> Vector3<f64> {
        self.parent(joint).rotation.matrix().column(2).into()
    }

    /// A point on joint `joint`'s axis (the parent frame origin).
    pub fn joint_origin(&self, joint: usize) -> Vector3<f64> {
        self.parent(joint).translation.vector
    }

    /// GH center: common origin of frames 2–4 (rows with zero offsets).
    pub fn gh_center(&self) -> Vector3<f64> {
        self.frames[1].translation.vector
    }

    pub fn elbow(&self) -> Vector3<f64> {
        self.frames[4].translation.vector
    }

    pub fn wrist(&self) -> Vector3<f64> {
        self.frames[5].translation.vector
    }

    pub fn handle(&self) -> Vector3<f64> {
        self.frames[7].translation.vector
    }

    /// Upper-arm axis direction, GH center → elbow.
    pub fn arm_axis(&self) -> Vector3<f64> {
        self.frames[3].rotation.matrix().column(2).into()
    }
}

/// Forward-kinematics output: both port poses plus every joint frame.
#[derive(Debug, Clone)]
pub struct FkResult {
    /// Upper-arm cuff pose (port A), at fraction `beta` along the upper arm.
    pub pose_a: Pose,
    /// Handle pose (port B).
    pub pose_b: Pose,
    /// One pose per joint frame, in row order.
    pub frame_per_joint: [Pose; NUM_JOINTS],
    frames: FrameSet,
}

impl FkResult {
    pub fn frames(&self) -> &FrameSet {
        &self.frames
    }

    pub fn port_pose(&self, port: PortId) -> &Pose {
        match port {
            PortId::A => &self.pose_a,
            PortId::B => &self.pose_b,
        }
    }
}

/// Compute both port poses and all joint frames.
pub fn forward_kinematics(chain: &DhChain, state: &JointState) -> FkResult {
    let frames = chain.frames(&state.q);
    let beta = chain.params.beta;
    let p4 = chain.params.p4;

    let cuff_pos = frames.gh_center() + beta * p4 * frames.arm_axis();
    let pose_a = Pose {
        rotation: *frames.frames[4].rotation.matrix(),
        translation: cuff_pos,
    };
    let pose_b = Pose::from(frames.frames[7]);
    let frame_per_joint = std::array::from_fn(|i| Pose::from(frames.frames[i]));

    FkResult {
        pose_a,
        pose_b,
        frame_per_joint,
        frames,
    }
}

/// Geometric Jacobian of one port, 6×8, world frame, `[linear; angular]`.
///
/// Port A is rigid to the upper-arm link, so its columns for the elbow and
/// the passive wrist joints are identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PortJacobian {
    pub port: PortId,
    pub matrix: SMatrix<f64, 6, NUM_JOINTS>,
}

fn point_jacobian(
    chain: &DhChain,
    frames: &FrameSet,
    point: &Vector3<f64>,
    last_joint: usize,
) -> SMatrix<f64, 6, NUM_JOINTS> {
    let mut j = SMatrix::<f64, 6, NUM_JOINTS>::zeros();
    for i in 0..last_joint {
        let z = frames.joint_axis(i);
        let s = chain.joint_sign(i);
        match chain.rows[i].kind {
            JointKind::Revolute => {
                let r = point - frames.joint_origin(i);
                let lin = s * z.cross(&r);
                let ang = s * z;
                j.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
                j.fixed_view_mut::<3, 1>(3, i).copy_from(&ang);
            }
            JointKind::Prismatic => {
                j.fixed_view_mut::<3, 1>(0, i).copy_from(&z);
            }
        }
    }
    j
}

/// Geometric Jacobian for a port at the given state.
pub fn jacobian(chain: &DhChain, state: &JointState, port: PortId) -> PortJacobian {
    let frames = chain.frames(&state.q);
    let matrix = match port {
        PortId::A => {
            let point =
                frames.gh_center() + chain.params.beta * chain.params.p4 * frames.arm_axis();
            point_jacobian(chain, &frames, &point, 5)
        }
        PortId::B => point_jacobian(chain, &frames, &frames.handle(), NUM_JOINTS),
    };
    PortJacobian { port, matrix }
}

pub(crate) fn jacobian_from_frames(
    chain: &DhChain,
    frames: &FrameSet,
    port: PortId,
) -> SMatrix<f64, 6, NUM_JOINTS> {
    match port {
        PortId::A => {
            let point =
                frames.gh_center() + chain.params.beta * chain.params.p4 * frames.arm_axis();
            point_jacobian(chain, frames, &point, 5)
        }
        PortId::B => point_jacobian(chain, frames, &frames.handle(), NUM_JOINTS),
    }
}

/// Jacobian of an arbitrary point rigid to the link after `last_joint`
/// joints. Used by the dynamics module for per-link COM Jacobians.
pub(crate) fn link_point_jacobian(
    chain: &DhChain,
    frames: &FrameSet,
    point: &Vector3<f64>,
    last_joint: usize,
) -> SMatrix<f64, 6, NUM_JOINTS> {
    point_jacobian(chain, frames, point, last_joint)
}

/// Angle between the upper-arm axis (GH → elbow) and the world downward
/// vertical, in `[0, π]`. Zero at the home posture (arm hanging).
pub fn gh_elevation(chain: &DhChain, state: &JointState) -> f64 {
    let frames = chain.frames(&state.q);
    gh_elevation_from_frames(&frames)
}

pub(crate) fn gh_elevation_from_frames(frames: &FrameSet) -> f64 {
    let arm = frames.arm_axis();
    let down = Vector3::new(0.0, 0.0, -1.0);
    arm.dot(&down).clamp(-1.0, 1.0).acos()
}

/// Damped least-squares resolution of stacked port velocities into joint
/// rates.
///
/// Minimizes `‖W(J·qd − v)‖² + λ²‖qd‖²` over the columns flagged in
/// `active`; the remaining entries of the result are pinned to
/// `pinned_rates` (the plant's passive-joint estimate) and their
/// contribution `J_p·qd_p` is moved to the right-hand side. `weights` are
/// per-row weights on the squared residual, so the solution satisfies the
/// normal equations `(JᵀWJ + λ²I)·qd = JᵀW·v` with `W = diag(weights)`.
/// `lambda` shares units with the singular values of `W^{1/2}J`.
pub fn damped_pinv_solve(
    j_stack: &DMatrix<f64>,
    v_des: &DVector<f64>,
    lambda: f64,
    weights: &DVector<f64>,
    active: &[bool],
    pinned_rates: &DVector<f64>,
) -> Result<DVector<f64>> {
    let (m, n) = j_stack.shape();
    if !(lambda > 0.0) {
        return Err(Error::Parameter(format!(
            "damping lambda must be > 0, got {lambda}"
        )));
    }
    if v_des.len() != m || weights.len() != m {
        return Err(Error::Parameter(format!(
            "row mismatch: J is {m}×{n}, v has {}, weights {}",
            v_des.len(),
            weights.len()
        )));
    }
    if active.len() != n || pinned_rates.len() != n {
        return Err(Error::Parameter(format!(
            "column mismatch: J is {m}×{n}, active has {}, pins {}",
            active.len(),
            pinned_rates.len()
        )));
    }

    let act: Vec<usize> = (0..n).filter(|&c| active[c]).collect();
    let na = act.len();

    // Move pinned columns to the right-hand side.
    let mut v_eff = v_des.clone();
    for c in 0..n {
        if !active[c] {
            let rate = pinned_rates[c];
            if rate != 0.0 {
                for r in 0..m {
                    v_eff[r] -= j_stack[(r, c)] * rate;
                }
            }
        }
    }

    let mut ja = DMatrix::<f64>::zeros(m, na);
    for (k, &c) in act.iter().enumerate() {
        ja.set_column(k, &j_stack.column(c));
    }

    // A = JᵀWJ + λ²I, rhs = JᵀWv.
    let mut jtw = ja.transpose();
    for r in 0..na {
        for c in 0..m {
            jtw[(r, c)] *= weights[c];
        }
    }
    let mut a = &jtw * &ja;
    for i in 0..na {
        a[(i, i)] += lambda * lambda;
    }
    let rhs = &jtw * &v_eff;

    let qd_a = a
        .clone()
        .lu()
        .solve(&rhs)
        .expect("damped normal equations are positive definite");

    // Self-check: the normal-equation residual must be negligible.
    let residual = (&a * &qd_a - &rhs).norm();
    assert!(
        residual <= 1e-9 * (1.0 + rhs.norm()),
        "damped_pinv_solve self-check failed: residual {residual:.3e}"
    );

    let mut qd = pinned_rates.clone();
    for (k, &c) in act.iter().enumerate() {
        qd[c] = qd_a[k];
    }
    Ok(qd)
}

/// Unit axis helper shared with tests.
pub fn world_down() -> Unit<Vector3<f64>> {
    Unit::new_unchecked(Vector3::new(0.0, 0.0, -1.0))
}

#[allow(dead_code)]
fn rotation_defect(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}
