//! Human-like reaching references: task-space minimum-jerk profiles plus
//! iterative inverse kinematics with the shoulder-girdle joints slaved to
//! arm elevation (a linear stand-in for the scapulohumeral rhythm — the
//! coupling coefficients are exposed, not baked in).

use nalgebra::Vector3;

use crate::kinematics::{
    forward_kinematics, gh_elevation, jacobian_from_frames, DhChain, JointLimits, JointState,
};
use crate::types::{PortId, Pose};
use crate::{Error, JointVec, Result};

/// Linear rhythm coupling: `q1 = r1·θ_el`, `q2 = r2·θ_el` with `θ_el` the
/// GH elevation angle.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RhythmModel {
    /// Girdle-revolute coupling (rad/rad).
    pub r1: f64,
    /// Girdle-prismatic coupling (m/rad).
    pub r2: f64,
}

impl Default for RhythmModel {
    fn default() -> Self {
        Self { r1: 0.15, r2: 0.02 }
    }
}

impl RhythmModel {
    pub fn validate(&self) -> Result<()> {
        if !self.r1.is_finite() || !self.r2.is_finite() {
            return Err(Error::Parameter(format!(
                "rhythm coefficients must be finite, got r1={}, r2={}",
                self.r1, self.r2
            )));
        }
        Ok(())
    }
}

/// One tick of a joint-space reference trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSample {
    pub t: f64,
    pub q_des: JointVec,
    pub qd_des: JointVec,
    /// Handle target pose: min-jerk position with the IK result's
    /// orientation (reaching is position-only).
    pub x_des: Pose,
}

/// Minimum-jerk point-to-point profile.
///
/// `x(s) = x_start + Δx·(10s³ − 15s⁴ + 6s⁵)`, `s = t/T`, with velocity and
/// acceleration its exact derivatives. Boundary velocity/acceleration are
/// exactly zero.
pub fn min_jerk(
    x_start: &Vector3<f64>,
    x_goal: &Vector3<f64>,
    duration: f64,
    t: f64,
) -> Result<(Vector3<f64>, Vector3<f64>, Vector3<f64>)> {
    if !(duration > 0.0) {
        return Err(Error::Parameter(format!(
            "min_jerk duration must be > 0, got {duration}"
        )));
    }
    debug_assert!((-1e-12..=duration + 1e-12).contains(&t));
    let s = (t / duration).clamp(0.0, 1.0);
    let dx = x_goal - x_start;
    let pos = 10.0 * s.powi(3) - 15.0 * s.powi(4) + 6.0 * s.powi(5);
    let vel = (30.0 * s.powi(2) - 60.0 * s.powi(3) + 30.0 * s.powi(4)) / duration;
    let acc = (60.0 * s - 180.0 * s.powi(2) + 120.0 * s.powi(3)) / (duration * duration);
    Ok((x_start + dx * pos, dx * vel, dx * acc))
}

/// Tuning for the damped least-squares IK iteration.
#[derive(Debug, Clone, Copy)]
pub struct IkOptions {
    pub lambda: f64,
    pub step_scale: f64,
    pub tolerance_m: f64,
    pub max_iterations: usize,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            lambda: 1e-2,
            step_scale: 0.5,
            tolerance_m: 1e-5,
            max_iterations: 200,
        }
    }
}

fn apply_rhythm(chain: &DhChain, rhythm: &RhythmModel, q: &mut JointVec) {
    // q1/q2 feed back into the elevation angle, but the loop gain is
    // |r1·∂θ/∂q1| ≤ r1, a strong contraction; a few sweeps settle the
    // fixed point to machine precision.
    for _ in 0..25 {
        let theta = gh_elevation(chain, &JointState::new(*q, JointVec::zeros()));
        let delta = (q[0] - rhythm.r1 * theta)
            .abs()
            .max((q[1] - rhythm.r2 * theta).abs());
        q[0] = rhythm.r1 * theta;
        q[1] = rhythm.r2 * theta;
        if delta < 1e-13 {
            break;
        }
    }
}

/// Iterative position IK to a handle target, with the girdle joints
/// overwritten by the rhythm constraint after every iterate. Joints 3–6
/// carry the damped least-squares update; the wrist stays at its seed.
pub fn ik_with_rhythm(
    chain: &DhChain,
    rhythm: &RhythmModel,
    x_des: &Vector3<f64>,
    q_seed: &JointVec,
) -> Result<JointVec> {
    ik_with_rhythm_opts(chain, rhythm, x_des, q_seed, &IkOptions::default())
}

pub fn ik_with_rhythm_opts(
    chain: &DhChain,
    rhythm: &RhythmModel,
    x_des: &Vector3<f64>,
    q_seed: &JointVec,
    opts: &IkOptions,
) -> Result<JointVec> {
    rhythm.validate()?;
    let p = &chain.params;
    let gh_home = chain.frames(&JointVec::zeros()).gh_center();
    let radius = 0.95 * (p.p4 + p.p5 + p.p6);
    if (x_des - gh_home).norm() > radius {
        return Err(Error::Unreachable {
            target: [x_des.x, x_des.y, x_des.z],
            radius,
        });
    }

    let limits = JointLimits::default();
    let mut q = *q_seed;
    let mut best = f64::INFINITY;
    for _ in 0..opts.max_iterations {
        apply_rhythm(chain, rhythm, &mut q);
        let frames = chain.frames(&q);
        let err = x_des - frames.handle();
        best = best.min(err.norm());
        if err.norm() < opts.tolerance_m {
            return Ok(q);
        }

        // Position rows of the handle Jacobian, shoulder + elbow columns.
        let j_full = jacobian_from_frames(chain, &frames, PortId::B);
        let mut j = nalgebra::SMatrix::<f64, 3, 4>::zeros();
        for (k, col) in (2..6).enumerate() {
            j.set_column(k, &j_full.fixed_view::<3, 1>(0, col).into_owned());
        }
        let jjt = j * j.transpose()
            + nalgebra::Matrix3::identity() * (opts.lambda * opts.lambda);
        let dq = j.transpose()
            * jjt
                .cholesky()
                .expect("damped JJᵀ is positive definite")
                .solve(&err);
        for (k, col) in (2..6).enumerate() {
            q[col] = (q[col] + opts.step_scale * dq[k]).clamp(limits.lower[col], limits.upper[col]);
        }
    }
    Err(Error::IkConvergence {
        iterations: opts.max_iterations,
        best_residual: best,
    })
}

/// Generate a joint-space trajectory for one reach segment.
///
/// Every tick takes its handle position from the minimum-jerk profile and
/// its joint vector from [`ik_with_rhythm`] seeded by the previous tick.
/// `qd_des` is the central difference of `q_des` at interior ticks; the
/// first and last samples are pinned to zero rates.
pub fn generate_trajectory(
    chain: &DhChain,
    rhythm: &RhythmModel,
    q_start: &JointVec,
    x_goal: &Vector3<f64>,
    duration: f64,
    dt: f64,
) -> Result<Vec<ReferenceSample>> {
    if !(dt > 0.0) || !(duration > 0.0) {
        return Err(Error::Parameter(format!(
            "duration and dt must be > 0, got T={duration}, dt={dt}"
        )));
    }
    let steps_f = duration / dt;
    let steps = steps_f.round() as usize;
    if steps == 0 || (steps_f - steps as f64).abs() > 1e-9 * steps_f.max(1.0) {
        return Err(Error::Parameter(format!(
            "dt={dt} does not divide duration={duration}"
        )));
    }

    let x_start = forward_kinematics(chain, &JointState::new(*q_start, JointVec::zeros()))
        .pose_b
        .translation;

    let mut q_list = Vec::with_capacity(steps + 1);
    let mut x_list = Vec::with_capacity(steps + 1);
    let mut seed = *q_start;
    for k in 0..=steps {
        let t = k as f64 * dt;
        let (x_des, _, _) = min_jerk(&x_start, x_goal, duration, t)?;
        let q = ik_with_rhythm(chain, rhythm, &x_des, &seed).map_err(|e| Error::TickFailure {
            tick: k,
            source: Box::new(e),
        })?;
        seed = q;
        q_list.push(q);
        x_list.push(x_des);
    }

    let samples = (0..=steps)
        .map(|k| {
            let qd = if k == 0 || k == steps {
                JointVec::zeros()
            } else {
                (q_list[k + 1] - q_list[k - 1]) / (2.0 * dt)
            };
            let fk = forward_kinematics(chain, &JointState::new(q_list[k], JointVec::zeros()));
            ReferenceSample {
                t: k as f64 * dt,
                q_des: q_list[k],
                qd_des: qd,
                x_des: Pose {
                    rotation: fk.pose_b.rotation,
                    translation: x_list[k],
                },
            }
        })
        .collect();
    Ok(samples)
}

/// CSV export: `t,q1..q8,qd1..qd8,x,y,z` with a header row.
pub fn trajectory_csv(samples: &[ReferenceSample]) -> String {
    let mut out = String::new();
    out.push('t');
    for i in 1..=8 {
        out.push_str(&format!(",q{i}"));
    }
    for i in 1..=8 {
        out.push_str(&format!(",qd{i}"));
    }
    out.push_str(",x,y,z\n");
    for s in samples {
        out.push_str(&format!("{}", s.t));
        for i in 0..8 {
            out.push_str(&format!(",{}", s.q_des[i]));
        }
        for i in 0..8 {
            out.push_str(&format!(",{}", s.qd_des[i]));
        }
        out.push_str(&format!(
            ",{},{},{}\n",
            s.x_des.translation.x, s.x_des.translation.y, s.x_des.translation.z
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{build_chain, BodyParams, JointLimits};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain() -> DhChain {
        build_chain(BodyParams::default()).unwrap()
    }

    #[test]
    fn min_jerk_boundary_conditions_exact() {
        let a = Vector3::new(0.1, 0.2, -0.3);
        let b = Vector3::new(0.3, 0.1, 0.0);
        let (x0, v0, a0) = min_jerk(&a, &b, 2.0, 0.0).unwrap();
        assert_eq!(x0, a);
        assert_eq!(v0, Vector3::zeros());
        assert_eq!(a0, Vector3::zeros());
        let (x1, v1, a1) = min_jerk(&a, &b, 2.0, 2.0).unwrap();
        assert_eq!(x1, b);
        assert_eq!(v1, Vector3::zeros());
        assert_eq!(a1, Vector3::zeros());
    }

    #[test]
    fn min_jerk_midpoint_values() {
        let a = Vector3::new(0.0, 0.0, 0.0);
        let b = Vector3::new(0.4, 0.0, 0.0);
        let t_total = 2.0;
        let (x, v, _) = min_jerk(&a, &b, t_total, 1.0).unwrap();
        assert_relative_eq!(x, (a + b) / 2.0, epsilon = 1e-15);
        // Peak speed of the quintic: 1.875·‖Δx‖/T, along Δx.
        let expect = 1.875 * (b - a).norm() / t_total;
        assert_relative_eq!(v.norm(), expect, epsilon = 1e-12);
        assert_relative_eq!(v, (b - a) / (b - a).norm() * expect, epsilon = 1e-12);
    }

    #[test]
    fn min_jerk_time_scaling_halves_peak_velocity() {
        let a = Vector3::zeros();
        let b = Vector3::new(0.2, 0.1, 0.05);
        let (_, v1, _) = min_jerk(&a, &b, 1.0, 0.5).unwrap();
        let (_, v2, _) = min_jerk(&a, &b, 2.0, 1.0).unwrap();
        assert_relative_eq!(v1, v2 * 2.0, epsilon = 1e-15);
    }

    #[test]
    fn min_jerk_rejects_bad_duration() {
        let a = Vector3::zeros();
        assert!(min_jerk(&a, &a, 0.0, 0.0).is_err());
        assert!(min_jerk(&a, &a, -1.0, 0.0).is_err());
    }

    #[test]
    fn ik_fixed_point_at_seed() {
        let c = chain();
        let rhythm = RhythmModel::default();
        let mut seed = JointVec::from_column_slice(&[0.05, 0.01, 0.2, -0.3, 0.1, 0.8, 0.0, 0.0]);
        // Project the seed onto the rhythm manifold first so the target is
        // exactly attainable under the constraint.
        apply_rhythm(&c, &rhythm, &mut seed);
        let target = forward_kinematics(&c, &JointState::new(seed, JointVec::zeros()))
            .pose_b
            .translation;
        let q = ik_with_rhythm(&c, &rhythm, &target, &seed).unwrap();
        assert!((q - seed).norm() < 1e-4, "moved {:.3e}", (q - seed).norm());
        let back = forward_kinematics(&c, &JointState::new(q, JointVec::zeros()))
            .pose_b
            .translation;
        assert!((back - target).norm() < 1e-5);
    }

    #[test]
    fn ik_roundtrip_on_random_reachable_targets() {
        let c = chain();
        let rhythm = RhythmModel::default();
        let limits = JointLimits::default();
        let gh_home = c.frames(&JointVec::zeros()).gh_center();
        let radius = 0.95 * (c.params.p4 + c.params.p5 + c.params.p6);
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let seed = JointVec::from_column_slice(&[0.0, 0.01, 0.1, -0.1, 0.0, 0.5, 0.0, 0.0]);
        let mut accepted = 0;
        while accepted < 10 {
            let q = JointVec::from_fn(|i, _| {
                rng.random_range(0.4 * limits.lower[i]..0.4 * limits.upper[i])
            });
            let target = forward_kinematics(&c, &JointState::new(q, JointVec::zeros()))
                .pose_b
                .translation;
            if (target - gh_home).norm() > radius {
                continue;
            }
            accepted += 1;
            let sol = ik_with_rhythm(&c, &rhythm, &target, &seed).unwrap();
            let back = forward_kinematics(&c, &JointState::new(sol, JointVec::zeros()))
                .pose_b
                .translation;
            assert!(
                (back - target).norm() < 1e-5,
                "residual {:.3e}",
                (back - target).norm()
            );
            // Rhythm coupling enforced by construction.
            let theta = gh_elevation(&c, &JointState::new(sol, JointVec::zeros()));
            assert!((sol[0] - rhythm.r1 * theta).abs() < 1e-6);
            assert!((sol[1] - rhythm.r2 * theta).abs() < 1e-6);
        }
    }

    #[test]
    fn ik_rejects_unreachable_target() {
        let c = chain();
        let far = Vector3::new(2.0, 0.0, 0.0);
        let r = ik_with_rhythm(&c, &RhythmModel::default(), &far, &JointVec::zeros());
        assert!(matches!(r, Err(Error::Unreachable { .. })));
    }

    #[test]
    fn degenerate_trajectory_is_constant() {
        let c = chain();
        let q_start = JointVec::from_column_slice(&[0.02, 0.005, 0.1, -0.2, 0.0, 1.0, 0.0, 0.0]);
        let goal = forward_kinematics(&c, &JointState::new(q_start, JointVec::zeros()))
            .pose_b
            .translation;
        let traj =
            generate_trajectory(&c, &RhythmModel::default(), &q_start, &goal, 0.1, 0.01).unwrap();
        assert_eq!(traj.len(), 11);
        assert_eq!(traj[0].qd_des, JointVec::zeros());
        assert_eq!(traj.last().unwrap().qd_des, JointVec::zeros());
        for s in &traj {
            assert!((s.q_des - traj[0].q_des).norm() < 1e-9);
            // Interior rates carry only the rhythm fixed-point truncation.
            assert!(s.qd_des.norm() < 1e-9);
        }
    }

    #[test]
    fn forward_reach_stays_on_straight_segment() {
        let c = chain();
        // Elbow flexed well inside the reachable sphere so the whole
        // 0.2 m forward segment passes the conservative radius check.
        let q_start = JointVec::from_column_slice(&[0.0, 0.01, 0.0, 0.0, 0.0, 1.8, 0.0, 0.0]);
        let start = forward_kinematics(&c, &JointState::new(q_start, JointVec::zeros()))
            .pose_b
            .translation;
        let goal = start + Vector3::new(0.2, 0.0, 0.0);
        let dt = 1e-3;
        let traj =
            generate_trajectory(&c, &RhythmModel::default(), &q_start, &goal, 2.0, dt).unwrap();
        assert_eq!(traj.len(), 2001);

        // The min-jerk path is the straight start–goal segment; deviation
        // of the realized handle path from it measures IK fidelity.
        let dir = (goal - start).normalize();
        let mut max_dev: f64 = 0.0;
        for s in &traj {
            let fk = forward_kinematics(&c, &JointState::new(s.q_des, JointVec::zeros()));
            let r = fk.pose_b.translation - start;
            let dev = (r - r.dot(&dir) * dir).norm();
            max_dev = max_dev.max(dev);
        }
        assert!(max_dev < 1e-4, "max path deviation {max_dev:.3e} m");

        // Endpoint rest and interior velocity consistency.
        assert_eq!(traj[0].qd_des, JointVec::zeros());
        assert_eq!(traj.last().unwrap().qd_des, JointVec::zeros());
        for k in 1..traj.len() - 1 {
            let fd = (traj[k + 1].q_des - traj[k - 1].q_des) / (2.0 * dt);
            assert!((fd - traj[k].qd_des).norm() < 1e-9);
        }
    }

    #[test]
    fn upward_reach_obeys_rhythm_ratio() {
        let c = chain();
        let rhythm = RhythmModel::default();
        // Hand near the chest reaching forward to shoulder height: this
        // geometry forces the upper arm to elevate throughout.
        let q_start = JointVec::from_column_slice(&[0.0, 0.01, 0.0, 0.0, 0.0, 1.8, 0.0, 0.0]);
        let gh = c.frames(&JointVec::zeros()).gh_center();
        let goal = gh + Vector3::new(0.50, 0.0, -0.10);
        let traj = generate_trajectory(&c, &rhythm, &q_start, &goal, 1.0, 0.01).unwrap();
        let mut last_q1 = -f64::INFINITY;
        let mut elevations = Vec::new();
        for s in &traj {
            let theta = gh_elevation(&c, &JointState::new(s.q_des, JointVec::zeros()));
            assert!((s.q_des[0] - rhythm.r1 * theta).abs() < 1e-6);
            assert!((s.q_des[1] - rhythm.r2 * theta).abs() < 1e-6);
            // Monotone elevation drags the girdle joints up with it, to
            // within the rhythm fixed-point truncation.
            assert!(s.q_des[0] >= last_q1 - 1e-5, "girdle angle not monotone");
            last_q1 = s.q_des[0];
            elevations.push(theta);
        }
        assert!(
            elevations.last().unwrap() > &(elevations[0] + 0.5),
            "reach should raise the arm: {:?} -> {:?}",
            elevations[0],
            elevations.last().unwrap()
        );
    }

    #[test]
    fn rejects_nondividing_dt() {
        let c = chain();
        let q_start = JointVec::zeros();
        let goal = Vector3::new(0.15, 0.2, -0.2);
        let r = generate_trajectory(&c, &RhythmModel::default(), &q_start, &goal, 1.0, 0.3);
        assert!(r.is_err());
    }

    #[test]
    fn csv_has_fixed_header_and_row_count() {
        let c = chain();
        let q_start = JointVec::from_column_slice(&[0.0, 0.01, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let goal = forward_kinematics(&c, &JointState::new(q_start, JointVec::zeros()))
            .pose_b
            .translation;
        let traj =
            generate_trajectory(&c, &RhythmModel::default(), &q_start, &goal, 0.05, 0.01).unwrap();
        let csv = trajectory_csv(&traj);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,q1,q2,q3,q4,q5,q6,q7,q8,qd1,qd2,qd3,qd4,qd5,qd6,qd7,qd8,x,y,z"
        );
        assert_eq!(lines.count(), traj.len());
    }
}
