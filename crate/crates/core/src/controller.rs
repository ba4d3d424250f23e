//! Interaction controller: measured port wrenches pass through a virtual
//! admittance (inertia–damper–spring) to produce desired port velocities,
//! which are resolved to joint rates through the stacked port Jacobians and
//! tracked by a PD law with gravity feedforward. Friction compensation
//! falls out of the admittance loop rather than an explicit friction model.

use nalgebra::{Matrix3, Rotation3, Vector3};

use crate::dynamics::{gravity_vector, LinkInertia};
use crate::kinematics::{damped_pinv_solve, forward_kinematics, DhChain, JointState};
use crate::reference::ReferenceSample;
use crate::types::{PortId, PortPair, Pose, SpatialMat, SpatialVec, Wrench};
use crate::{Error, JointVec, Result, NUM_ACTIVE, NUM_JOINTS};

/// Commanded virtual impedance at one port. The controller's goal is to
/// make the port feel like this mass–damper–spring about `x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpedanceParams {
    /// Virtual inertia (kg, kg·m²); symmetric positive definite.
    pub m_d: SpatialMat,
    /// Virtual damping (N·s/m, N·m·s/rad); symmetric positive semidefinite.
    pub b_d: SpatialMat,
    /// Virtual stiffness (N/m, N·m/rad); symmetric positive semidefinite.
    pub k_d: SpatialMat,
    /// Equilibrium pose for the stiffness term.
    pub x0: Pose,
}

impl ImpedanceParams {
    /// Pure damping about a pose: unit virtual inertia, no stiffness.
    pub fn pure_damping(damping: f64, inertia: f64, x0: Pose) -> Self {
        Self {
            m_d: SpatialMat::identity() * inertia,
            b_d: SpatialMat::identity() * damping,
            k_d: SpatialMat::zeros(),
            x0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sym = |m: &SpatialMat| (m - m.transpose()).abs().max();
        if sym(&self.m_d) > 1e-9 || self.m_d.cholesky().is_none() {
            return Err(Error::Parameter(
                "virtual inertia M_d must be symmetric positive definite".into(),
            ));
        }
        for (name, m) in [("B_d", &self.b_d), ("K_d", &self.k_d)] {
            if sym(m) > 1e-9 {
                return Err(Error::Parameter(format!("{name} must be symmetric")));
            }
            let min_eig = m.symmetric_eigen().eigenvalues.min();
            if min_eig < -1e-9 {
                return Err(Error::Parameter(format!(
                    "{name} must be positive semidefinite (min eigenvalue {min_eig:.3e})"
                )));
            }
        }
        Ok(())
    }
}

/// PD gains per active joint (N·m/rad and N·m·s/rad; N/m and N·s/m for the
/// prismatic joint).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdGains {
    pub kp: [f64; NUM_ACTIVE],
    pub kv: [f64; NUM_ACTIVE],
}

impl Default for PdGains {
    fn default() -> Self {
        Self {
            kp: [50.0; NUM_ACTIVE],
            kv: [5.0; NUM_ACTIVE],
        }
    }
}

impl PdGains {
    pub fn validate(&self) -> Result<()> {
        for i in 0..NUM_ACTIVE {
            if !(self.kp[i] >= 0.0) {
                return Err(Error::Parameter(format!(
                    "Kp[{}] must be ≥ 0, got {}",
                    i + 1,
                    self.kp[i]
                )));
            }
            if !(self.kv[i] > 0.0) {
                return Err(Error::Parameter(format!(
                    "Kv[{}] must be > 0 on every active joint, got {}",
                    i + 1,
                    self.kv[i]
                )));
            }
        }
        Ok(())
    }
}

/// Virtual pose/velocity of the admittance dynamics at one port.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualPort {
    pub position: Vector3<f64>,
    pub rotation: Matrix3<f64>,
    /// `[v; ω]` of the virtual body, world frame.
    pub velocity: SpatialVec,
}

impl VirtualPort {
    pub fn at_rest(pose: &Pose) -> Self {
        Self {
            position: pose.translation,
            rotation: pose.rotation,
            velocity: SpatialVec::zeros(),
        }
    }
}

/// Integration state of the two virtual admittance bodies. Advanced only
/// by [`admittance_step`]; timestamps are strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceState {
    pub ports: PortPair<VirtualPort>,
    pub t: f64,
}

impl AdmittanceState {
    pub fn at_rest(pose_a: &Pose, pose_b: &Pose) -> Self {
        Self {
            ports: PortPair::new(VirtualPort::at_rest(pose_a), VirtualPort::at_rest(pose_b)),
            t: 0.0,
        }
    }
}

/// Rotation-vector (log-map) coordinates of an orthonormal matrix.
///
/// Uses the atan2 form `θ = atan2(‖vee(R − Rᵀ)/2‖, (tr(R) − 1)/2)`, which
/// keeps full precision for the small angles the stiffness term operates
/// on (the acos form loses ~√ε there). Angles near π fall back to the
/// axis-angle extraction.
pub(crate) fn rotation_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let w = Vector3::new(
        (r[(2, 1)] - r[(1, 2)]) / 2.0,
        (r[(0, 2)] - r[(2, 0)]) / 2.0,
        (r[(1, 0)] - r[(0, 1)]) / 2.0,
    );
    let s = w.norm(); // sin θ
    let c = (r.trace() - 1.0) / 2.0; // cos θ
    let theta = s.atan2(c);
    if s > 1e-9 {
        w * (theta / s)
    } else if c > 0.0 {
        // θ ≈ 0: θ/sin θ → 1.
        w
    } else {
        // θ ≈ π: the skew part vanishes; recover the axis from R itself.
        Rotation3::from_matrix_unchecked(*r).scaled_axis()
    }
}

fn step_port(
    port: &VirtualPort,
    params: &ImpedanceParams,
    wrench: &Wrench,
    dt: f64,
) -> (VirtualPort, SpatialVec) {
    let mut err = SpatialVec::zeros();
    err.fixed_rows_mut::<3>(0)
        .copy_from(&(port.position - params.x0.translation));
    err.fixed_rows_mut::<3>(3)
        .copy_from(&rotation_log(&(port.rotation * params.x0.rotation.transpose())));

    let rhs = wrench.as_vector() - params.b_d * port.velocity - params.k_d * err;
    let accel = params
        .m_d
        .cholesky()
        .expect("M_d validated positive definite")
        .solve(&rhs);

    // Semi-implicit Euler: velocity first, then pose under the new velocity.
    let velocity = port.velocity + accel * dt;
    let position = port.position + velocity.fixed_rows::<3>(0) * dt;
    let omega: Vector3<f64> = velocity.fixed_rows::<3>(3).into();
    let rotation = if omega == Vector3::zeros() {
        port.rotation
    } else {
        Rotation3::new(omega * dt).matrix() * port.rotation
    };
    (
        VirtualPort {
            position,
            rotation,
            velocity,
        },
        velocity,
    )
}

/// Advance the per-port admittance dynamics
/// `M_d·v̇ + B_d·v + K_d·(x − x0) = F_meas` by one semi-implicit Euler step
/// and return the new virtual velocities as the desired port velocities.
pub fn admittance_step(
    state: &AdmittanceState,
    measured: &PortPair<Wrench>,
    params: &PortPair<ImpedanceParams>,
    dt: f64,
) -> Result<(AdmittanceState, PortPair<SpatialVec>)> {
    if !(dt > 0.0) {
        return Err(Error::TimestampRegression { dt });
    }
    let (pa, va) = step_port(&state.ports.a, &params.a, &measured.a, dt);
    let (pb, vb) = step_port(&state.ports.b, &params.b, &measured.b, dt);
    Ok((
        AdmittanceState {
            ports: PortPair::new(pa, pb),
            t: state.t + dt,
        },
        PortPair::new(va, vb),
    ))
}

/// Position-error clamp applied before the Kp term (anti-windup).
pub const POSITION_ERROR_CLAMP: f64 = 0.1;

/// Controller configuration: impedances, gains, solve weighting, limits.
#[derive(Debug, Clone)]
pub struct ControllerParams {
    pub impedance: PortPair<ImpedanceParams>,
    pub gains: PdGains,
    /// Damped least-squares regularization.
    pub lambda: f64,
    /// Per-port row weights in the stacked solve (cuff, handle).
    pub weights: PortPair<f64>,
    /// Per-joint torque/force limits (N·m, N for the prismatic joint).
    pub torque_limits: JointVec,
    pub gravity: Vector3<f64>,
}

impl ControllerParams {
    pub fn validate(&self) -> Result<()> {
        self.impedance.a.validate()?;
        self.impedance.b.validate()?;
        self.gains.validate()?;
        if !(self.lambda > 0.0) {
            return Err(Error::Parameter(format!(
                "lambda must be > 0, got {}",
                self.lambda
            )));
        }
        if !(self.weights.a >= 0.0 && self.weights.b >= 0.0) {
            return Err(Error::Parameter("port weights must be ≥ 0".into()));
        }
        for i in 0..NUM_JOINTS {
            if !(self.torque_limits[i] >= 0.0) {
                return Err(Error::Parameter(format!(
                    "torque limit {} must be ≥ 0",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Default torque limits: 40 N·m on revolute joints, 200 N on the
/// prismatic joint; passive wrist entries unused.
pub fn default_torque_limits() -> JointVec {
    JointVec::from_column_slice(&[40.0, 200.0, 40.0, 40.0, 40.0, 40.0, 0.0, 0.0])
}

/// One control tick's output.
#[derive(Debug, Clone)]
pub struct ControlOutput {
    /// Commanded joint torques; zero at the passive wrist.
    pub tau: JointVec,
    /// Desired joint rates fed to the PD velocity term.
    pub qd_des: JointVec,
    /// Desired joint positions fed to the PD position term.
    pub q_des: JointVec,
    /// Diagnostic: desired port velocities out of the admittance filter.
    pub v_des: PortPair<SpatialVec>,
    /// Diagnostic: gravity feedforward term.
    pub gravity_ff: JointVec,
    /// Per-joint torque clamp events this tick.
    pub torque_clamped: [bool; NUM_JOINTS],
}

/// Single-owner control-law state machine: one logical thread advances it;
/// wrenches and reference samples arrive as value snapshots.
#[derive(Debug, Clone)]
pub struct Controller {
    params: ControllerParams,
    adm: AdmittanceState,
    /// Posture the admittance channel deflects about when no reference
    /// trajectory is active.
    q_base: JointVec,
    /// Integral of the admittance-derived joint rates (active joints).
    adm_offset: JointVec,
}

impl Controller {
    /// Build a controller at the plant's initial state. The virtual
    /// admittance bodies start at the current port poses.
    pub fn new(params: ControllerParams, chain: &DhChain, initial: &JointState) -> Result<Self> {
        params.validate()?;
        let fk = forward_kinematics(chain, initial);
        Ok(Self {
            params,
            adm: AdmittanceState::at_rest(&fk.pose_a, &fk.pose_b),
            q_base: initial.q,
            adm_offset: JointVec::zeros(),
        })
    }

    pub fn params(&self) -> &ControllerParams {
        &self.params
    }

    pub fn admittance_state(&self) -> &AdmittanceState {
        &self.adm
    }

    /// One control tick: admittance → Jacobian resolution → PD with
    /// gravity feedforward. `reference` superposes a trajectory sample on
    /// the admittance channel (assist mode); `None` is pure admittance.
    pub fn step(
        &mut self,
        chain: &DhChain,
        inertias: &[LinkInertia; NUM_JOINTS],
        state: &JointState,
        wrenches: &PortPair<Wrench>,
        reference: Option<&ReferenceSample>,
        dt: f64,
    ) -> Result<ControlOutput> {
        let (adm, v_des) = admittance_step(&self.adm, wrenches, &self.params.impedance, dt)?;
        self.adm = adm;

        // Stack both ports into one weighted least-squares solve.
        let j_a = crate::kinematics::jacobian(chain, state, PortId::A).matrix;
        let j_b = crate::kinematics::jacobian(chain, state, PortId::B).matrix;
        let mut j_stack = nalgebra::DMatrix::<f64>::zeros(12, NUM_JOINTS);
        j_stack.view_mut((0, 0), (6, NUM_JOINTS)).copy_from(&j_a);
        j_stack.view_mut((6, 0), (6, NUM_JOINTS)).copy_from(&j_b);
        let mut v_stack = nalgebra::DVector::<f64>::zeros(12);
        v_stack.rows_mut(0, 6).copy_from(&v_des.a);
        v_stack.rows_mut(6, 6).copy_from(&v_des.b);
        let mut weights = nalgebra::DVector::<f64>::zeros(12);
        weights.rows_mut(0, 6).fill(self.params.weights.a);
        weights.rows_mut(6, 6).fill(self.params.weights.b);

        // Passive joints follow the plant's own dynamics estimate.
        let mut pinned = nalgebra::DVector::<f64>::zeros(NUM_JOINTS);
        pinned[6] = state.qd[6];
        pinned[7] = state.qd[7];
        let qd_sol = damped_pinv_solve(
            &j_stack,
            &v_stack,
            self.params.lambda,
            &weights,
            &crate::ACTIVE_JOINTS,
            &pinned,
        )?;
        let mut qd_adm = JointVec::zeros();
        for i in 0..NUM_JOINTS {
            qd_adm[i] = qd_sol[i];
        }

        for i in 0..NUM_ACTIVE {
            self.adm_offset[i] += qd_adm[i] * dt;
        }

        let (q_ref, qd_ref) = match reference {
            Some(r) => (r.q_des, r.qd_des),
            None => (self.q_base, JointVec::zeros()),
        };
        let q_des = q_ref + self.adm_offset;
        let qd_des = qd_ref + qd_adm;

        let g = gravity_vector(chain, inertias, &state.q, &self.params.gravity);
        let mut tau = JointVec::zeros();
        let mut torque_clamped = [false; NUM_JOINTS];
        for i in 0..NUM_ACTIVE {
            let e = (q_des[i] - state.q[i]).clamp(-POSITION_ERROR_CLAMP, POSITION_ERROR_CLAMP);
            let t = g[i]
                + self.params.gains.kp[i] * e
                + self.params.gains.kv[i] * (qd_des[i] - state.qd[i]);
            let lim = self.params.torque_limits[i];
            let clamped = t.clamp(-lim, lim);
            torque_clamped[i] = clamped != t;
            tau[i] = clamped;
        }

        Ok(ControlOutput {
            tau,
            qd_des,
            q_des,
            v_des,
            gravity_ff: g,
            torque_clamped,
        })
    }
}

/// Apparent impedance recovered from a sinusoidal probe.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ImpedanceEstimate {
    /// Probe frequency (rad/s).
    pub omega: f64,
    /// Dynamic stiffness magnitude `|F|/|x|` (N/m).
    pub magnitude: f64,
    /// Phase of force relative to displacement (rad).
    pub phase: f64,
    /// Equivalent damping magnitude `|F|/|v| = |F|/(ω|x|)` (N·s/m).
    pub damping_equivalent: f64,
    /// Fitted force amplitude (N).
    pub force_amplitude: f64,
    /// Fitted displacement amplitude (m).
    pub displacement_amplitude: f64,
}

/// Least-squares sinusoid fit `y ≈ a·cos(ωt) + b·sin(ωt) + c`; returns
/// (amplitude, phase) with the signal written as `A·sin(ωt + φ)`.
fn fit_sinusoid(samples: &[f64], dt: f64, omega: f64, offset: usize) -> (f64, f64) {
    let mut gram = nalgebra::Matrix3::<f64>::zeros();
    let mut rhs = Vector3::zeros();
    for (k, &y) in samples.iter().enumerate() {
        let t = (offset + k) as f64 * dt;
        let row = Vector3::new((omega * t).cos(), (omega * t).sin(), 1.0);
        gram += row * row.transpose();
        rhs += row * y;
    }
    let coef = gram
        .cholesky()
        .expect("sinusoid design matrix is full rank over ≥ 5 periods")
        .solve(&rhs);
    let (a, b) = (coef[0], coef[1]);
    (a.hypot(b), a.atan2(b))
}

/// Estimate the rendered impedance from logged probe force and port
/// displacement series sampled at `dt`, probing at `omega` rad/s.
///
/// Discards the first two probe periods as transient and requires at
/// least five full periods after that. Displacement amplitudes below
/// 1e-9 m are reported as immeasurable.
pub fn estimate_rendered_impedance(
    force: &[f64],
    displacement: &[f64],
    dt: f64,
    omega: f64,
) -> Result<ImpedanceEstimate> {
    if force.len() != displacement.len() {
        return Err(Error::Parameter(format!(
            "force ({}) and displacement ({}) series differ in length",
            force.len(),
            displacement.len()
        )));
    }
    if !(dt > 0.0) || !(omega > 0.0) {
        return Err(Error::Parameter(format!(
            "dt and omega must be > 0, got dt={dt}, omega={omega}"
        )));
    }
    let period = 2.0 * std::f64::consts::PI / (omega * dt);
    let discard = (2.0 * period).ceil() as usize;
    let needed = discard + (5.0 * period).ceil() as usize;
    if force.len() < needed {
        return Err(Error::InsufficientData {
            got: force.len(),
            needed,
        });
    }

    let (f_amp, f_phase) = fit_sinusoid(&force[discard..], dt, omega, discard);
    let (x_amp, x_phase) = fit_sinusoid(&displacement[discard..], dt, omega, discard);
    if x_amp < 1e-9 {
        return Err(Error::Immeasurable { amplitude: x_amp });
    }

    let mut phase = f_phase - x_phase;
    while phase > std::f64::consts::PI {
        phase -= 2.0 * std::f64::consts::PI;
    }
    while phase < -std::f64::consts::PI {
        phase += 2.0 * std::f64::consts::PI;
    }

    Ok(ImpedanceEstimate {
        omega,
        magnitude: f_amp / x_amp,
        phase,
        damping_equivalent: f_amp / (omega * x_amp),
        force_amplitude: f_amp,
        displacement_amplitude: x_amp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{default_link_inertias, standard_gravity, DEFAULT_BODY_MASS_KG};
    use crate::kinematics::{build_chain, BodyParams};
    use approx::assert_relative_eq;

    fn unit_impedance(x0: Pose) -> ImpedanceParams {
        ImpedanceParams {
            m_d: SpatialMat::identity(),
            b_d: SpatialMat::identity() * 10.0,
            k_d: SpatialMat::zeros(),
            x0,
        }
    }

    fn both(p: ImpedanceParams) -> PortPair<ImpedanceParams> {
        PortPair::new(p.clone(), p)
    }

    #[test]
    fn equilibrium_is_exact_fixed_point() {
        let x0 = Pose::identity();
        let params = both(ImpedanceParams {
            k_d: SpatialMat::identity() * 100.0,
            ..unit_impedance(x0)
        });
        let mut state = AdmittanceState::at_rest(&x0, &x0);
        let zero = PortPair::new(Wrench::zero(), Wrench::zero());
        for _ in 0..1000 {
            let (next, v) = admittance_step(&state, &zero, &params, 1e-3).unwrap();
            assert_eq!(v.a, SpatialVec::zeros());
            assert_eq!(v.b, SpatialVec::zeros());
            assert_eq!(next.ports.a.position, x0.translation);
            state = next;
        }
    }

    #[test]
    fn first_order_step_response_matches_exponential() {
        // 1-DoF reduction: M = 1 kg, B = 10 N·s/m, K = 0, F = 1 N along x.
        // Exact response: v(t) = 0.1·(1 − e^{−10t}).
        let x0 = Pose::identity();
        let params = both(unit_impedance(x0));
        let mut state = AdmittanceState::at_rest(&x0, &x0);
        let f = PortPair::new(
            Wrench {
                force: Vector3::new(1.0, 0.0, 0.0),
                torque: Vector3::zeros(),
            },
            Wrench::zero(),
        );
        let dt = 1e-4;
        let mut max_err: f64 = 0.0;
        for k in 1..=10_000 {
            let (next, v) = admittance_step(&state, &f, &params, dt).unwrap();
            state = next;
            let t = k as f64 * dt;
            let exact = 0.1 * (1.0 - (-10.0 * t).exp());
            max_err = max_err.max((v.a[0] - exact).abs());
        }
        assert!(max_err < 1e-4, "max deviation {max_err:.3e}");
        assert_relative_eq!(state.ports.a.velocity[0], 0.1, epsilon = 1e-4);
    }

    #[test]
    fn joint_scaling_leaves_response_unchanged() {
        let x0 = Pose::identity();
        let base = ImpedanceParams {
            k_d: SpatialMat::identity() * 50.0,
            ..unit_impedance(x0)
        };
        let scaled = ImpedanceParams {
            m_d: base.m_d * 2.0,
            b_d: base.b_d * 2.0,
            k_d: base.k_d * 2.0,
            x0,
        };
        let f1 = PortPair::new(
            Wrench {
                force: Vector3::new(0.7, -0.2, 0.1),
                torque: Vector3::new(0.05, 0.0, -0.03),
            },
            Wrench::zero(),
        );
        let f2 = PortPair::new(
            Wrench {
                force: f1.a.force * 2.0,
                torque: f1.a.torque * 2.0,
            },
            Wrench::zero(),
        );
        let mut s1 = AdmittanceState::at_rest(&x0, &x0);
        let mut s2 = s1.clone();
        let p1 = both(base);
        let p2 = both(scaled);
        for _ in 0..500 {
            let (n1, v1) = admittance_step(&s1, &f1, &p1, 1e-3).unwrap();
            let (n2, v2) = admittance_step(&s2, &f2, &p2, 1e-3).unwrap();
            assert_relative_eq!(v1.a, v2.a, max_relative = 1e-9, epsilon = 1e-12);
            s1 = n1;
            s2 = n2;
        }
    }

    #[test]
    fn wrench_scaling_scales_velocity() {
        // Homogeneity with K_d = 0: scaling F by s scales v_des by s.
        let x0 = Pose::identity();
        let params = both(unit_impedance(x0));
        let f = Wrench {
            force: Vector3::new(0.3, 0.5, -0.2),
            torque: Vector3::new(0.02, -0.01, 0.04),
        };
        let s = 3.5;
        let fs = Wrench {
            force: f.force * s,
            torque: f.torque * s,
        };
        let mut s1 = AdmittanceState::at_rest(&x0, &x0);
        let mut s2 = s1.clone();
        for _ in 0..300 {
            let (n1, v1) =
                admittance_step(&s1, &PortPair::new(f, Wrench::zero()), &params, 1e-3).unwrap();
            let (n2, v2) =
                admittance_step(&s2, &PortPair::new(fs, Wrench::zero()), &params, 1e-3).unwrap();
            assert_relative_eq!(v2.a, v1.a * s, max_relative = 1e-9, epsilon = 1e-15);
            s1 = n1;
            s2 = n2;
        }
    }

    #[test]
    fn dissipative_forcing_never_increases_energy() {
        let x0 = Pose::identity();
        let params = both(unit_impedance(x0));
        let mut state = AdmittanceState::at_rest(&x0, &x0);
        // Give it an initial kick, then only oppose the motion.
        state.ports.a.velocity = SpatialVec::from_column_slice(&[0.4, -0.2, 0.1, 0.3, 0.0, -0.1]);
        let mut energy = 0.5 * state.ports.a.velocity.dot(&state.ports.a.velocity);
        for _ in 0..2000 {
            let v = state.ports.a.velocity;
            let f = Wrench::from_vector(&(-0.5 * v));
            assert!(f.as_vector().dot(&v) <= 0.0);
            let (next, _) =
                admittance_step(&state, &PortPair::new(f, Wrench::zero()), &params, 1e-3).unwrap();
            let e = 0.5 * next.ports.a.velocity.dot(&next.ports.a.velocity);
            assert!(e <= energy + 1e-15, "energy rose: {energy} -> {e}");
            energy = e;
            state = next;
        }
    }

    #[test]
    fn rejects_time_regression() {
        let x0 = Pose::identity();
        let params = both(unit_impedance(x0));
        let state = AdmittanceState::at_rest(&x0, &x0);
        let zero = PortPair::new(Wrench::zero(), Wrench::zero());
        assert!(matches!(
            admittance_step(&state, &zero, &params, 0.0),
            Err(Error::TimestampRegression { .. })
        ));
        assert!(admittance_step(&state, &zero, &params, -1e-4).is_err());
    }

    #[test]
    fn rejects_invalid_impedance() {
        let x0 = Pose::identity();
        let bad = ImpedanceParams {
            m_d: SpatialMat::identity() * -1.0,
            b_d: SpatialMat::zeros(),
            k_d: SpatialMat::zeros(),
            x0,
        };
        assert!(bad.validate().is_err());
        let asym = ImpedanceParams {
            m_d: SpatialMat::identity(),
            b_d: SpatialMat::from_fn(|i, j| if i == 0 && j == 1 { 1.0 } else { 0.0 }),
            k_d: SpatialMat::zeros(),
            x0,
        };
        assert!(asym.validate().is_err());
    }

    fn controller_setup() -> (
        DhChain,
        [LinkInertia; NUM_JOINTS],
        JointState,
        ControllerParams,
    ) {
        let chain = build_chain(BodyParams::default()).unwrap();
        let inertias = default_link_inertias(&chain, DEFAULT_BODY_MASS_KG, 0.04);
        // Vertical-hang posture: passive links carry no gravity load.
        let q = JointVec::from_column_slice(&[0.0, 0.03, 0.0, 0.0, 0.3, 0.0, 0.0, 0.0]);
        let state = JointState::new(q, JointVec::zeros());
        let fk = forward_kinematics(&chain, &state);
        let params = ControllerParams {
            impedance: PortPair::new(
                ImpedanceParams::pure_damping(20.0, 1.0, fk.pose_a),
                ImpedanceParams::pure_damping(20.0, 1.0, fk.pose_b),
            ),
            gains: PdGains::default(),
            lambda: 1e-3,
            weights: PortPair::new(0.5, 1.0),
            torque_limits: default_torque_limits(),
            gravity: standard_gravity(),
        };
        (chain, inertias, state, params)
    }

    #[test]
    fn gravity_feedforward_is_bitwise_exact_at_rest() {
        let (chain, inertias, state, params) = controller_setup();
        let mut ctrl = Controller::new(params, &chain, &state).unwrap();
        let zero = PortPair::new(Wrench::zero(), Wrench::zero());
        let out = ctrl
            .step(&chain, &inertias, &state, &zero, None, 1e-3)
            .unwrap();
        let g = gravity_vector(&chain, &inertias, &state.q, &standard_gravity());
        for i in 0..NUM_ACTIVE {
            assert_eq!(out.tau[i], g[i], "joint {} not bitwise equal", i + 1);
        }
        assert_eq!(out.tau[6], 0.0);
        assert_eq!(out.tau[7], 0.0);
        assert_eq!(out.qd_des.fixed_rows::<6>(0), JointVec::zeros().fixed_rows::<6>(0));
    }

    #[test]
    fn opposite_wrenches_cancel_in_reduced_solve() {
        // 1-DoF reduction: equal impedances at both ports, equal solve
        // weights, identical port rows. Equal-and-opposite wrenches give
        // opposite desired velocities and a zero joint-rate resolution.
        let x0 = Pose::identity();
        let params = both(unit_impedance(x0));
        let state = AdmittanceState::at_rest(&x0, &x0);
        let f = Wrench {
            force: Vector3::new(2.0, 0.0, 0.0),
            torque: Vector3::zeros(),
        };
        let neg = Wrench {
            force: -f.force,
            torque: -f.torque,
        };
        let (_, v) = admittance_step(&state, &PortPair::new(f, neg), &params, 1e-3).unwrap();
        assert_relative_eq!(v.a, -v.b, epsilon = 1e-15);

        let row = nalgebra::DMatrix::from_fn(1, 1, |_, _| 0.8);
        let mut j = nalgebra::DMatrix::zeros(2, 1);
        j.view_mut((0, 0), (1, 1)).copy_from(&row);
        j.view_mut((1, 0), (1, 1)).copy_from(&row);
        let v_stack = nalgebra::DVector::from_column_slice(&[v.a[0], v.b[0]]);
        let qd = damped_pinv_solve(
            &j,
            &v_stack,
            1e-3,
            &nalgebra::DVector::from_element(2, 1.0),
            &[true],
            &nalgebra::DVector::zeros(1),
        )
        .unwrap();
        assert!(qd[0].abs() < 1e-15);
    }

    #[test]
    fn torque_clamp_sets_flags() {
        let (chain, inertias, state, mut params) = controller_setup();
        params.torque_limits = JointVec::from_element(1e-3);
        let mut ctrl = Controller::new(params, &chain, &state).unwrap();
        // A large wrench drives the admittance and PD hard enough to hit
        // the (tiny) torque limits.
        let big = PortPair::new(
            Wrench::zero(),
            Wrench {
                force: Vector3::new(50.0, 0.0, 0.0),
                torque: Vector3::zeros(),
            },
        );
        let mut clamped_any = false;
        let mut out = None;
        for _ in 0..50 {
            let o = ctrl
                .step(&chain, &inertias, &state, &big, None, 1e-3)
                .unwrap();
            clamped_any |= o.torque_clamped.iter().any(|&c| c);
            out = Some(o);
        }
        let out = out.unwrap();
        assert!(clamped_any, "expected a torque clamp event");
        for i in 0..NUM_ACTIVE {
            assert!(out.tau[i].abs() <= 1e-3 + 1e-15);
        }
    }

    #[test]
    fn assist_mode_superposes_reference() {
        let (chain, inertias, state, params) = controller_setup();
        let mut ctrl = Controller::new(params, &chain, &state).unwrap();
        let zero = PortPair::new(Wrench::zero(), Wrench::zero());
        let mut q_ref = state.q;
        q_ref[5] += 0.05;
        let sample = ReferenceSample {
            t: 0.0,
            q_des: q_ref,
            qd_des: JointVec::zeros(),
            x_des: Pose::identity(),
        };
        let out = ctrl
            .step(&chain, &inertias, &state, &zero, Some(&sample), 1e-3)
            .unwrap();
        // With no wrench the admittance contributes nothing; the command
        // tracks the reference directly.
        assert_relative_eq!(out.q_des[5], q_ref[5], epsilon = 1e-12);
        let g = gravity_vector(&chain, &inertias, &state.q, &standard_gravity());
        assert!(out.tau[5] > g[5], "flexion error must add torque");
    }

    // ------------------------------------------------------------------
    // estimate_rendered_impedance
    // ------------------------------------------------------------------

    fn synth_series(
        omega: f64,
        dt: f64,
        n: usize,
        f0: f64,
        x_amp: f64,
        x_phase: f64,
    ) -> (Vec<f64>, Vec<f64>) {
        let force: Vec<f64> = (0..n).map(|k| f0 * (omega * k as f64 * dt).sin()).collect();
        let disp: Vec<f64> = (0..n)
            .map(|k| x_amp * (omega * k as f64 * dt + x_phase).sin())
            .collect();
        (force, disp)
    }

    #[test]
    fn recovers_mass_spring_damper_impedance() {
        // Generating system: M ẍ + B ẋ + K x = F₀ sin(ωt).
        let (m, b, k) = (2.0, 15.0, 400.0);
        let omega = 2.0 * std::f64::consts::PI;
        let f0 = 3.0;
        let denom = ((k - m * omega * omega).powi(2) + (b * omega).powi(2)).sqrt();
        let x_amp = f0 / denom;
        let x_phase = -(b * omega).atan2(k - m * omega * omega);
        let dt = 1e-3;
        let n = 12_000; // 12 periods at 1 Hz
        let (force, disp) = synth_series(omega, dt, n, f0, x_amp, x_phase);
        let est = estimate_rendered_impedance(&force, &disp, dt, omega).unwrap();
        assert_relative_eq!(est.magnitude, denom, max_relative = 1e-3);
        assert_relative_eq!(est.phase, -x_phase, epsilon = 1e-6);
    }

    #[test]
    fn quasi_static_spring_has_zero_phase() {
        let k = 250.0;
        let omega = 0.05;
        let f0 = 1.0;
        let dt = 0.05;
        let period = 2.0 * std::f64::consts::PI / omega;
        let n = (8.0 * period / dt) as usize;
        let (force, disp) = synth_series(omega, dt, n, f0, f0 / k, 0.0);
        let est = estimate_rendered_impedance(&force, &disp, dt, omega).unwrap();
        assert!(est.phase.abs() < 1e-9, "phase {}", est.phase);
        assert_relative_eq!(est.magnitude, k, max_relative = 1e-9);
    }

    #[test]
    fn commanded_ordering_is_preserved() {
        let omega = 2.0;
        let dt = 1e-3;
        let n = 40_000;
        let f0 = 2.0;
        let (f_soft, x_soft) = synth_series(omega, dt, n, f0, f0 / 50.0, -0.4);
        let (f_stiff, x_stiff) = synth_series(omega, dt, n, f0, f0 / 200.0, -0.4);
        let soft = estimate_rendered_impedance(&f_soft, &x_soft, dt, omega).unwrap();
        let stiff = estimate_rendered_impedance(&f_stiff, &x_stiff, dt, omega).unwrap();
        assert!(stiff.magnitude > soft.magnitude);
    }

    #[test]
    fn tiny_displacement_is_immeasurable() {
        let omega = 1.0;
        let dt = 1e-2;
        let n = 60_000;
        let (force, disp) = synth_series(omega, dt, n, 1.0, 1e-12, 0.0);
        assert!(matches!(
            estimate_rendered_impedance(&force, &disp, dt, omega),
            Err(Error::Immeasurable { .. })
        ));
    }

    #[test]
    fn short_log_is_rejected() {
        let omega = 1.0;
        let dt = 1e-2;
        let (force, disp) = synth_series(omega, dt, 100, 1.0, 0.01, 0.0);
        assert!(matches!(
            estimate_rendered_impedance(&force, &disp, dt, omega),
            Err(Error::InsufficientData { .. })
        ));
    }
}
