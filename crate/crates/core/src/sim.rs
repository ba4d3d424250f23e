//! Deterministic fixed-step closed-loop executive.
//!
//! A single logical thread runs two rate groups: every sensor tick senses
//! the port wrenches and advances the plant one semi-implicit Euler step;
//! every `ratio`-th sensor tick (5 with default rates) the controller
//! consumes the latest wrench snapshot and refreshes the torque command,
//! which is held between control ticks. Identical `(config, seed)` inputs
//! produce byte-identical logs.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::config::{
    ControlMode, IntentMode, NoiseConfig, ProbeConfig, Scenario, ScenarioConfig, WrenchFilter,
};
use crate::controller::{estimate_rendered_impedance, rotation_log, Controller};
use crate::dynamics::{
    forward_dynamics, kinetic_energy, potential_energy, LinkInertia,
};
use crate::kinematics::{
    forward_kinematics, jacobian_from_frames, DhChain, JointLimits, JointState,
};
use crate::reference::{generate_trajectory, ReferenceSample};
use crate::types::{PortId, PortPair, Pose, SpatialVec, Wrench};
use crate::{JointVec, Result, NUM_ACTIVE, NUM_JOINTS};

/// Spring–damper attachment of the virtual human limb at one port.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attachment {
    /// N/m toward the intent pose (linear axes only).
    pub stiffness: f64,
    /// N·s/m opposing relative velocity (linear axes only).
    pub damping: f64,
}

/// Virtual human interacting with the device: per-port attachments pulling
/// toward intent poses, plus an optional injected probe wrench.
#[derive(Debug, Clone)]
pub struct HumanArmModel {
    pub attach: PortPair<Attachment>,
    /// Poses the human currently tries to hold the ports at.
    pub intent: PortPair<Pose>,
    pub probe: Option<ProbeConfig>,
}

/// Scalar probe value at time `t`: sinusoidal, or constant at `amplitude`
/// when the frequency is zero.
pub fn probe_value(probe: &ProbeConfig, t: f64) -> f64 {
    if probe.frequency_hz == 0.0 {
        probe.amplitude
    } else {
        probe.amplitude
            * (2.0 * std::f64::consts::PI * probe.frequency_hz * t + probe.phase).sin()
    }
}

/// Simulated F/T sensing: attachment spring-damper wrench toward the
/// intent pose plus the injected probe, expressed in world frame at each
/// port. Noise and quantization are applied by the executive, not here.
pub fn sense_wrench(
    chain: &DhChain,
    state: &JointState,
    human: &HumanArmModel,
    t: f64,
) -> PortPair<Wrench> {
    let frames = chain.frames(&state.q);
    let fk_a_pos = frames.gh_center() + chain.params.beta * chain.params.p4 * frames.arm_axis();
    let fk_b_pos = frames.handle();

    let mut out = PortPair::new(Wrench::zero(), Wrench::zero());
    for (port, pos) in [(PortId::A, fk_a_pos), (PortId::B, fk_b_pos)] {
        let attach = human.attach.get(port);
        let mut w = Wrench::zero();
        if attach.stiffness != 0.0 || attach.damping != 0.0 {
            let j = jacobian_from_frames(chain, &frames, port);
            let v: SpatialVec = j * state.qd;
            let intent = human.intent.get(port);
            w.force = attach.stiffness * (intent.translation - pos)
                - attach.damping * Vector3::new(v[0], v[1], v[2]);
        }
        if let Some(p) = &human.probe {
            if p.port == port {
                let mut pv = SpatialVec::zeros();
                pv[p.axis] = probe_value(p, t);
                w = w + Wrench::from_vector(&pv);
            }
        }
        *out.get_mut(port) = w;
    }
    out
}

/// One semi-implicit Euler plant step at the sensor rate. Joint limits are
/// enforced by clamping (with the clamped joint's rate zeroed); the
/// returned flags report which joints were clamped.
#[allow(clippy::too_many_arguments)]
pub fn step_plant(
    chain: &DhChain,
    inertias: &[LinkInertia; NUM_JOINTS],
    state: &JointState,
    tau: &JointVec,
    wrenches: &PortPair<Wrench>,
    viscous: &JointVec,
    gravity: &Vector3<f64>,
    locked: &[bool; NUM_JOINTS],
    limits: &JointLimits,
    dt: f64,
) -> (JointState, [bool; NUM_JOINTS]) {
    let qdd = forward_dynamics(chain, inertias, state, tau, wrenches, viscous, gravity, locked);
    let mut qd = state.qd + qdd * dt;
    for j in 0..NUM_JOINTS {
        if locked[j] {
            qd[j] = 0.0;
        }
    }
    let mut q = state.q + qd * dt;
    let clamped = limits.clamp(&mut q);
    for j in 0..NUM_JOINTS {
        if clamped[j] {
            qd[j] = 0.0;
        }
    }
    (JointState::new(q, qd), clamped)
}

/// Log record event bits.
pub const EVENT_TORQUE_CLAMP: u32 = 1;
pub const EVENT_LIMIT_CLAMP: u32 = 2;

/// One control-tick row of the simulation log. Field order is the CSV
/// column order.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub t: f64,
    pub q: JointVec,
    pub qd: JointVec,
    pub tau: JointVec,
    pub wrench_a: SpatialVec,
    pub wrench_b: SpatialVec,
    pub v_des_a: SpatialVec,
    pub v_des_b: SpatialVec,
    pub q_des: JointVec,
    pub events: u32,
}

/// Fixed CSV header for the log schema.
pub fn log_csv_header() -> String {
    let mut h = String::from("t");
    let vec8 = |h: &mut String, name: &str| {
        for i in 1..=NUM_JOINTS {
            h.push_str(&format!(",{name}{i}"));
        }
    };
    let vec6 = |h: &mut String, name: &str| {
        for c in ["fx", "fy", "fz", "tx", "ty", "tz"] {
            h.push_str(&format!(",{name}_{c}"));
        }
    };
    let vel6 = |h: &mut String, name: &str| {
        for c in ["vx", "vy", "vz", "wx", "wy", "wz"] {
            h.push_str(&format!(",{name}_{c}"));
        }
    };
    vec8(&mut h, "q");
    vec8(&mut h, "qd");
    vec8(&mut h, "tau");
    vec6(&mut h, "wa");
    vec6(&mut h, "wb");
    vel6(&mut h, "va");
    vel6(&mut h, "vb");
    vec8(&mut h, "qdes");
    h.push_str(",events\n");
    h
}

/// Serialize the log with the fixed schema; floats use Rust's shortest
/// round-trip decimal formatting.
pub fn log_to_csv(log: &[LogRecord]) -> String {
    let mut out = log_csv_header();
    for r in log {
        out.push_str(&format!("{}", r.t));
        for v in [&r.q, &r.qd, &r.tau] {
            for i in 0..NUM_JOINTS {
                out.push_str(&format!(",{}", v[i]));
            }
        }
        for v in [&r.wrench_a, &r.wrench_b, &r.v_des_a, &r.v_des_b] {
            for i in 0..6 {
                out.push_str(&format!(",{}", v[i]));
            }
        }
        for i in 0..NUM_JOINTS {
            out.push_str(&format!(",{}", r.q_des[i]));
        }
        out.push_str(&format!(",{}\n", r.events));
    }
    out
}

/// Tick counts for the two rate groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TickCounts {
    pub sensor: u64,
    pub control: u64,
}

/// One impedance estimate in the metrics payload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImpedanceEstimateEntry {
    pub frequency_hz: f64,
    /// `|F|/|x|` (N/m).
    pub magnitude: f64,
    /// Force phase relative to displacement (rad).
    pub phase: f64,
    /// `|F|/|v|` (N·s/m).
    pub damping_equivalent: f64,
}

/// Summary metrics emitted as JSON.
#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    /// RMS of `q − q_des` over active joints and control ticks (rad).
    pub rmse_rad: f64,
    /// Present when a sinusoidal probe was configured.
    pub impedance_estimates: Vec<ImpedanceEstimateEntry>,
    /// max |E(t) − E(0) − W(t)| normalized by max(|E(0)|, peak KE).
    pub energy_drift_rel: f64,
    /// Torque clamps plus joint-limit clamps over the run.
    pub clamp_count: u64,
    pub ticks: TickCounts,
}

/// How a run ended.
#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Completed,
    /// State left sanity bounds; the log holds everything up to the
    /// failing tick.
    Diverged { tick: u64, detail: String },
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub log: Vec<LogRecord>,
    pub metrics: Metrics,
    pub outcome: RunOutcome,
    /// Set when a probe was configured but the impedance fit failed
    /// (immeasurable response or too short a run).
    pub impedance_failure: Option<String>,
}

fn sanity_check(state: &JointState) -> Option<String> {
    for i in 0..NUM_JOINTS {
        if !state.q[i].is_finite() || !state.qd[i].is_finite() {
            return Some(format!("joint {} state is not finite", i + 1));
        }
        if state.q[i].abs() > 1e3 {
            return Some(format!("joint {} position {} beyond bounds", i + 1, state.q[i]));
        }
        if state.qd[i].abs() > 1e4 {
            return Some(format!("joint {} rate {} beyond bounds", i + 1, state.qd[i]));
        }
    }
    None
}

struct SensorNoise {
    rng: ChaCha8Rng,
    normal: Normal<f64>,
    cfg: NoiseConfig,
}

impl SensorNoise {
    fn new(seed: u64, cfg: NoiseConfig) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            normal: Normal::new(0.0, 1.0).expect("unit normal"),
            cfg,
        }
    }

    fn apply(&mut self, w: &mut PortPair<Wrench>) {
        if !self.cfg.enabled {
            return;
        }
        for port in [PortId::A, PortId::B] {
            let wr = w.get_mut(port);
            if self.cfg.force_std > 0.0 || self.cfg.torque_std > 0.0 {
                for i in 0..3 {
                    wr.force[i] += self.cfg.force_std * self.normal.sample(&mut self.rng);
                    wr.torque[i] += self.cfg.torque_std * self.normal.sample(&mut self.rng);
                }
            }
            if self.cfg.quantum > 0.0 {
                for i in 0..3 {
                    wr.force[i] = (wr.force[i] / self.cfg.quantum).round() * self.cfg.quantum;
                    wr.torque[i] = (wr.torque[i] / self.cfg.quantum).round() * self.cfg.quantum;
                }
            }
        }
    }
}

/// Pre-generate the chained reference trajectory at the control period.
fn build_reference(sc: &Scenario) -> Result<Vec<ReferenceSample>> {
    let dt_c = sc.rates.dt_control();
    let mut samples: Vec<ReferenceSample> = Vec::new();
    let mut q_seed = sc.initial.q;
    let mut t_base = 0.0;
    for seg in &sc.segments {
        let goal = Vector3::from_column_slice(&seg.goal);
        let traj = generate_trajectory(&sc.chain, &sc.rhythm, &q_seed, &goal, seg.duration_s, dt_c)?;
        q_seed = traj.last().expect("trajectory nonempty").q_des;
        let skip = usize::from(!samples.is_empty()); // drop duplicated joint sample
        for s in traj.into_iter().skip(skip) {
            samples.push(ReferenceSample {
                t: t_base + s.t,
                ..s
            });
        }
        t_base = samples.last().map(|s| s.t).unwrap_or(0.0);
    }
    Ok(samples)
}

/// Execute a scenario: validate, run the rate-group loop, and summarize.
///
/// Divergence stops the loop but still returns the partial log with a
/// [`RunOutcome::Diverged`] marker; configuration and reference-generation
/// failures return `Err` before any stepping.
pub fn run_scenario(config: &ScenarioConfig) -> Result<SimResult> {
    let sc = config.build()?;
    let chain = &sc.chain;
    let inertias = &sc.inertias;

    let reference = match sc.mode {
        ControlMode::Assist => build_reference(&sc)?,
        ControlMode::Admittance => Vec::new(),
    };

    let mut controller = Controller::new(sc.controller.clone(), chain, &sc.initial)?;
    let mut noise = SensorNoise::new(sc.seed, sc.noise);

    let fk0 = forward_kinematics(chain, &sc.initial);
    let mut human = HumanArmModel {
        attach: PortPair::new(
            Attachment {
                stiffness: sc.human.port_a.stiffness,
                damping: sc.human.port_a.damping,
            },
            Attachment {
                stiffness: sc.human.port_b.stiffness,
                damping: sc.human.port_b.damping,
            },
        ),
        intent: PortPair::new(fk0.pose_a, fk0.pose_b),
        probe: sc.probe,
    };

    let dt_s = sc.rates.dt_sensor();
    let dt_c = sc.rates.dt_control();
    let ratio = u64::from(sc.rates.ratio());
    let total_ticks = sc.sensor_ticks;

    let mut state = sc.initial;
    let mut tau_hold = JointVec::zeros();
    let mut log = Vec::with_capacity((total_ticks / ratio) as usize);
    let mut outcome = RunOutcome::Completed;

    // Energy audit bookkeeping.
    let e0 = kinetic_energy(chain, inertias, &state)
        + potential_energy(chain, inertias, &state.q, &sc.gravity);
    let mut work = 0.0;
    let mut max_drift: f64 = 0.0;
    let mut peak_ke: f64 = kinetic_energy(chain, inertias, &state);

    // Tracking error and probe series at the control rate.
    let mut sq_err_sum = 0.0;
    let mut clamp_count: u64 = 0;
    let mut control_ticks: u64 = 0;
    let mut probe_force = Vec::new();
    let mut probe_disp = Vec::new();
    let probe_ref_pose = match sc.probe.map(|p| p.port) {
        Some(PortId::A) => fk0.pose_a,
        _ => fk0.pose_b,
    };

    let mut limit_events_pending = false;
    let mut wrench_accum = PortPair::new(SpatialVec::zeros(), SpatialVec::zeros());
    let mut accum_count = 0u64;
    let mut sensor_ticks_done: u64 = 0;

    for tick in 0..total_ticks {
        let t = tick as f64 * dt_s;

        // Sense at the acquisition rate.
        let mut wrench = sense_wrench(chain, &state, &human, t);
        noise.apply(&mut wrench);
        wrench_accum.a += wrench.a.as_vector();
        wrench_accum.b += wrench.b.as_vector();
        accum_count += 1;

        // Control group: every `ratio`-th sensor tick, snapshot semantics.
        if tick % ratio == 0 {
            let consumed = match sc.wrench_filter {
                WrenchFilter::Latest => wrench,
                WrenchFilter::Average => {
                    let n = accum_count as f64;
                    PortPair::new(
                        Wrench::from_vector(&(wrench_accum.a / n)),
                        Wrench::from_vector(&(wrench_accum.b / n)),
                    )
                }
            };
            wrench_accum = PortPair::new(SpatialVec::zeros(), SpatialVec::zeros());
            accum_count = 0;

            let ref_sample = reference.get((tick / ratio) as usize).or(reference.last());
            if let (IntentMode::FollowReference, Some(r)) = (sc.human.intent, ref_sample) {
                let fk_ref =
                    forward_kinematics(chain, &JointState::new(r.q_des, JointVec::zeros()));
                human.intent = PortPair::new(fk_ref.pose_a, fk_ref.pose_b);
            }

            let out = controller.step(chain, inertias, &state, &consumed, ref_sample, dt_c)?;
            tau_hold = out.tau;

            let mut events = 0u32;
            if out.torque_clamped.iter().any(|&c| c) {
                events |= EVENT_TORQUE_CLAMP;
                clamp_count += out.torque_clamped.iter().filter(|&&c| c).count() as u64;
            }
            if limit_events_pending {
                events |= EVENT_LIMIT_CLAMP;
                limit_events_pending = false;
            }

            for i in 0..NUM_ACTIVE {
                let e = state.q[i] - out.q_des[i];
                sq_err_sum += e * e;
            }
            control_ticks += 1;

            if let Some(p) = &sc.probe {
                probe_force.push(probe_value(p, t));
                let frames = chain.frames(&state.q);
                let pose = match p.port {
                    PortId::A => Pose {
                        rotation: *frames.frames[4].rotation.matrix(),
                        translation: frames.gh_center()
                            + chain.params.beta * chain.params.p4 * frames.arm_axis(),
                    },
                    PortId::B => Pose::from(frames.frames[7]),
                };
                let d = if p.axis < 3 {
                    (pose.translation - probe_ref_pose.translation)[p.axis]
                } else {
                    rotation_log(&(pose.rotation * probe_ref_pose.rotation.transpose()))
                        [p.axis - 3]
                };
                probe_disp.push(d);
            }

            log.push(LogRecord {
                t,
                q: state.q,
                qd: state.qd,
                tau: tau_hold,
                wrench_a: consumed.a.as_vector(),
                wrench_b: consumed.b.as_vector(),
                v_des_a: out.v_des.a,
                v_des_b: out.v_des.b,
                q_des: out.q_des,
                events,
            });
        }

        // Plant group at the sensor rate, holding the last torque command.
        let (next, clamped) = step_plant(
            chain,
            inertias,
            &state,
            &tau_hold,
            &wrench,
            &sc.viscous,
            &sc.gravity,
            &sc.locked,
            &sc.limits,
            dt_s,
        );
        if clamped.iter().any(|&c| c) {
            limit_events_pending = true;
            clamp_count += clamped.iter().filter(|&&c| c).count() as u64;
        }
        state = next;
        sensor_ticks_done = tick + 1;

        // Work-energy audit along the realized trajectory.
        let frames = chain.frames(&state.q);
        let j_a = jacobian_from_frames(chain, &frames, PortId::A);
        let j_b = jacobian_from_frames(chain, &frames, PortId::B);
        let applied = tau_hold
            + j_a.transpose() * wrench.a.as_vector()
            + j_b.transpose() * wrench.b.as_vector()
            - sc.viscous.component_mul(&state.qd);
        work += dt_s * state.qd.dot(&applied);
        let ke = kinetic_energy(chain, inertias, &state);
        peak_ke = peak_ke.max(ke);
        let e = ke + potential_energy(chain, inertias, &state.q, &sc.gravity);
        max_drift = max_drift.max((e - e0 - work).abs());

        if let Some(detail) = sanity_check(&state) {
            outcome = RunOutcome::Diverged { tick, detail };
            break;
        }
    }

    let mut impedance_failure = None;
    let mut impedance_estimates = Vec::new();
    if let Some(p) = &sc.probe {
        if p.frequency_hz > 0.0 && matches!(outcome, RunOutcome::Completed) {
            let omega = 2.0 * std::f64::consts::PI * p.frequency_hz;
            match estimate_rendered_impedance(&probe_force, &probe_disp, dt_c, omega) {
                Ok(est) => impedance_estimates.push(ImpedanceEstimateEntry {
                    frequency_hz: p.frequency_hz,
                    magnitude: est.magnitude,
                    phase: est.phase,
                    damping_equivalent: est.damping_equivalent,
                }),
                Err(e) => impedance_failure = Some(e.to_string()),
            }
        }
    }

    let rmse_rad = if control_ticks > 0 {
        (sq_err_sum / (control_ticks as f64 * NUM_ACTIVE as f64)).sqrt()
    } else {
        0.0
    };
    let energy_drift_rel = max_drift / e0.abs().max(peak_ke).max(1e-12);

    Ok(SimResult {
        log,
        metrics: Metrics {
            rmse_rad,
            impedance_estimates,
            energy_drift_rel,
            clamp_count,
            ticks: TickCounts {
                sensor: sensor_ticks_done,
                control: control_ticks,
            },
        },
        outcome,
        impedance_failure,
    })
}

pub mod selfcheck {
    //! Embedded oracle suite behind the `check` CLI subcommand: the same
    //! finite-difference and algebraic cross-checks the test suite runs,
    //! callable at runtime. `fault` deliberately corrupts one quantity per
    //! oracle as a negative control.

    use super::*;
    use crate::dynamics::{default_link_inertias, gravity_vector, DEFAULT_BODY_MASS_KG};
    use crate::kinematics::{build_chain, damped_pinv_solve, jacobian, BodyParams};
    use nalgebra::{DMatrix, DVector, SMatrix};
    use rand::Rng;

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum SelfCheckFault {
        None,
        /// Corrupt one analytic Jacobian column before the FD comparison.
        PerturbJacobian,
        /// Corrupt one gravity component before the FD comparison.
        PerturbGravity,
    }

    #[derive(Debug, Clone, Serialize)]
    pub struct OracleReport {
        pub name: String,
        pub tolerance: f64,
        pub observed: f64,
        pub pass: bool,
    }

    fn report(name: &str, tolerance: f64, observed: f64) -> OracleReport {
        OracleReport {
            name: name.to_string(),
            tolerance,
            observed,
            pass: observed < tolerance,
        }
    }

    fn random_state(rng: &mut ChaCha8Rng) -> JointState {
        let limits = JointLimits::default();
        let q = JointVec::from_fn(|i, _| rng.random_range(limits.lower[i]..limits.upper[i]));
        let qd = JointVec::from_fn(|_, _| rng.random_range(-1.0..1.0));
        JointState::new(q, qd)
    }

    /// Central finite-difference port Jacobian.
    pub fn fd_jacobian(
        chain: &DhChain,
        state: &JointState,
        port: PortId,
    ) -> SMatrix<f64, 6, NUM_JOINTS> {
        let h = 1e-6;
        let mut j = SMatrix::<f64, 6, NUM_JOINTS>::zeros();
        let f0 = forward_kinematics(chain, state);
        for i in 0..NUM_JOINTS {
            let mut qp = state.q;
            let mut qm = state.q;
            qp[i] += h;
            qm[i] -= h;
            let fp = forward_kinematics(chain, &JointState::new(qp, state.qd));
            let fm = forward_kinematics(chain, &JointState::new(qm, state.qd));
            let (pp, pm) = (fp.port_pose(port), fm.port_pose(port));
            let lin = (pp.translation - pm.translation) / (2.0 * h);
            let dr = (pp.rotation - pm.rotation) / (2.0 * h);
            let w = dr * f0.port_pose(port).rotation.transpose();
            let ang = Vector3::new(w[(2, 1)], w[(0, 2)], w[(1, 0)]);
            j.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
            j.fixed_view_mut::<3, 1>(3, i).copy_from(&ang);
        }
        j
    }

    fn jacobian_oracle(fault: SelfCheckFault) -> OracleReport {
        let chain = build_chain(BodyParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7001);
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let s = random_state(&mut rng);
            for port in [PortId::A, PortId::B] {
                let mut analytic = jacobian(&chain, &s, port).matrix;
                if fault == SelfCheckFault::PerturbJacobian {
                    analytic[(0, 3)] += 1e-3;
                }
                let fd = fd_jacobian(&chain, &s, port);
                let denom = analytic.norm().max(1.0);
                worst = worst.max((analytic - fd).norm() / denom);
            }
        }
        report("jacobian_vs_finite_difference", 1e-6, worst)
    }

    fn gravity_oracle(fault: SelfCheckFault) -> OracleReport {
        let chain = build_chain(BodyParams::default()).unwrap();
        let inertias = default_link_inertias(&chain, DEFAULT_BODY_MASS_KG, 0.04);
        let gravity = crate::dynamics::standard_gravity();
        let mut rng = ChaCha8Rng::seed_from_u64(7002);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let s = random_state(&mut rng);
            let mut g = gravity_vector(&chain, &inertias, &s.q, &gravity);
            if fault == SelfCheckFault::PerturbGravity {
                g[2] += 1e-3;
            }
            for k in 0..NUM_JOINTS {
                let mut qp = s.q;
                let mut qm = s.q;
                qp[k] += h;
                qm[k] -= h;
                let fd = (potential_energy(&chain, &inertias, &qp, &gravity)
                    - potential_energy(&chain, &inertias, &qm, &gravity))
                    / (2.0 * h);
                worst = worst.max((g[k] - fd).abs() / g[k].abs().max(1.0));
            }
        }
        report("gravity_vs_potential_gradient", 1e-6, worst)
    }

    fn energy_oracle() -> OracleReport {
        // Zero-gravity inertial coast at the full sensor rate: kinetic
        // energy must be conserved through the Coriolis bookkeeping.
        let mut cfg = ScenarioConfig::default();
        cfg.gravity = [0.0, 0.0, 0.0];
        cfg.friction.active = 0.0;
        cfg.friction.passive = 0.0;
        cfg.gains.kp = crate::config::GainSpec::Scalar(0.0);
        cfg.gains.kv = crate::config::GainSpec::Scalar(1e-12);
        cfg.impedance.port_a.damping = crate::config::MatrixSpec::Scalar(0.0);
        cfg.impedance.port_b.damping = crate::config::MatrixSpec::Scalar(0.0);
        cfg.rates.scale = 1;
        cfg.duration_s = 0.2;
        cfg.initial.q = Some([0.2, 0.05, 0.3, -0.4, 0.5, 1.0, 0.1, -0.1]);
        cfg.initial.qd = Some([0.3, 0.02, -0.2, 0.25, -0.3, 0.4, 0.2, -0.2]);
        match run_scenario(&cfg) {
            Ok(res) => report("energy_audit_free_coast", 1e-5, res.metrics.energy_drift_rel),
            Err(_) => report("energy_audit_free_coast", 1e-5, f64::INFINITY),
        }
    }

    fn normal_equation_oracle() -> OracleReport {
        let mut worst: f64 = 0.0;
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let j = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
            let v = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
            let w = DVector::from_fn(6, |_, _| rng.random_range(0.2..2.0));
            let lambda = 1e-3;
            let qd = damped_pinv_solve(&j, &v, lambda, &w, &[true; 6], &DVector::zeros(6))
                .expect("solve");
            let wm = DMatrix::from_diagonal(&w);
            let a = j.transpose() * &wm * &j + DMatrix::identity(6, 6) * lambda * lambda;
            let rhs = j.transpose() * &wm * &v;
            let oracle = a.try_inverse().unwrap() * rhs;
            worst = worst.max((qd - oracle).norm());
        }
        report("damped_solve_vs_normal_equations", 1e-9, worst)
    }

    /// Run the four oracles; all pass on a pristine build.
    pub fn run_selfcheck(fault: SelfCheckFault) -> Vec<OracleReport> {
        vec![
            jacobian_oracle(fault),
            gravity_oracle(fault),
            energy_oracle(),
            normal_equation_oracle(),
        ]
    }
}
