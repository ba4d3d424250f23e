//! Scenario configuration: a strict JSON schema (unknown keys rejected)
//! covering every tunable in the stack, with defaults so `{}` is a valid
//! idle scenario. `ScenarioConfig::build` validates all nested invariants
//! and compiles the runtime [`Scenario`] bundle the simulator consumes.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::controller::{ControllerParams, ImpedanceParams, PdGains};
use crate::dynamics::{default_link_inertias, validate_inertias, LinkInertia};
use crate::kinematics::{build_chain, BodyParams, DhChain, JointLimits, JointState};
use crate::reference::RhythmModel;
use crate::types::{PortId, PortPair, Pose, SpatialMat};
use crate::{Error, JointVec, Result, NUM_ACTIVE, NUM_JOINTS};

/// 6×6 task-space matrix in config form: isotropic scalar, diagonal, or
/// full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Diagonal([f64; 6]),
    Full([[f64; 6]; 6]),
}

impl MatrixSpec {
    pub fn to_matrix(&self) -> SpatialMat {
        match self {
            MatrixSpec::Scalar(s) => SpatialMat::identity() * *s,
            MatrixSpec::Diagonal(d) => {
                SpatialMat::from_diagonal(&nalgebra::Vector6::from_column_slice(d))
            }
            MatrixSpec::Full(rows) => {
                SpatialMat::from_fn(|i, j| rows[i][j])
            }
        }
    }
}

/// Per-active-joint gain in config form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSpec {
    Scalar(f64),
    PerJoint([f64; NUM_ACTIVE]),
}

impl GainSpec {
    fn to_array(&self) -> [f64; NUM_ACTIVE] {
        match self {
            GainSpec::Scalar(s) => [*s; NUM_ACTIVE],
            GainSpec::PerJoint(a) => *a,
        }
    }
}

/// Pose in config form: translation plus unit quaternion `[w, x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseConfig {
    pub translation: [f64; 3],
    pub quaternion_wxyz: [f64; 4],
}

impl PoseConfig {
    fn to_pose(&self, path: &str) -> Result<Pose> {
        let [w, x, y, z] = self.quaternion_wxyz;
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::config(
                path,
                format!("quaternion must be unit length, got norm {norm}"),
            ));
        }
        let q = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, x, y, z));
        Ok(Pose {
            rotation: *q.to_rotation_matrix().matrix(),
            translation: Vector3::from_column_slice(&self.translation),
        })
    }
}

/// Commanded impedance at one port.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PortImpedanceConfig {
    /// Virtual inertia (kg / kg·m²).
    pub inertia: MatrixSpec,
    /// Virtual damping (N·s/m / N·m·s/rad).
    pub damping: MatrixSpec,
    /// Virtual stiffness (N/m / N·m/rad).
    pub stiffness: MatrixSpec,
    /// Stiffness equilibrium; defaults to the port pose at the initial
    /// configuration.
    pub x0: Option<PoseConfig>,
}

impl Default for PortImpedanceConfig {
    fn default() -> Self {
        Self {
            inertia: MatrixSpec::Scalar(1.0),
            damping: MatrixSpec::Scalar(20.0),
            stiffness: MatrixSpec::Scalar(0.0),
            x0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImpedanceConfig {
    pub port_a: PortImpedanceConfig,
    pub port_b: PortImpedanceConfig,
}

impl Default for ImpedanceConfig {
    fn default() -> Self {
        Self {
            port_a: PortImpedanceConfig::default(),
            port_b: PortImpedanceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainsConfig {
    pub kp: GainSpec,
    pub kv: GainSpec,
    /// Torque/force limits per joint (N·m; N for the prismatic joint).
    pub torque_limits: [f64; NUM_JOINTS],
    /// Damped least-squares regularization for the velocity resolution.
    pub lambda: f64,
    /// Solve row weights: (cuff, handle).
    pub port_weights: [f64; 2],
}

impl Default for GainsConfig {
    fn default() -> Self {
        Self {
            kp: GainSpec::Scalar(50.0),
            kv: GainSpec::Scalar(5.0),
            torque_limits: [40.0, 200.0, 40.0, 40.0, 40.0, 40.0, 0.0, 0.0],
            lambda: 1e-3,
            port_weights: [0.5, 1.0],
        }
    }
}

/// Rate structure: acquisition runs an exact integer multiple of the
/// control rate; `scale` divides both for desk-scale runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateConfig {
    pub sensor_hz: u32,
    pub control_hz: u32,
    pub scale: u32,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            sensor_hz: 50_000,
            control_hz: 10_000,
            scale: 10,
        }
    }
}

impl RateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sensor_hz == 0 || self.control_hz == 0 || self.scale == 0 {
            return Err(Error::config("rates", "rates and scale must be nonzero"));
        }
        if self.sensor_hz % self.control_hz != 0 {
            return Err(Error::config(
                "rates.sensor_hz",
                format!(
                    "sensor rate {} must be an integer multiple of control rate {}",
                    self.sensor_hz, self.control_hz
                ),
            ));
        }
        if self.sensor_hz % self.scale != 0 || self.control_hz % self.scale != 0 {
            return Err(Error::config(
                "rates.scale",
                format!(
                    "scale {} must divide both rates ({}, {})",
                    self.scale, self.sensor_hz, self.control_hz
                ),
            ));
        }
        Ok(())
    }

    /// Sensor ticks per control tick.
    pub fn ratio(&self) -> u32 {
        self.sensor_hz / self.control_hz
    }

    /// Effective (scaled) sensor rate in Hz.
    pub fn effective_sensor_hz(&self) -> f64 {
        f64::from(self.sensor_hz / self.scale)
    }

    pub fn dt_sensor(&self) -> f64 {
        1.0 / self.effective_sensor_hz()
    }

    pub fn dt_control(&self) -> f64 {
        self.dt_sensor() * f64::from(self.ratio())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    /// Wrench-driven motion only; no trajectory playback.
    #[default]
    Admittance,
    /// Reference trajectory superposed on the admittance channel.
    Assist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntentMode {
    /// The virtual human holds the initial port poses.
    #[default]
    Hold,
    /// The virtual human follows the active reference trajectory.
    FollowReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PortHumanConfig {
    /// Attachment stiffness (N/m), linear axes.
    pub stiffness: f64,
    /// Attachment damping (N·s/m), linear axes.
    pub damping: f64,
}

impl Default for PortHumanConfig {
    fn default() -> Self {
        Self {
            stiffness: 0.0,
            damping: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HumanConfig {
    pub port_a: PortHumanConfig,
    pub port_b: PortHumanConfig,
    pub intent: IntentMode,
}

/// One reach segment standing in for a game-environment hand target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReachSegment {
    pub goal: [f64; 3],
    pub duration_s: f64,
}

/// Probe wrench injected at a port: sinusoidal, or constant when
/// `frequency_hz` is zero. `axis` indexes `[fx fy fz tx ty tz]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub port: PortId,
    pub axis: usize,
    pub amplitude: f64,
    pub frequency_hz: f64,
    pub phase: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            port: PortId::B,
            axis: 0,
            amplitude: 2.0,
            frequency_hz: 0.5,
            phase: 0.0,
        }
    }
}

/// Sweep description for the impedance-rendering experiment: each damping
/// setting is rendered and probed at each frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderingConfig {
    /// Commanded pure-damping values at the handle (N·s/m).
    pub damping_settings: Vec<f64>,
    pub frequencies_hz: Vec<f64>,
}

impl Default for RenderingConfig {
    fn default() -> Self {
        Self {
            damping_settings: vec![20.0, 60.0],
            frequencies_hz: vec![0.5],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrictionConfig {
    /// Viscous friction on active joints (N·m·s/rad).
    pub active: f64,
    /// Viscous friction on the passive wrist (N·m·s/rad).
    pub passive: f64,
}

impl Default for FrictionConfig {
    fn default() -> Self {
        Self {
            active: 0.05,
            passive: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub enabled: bool,
    /// Gaussian std dev on force components (N).
    pub force_std: f64,
    /// Gaussian std dev on torque components (N·m).
    pub torque_std: f64,
    /// Quantization step mimicking sensor resolution (0 disables).
    pub quantum: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            force_std: 0.0,
            torque_std: 0.0,
            quantum: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WrenchFilter {
    /// Controller consumes the most recent sensor tick's wrench.
    #[default]
    Latest,
    /// Controller consumes the mean over the last control period.
    Average,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InertiaConfig {
    /// Total device-body mass budget (kg).
    pub total_mass_kg: f64,
    /// Structural radius for the default rod inertia model (m).
    pub link_radius_m: f64,
    /// Explicit per-link table (8 entries) overriding the defaults.
    pub links: Option<Vec<LinkInertiaConfig>>,
}

impl Default for InertiaConfig {
    fn default() -> Self {
        Self {
            total_mass_kg: crate::dynamics::DEFAULT_BODY_MASS_KG,
            link_radius_m: 0.04,
            links: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkInertiaConfig {
    pub mass: f64,
    pub com: [f64; 3],
    pub inertia: [[f64; 3]; 3],
}

impl LinkInertiaConfig {
    fn to_link(&self) -> LinkInertia {
        LinkInertia {
            mass: self.mass,
            com: Vector3::from_column_slice(&self.com),
            inertia: nalgebra::Matrix3::from_fn(|i, j| self.inertia[i][j]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialStateConfig {
    /// Initial joint positions; zeros (home) when absent.
    pub q: Option<[f64; NUM_JOINTS]>,
    /// Initial joint velocities; zeros when absent.
    pub qd: Option<[f64; NUM_JOINTS]>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Log CSV destination; stdout metrics only when absent.
    pub log_csv: Option<String>,
    /// Metrics JSON destination.
    pub metrics_json: Option<String>,
}

/// Declarative experiment input. Every field has a default, so `{}` is a
/// valid 1-second idle scenario. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub body: BodyParams,
    pub joint_limits: JointLimits,
    pub inertia: InertiaConfig,
    pub rates: RateConfig,
    pub impedance: ImpedanceConfig,
    pub gains: GainsConfig,
    pub mode: ControlMode,
    pub human: HumanConfig,
    pub reference_segments: Vec<ReachSegment>,
    pub probe: Option<ProbeConfig>,
    pub rendering: Option<RenderingConfig>,
    pub rhythm: RhythmModel,
    pub friction: FrictionConfig,
    pub gravity: [f64; 3],
    pub duration_s: f64,
    pub seed: u64,
    pub noise: NoiseConfig,
    pub wrench_filter: WrenchFilter,
    pub initial: InitialStateConfig,
    /// Joints held stationary by the executive (test fixtures).
    pub locked_joints: [bool; NUM_JOINTS],
    pub output: OutputConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            body: BodyParams::default(),
            joint_limits: JointLimits::default(),
            inertia: InertiaConfig::default(),
            rates: RateConfig::default(),
            impedance: ImpedanceConfig::default(),
            gains: GainsConfig::default(),
            mode: ControlMode::default(),
            human: HumanConfig::default(),
            reference_segments: Vec::new(),
            probe: None,
            rendering: None,
            rhythm: RhythmModel::default(),
            friction: FrictionConfig::default(),
            gravity: [0.0, 0.0, -9.81],
            duration_s: 1.0,
            seed: 0,
            noise: NoiseConfig::default(),
            wrench_filter: WrenchFilter::default(),
            initial: InitialStateConfig::default(),
            locked_joints: [false; NUM_JOINTS],
            output: OutputConfig::default(),
        }
    }
}

/// Compiled, validated scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub chain: DhChain,
    pub limits: JointLimits,
    pub inertias: [LinkInertia; NUM_JOINTS],
    pub controller: ControllerParams,
    pub mode: ControlMode,
    pub rates: RateConfig,
    pub sensor_ticks: u64,
    pub human: HumanConfig,
    pub probe: Option<ProbeConfig>,
    pub segments: Vec<ReachSegment>,
    pub rhythm: RhythmModel,
    pub viscous: JointVec,
    pub gravity: Vector3<f64>,
    pub locked: [bool; NUM_JOINTS],
    pub initial: JointState,
    pub seed: u64,
    pub noise: NoiseConfig,
    pub wrench_filter: WrenchFilter,
    pub duration_s: f64,
}

impl ScenarioConfig {
    /// Parse from JSON with unknown-key rejection; errors carry the
    /// offending key path.
    pub fn from_json_str(json: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(json);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    /// Canonical pretty-printed JSON emission (`--dump-config`).
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }

    /// Validate every nested invariant and compile the runtime bundle.
    pub fn build(&self) -> Result<Scenario> {
        self.body
            .validate()
            .map_err(|e| Error::config("body", e.to_string()))?;
        self.joint_limits
            .validate()
            .map_err(|e| Error::config("joint_limits", e.to_string()))?;
        self.rates.validate()?;
        self.rhythm
            .validate()
            .map_err(|e| Error::config("rhythm", e.to_string()))?;

        let chain = build_chain(self.body)?;

        if !(self.inertia.total_mass_kg > 0.0) || !(self.inertia.link_radius_m > 0.0) {
            return Err(Error::config(
                "inertia",
                "total_mass_kg and link_radius_m must be > 0",
            ));
        }
        let inertias: [LinkInertia; NUM_JOINTS] = match &self.inertia.links {
            Some(links) => {
                if links.len() != NUM_JOINTS {
                    return Err(Error::config(
                        "inertia.links",
                        format!("expected {NUM_JOINTS} links, got {}", links.len()),
                    ));
                }
                let table: [LinkInertia; NUM_JOINTS] =
                    std::array::from_fn(|i| links[i].to_link());
                validate_inertias(&table, self.inertia.total_mass_kg)
                    .map_err(|e| Error::config("inertia.links", e.to_string()))?;
                table
            }
            None => default_link_inertias(&chain, self.inertia.total_mass_kg, self.inertia.link_radius_m),
        };

        let q0 = self
            .initial
            .q
            .map(|a| JointVec::from_column_slice(&a))
            .unwrap_or_else(JointVec::zeros);
        let qd0 = self
            .initial
            .qd
            .map(|a| JointVec::from_column_slice(&a))
            .unwrap_or_else(JointVec::zeros);
        for i in 0..NUM_JOINTS {
            if q0[i] < self.joint_limits.lower[i] || q0[i] > self.joint_limits.upper[i] {
                return Err(Error::config(
                    "initial.q",
                    format!(
                        "joint {} value {} outside limits [{}, {}]",
                        i + 1,
                        q0[i],
                        self.joint_limits.lower[i],
                        self.joint_limits.upper[i]
                    ),
                ));
            }
            if !qd0[i].is_finite() {
                return Err(Error::config("initial.qd", "rates must be finite"));
            }
        }
        let initial = JointState::new(q0, qd0);

        // Equilibrium poses default to the ports' initial location.
        let fk0 = crate::kinematics::forward_kinematics(&chain, &initial);
        let x0_a = match &self.impedance.port_a.x0 {
            Some(p) => p.to_pose("impedance.port_a.x0")?,
            None => fk0.pose_a,
        };
        let x0_b = match &self.impedance.port_b.x0 {
            Some(p) => p.to_pose("impedance.port_b.x0")?,
            None => fk0.pose_b,
        };
        let imp_a = ImpedanceParams {
            m_d: self.impedance.port_a.inertia.to_matrix(),
            b_d: self.impedance.port_a.damping.to_matrix(),
            k_d: self.impedance.port_a.stiffness.to_matrix(),
            x0: x0_a,
        };
        let imp_b = ImpedanceParams {
            m_d: self.impedance.port_b.inertia.to_matrix(),
            b_d: self.impedance.port_b.damping.to_matrix(),
            k_d: self.impedance.port_b.stiffness.to_matrix(),
            x0: x0_b,
        };

        let controller = ControllerParams {
            impedance: PortPair::new(imp_a, imp_b),
            gains: PdGains {
                kp: self.gains.kp.to_array(),
                kv: self.gains.kv.to_array(),
            },
            lambda: self.gains.lambda,
            weights: PortPair::new(self.gains.port_weights[0], self.gains.port_weights[1]),
            torque_limits: JointVec::from_column_slice(&self.gains.torque_limits),
            gravity: Vector3::from_column_slice(&self.gravity),
        };
        controller
            .validate()
            .map_err(|e| Error::config("impedance/gains", e.to_string()))?;

        if let Some(p) = &self.probe {
            if p.axis >= 6 {
                return Err(Error::config(
                    "probe.axis",
                    format!("axis must be 0..6, got {}", p.axis),
                ));
            }
            if !(p.amplitude >= 0.0) || !(p.frequency_hz >= 0.0) {
                return Err(Error::config(
                    "probe",
                    "amplitude and frequency must be ≥ 0",
                ));
            }
        }
        for (name, v) in [
            ("human.port_a.stiffness", self.human.port_a.stiffness),
            ("human.port_a.damping", self.human.port_a.damping),
            ("human.port_b.stiffness", self.human.port_b.stiffness),
            ("human.port_b.damping", self.human.port_b.damping),
        ] {
            if !(v >= 0.0) {
                return Err(Error::config(name, "must be ≥ 0"));
            }
        }
        if !(self.friction.active >= 0.0) || !(self.friction.passive >= 0.0) {
            return Err(Error::config("friction", "viscous terms must be ≥ 0"));
        }
        if self.noise.force_std < 0.0 || self.noise.torque_std < 0.0 || self.noise.quantum < 0.0 {
            return Err(Error::config("noise", "noise parameters must be ≥ 0"));
        }
        for (i, seg) in self.reference_segments.iter().enumerate() {
            if !(seg.duration_s > 0.0) {
                return Err(Error::config(
                    format!("reference_segments[{i}].duration_s"),
                    "must be > 0",
                ));
            }
        }

        if !(self.duration_s > 0.0) {
            return Err(Error::config("duration_s", "must be > 0"));
        }
        let f_s = self.rates.effective_sensor_hz();
        let ticks_f = self.duration_s * f_s;
        let sensor_ticks = ticks_f.round() as u64;
        if sensor_ticks == 0 || (ticks_f - sensor_ticks as f64).abs() > 1e-6 {
            return Err(Error::config(
                "duration_s",
                format!(
                    "duration {} s is not a whole number of sensor ticks at {} Hz",
                    self.duration_s, f_s
                ),
            ));
        }
        if sensor_ticks % u64::from(self.rates.ratio()) != 0 {
            return Err(Error::config(
                "duration_s",
                format!(
                    "sensor tick count {} must be a multiple of the rate ratio {}",
                    sensor_ticks,
                    self.rates.ratio()
                ),
            ));
        }

        let mut viscous = JointVec::from_element(self.friction.active);
        viscous[6] = self.friction.passive;
        viscous[7] = self.friction.passive;

        Ok(Scenario {
            chain,
            limits: self.joint_limits,
            inertias,
            controller,
            mode: self.mode,
            rates: self.rates,
            sensor_ticks,
            human: self.human,
            probe: self.probe,
            segments: self.reference_segments.clone(),
            rhythm: self.rhythm,
            viscous,
            gravity: Vector3::from_column_slice(&self.gravity),
            locked: self.locked_joints,
            initial,
            seed: self.seed,
            noise: self.noise,
            wrench_filter: self.wrench_filter,
            duration_s: self.duration_s,
        })
    }
}
