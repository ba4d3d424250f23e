//! Rigid-body plant model: joint-space inertia, Coriolis and gravity terms,
//! and forward dynamics for the simulated device.
//!
//! All terms are assembled from per-link COM Jacobians:
//!
//! * `M(q) = Σ mᵢ Jv,ᵢᵀ Jv,ᵢ + Jω,ᵢᵀ Rᵢ Iᵢ Rᵢᵀ Jω,ᵢ`
//! * `g(q) = ∂U/∂q` with `U = −Σ mᵢ·gravityᵀ·x_COM,ᵢ(q)`; the returned
//!   vector is the joint load the actuators must supply to hold the pose
//!   (`τ_hold = g`).
//! * `C(q, q̇)` via Christoffel symbols from central finite differences of
//!   `M` (step 1e-6), which keeps `Ṁ − 2C` skew-symmetric to FD accuracy.

use nalgebra::{Matrix3, Vector3};

use crate::kinematics::{link_point_jacobian, DhChain, JointState, Side};
use crate::types::{PortId, PortPair, Wrench};
use crate::{Error, JointMat, JointVec, Result, NUM_JOINTS};

/// Standard gravity vector (m/s²), pointing down.
pub fn standard_gravity() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -9.81)
}

/// Default device-body mass: 14 lb in kg.
pub const DEFAULT_BODY_MASS_KG: f64 = 6.35;

/// Inertial properties of one link, expressed in its own joint frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkInertia {
    /// Link mass (kg), ≥ 0.
    pub mass: f64,
    /// Center of mass in the link frame (m).
    pub com: Vector3<f64>,
    /// Rotational inertia about the COM in the link frame (kg·m²).
    pub inertia: Matrix3<f64>,
}

impl LinkInertia {
    pub fn zero() -> Self {
        Self {
            mass: 0.0,
            com: Vector3::zeros(),
            inertia: Matrix3::zeros(),
        }
    }

    /// Solid-cylinder model: axis direction `axis`, length `len`,
    /// radius `r`, COM supplied separately.
    fn rod(mass: f64, com: Vector3<f64>, axis: Vector3<f64>, len: f64, r: f64) -> Self {
        let axial = 0.5 * mass * r * r;
        let transverse = mass * (3.0 * r * r + len * len) / 12.0;
        let a = axis.normalize();
        let outer = a * a.transpose();
        let inertia = outer * axial + (Matrix3::identity() - outer) * transverse;
        Self { mass, com, inertia }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass >= 0.0) || !self.mass.is_finite() {
            return Err(Error::Parameter(format!(
                "link mass must be ≥ 0, got {}",
                self.mass
            )));
        }
        let sym = (self.inertia - self.inertia.transpose()).abs().max();
        if sym > 1e-9 {
            return Err(Error::Parameter(format!(
                "link inertia not symmetric (defect {sym:.3e})"
            )));
        }
        let eig = self.inertia.symmetric_eigen().eigenvalues;
        let mut e = [eig[0], eig[1], eig[2]];
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if e[0] < -1e-12 {
            return Err(Error::Parameter(format!(
                "link inertia not positive semidefinite (min eigenvalue {:.3e})",
                e[0]
            )));
        }
        // Principal moments of a rigid body obey the triangle inequality.
        if e[0] + e[1] < e[2] - 1e-12 {
            return Err(Error::Parameter(format!(
                "principal moments violate the triangle inequality: {e:?}"
            )));
        }
        Ok(())
    }
}

/// Default inertia table: the configured body mass distributed over the
/// links in proportion to their lengths, COM at mid-link, solid-cylinder
/// inertia of the given radius. The zero-length spherical-linkage and
/// wrist interlink bodies carry no mass.
pub fn default_link_inertias(
    chain: &DhChain,
    total_mass: f64,
    link_radius: f64,
) -> [LinkInertia; NUM_JOINTS] {
    let p = &chain.params;
    let y_flip = if p.side == Side::Left { -1.0 } else { 1.0 };
    // (length, COM in link frame, rod axis) per link; zero-length links
    // are massless by default.
    let rods: [Option<(f64, Vector3<f64>, Vector3<f64>)>; NUM_JOINTS] = [
        Some((p.p2, Vector3::new(0.0, 0.0, p.p2 / 2.0), Vector3::z())),
        Some((p.p3, Vector3::new(-p.p3 / 2.0, 0.0, 0.0), Vector3::x())),
        None,
        None,
        Some((
            p.p4,
            Vector3::new(0.0, y_flip * p.p4 / 2.0, 0.0),
            Vector3::y(),
        )),
        Some((p.p5, Vector3::new(-p.p5 / 2.0, 0.0, 0.0), Vector3::x())),
        None,
        Some((p.p6, Vector3::new(-p.p6 / 2.0, 0.0, 0.0), Vector3::x())),
    ];
    let total_len: f64 = rods.iter().flatten().map(|(l, _, _)| l).sum();
    std::array::from_fn(|i| match rods[i] {
        Some((len, com, axis)) => {
            LinkInertia::rod(total_mass * len / total_len, com, axis, len, link_radius)
        }
        None => LinkInertia::zero(),
    })
}

/// Validate a full inertia table, including the total-mass budget.
pub fn validate_inertias(links: &[LinkInertia; NUM_JOINTS], expected_total: f64) -> Result<()> {
    for (i, l) in links.iter().enumerate() {
        l.validate()
            .map_err(|e| Error::Parameter(format!("link {}: {e}", i + 1)))?;
    }
    let total: f64 = links.iter().map(|l| l.mass).sum();
    if (total - expected_total).abs() > 1e-6 * expected_total.max(1.0) {
        return Err(Error::Parameter(format!(
            "link masses sum to {total} kg, expected {expected_total} kg"
        )));
    }
    Ok(())
}

/// Joint-space dynamics terms at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsTerms {
    /// Symmetric positive-definite inertia matrix.
    pub m: JointMat,
    /// Coriolis matrix; `Ṁ − 2C` is skew-symmetric.
    pub c: JointMat,
    /// Gravity load (holding torque convention).
    pub g: JointVec,
}

/// Joint-space inertia matrix.
pub fn mass_matrix(chain: &DhChain, inertias: &[LinkInertia; NUM_JOINTS], q: &JointVec) -> JointMat {
    let frames = chain.frames(q);
    let mut m = JointMat::zeros();
    for (i, link) in inertias.iter().enumerate() {
        if link.mass == 0.0 && link.inertia == Matrix3::zeros() {
            continue;
        }
        let r = frames.frames[i].rotation;
        let com_world = frames.frames[i] * nalgebra::Point3::from(link.com);
        let j = link_point_jacobian(chain, &frames, &com_world.coords, i + 1);
        let jv = j.fixed_view::<3, NUM_JOINTS>(0, 0);
        let jw = j.fixed_view::<3, NUM_JOINTS>(3, 0);
        let i_world = r.matrix() * link.inertia * r.matrix().transpose();
        m += jv.transpose() * jv * link.mass + jw.transpose() * i_world * jw;
    }
    // The formula is symmetric; scrub the last-bit FP asymmetry so
    // downstream Cholesky factorizations see an exactly symmetric matrix.
    0.5 * (m + m.transpose())
}

/// Potential energy `U = −Σ mᵢ·gravityᵀ·x_COM,ᵢ(q)`.
pub fn potential_energy(
    chain: &DhChain,
    inertias: &[LinkInertia; NUM_JOINTS],
    q: &JointVec,
    gravity: &Vector3<f64>,
) -> f64 {
    let frames = chain.frames(q);
    let mut u = 0.0;
    for (i, link) in inertias.iter().enumerate() {
        if link.mass == 0.0 {
            continue;
        }
        let com_world = frames.frames[i] * nalgebra::Point3::from(link.com);
        u -= link.mass * gravity.dot(&com_world.coords);
    }
    u
}

/// Analytic gravity load `g(q) = ∂U/∂q`, computed through COM Jacobians.
pub fn gravity_vector(
    chain: &DhChain,
    inertias: &[LinkInertia; NUM_JOINTS],
    q: &JointVec,
    gravity: &Vector3<f64>,
) -> JointVec {
    let frames = chain.frames(q);
    let mut g = JointVec::zeros();
    for (i, link) in inertias.iter().enumerate() {
        if link.mass == 0.0 {
            continue;
        }
        let com_world = frames.frames[i] * nalgebra::Point3::from(link.com);
        let j = link_point_jacobian(chain, &frames, &com_world.coords, i + 1);
        let jv = j.fixed_view::<3, NUM_JOINTS>(0, 0);
        g -= jv.transpose() * gravity * link.mass;
    }
    g
}

const CHRISTOFFEL_STEP: f64 = 1e-6;

/// ∂M/∂qₖ for every k, by central differences.
fn mass_matrix_partials(
    chain: &DhChain,
    inertias: &[LinkInertia; NUM_JOINTS],
    q: &JointVec,
) -> [JointMat; NUM_JOINTS] {
    std::array::from_fn(|k| {
        let mut qp = *q;
        let mut qm = *q;
        qp[k] += CHRISTOFFEL_STEP;
        qm[k] -= CHRISTOFFEL_STEP;
        (mass_matrix(chain, inertias, &qp) - mass_matrix(chain, inertias, &qm))
            / (2.0 * CHRISTOFFEL_STEP)
    })
}

/// Coriolis matrix from Christoffel symbols:
/// `C_ij = Σₖ ½(∂M_ij/∂qₖ + ∂M_ik/∂qⱼ − ∂M_jk/∂qᵢ)·q̇ₖ`.
pub fn coriolis_matrix(
    chain: &DhChain,
    inertias: &[LinkInertia; NUM_JOINTS],
    state: &JointState,
) -> JointMat {
    let dm = mass_matrix_partials(chain, inertias, &state.q);
    let qd = &state.qd;
    JointMat::from_fn(|i, j| {
        let mut cij = 0.0;
        for k in 0..NUM_JOINTS {
            cij += 0.5 * (dm[k][(i, j)] + dm[j][(i, k)] - dm[i][(j, k)]) * qd[k];
        }
        cij
    })
}

/// All three joint-space terms at once.
pub fn dynamics_terms(
    chain: &DhChain,
    inertias: &[LinkInertia; NUM_JOINTS],
    state: &JointState,
    gravity: &Vector3<f64>,
) -> DynamicsTerms {
    DynamicsTerms {
        m: mass_matrix(chain, inertias, &state.q),
        c: coriolis_matrix(chain, inertias, state),
        g: gravity_vector(chain, inertias, &state.q, gravity),
    }
}

/// Joint accelerations solving
/// `M·q̈ = τ + J_Aᵀ·F_A + J_Bᵀ·F_B − C·q̇ − g − D·q̇`.
///
/// `viscous` is the diagonal of the joint friction matrix `D`. Joints
/// flagged in `locked` are held at zero acceleration (their coupling rows
/// and columns are masked out of the solve). Passive joints 7–8 must
/// receive zero torque.
#[allow(clippy::too_many_arguments)]
pub fn forward_dynamics(
    chain: &DhChain,
    inertias: &[LinkInertia; NUM_JOINTS],
    state: &JointState,
    tau: &JointVec,
    wrenches: &PortPair<Wrench>,
    viscous: &JointVec,
    gravity: &Vector3<f64>,
    locked: &[bool; NUM_JOINTS],
) -> JointVec {
    assert!(
        tau[6] == 0.0 && tau[7] == 0.0,
        "passive wrist joints carry no actuation"
    );
    let frames = chain.frames(&state.q);
    let j_a = crate::kinematics::jacobian_from_frames(chain, &frames, PortId::A);
    let j_b = crate::kinematics::jacobian_from_frames(chain, &frames, PortId::B);

    let mut rhs = *tau;
    rhs += j_a.transpose() * wrenches.a.as_vector();
    rhs += j_b.transpose() * wrenches.b.as_vector();
    rhs -= coriolis_matrix(chain, inertias, state) * state.qd;
    rhs -= gravity_vector(chain, inertias, &state.q, gravity);
    rhs -= viscous.component_mul(&state.qd);

    let mut m = mass_matrix(chain, inertias, &state.q);
    for j in 0..NUM_JOINTS {
        if locked[j] {
            for k in 0..NUM_JOINTS {
                m[(j, k)] = 0.0;
                m[(k, j)] = 0.0;
            }
            m[(j, j)] = 1.0;
            rhs[j] = 0.0;
        }
    }

    let chol = m
        .cholesky()
        .expect("inertia matrix must be positive definite");
    chol.solve(&rhs)
}

/// Kinetic energy `½·q̇ᵀM(q)q̇`.
pub fn kinetic_energy(
    chain: &DhChain,
    inertias: &[LinkInertia; NUM_JOINTS],
    state: &JointState,
) -> f64 {
    let m = mass_matrix(chain, inertias, &state.q);
    0.5 * state.qd.dot(&(m * state.qd))
}
