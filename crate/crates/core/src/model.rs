//! Planar two-leg quadruped: kinematics and Lagrangian dynamics.
//!
//! Generalized coordinates are `q = [x, z, θ, F1, F2, B1, B2]`: base position,
//! pitch (counterclockwise from horizontal, nose up positive) and the hip and
//! knee angles of the lumped front and back legs. A joint angle of zero points
//! the link straight down in the body frame; the knee angle is measured
//! relative to the upper link.
//!
//! Everything that the optimizer differentiates is written over [`Scalar`] in
//! the `*_generic` functions; the public functions are thin `f64` wrappers.

use nalgebra::{DMatrix, SMatrix, SVector, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ad::{Dual, Scalar};

pub const NQ: usize = 7;
pub const NX: usize = 14;
pub const NU: usize = 4;

pub const IX: usize = 0;
pub const IZ: usize = 1;
pub const ITHETA: usize = 2;

pub type Mat7 = SMatrix<f64, 7, 7>;
pub type Vec7 = SVector<f64, 7>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("flight phase has no contacting foot")]
    FlightHasNoContact,
    #[error("mass matrix condition number {0:.3e} exceeds the configured bound")]
    SingularMassMatrix(f64),
    #[error("nonzero contact force on a free leg ({leg:?}) in phase {phase:?}")]
    NonzeroForceOnFreeLeg { leg: Leg, phase: JumpPhase },
    #[error("invalid model parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Leg {
    Front,
    Back,
}

impl Leg {
    pub const BOTH: [Leg; 2] = [Leg::Front, Leg::Back];

    pub fn hip_sign(self) -> f64 {
        match self {
            Leg::Front => 1.0,
            Leg::Back => -1.0,
        }
    }

    /// Indices of (hip, knee) in `q`.
    pub fn joints(self) -> (usize, usize) {
        match self {
            Leg::Front => (3, 4),
            Leg::Back => (5, 6),
        }
    }

    /// Offset of this leg's (x, z) pair in a [`ContactForces`] vector.
    pub fn force_offset(self) -> usize {
        match self {
            Leg::Front => 0,
            Leg::Back => 2,
        }
    }
}

/// The four phases of a jump, in their only legal order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum JumpPhase {
    AllFeetContact,
    RearFeetContact,
    Flight,
    Landing,
}

impl JumpPhase {
    pub const ALL: [JumpPhase; 4] = [
        JumpPhase::AllFeetContact,
        JumpPhase::RearFeetContact,
        JumpPhase::Flight,
        JumpPhase::Landing,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn in_contact(self, leg: Leg) -> bool {
        match self {
            JumpPhase::AllFeetContact | JumpPhase::Landing => true,
            JumpPhase::RearFeetContact => leg == Leg::Back,
            JumpPhase::Flight => false,
        }
    }

    pub fn contact_legs(self) -> Vec<Leg> {
        Leg::BOTH.into_iter().filter(|l| self.in_contact(*l)).collect()
    }

    pub fn next(self) -> Option<Self> {
        Self::from_index(self.index() + 1)
    }

    pub fn name(self) -> &'static str {
        match self {
            JumpPhase::AllFeetContact => "all_feet",
            JumpPhase::RearFeetContact => "rear_feet",
            JumpPhase::Flight => "flight",
            JumpPhase::Landing => "landing",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }
}

/// Physical parameters of the lumped planar model. Each planar leg carries
/// the mass and actuator authority of a physical leg pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    pub body_mass: f64,
    pub body_inertia: f64,
    pub body_half_length: f64,
    /// Upper, lower link.
    pub link_mass: [f64; 2],
    pub link_length: [f64; 2],
    /// Distance from the proximal joint to the link center of mass.
    pub link_com_offset: [f64; 2],
    pub link_inertia: [f64; 2],
    pub gravity: f64,
    /// Hip, knee (applied to both legs).
    pub joint_angle_min: [f64; 2],
    pub joint_angle_max: [f64; 2],
    pub joint_velocity_limit: f64,
    /// Bounds on base translational (m/s) and pitch (rad/s) velocities.
    pub base_velocity_limit: f64,
    /// Lumped hip, knee torque limit (symmetric).
    pub torque_limit: [f64; 2],
    pub friction_mu: f64,
    pub contact_force_z_min: f64,
    pub contact_force_z_max: f64,
    /// Largest admissible condition number of the mass matrix.
    pub max_mass_condition: f64,
}

/// Mass of the sensor suite carried in the payload configuration, kg.
pub const PAYLOAD_MASS: f64 = 2.25;

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            body_mass: 9.0,
            body_inertia: 0.1,
            body_half_length: 0.19,
            link_mass: [0.5, 0.1],
            link_length: [0.21, 0.21],
            link_com_offset: [0.05, 0.1],
            link_inertia: [0.002, 0.0004],
            gravity: 9.81,
            joint_angle_min: [-2.5, 0.2],
            joint_angle_max: [1.5, 2.8],
            joint_velocity_limit: 40.0,
            base_velocity_limit: 10.0,
            torque_limit: [34.0, 34.0],
            friction_mu: 0.5,
            contact_force_z_min: 10.0,
            contact_force_z_max: 200.0,
            max_mass_condition: 1e8,
        }
    }
}

impl ModelParams {
    /// Same robot carrying an extra payload rigidly attached at the body
    /// center of mass.
    pub fn with_payload(&self, payload_mass: f64) -> Self {
        let mut p = self.clone();
        let ratio = (p.body_mass + payload_mass) / p.body_mass;
        p.body_mass += payload_mass;
        p.body_inertia *= ratio;
        p
    }

    pub fn total_mass(&self) -> f64 {
        self.body_mass + 2.0 * (self.link_mass[0] + self.link_mass[1])
    }

    pub fn leg_length(&self) -> f64 {
        self.link_length[0] + self.link_length[1]
    }

    /// Joint angle bounds indexed like `q` (`None` for the base coordinates).
    pub fn q_bounds(&self, i: usize) -> Option<(f64, f64)> {
        match i {
            3 | 5 => Some((self.joint_angle_min[0], self.joint_angle_max[0])),
            4 | 6 => Some((self.joint_angle_min[1], self.joint_angle_max[1])),
            _ => None,
        }
    }

    pub fn qdot_limit(&self, i: usize) -> f64 {
        if i < 3 {
            self.base_velocity_limit
        } else {
            self.joint_velocity_limit
        }
    }

    /// Torque limit for input `k` (F1, F2, B1, B2).
    pub fn torque_limit_of(&self, k: usize) -> f64 {
        self.torque_limit[k % 2]
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        fn pos(field: &'static str, v: f64) -> Result<(), ModelError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ModelError::InvalidParam {
                    field,
                    reason: format!("must be strictly positive, got {v}"),
                })
            }
        }
        pos("body_mass", self.body_mass)?;
        pos("body_inertia", self.body_inertia)?;
        pos("body_half_length", self.body_half_length)?;
        for k in 0..2 {
            pos("link_mass", self.link_mass[k])?;
            pos("link_length", self.link_length[k])?;
            pos("link_inertia", self.link_inertia[k])?;
            if !(self.link_com_offset[k] >= 0.0 && self.link_com_offset[k] <= self.link_length[k]) {
                return Err(ModelError::InvalidParam {
                    field: "link_com_offset",
                    reason: "must lie within [0, link_length]".into(),
                });
            }
            if !(self.joint_angle_min[k] < self.joint_angle_max[k]) {
                return Err(ModelError::InvalidParam {
                    field: "joint_angle_min",
                    reason: "must be below joint_angle_max".into(),
                });
            }
            pos("torque_limit", self.torque_limit[k])?;
        }
        pos("gravity", self.gravity)?;
        pos("joint_velocity_limit", self.joint_velocity_limit)?;
        pos("base_velocity_limit", self.base_velocity_limit)?;
        pos("max_mass_condition", self.max_mass_condition)?;
        if !(self.friction_mu > 0.0 && self.friction_mu <= 2.0) {
            return Err(ModelError::InvalidParam {
                field: "friction_mu",
                reason: format!("must lie in (0, 2], got {}", self.friction_mu),
            });
        }
        if !(self.contact_force_z_min >= 0.0 && self.contact_force_z_min < self.contact_force_z_max) {
            return Err(ModelError::InvalidParam {
                field: "contact_force_z_min",
                reason: "need 0 <= min < contact_force_z_max".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarConfig {
    pub x: f64,
    pub z: f64,
    pub theta: f64,
    pub f1: f64,
    pub f2: f64,
    pub b1: f64,
    pub b2: f64,
}

impl PlanarConfig {
    pub fn from_array(a: [f64; NQ]) -> Self {
        Self { x: a[0], z: a[1], theta: a[2], f1: a[3], f2: a[4], b1: a[5], b2: a[6] }
    }

    pub fn to_array(&self) -> [f64; NQ] {
        [self.x, self.z, self.theta, self.f1, self.f2, self.b1, self.b2]
    }

    pub fn joints(&self) -> [f64; 4] {
        [self.f1, self.f2, self.b1, self.b2]
    }

    pub fn within_limits(&self, p: &ModelParams) -> bool {
        let a = self.to_array();
        (3..NQ).all(|i| {
            let (lo, hi) = p.q_bounds(i).unwrap();
            a[i] >= lo && a[i] <= hi
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanarState {
    pub q: PlanarConfig,
    pub qdot: [f64; NQ],
}

impl PlanarState {
    pub fn from_vec(x: &[f64]) -> Self {
        assert_eq!(x.len(), NX, "planar state has exactly 14 entries");
        let mut q = [0.0; NQ];
        let mut qd = [0.0; NQ];
        q.copy_from_slice(&x[..NQ]);
        qd.copy_from_slice(&x[NQ..]);
        Self { q: PlanarConfig::from_array(q), qdot: qd }
    }

    pub fn to_vec(&self) -> [f64; NX] {
        let mut x = [0.0; NX];
        x[..NQ].copy_from_slice(&self.q.to_array());
        x[NQ..].copy_from_slice(&self.qdot);
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    pub tau: [f64; NU],
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContactForces {
    /// `[T_Fx, T_Fz, T_Bx, T_Bz]`
    pub t: [f64; 4],
}

impl ContactForces {
    pub fn leg(&self, leg: Leg) -> [f64; 2] {
        let o = leg.force_offset();
        [self.t[o], self.t[o + 1]]
    }
}

/// Hip, knee and foot positions of both legs in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyPoints {
    pub hip_front: Vector2<f64>,
    pub knee_front: Vector2<f64>,
    pub foot_front: Vector2<f64>,
    pub hip_back: Vector2<f64>,
    pub knee_back: Vector2<f64>,
    pub foot_back: Vector2<f64>,
}

impl KeyPoints {
    pub fn as_array(&self) -> [Vector2<f64>; 6] {
        [
            self.hip_front,
            self.knee_front,
            self.foot_front,
            self.hip_back,
            self.knee_back,
            self.foot_back,
        ]
    }

    pub fn foot(&self, leg: Leg) -> Vector2<f64> {
        match leg {
            Leg::Front => self.foot_front,
            Leg::Back => self.foot_back,
        }
    }
}

// ---------------------------------------------------------------------------
// Generic kinematics
// ---------------------------------------------------------------------------

/// A point fixed on one of the bodies, with its Jacobian and the velocity
/// product term `J̇ q̇`.
#[derive(Clone, Copy, Debug)]
pub struct PointKin<S> {
    pub p: [S; 2],
    pub jac: [[S; NQ]; 2],
    pub bias: [S; 2],
}

impl<S: Scalar> PointKin<S> {
    fn base(q: &[S; NQ]) -> Self {
        let z = S::zero();
        let mut jac = [[z; NQ]; 2];
        jac[0][IX] = S::cst(1.0);
        jac[1][IZ] = S::cst(1.0);
        Self { p: [q[IX], q[IZ]], jac, bias: [z, z] }
    }

    /// Adds `r · u(φ)` where `φ = Σ_{j∈mask} q_j` and
    /// `u(φ) = (cos(φ+off), sin(φ+off))`.
    fn push(&mut self, r: f64, q: &[S; NQ], qd: &[S; NQ], mask: &[usize], off: f64) {
        let mut phi = S::cst(off);
        let mut phid = S::zero();
        for &j in mask {
            phi += q[j];
            phid += qd[j];
        }
        let (s, c) = (phi.sin(), phi.cos());
        self.p[0] += c * r;
        self.p[1] += s * r;
        for &j in mask {
            self.jac[0][j] -= s * r;
            self.jac[1][j] += c * r;
        }
        let w2 = phid * phid;
        self.bias[0] -= c * w2 * r;
        self.bias[1] -= s * w2 * r;
    }
}

const DOWN: f64 = -std::f64::consts::FRAC_PI_2;

#[derive(Clone, Copy, Debug)]
pub struct LegKin<S> {
    pub hip: PointKin<S>,
    pub knee: PointKin<S>,
    pub foot: PointKin<S>,
    pub upper_com: PointKin<S>,
    pub lower_com: PointKin<S>,
}

pub fn leg_kinematics<S: Scalar>(p: &ModelParams, leg: Leg, q: &[S; NQ], qd: &[S; NQ]) -> LegKin<S> {
    let (j1, j2) = leg.joints();
    let mut hip = PointKin::base(q);
    hip.push(leg.hip_sign() * p.body_half_length, q, qd, &[ITHETA], 0.0);
    let thigh = [ITHETA, j1];
    let shank = [ITHETA, j1, j2];
    let mut upper_com = hip;
    upper_com.push(p.link_com_offset[0], q, qd, &thigh, DOWN);
    let mut knee = hip;
    knee.push(p.link_length[0], q, qd, &thigh, DOWN);
    let mut lower_com = knee;
    lower_com.push(p.link_com_offset[1], q, qd, &shank, DOWN);
    let mut foot = knee;
    foot.push(p.link_length[1], q, qd, &shank, DOWN);
    LegKin { hip, knee, foot, upper_com, lower_com }
}

/// Foot position only (cheaper than the full leg kinematics).
pub fn foot_position<S: Scalar>(p: &ModelParams, leg: Leg, q: &[S]) -> [S; 2] {
    let (j1, j2) = leg.joints();
    let th = q[ITHETA];
    let a1 = th + q[j1] + DOWN;
    let a2 = a1 + q[j2];
    let s = leg.hip_sign() * p.body_half_length;
    [
        q[IX] + th.cos() * s + a1.cos() * p.link_length[0] + a2.cos() * p.link_length[1],
        q[IZ] + th.sin() * s + a1.sin() * p.link_length[0] + a2.sin() * p.link_length[1],
    ]
}

/// The six key points `[hipF, kneeF, footF, hipB, kneeB, footB]`.
pub fn key_points_generic<S: Scalar>(p: &ModelParams, q: &[S]) -> [[S; 2]; 6] {
    let th = q[ITHETA];
    let mut out = [[S::zero(); 2]; 6];
    for (k, leg) in Leg::BOTH.into_iter().enumerate() {
        let (j1, j2) = leg.joints();
        let s = leg.hip_sign() * p.body_half_length;
        let hip = [q[IX] + th.cos() * s, q[IZ] + th.sin() * s];
        let a1 = th + q[j1] + DOWN;
        let knee = [hip[0] + a1.cos() * p.link_length[0], hip[1] + a1.sin() * p.link_length[0]];
        let a2 = a1 + q[j2];
        let foot = [knee[0] + a2.cos() * p.link_length[1], knee[1] + a2.sin() * p.link_length[1]];
        out[3 * k] = hip;
        out[3 * k + 1] = knee;
        out[3 * k + 2] = foot;
    }
    out
}

struct Body<S> {
    mass: f64,
    inertia: f64,
    com: PointKin<S>,
    /// Indices whose sum is the body angle.
    angle_mask: &'static [usize],
}

fn bodies<S: Scalar>(p: &ModelParams, q: &[S; NQ], qd: &[S; NQ]) -> [Body<S>; 5] {
    let f = leg_kinematics(p, Leg::Front, q, qd);
    let b = leg_kinematics(p, Leg::Back, q, qd);
    let (m1, m2, i1, i2) = (p.link_mass[0], p.link_mass[1], p.link_inertia[0], p.link_inertia[1]);
    [
        Body { mass: p.body_mass, inertia: p.body_inertia, com: PointKin::base(q), angle_mask: &[ITHETA] },
        Body { mass: m1, inertia: i1, com: f.upper_com, angle_mask: &[2, 3] },
        Body { mass: m2, inertia: i2, com: f.lower_com, angle_mask: &[2, 3, 4] },
        Body { mass: m1, inertia: i1, com: b.upper_com, angle_mask: &[2, 5] },
        Body { mass: m2, inertia: i2, com: b.lower_com, angle_mask: &[2, 5, 6] },
    ]
}

/// Mass matrix `D(q)` and the bias vector `C(q,q̇)q̇ + G(q)`.
pub fn mass_and_bias<S: Scalar>(p: &ModelParams, q: &[S; NQ], qd: &[S; NQ]) -> ([[S; NQ]; NQ], [S; NQ]) {
    let z = S::zero();
    let mut d = [[z; NQ]; NQ];
    let mut h = [z; NQ];
    for b in bodies(p, q, qd) {
        let jac = &b.com.jac;
        // translational part: m Jᵀ J, m Jᵀ (J̇q̇ + g ẑ)
        let fx = b.com.bias[0] * b.mass;
        let fz = (b.com.bias[1] + p.gravity) * b.mass;
        for i in 0..NQ {
            let (ji0, ji1) = (jac[0][i], jac[1][i]);
            h[i] += ji0 * fx + ji1 * fz;
            for j in 0..=i {
                d[i][j] += (ji0 * jac[0][j] + ji1 * jac[1][j]) * b.mass;
            }
        }
        // rotational part: the angle Jacobian is a constant 0/1 row
        for &i in b.angle_mask {
            for &j in b.angle_mask {
                if j <= i {
                    d[i][j] += S::cst(b.inertia);
                }
            }
        }
    }
    for i in 0..NQ {
        for j in 0..i {
            d[j][i] = d[i][j];
        }
    }
    (d, h)
}

/// Solves `A x = b` for symmetric positive definite `A` by Cholesky.
pub fn spd_solve<S: Scalar, const N: usize>(a: &[[S; N]; N], b: &[S; N]) -> [S; N] {
    let mut l = [[S::zero(); N]; N];
    for i in 0..N {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = *b;
    for i in 0..N {
        for k in 0..i {
            let t = l[i][k] * y[k];
            y[i] -= t;
        }
        y[i] = y[i] / l[i][i];
    }
    for i in (0..N).rev() {
        for k in i + 1..N {
            let t = l[k][i] * y[k];
            y[i] -= t;
        }
        y[i] = y[i] / l[i][i];
    }
    y
}

/// `q̈ = D⁻¹(B u + J_Fᵀ T_F + J_Bᵀ T_B − C q̇ − G)` for arbitrary forces.
pub fn forward_dynamics_generic<S: Scalar>(
    p: &ModelParams,
    q: &[S; NQ],
    qd: &[S; NQ],
    u: &[S; NU],
    t: &[S; 4],
) -> [S; NQ] {
    let (d, h) = mass_and_bias(p, q, qd);
    let mut rhs = [S::zero(); NQ];
    for i in 0..NQ {
        rhs[i] = -h[i];
    }
    for k in 0..NU {
        rhs[3 + k] += u[k];
    }
    for leg in Leg::BOTH {
        let o = leg.force_offset();
        let jac = foot_jacobian(p, leg, q);
        for i in 0..NQ {
            rhs[i] += jac[0][i] * t[o] + jac[1][i] * t[o + 1];
        }
    }
    spd_solve(&d, &rhs)
}

/// Manipulator-equation residual `D q̈ + C q̇ + G − B u − J_Fᵀ T_F − J_Bᵀ T_B`.
pub fn inverse_dynamics_residual<S: Scalar>(
    p: &ModelParams,
    q: &[S; NQ],
    qd: &[S; NQ],
    qdd: &[S; NQ],
    u: &[S; NU],
    t: &[S; 4],
) -> [S; NQ] {
    let (d, h) = mass_and_bias(p, q, qd);
    let mut r = h;
    for i in 0..NQ {
        for j in 0..NQ {
            r[i] += d[i][j] * qdd[j];
        }
    }
    for k in 0..NU {
        r[3 + k] -= u[k];
    }
    for leg in Leg::BOTH {
        let o = leg.force_offset();
        let jac = foot_jacobian(p, leg, q);
        for i in 0..NQ {
            r[i] -= jac[0][i] * t[o] + jac[1][i] * t[o + 1];
        }
    }
    r
}

/// Jacobian of a foot position (2 × 7).
pub fn foot_jacobian<S: Scalar>(p: &ModelParams, leg: Leg, q: &[S; NQ]) -> [[S; NQ]; 2] {
    let (j1, j2) = leg.joints();
    let th = q[ITHETA];
    let s = leg.hip_sign() * p.body_half_length;
    let a1 = th + q[j1] + DOWN;
    let a2 = a1 + q[j2];
    let (l1, l2) = (p.link_length[0], p.link_length[1]);
    let z = S::zero();
    let mut jac = [[z; NQ]; 2];
    jac[0][IX] = S::cst(1.0);
    jac[1][IZ] = S::cst(1.0);
    let d2 = [-(a2.sin() * l2), a2.cos() * l2];
    let d1 = [d2[0] - a1.sin() * l1, d2[1] + a1.cos() * l1];
    for r in 0..2 {
        jac[r][ITHETA] = d1[r] + if r == 0 { -(th.sin() * s) } else { th.cos() * s };
        jac[r][j1] = d1[r];
        jac[r][j2] = d2[r];
    }
    jac
}

/// Foot velocity `J(q) q̇`.
pub fn foot_velocity<S: Scalar>(p: &ModelParams, leg: Leg, q: &[S; NQ], qd: &[S; NQ]) -> [S; 2] {
    let jac = foot_jacobian(p, leg, q);
    let mut v = [S::zero(); 2];
    for r in 0..2 {
        for i in 0..NQ {
            v[r] += jac[r][i] * qd[i];
        }
    }
    v
}

/// Position of the whole-robot center of mass.
pub fn center_of_mass<S: Scalar>(p: &ModelParams, q: &[S; NQ]) -> [S; 2] {
    let qd = [S::zero(); NQ];
    let mut c = [S::zero(); 2];
    for b in bodies(p, q, &qd) {
        c[0] += b.com.p[0] * b.mass;
        c[1] += b.com.p[1] * b.mass;
    }
    let m = p.total_mass();
    [c[0] / m, c[1] / m]
}

// ---------------------------------------------------------------------------
// Public f64 API
// ---------------------------------------------------------------------------

fn v2(p: [f64; 2]) -> Vector2<f64> {
    Vector2::new(p[0], p[1])
}

/// Hip, knee and foot positions of both legs.
pub fn forward_kinematics(q: &PlanarConfig, params: &ModelParams) -> KeyPoints {
    let k = key_points_generic(params, &q.to_array());
    KeyPoints {
        hip_front: v2(k[0]),
        knee_front: v2(k[1]),
        foot_front: v2(k[2]),
        hip_back: v2(k[3]),
        knee_back: v2(k[4]),
        foot_back: v2(k[5]),
    }
}

/// Stacked foot Jacobians of the legs in contact during `phase`, rows
/// `[x, z]` per contacting foot (front before back).
pub fn contact_jacobian(q: &PlanarConfig, params: &ModelParams, phase: JumpPhase) -> Result<DMatrix<f64>, ModelError> {
    let legs = phase.contact_legs();
    if legs.is_empty() {
        return Err(ModelError::FlightHasNoContact);
    }
    let qa = q.to_array();
    let mut j = DMatrix::zeros(2 * legs.len(), NQ);
    for (k, leg) in legs.into_iter().enumerate() {
        let fj = foot_jacobian(params, leg, &qa);
        for r in 0..2 {
            for c in 0..NQ {
                j[(2 * k + r, c)] = fj[r][c];
            }
        }
    }
    Ok(j)
}

/// `D`, `C`, `G`, `B` of `D q̈ + C q̇ + G = B u + Jᵀ T`.
#[derive(Debug, Clone)]
pub struct DynamicsTerms {
    pub d: Mat7,
    pub c: Mat7,
    pub g: Vec7,
    pub b: SMatrix<f64, 7, 4>,
}

pub fn input_matrix() -> SMatrix<f64, 7, 4> {
    let mut b = SMatrix::<f64, 7, 4>::zeros();
    for k in 0..NU {
        b[(3 + k, k)] = 1.0;
    }
    b
}

pub fn mass_matrix(q: &PlanarConfig, params: &ModelParams) -> Mat7 {
    let qa = q.to_array();
    let (d, _) = mass_and_bias(params, &qa, &[0.0; NQ]);
    Mat7::from_fn(|i, j| d[i][j])
}

pub fn gravity_vector(q: &PlanarConfig, params: &ModelParams) -> Vec7 {
    let (_, h) = mass_and_bias(params, &q.to_array(), &[0.0; NQ]);
    Vec7::from_column_slice(&h)
}

/// `∂D/∂q_k` for every `k`, by forward-mode differentiation of `D`.
pub fn mass_matrix_partials(q: &PlanarConfig, params: &ModelParams) -> [Mat7; NQ] {
    let qa = q.to_array();
    let zero = [Dual::new(0.0, 0.0); NQ];
    std::array::from_fn(|k| {
        let mut qd: [Dual<f64>; NQ] = std::array::from_fn(|i| Dual::new(qa[i], 0.0));
        qd[k].eps = 1.0;
        let (d, _) = mass_and_bias(params, &qd, &zero);
        Mat7::from_fn(|i, j| d[i][j].eps)
    })
}

fn check_condition(d: &Mat7, params: &ModelParams) -> Result<(), ModelError> {
    let eig = d.symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e.abs())));
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if cond > params.max_mass_condition {
        return Err(ModelError::SingularMassMatrix(cond));
    }
    Ok(())
}

pub fn dynamics_terms(state: &PlanarState, params: &ModelParams) -> Result<DynamicsTerms, ModelError> {
    let d = mass_matrix(&state.q, params);
    check_condition(&d, params)?;
    let partials = mass_matrix_partials(&state.q, params);
    let qd = state.qdot;
    // Christoffel symbols of the first kind
    let c = Mat7::from_fn(|i, j| {
        (0..NQ)
            .map(|k| 0.5 * (partials[k][(i, j)] + partials[j][(i, k)] - partials[i][(j, k)]) * qd[k])
            .sum()
    });
    Ok(DynamicsTerms { d, c, g: gravity_vector(&state.q, params), b: input_matrix() })
}

/// `ẋ = [q̇; q̈]` under the given inputs and contact forces.
pub fn phase_dynamics(
    state: &PlanarState,
    u: &ControlInput,
    t: &ContactForces,
    phase: JumpPhase,
    params: &ModelParams,
) -> Result<[f64; NX], ModelError> {
    for leg in Leg::BOTH {
        if !phase.in_contact(leg) && t.leg(leg).iter().any(|&f| f != 0.0) {
            return Err(ModelError::NonzeroForceOnFreeLeg { leg, phase });
        }
    }
    check_condition(&mass_matrix(&state.q, params), params)?;
    let qdd = forward_dynamics_generic(params, &state.q.to_array(), &state.qdot, &u.tau, &t.t);
    let mut xd = [0.0; NX];
    xd[..NQ].copy_from_slice(&state.qdot);
    xd[NQ..].copy_from_slice(&qdd);
    Ok(xd)
}

pub fn kinetic_energy(state: &PlanarState, params: &ModelParams) -> f64 {
    let d = mass_matrix(&state.q, params);
    let v = Vec7::from_column_slice(&state.qdot);
    0.5 * v.dot(&(d * v))
}

pub fn potential_energy(q: &PlanarConfig, params: &ModelParams) -> f64 {
    let c = center_of_mass(params, &q.to_array());
    params.total_mass() * params.gravity * c[1]
}

/// Configuration with the given joint angles, zero pitch, and the lower foot
/// resting at `z = 0`, base at `x`.
pub fn standing_config(params: &ModelParams, x: f64, hip: f64, knee: f64) -> PlanarConfig {
    let mut q = PlanarConfig { x, z: 0.0, theta: 0.0, f1: hip, f2: knee, b1: hip, b2: knee };
    let kp = forward_kinematics(&q, params);
    q.z = -kp.foot_front.y.min(kp.foot_back.y);
    q
}

/// Inputs and vertical contact forces holding `q` at rest with both feet on
/// the ground (horizontal forces zero).
pub fn static_equilibrium(q: &PlanarConfig, params: &ModelParams) -> Result<(ControlInput, ContactForces), ModelError> {
    let g = gravity_vector(q, params);
    let qa = q.to_array();
    let jf = foot_jacobian(params, Leg::Front, &qa);
    let jb = foot_jacobian(params, Leg::Back, &qa);
    // unknowns [u1..u4, T_Fz, T_Bz]; equations rows z, θ, joints
    let rows = [IZ, ITHETA, 3, 4, 5, 6];
    let a = SMatrix::<f64, 6, 6>::from_fn(|r, c| {
        let i = rows[r];
        match c {
            0..=3 => {
                if i == 3 + c {
                    1.0
                } else {
                    0.0
                }
            }
            4 => jf[1][i],
            _ => jb[1][i],
        }
    });
    let rhs = SVector::<f64, 6>::from_fn(|r, _| g[rows[r]]);
    let sol = a.lu().solve(&rhs).ok_or(ModelError::SingularMassMatrix(f64::INFINITY))?;
    Ok((
        ControlInput { tau: [sol[0], sol[1], sol[2], sol[3]] },
        ContactForces { t: [0.0, sol[4], 0.0, sol[5]] },
    ))
}
