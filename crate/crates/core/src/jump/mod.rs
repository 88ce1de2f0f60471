//! Multi-phase trapezoidal collocation for window jumps.
//!
//! The jump is split into all-feet contact, rear-feet contact, flight and
//! landing. Every node carries `q, q̇, q̈, u, T`; phase durations are decision
//! variables. Nodes near and during flight also carry a bounding box
//! `(w, h, γ)` and one dual pair `(λ, μ)` per window part.

pub mod blocks;
pub mod config;
mod guess;
pub use guess::initial_trajectory;
pub mod io;

use std::time::Instant;

use nalgebra::{Matrix4, SMatrix, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collision::{BoundingBox, ConvexRegion, DualAvoidance, DualVariables, WindowObstacle};
use crate::model::{
    self, ContactForces, ControlInput, JumpPhase, Leg, ModelError, ModelParams, PlanarConfig, PlanarState, NQ, NX,
};
use crate::nlp::{Linear, Nlp, NlpError, SolveOptions, SolveStatus, GLOBAL_STAGE};

use blocks::{Defect, Dynamics, FootCoord, FootVelocity, KeypointBox, NodeDual, QuadForm};

pub type Mat7 = SMatrix<f64, 7, 7>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JumpError {
    #[error("inconsistent problem: {0}")]
    InconsistentProblem(String),
    #[error("no feasible jump: {reason}")]
    Infeasible { reason: String, violation: f64 },
    #[error("solver hit its iteration limit after {iterations} iterations (violation {violation:.3e})")]
    MaxIterations { iterations: usize, violation: f64 },
    #[error("solver time limit reached")]
    TimeLimit,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<NlpError> for JumpError {
    fn from(e: NlpError) -> Self {
        match e {
            NlpError::Infeasible { violation, worst, iterations } => JumpError::Infeasible {
                reason: format!("largest violation {violation:.3e} at {worst} after {iterations} iterations"),
                violation,
            },
            NlpError::MaxIterations { iterations, violation, .. } => JumpError::MaxIterations { iterations, violation },
            NlpError::TimeLimit { .. } => JumpError::TimeLimit,
            NlpError::Numerical(s) => JumpError::Numerical(s),
        }
    }
}

/// Interval counts and duration bounds of the four phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseGrid {
    pub intervals: [usize; 4],
    pub duration_min: [f64; 4],
    pub duration_max: [f64; 4],
    pub duration_guess: [f64; 4],
}

impl Default for PhaseGrid {
    fn default() -> Self {
        Self {
            intervals: [15, 15, 25, 10],
            duration_min: [0.1, 0.1, 0.1, 0.5],
            duration_max: [0.8, 0.3, 0.8, 0.5],
            duration_guess: [0.3, 0.25, 0.35, 0.5],
        }
    }
}

impl PhaseGrid {
    pub fn total_intervals(&self) -> usize {
        self.intervals.iter().sum()
    }

    pub fn n_nodes(&self) -> usize {
        self.total_intervals() + 1
    }

    /// Index of the first node of phase `i`.
    pub fn phase_start(&self, i: usize) -> usize {
        self.intervals[..i].iter().sum()
    }

    /// Phase whose dynamics and contact set apply at node `k`. A boundary
    /// node belongs to the phase it starts; the last node to landing.
    pub fn phase_of_node(&self, k: usize) -> JumpPhase {
        let mut acc = 0;
        for (i, &n) in self.intervals.iter().enumerate() {
            acc += n;
            if k < acc {
                return JumpPhase::ALL[i];
            }
        }
        JumpPhase::Landing
    }

    /// Phase of the interval from node `k` to `k + 1`.
    pub fn phase_of_interval(&self, k: usize) -> usize {
        self.phase_of_node(k).index()
    }

    pub fn node_times(&self, durations: &[f64; 4]) -> Vec<f64> {
        let mut t = Vec::with_capacity(self.n_nodes());
        let mut acc = 0.0;
        for i in 0..4 {
            let h = durations[i] / self.intervals[i] as f64;
            for j in 0..self.intervals[i] {
                t.push(acc + h * j as f64);
            }
            acc += durations[i];
        }
        t.push(acc);
        t
    }

    pub fn validate(&self) -> Result<(), JumpError> {
        for i in 0..4 {
            if self.intervals[i] < 2 {
                return Err(JumpError::InconsistentProblem(format!("phase {} needs at least 2 intervals", i + 1)));
            }
            if !(self.duration_min[i] > 0.0 && self.duration_min[i] <= self.duration_max[i]) {
                return Err(JumpError::InconsistentProblem(format!("bad duration bounds for phase {}", i + 1)));
            }
        }
        Ok(())
    }
}

/// Weights of the jump cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    /// Terminal configuration error.
    pub terminal: Mat7,
    pub qdot: Mat7,
    pub qddot: Mat7,
    pub force: Matrix4<f64>,
    pub input: Matrix4<f64>,
    /// Per-second cost of the first two phases.
    pub time: [f64; 2],
    pub delta: f64,
    pub box_size: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            terminal: Mat7::from_diagonal(&SMatrix::<f64, 7, 1>::from_column_slice(&[
                0.0, 100.0, 100.0, 10.0, 10.0, 10.0, 10.0,
            ])),
            qdot: Mat7::identity() * 1e-3,
            qddot: Mat7::identity() * 1e-6,
            force: Matrix4::identity() * 1e-6,
            input: Matrix4::identity() * 1e-4,
            time: [5.0, 5.0],
            delta: 100.0,
            box_size: 1e-2,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<(), JumpError> {
        let psd7 = |m: &Mat7| (m - m.transpose()).abs().max() <= 1e-12 && m.symmetric_eigenvalues().min() >= -1e-12;
        let psd4 =
            |m: &Matrix4<f64>| (m - m.transpose()).abs().max() <= 1e-12 && m.symmetric_eigenvalues().min() >= -1e-12;
        if !(psd7(&self.terminal) && psd7(&self.qdot) && psd7(&self.qddot) && psd4(&self.force) && psd4(&self.input)) {
            return Err(JumpError::InconsistentProblem("cost matrices must be symmetric PSD".into()));
        }
        if !(self.time.iter().all(|&v| v > 0.0) && self.delta > 0.0 && self.box_size > 0.0) {
            return Err(JumpError::InconsistentProblem("scalar cost weights must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpProblem {
    pub params: ModelParams,
    pub grid: PhaseGrid,
    pub weights: CostWeights,
    pub x0: PlanarState,
    /// Standing configuration the landing should return to.
    pub q_ref: PlanarConfig,
    pub obstacle: WindowObstacle,
    pub d_min: f64,
    pub landing_mu_scale: f64,
    /// Rear-contact nodes before take-off that carry avoidance constraints.
    pub avoid_before: usize,
    /// Landing nodes after touchdown that carry avoidance constraints.
    pub avoid_after: usize,
    pub delta_max: f64,
    /// Require the final node to be at rest.
    pub terminal_rest: bool,
}

/// Hip and knee angles of the default standing pose.
pub const STAND_HIP: f64 = -0.8;
pub const STAND_KNEE: f64 = 1.6;

impl JumpProblem {
    /// Standing start at `x = 0` facing a window at `x_obs`.
    pub fn standing(params: ModelParams, obstacle: WindowObstacle, d_min: f64) -> Self {
        let q = model::standing_config(&params, 0.0, STAND_HIP, STAND_KNEE);
        Self {
            params,
            grid: PhaseGrid::default(),
            weights: CostWeights::default(),
            x0: PlanarState { q, qdot: [0.0; NQ] },
            q_ref: q,
            obstacle,
            d_min,
            landing_mu_scale: 0.6,
            avoid_before: 3,
            avoid_after: 3,
            delta_max: 0.05,
            terminal_rest: true,
        }
    }

    pub fn validate(&self) -> Result<(), JumpError> {
        self.params.validate()?;
        self.grid.validate()?;
        self.weights.validate()?;
        if !self.x0.q.within_limits(&self.params) {
            return Err(JumpError::InconsistentProblem("initial state violates joint limits".into()));
        }
        if self.x0.qdot.iter().any(|v| *v != 0.0) {
            return Err(JumpError::InconsistentProblem("initial state must be at rest".into()));
        }
        let kp = model::forward_kinematics(&self.x0.q, &self.params);
        if kp.foot_front.y.abs() > 1e-6 || kp.foot_back.y.abs() > 1e-6 {
            return Err(JumpError::InconsistentProblem("initial feet must rest on the ground".into()));
        }
        let (u, t) = model::static_equilibrium(&self.x0.q, &self.params)?;
        if t.t[1] < 0.0 || t.t[3] < 0.0 {
            return Err(JumpError::InconsistentProblem("initial stance needs a pulling contact force".into()));
        }
        if (0..4).any(|k| u.tau[k].abs() > self.params.torque_limit_of(k)) {
            return Err(JumpError::InconsistentProblem("initial stance exceeds torque limits".into()));
        }
        if !(self.d_min >= 0.0) {
            return Err(JumpError::InconsistentProblem("d_min must be nonnegative".into()));
        }
        if !(self.landing_mu_scale > 0.0 && self.landing_mu_scale <= 1.0) {
            return Err(JumpError::InconsistentProblem("landing_mu_scale must lie in (0, 1]".into()));
        }
        if self.obstacle.x_obs <= self.x0.q.x {
            return Err(JumpError::InconsistentProblem("obstacle must lie ahead of the start".into()));
        }
        let start = self.params.body_half_length + 0.0;
        let (lo, _) = self.obstacle.lower.extent();
        if self.x0.q.x + start >= lo.x {
            return Err(JumpError::InconsistentProblem("robot starts inside the obstacle".into()));
        }
        Ok(())
    }

    /// Nodes that carry avoidance constraints.
    pub fn avoidance_nodes(&self) -> Vec<usize> {
        let s3 = self.grid.phase_start(2);
        let s4 = self.grid.phase_start(3);
        let lo = s3.saturating_sub(self.avoid_before).max(self.grid.phase_start(1));
        let hi = (s4 + self.avoid_after).min(self.grid.n_nodes());
        (lo..hi).collect()
    }

    /// Coarse upper bound on the apex of the center of mass. The stance
    /// rise is taken as monotone and pushed with the largest total vertical
    /// force; the take-off height is the highest center of mass with the back
    /// foot on the ground.
    pub fn apex_bound(&self) -> f64 {
        let p = &self.params;
        let (m, g) = (p.total_mass(), p.gravity);
        let l = p.leg_length();
        let front_hip = l + 2.0 * p.body_half_length;
        let z_top = (p.body_mass * (l + p.body_half_length)
            + p.link_mass[0] * (front_hip + p.link_com_offset[0])
            + p.link_mass[1] * (front_hip + p.link_length[0] + p.link_com_offset[1])
            + (p.link_mass[0] + p.link_mass[1]) * l)
            / m;
        let z0 = model::center_of_mass(p, &self.x0.q.to_array())[1];
        let net = (2.0 * p.contact_force_z_max - m * g).max(0.0);
        z_top + net * (z_top - z0).max(0.0) / (m * g)
    }

    /// Smallest foot x at touchdown: past the far face of the sill.
    pub fn landing_x(&self) -> f64 {
        self.obstacle.lower.extent().1.x + self.d_min
    }

    /// Lowest center-of-mass height at which every key point clears the
    /// sill by `d_min`.
    pub fn required_apex(&self) -> f64 {
        self.obstacle.sill_height() + self.d_min
    }
}

/// Box and dual variables of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeBox {
    pub width: f64,
    pub height: f64,
    pub gamma: Option<[[f64; 4]; 6]>,
    pub duals: Option<[DualVariables; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajNode {
    pub t: f64,
    pub phase: JumpPhase,
    pub state: PlanarState,
    pub xdot: [f64; NX],
    pub u: ControlInput,
    pub forces: ContactForces,
    pub bbox: Option<NodeBox>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolverReport {
    pub objective: f64,
    pub max_violation: f64,
    pub iterations: usize,
    pub status: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpTrajectory {
    pub nodes: Vec<TrajNode>,
    pub durations: [f64; 4],
    pub delta: f64,
    pub report: SolverReport,
}

impl JumpTrajectory {
    pub fn duration(&self) -> f64 {
        self.durations.iter().sum()
    }

    /// Start times of phases 2–4 and the end time.
    pub fn phase_boundaries(&self) -> [f64; 4] {
        let d = self.durations;
        [d[0], d[0] + d[1], d[0] + d[1] + d[2], d[0] + d[1] + d[2] + d[3]]
    }

    pub fn final_state(&self) -> &PlanarState {
        &self.nodes.last().expect("trajectory has nodes").state
    }

    /// Bounding box of node `k` (center from key points, pitch from `q_θ`).
    pub fn node_box(&self, k: usize, params: &ModelParams) -> Option<BoundingBox> {
        let n = &self.nodes[k];
        let b = n.bbox.as_ref()?;
        Some(node_box(&n.state.q, params, b.width, b.height))
    }

    /// Oracle clearance of every node that carries a box.
    pub fn certificate(&self, params: &ModelParams, obstacle: &WindowObstacle) -> Vec<(usize, f64)> {
        (0..self.nodes.len())
            .filter_map(|k| self.node_box(k, params).map(|b| (k, obstacle.clearance(&b))))
            .collect()
    }

    pub fn min_clearance(&self, params: &ModelParams, obstacle: &WindowObstacle) -> f64 {
        self.certificate(params, obstacle).iter().map(|c| c.1).fold(f64::INFINITY, f64::min)
    }
}

pub fn node_box(q: &PlanarConfig, params: &ModelParams, width: f64, height: f64) -> BoundingBox {
    let kp = model::forward_kinematics(q, params).as_array();
    let center = kp.iter().fold(Vector2::zeros(), |a, p| a + p) / 6.0;
    BoundingBox { center, pitch: q.theta, width, height }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub max_wall_seconds: f64,
    pub verbose: bool,
    /// Number of perturbed starts (1 = the deterministic guess only).
    pub multi_start: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { max_iter: 1500, tol: 1e-8, max_wall_seconds: 300.0, verbose: false, multi_start: 1, seed: 0 }
    }
}

// ---------------------------------------------------------------------------
// Decision vector layout
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BoxVars {
    pub w: usize,
    pub h: usize,
    pub gamma: [usize; 24],
    pub lambda: [[usize; 4]; 2],
    pub mu: [[usize; 4]; 2],
}

#[derive(Debug, Clone)]
pub struct NodeVars {
    pub q: [usize; 7],
    pub v: [usize; 7],
    pub a: [usize; 7],
    pub u: [usize; 4],
    pub t: [usize; 4],
    pub bbox: Option<BoxVars>,
}

#[derive(Debug, Clone)]
pub struct Layout {
    pub nodes: Vec<NodeVars>,
    pub durations: [usize; 4],
    pub delta: usize,
    pub n_vars: usize,
}

impl Layout {
    /// Writes trajectory values into a decision vector.
    pub fn pack(&self, traj: &JumpTrajectory, x: &mut [f64]) {
        for (nv, node) in self.nodes.iter().zip(&traj.nodes) {
            let q = node.state.q.to_array();
            for i in 0..NQ {
                x[nv.q[i]] = q[i];
                x[nv.v[i]] = node.state.qdot[i];
                x[nv.a[i]] = node.xdot[NQ + i];
            }
            for k in 0..4 {
                x[nv.u[k]] = node.u.tau[k];
                x[nv.t[k]] = node.forces.t[k];
            }
            if let (Some(bv), Some(b)) = (&nv.bbox, &node.bbox) {
                x[bv.w] = b.width;
                x[bv.h] = b.height;
                if let Some(g) = &b.gamma {
                    for i in 0..6 {
                        for j in 0..4 {
                            x[bv.gamma[4 * i + j]] = g[i][j];
                        }
                    }
                }
                if let Some(d) = &b.duals {
                    for part in 0..2 {
                        for j in 0..4 {
                            x[bv.lambda[part][j]] = d[part].lambda[j];
                            x[bv.mu[part][j]] = d[part].mu[j];
                        }
                    }
                }
            }
        }
        for i in 0..4 {
            x[self.durations[i]] = traj.durations[i];
        }
        x[self.delta] = traj.delta;
    }

    pub fn unpack(&self, x: &[f64], grid: &PhaseGrid) -> JumpTrajectory {
        let durations: [f64; 4] = std::array::from_fn(|i| x[self.durations[i]]);
        let times = grid.node_times(&durations);
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .map(|(k, nv)| {
                let q = PlanarConfig::from_array(nv.q.map(|i| x[i]));
                let qdot = nv.v.map(|i| x[i]);
                let mut xdot = [0.0; NX];
                for i in 0..NQ {
                    xdot[i] = qdot[i];
                    xdot[NQ + i] = x[nv.a[i]];
                }
                let bbox = nv.bbox.as_ref().map(|bv| NodeBox {
                    width: x[bv.w],
                    height: x[bv.h],
                    gamma: Some(std::array::from_fn(|i| std::array::from_fn(|j| x[bv.gamma[4 * i + j]]))),
                    duals: Some(std::array::from_fn(|p| DualVariables {
                        lambda: bv.lambda[p].map(|i| x[i]),
                        mu: bv.mu[p].map(|i| x[i]),
                    })),
                });
                TrajNode {
                    t: times[k],
                    phase: grid.phase_of_node(k),
                    state: PlanarState { q, qdot },
                    xdot,
                    u: ControlInput { tau: nv.u.map(|i| x[i]) },
                    forces: ContactForces { t: nv.t.map(|i| x[i]) },
                    bbox,
                }
            })
            .collect();
        JumpTrajectory { nodes, durations, delta: x[self.delta], report: SolverReport::default() }
    }
}

/// The transcribed problem.
pub struct Assembled {
    pub nlp: Nlp,
    pub layout: Layout,
}

const INF: f64 = f64::INFINITY;

fn stage_key(k: usize, group: u64) -> u64 {
    (k as u64) * 4 + group
}

/// Builds the collocation NLP of a jump problem.
pub fn assemble(problem: &JumpProblem) -> Result<Assembled, JumpError> {
    problem.validate()?;
    let p = &problem.params;
    let grid = &problem.grid;
    let w = &problem.weights;
    let n_nodes = grid.n_nodes();
    let avoid = problem.avoidance_nodes();
    let s4 = grid.phase_start(3);
    let mut nlp = Nlp::new();

    let durations: [usize; 4] = std::array::from_fn(|i| {
        nlp.add_var(grid.duration_min[i], grid.duration_max[i], grid.duration_guess[i], GLOBAL_STAGE)
    });
    let delta = nlp.add_var(0.0, problem.delta_max, 0.0, GLOBAL_STAGE);

    let x0 = problem.x0.q.to_array();
    let mut nodes = Vec::with_capacity(n_nodes);
    for k in 0..n_nodes {
        let phase = grid.phase_of_node(k);
        let fixed = k == 0;
        let sk_in = stage_key(k, 0);
        let sk_st = stage_key(k, 1);
        let u: [usize; 4] = std::array::from_fn(|j| {
            let lim = p.torque_limit_of(j);
            nlp.add_var(-lim, lim, 0.0, sk_in)
        });
        let t: [usize; 4] = std::array::from_fn(|j| {
            let leg = if j < 2 { Leg::Front } else { Leg::Back };
            if !phase.in_contact(leg) {
                nlp.add_var(0.0, 0.0, 0.0, sk_in)
            } else if j % 2 == 0 {
                nlp.add_var(-INF, INF, 0.0, sk_in)
            } else if phase == JumpPhase::RearFeetContact {
                nlp.add_var(p.contact_force_z_min, p.contact_force_z_max, 0.0, sk_in)
            } else {
                nlp.add_var(0.0, p.contact_force_z_max, 0.0, sk_in)
            }
        });
        let q: [usize; 7] = std::array::from_fn(|i| {
            if fixed {
                return nlp.add_var(x0[i], x0[i], x0[i], sk_st);
            }
            let (lo, hi) = match p.q_bounds(i) {
                Some(b) => b,
                None if i == 2 => (-1.2, 1.2),
                None if i == 1 => (0.0, INF),
                None if i == 0 && k == n_nodes - 1 => (problem.obstacle.x_obs, INF),
                None => (-INF, INF),
            };
            nlp.add_var(lo, hi, x0[i], sk_st)
        });
        let v: [usize; 7] = std::array::from_fn(|i| {
            if fixed {
                let v0 = problem.x0.qdot[i];
                return nlp.add_var(v0, v0, v0, sk_st);
            }
            if problem.terminal_rest && k == n_nodes - 1 {
                return nlp.add_var(0.0, 0.0, 0.0, sk_st);
            }
            let lim = p.qdot_limit(i);
            nlp.add_var(-lim, lim, 0.0, sk_st)
        });
        let a: [usize; 7] = std::array::from_fn(|_| nlp.add_var(-INF, INF, 0.0, sk_st));
        let bbox = if avoid.contains(&k) {
            let sk = stage_key(k, 2);
            let w = nlp.add_var(0.05, 3.0, 0.5, sk);
            let h = nlp.add_var(0.05, 3.0, 0.5, sk);
            let gamma: [usize; 24] = std::array::from_fn(|_| nlp.add_var(0.0, INF, 0.25, sk));
            let lambda: [[usize; 4]; 2] =
                std::array::from_fn(|_| std::array::from_fn(|_| nlp.add_var(0.0, INF, 0.05, sk)));
            let mu: [[usize; 4]; 2] =
                std::array::from_fn(|_| std::array::from_fn(|_| nlp.add_var(0.0, INF, 0.05, sk)));
            Some(BoxVars { w, h, gamma, lambda, mu })
        } else {
            None
        };
        nodes.push(NodeVars { q, v, a, u, t, bbox });
    }

    // dynamics, contact and path constraints per node
    for (k, nv) in nodes.iter().enumerate() {
        let phase = grid.phase_of_node(k);
        let mut dyn_vars: Vec<usize> = Vec::with_capacity(29);
        dyn_vars.extend(nv.q);
        dyn_vars.extend(nv.v);
        dyn_vars.extend(nv.a);
        dyn_vars.extend(nv.u);
        dyn_vars.extend(nv.t);
        nlp.add_constraint(dyn_vars, Dynamics::new(p.clone()), vec![0.0; 7], vec![0.0; 7], "dynamics", k);

        let mut qv: Vec<usize> = nv.q.to_vec();
        qv.extend(nv.v);
        for leg in Leg::BOTH {
            let o = leg.force_offset();
            if phase.in_contact(leg) {
                if k > 0 {
                    nlp.add_constraint(
                        qv.clone(),
                        FootVelocity::new(p.clone(), leg),
                        vec![0.0; 2],
                        vec![0.0; 2],
                        "contact_velocity",
                        k,
                    );
                }
                let mu = if phase == JumpPhase::Landing { p.friction_mu * problem.landing_mu_scale } else { p.friction_mu };
                let (tx, tz) = (nv.t[o], nv.t[o + 1]);
                nlp.add_constraint(vec![tx, tz], Linear(vec![-1.0, mu]), vec![0.0], vec![INF], "friction", k);
                nlp.add_constraint(vec![tx, tz], Linear(vec![1.0, mu]), vec![0.0], vec![INF], "friction", k);
                if phase == JumpPhase::RearFeetContact {
                    let mut vars = nv.q.to_vec();
                    vars.push(delta);
                    nlp.add_constraint(
                        vars,
                        FootCoord { params: p.clone(), leg, axis: 1, with_offset: true },
                        vec![0.0],
                        vec![INF],
                        "contact_relaxation",
                        k,
                    );
                    nlp.add_constraint(
                        nv.q.to_vec(),
                        FootCoord { params: p.clone(), leg, axis: 1, with_offset: false },
                        vec![-INF],
                        vec![0.0],
                        "contact_height",
                        k,
                    );
                }
                if k == s4 {
                    nlp.add_constraint(
                        nv.q.to_vec(),
                        FootCoord { params: p.clone(), leg, axis: 1, with_offset: false },
                        vec![0.0],
                        vec![0.0],
                        "touchdown",
                        k,
                    );
                    nlp.add_constraint(
                        nv.q.to_vec(),
                        FootCoord { params: p.clone(), leg, axis: 0, with_offset: false },
                        vec![problem.landing_x()],
                        vec![INF],
                        "landing_zone",
                        k,
                    );
                }
            } else {
                nlp.add_constraint(
                    nv.q.to_vec(),
                    FootCoord { params: p.clone(), leg, axis: 1, with_offset: false },
                    vec![0.0],
                    vec![INF],
                    "ground_clearance",
                    k,
                );
            }
        }

        if let Some(bv) = &nv.bbox {
            let mut vars = nv.q.to_vec();
            vars.push(bv.w);
            vars.push(bv.h);
            vars.extend(bv.gamma);
            nlp.add_constraint(vars, KeypointBox { params: p.clone() }, vec![0.0; 18], vec![0.0; 18], "keypoint_box", k);
            for (part, region) in problem.obstacle.parts().into_iter().enumerate() {
                let mut vars = nv.q.to_vec();
                vars.push(bv.w);
                vars.push(bv.h);
                vars.extend(bv.lambda[part]);
                vars.extend(bv.mu[part]);
                let set = DualAvoidance::new(region.clone(), problem.d_min);
                nlp.add_constraint(
                    vars,
                    NodeDual::new(p.clone(), region.clone()),
                    set.lower(),
                    set.upper(),
                    "avoidance",
                    k,
                );
            }
        }
    }

    // trapezoidal defects
    for k in 0..n_nodes - 1 {
        let ph = grid.phase_of_interval(k);
        let inv = 1.0 / grid.intervals[ph] as f64;
        let (n0, n1) = (&nodes[k], &nodes[k + 1]);
        for i in 0..NQ {
            nlp.add_constraint(
                vec![n0.q[i], n1.q[i], n0.v[i], n1.v[i], durations[ph]],
                Defect { inv_nodes: inv },
                vec![0.0],
                vec![0.0],
                "defect_q",
                k,
            );
            nlp.add_constraint(
                vec![n0.v[i], n1.v[i], n0.a[i], n1.a[i], durations[ph]],
                Defect { inv_nodes: inv },
                vec![0.0],
                vec![0.0],
                "defect_v",
                k,
            );
        }
    }

    // cost
    let q_ref = problem.q_ref.to_array();
    let last = &nodes[n_nodes - 1];
    add_quadratic_form(&mut nlp, &last.q, &w.terminal_slice(), &q_ref);
    let zero7 = [0.0; 7];
    let zero4 = [0.0; 4];
    let (wv, wa, wt, wu) = (mat_vec(&w.qdot), mat_vec(&w.qddot), mat4_vec(&w.force), mat4_vec(&w.input));
    for nv in &nodes {
        add_quadratic_form(&mut nlp, &nv.v, &wv, &zero7);
        add_quadratic_form(&mut nlp, &nv.a, &wa, &zero7);
        add_quadratic_form(&mut nlp, &nv.t, &wt, &zero4);
        add_quadratic_form(&mut nlp, &nv.u, &wu, &zero4);
        if let Some(bv) = &nv.bbox {
            nlp.add_quadratic(bv.w, w.box_size, 0.0);
            nlp.add_quadratic(bv.h, w.box_size, 0.0);
        }
    }
    nlp.add_linear(durations[0], w.time[0]);
    nlp.add_linear(durations[1], w.time[1]);
    nlp.add_linear(delta, w.delta);

    let n_vars = nlp.n_vars();
    Ok(Assembled { nlp, layout: Layout { nodes, durations, delta, n_vars } })
}

impl CostWeights {
    fn terminal_slice(&self) -> Vec<f64> {
        mat_vec(&self.terminal)
    }
}

fn mat_vec(m: &Mat7) -> Vec<f64> {
    (0..49).map(|k| m[(k / 7, k % 7)]).collect()
}

fn mat4_vec(m: &Matrix4<f64>) -> Vec<f64> {
    (0..16).map(|k| m[(k / 4, k % 4)]).collect()
}

fn add_quadratic_form(nlp: &mut Nlp, vars: &[usize], m: &[f64], target: &[f64]) {
    let n = vars.len();
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || m[i * n + j] == 0.0));
    if diagonal {
        for i in 0..n {
            nlp.add_quadratic(vars[i], m[i * n + i], target[i]);
        }
    } else {
        nlp.add_objective(vars.to_vec(), QuadForm { weights: m.to_vec(), target: target.to_vec() });
    }
}

/// Cost split by term.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub terminal: f64,
    pub velocity: f64,
    pub acceleration: f64,
    pub force: f64,
    pub input: f64,
    pub time: f64,
    pub relaxation: f64,
    pub box_size: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.terminal
            + self.velocity
            + self.acceleration
            + self.force
            + self.input
            + self.time
            + self.relaxation
            + self.box_size
    }

    pub fn terms(&self) -> [(&'static str, f64); 8] {
        [
            ("terminal", self.terminal),
            ("velocity", self.velocity),
            ("acceleration", self.acceleration),
            ("force", self.force),
            ("input", self.input),
            ("time", self.time),
            ("relaxation", self.relaxation),
            ("box_size", self.box_size),
        ]
    }
}

pub fn cost_breakdown(traj: &JumpTrajectory, weights: &CostWeights, q_ref: &PlanarConfig) -> CostBreakdown {
    let quad7 = |m: &Mat7, x: &[f64], r: &[f64]| {
        let d = SMatrix::<f64, 7, 1>::from_fn(|i, _| x[i] - r[i]);
        (d.transpose() * m * d)[0]
    };
    let quad4 = |m: &Matrix4<f64>, x: &[f64; 4]| {
        let d = nalgebra::Vector4::from_column_slice(x);
        (d.transpose() * m * d)[0]
    };
    let last = traj.nodes.last().expect("trajectory has nodes");
    let mut c = CostBreakdown { terminal: quad7(&weights.terminal, &last.state.q.to_array(), &q_ref.to_array()), ..Default::default() };
    for n in &traj.nodes {
        c.velocity += quad7(&weights.qdot, &n.state.qdot, &[0.0; 7]);
        c.acceleration += quad7(&weights.qddot, &n.xdot[NQ..], &[0.0; 7]);
        c.force += quad4(&weights.force, &n.forces.t);
        c.input += quad4(&weights.input, &n.u.tau);
        if let Some(b) = &n.bbox {
            c.box_size += weights.box_size * (b.width * b.width + b.height * b.height);
        }
    }
    c.time = weights.time[0] * traj.durations[0] + weights.time[1] * traj.durations[1];
    c.relaxation = weights.delta * traj.delta;
    c
}

/// Cost of a trajectory, summed term by term.
pub fn evaluate_cost(traj: &JumpTrajectory, weights: &CostWeights, q_ref: &PlanarConfig) -> f64 {
    cost_breakdown(traj, weights, q_ref).total()
}

// ---------------------------------------------------------------------------
// Solve
// ---------------------------------------------------------------------------

/// Solves the jump NLP from the default initial guess.
pub fn solve(problem: &JumpProblem, cfg: &SolverConfig) -> Result<JumpTrajectory, JumpError> {
    if cfg.multi_start > 1 {
        return solve_multi_start(problem, cfg).map(|(best, _)| best);
    }
    solve_from(problem, cfg, None)
}

/// Runs `cfg.multi_start` perturbed solves in parallel and keeps the best
/// objective; returns every run's outcome alongside.
pub fn solve_multi_start(
    problem: &JumpProblem,
    cfg: &SolverConfig,
) -> Result<(JumpTrajectory, Vec<Result<SolverReport, JumpError>>), JumpError> {
    let runs: Vec<Result<JumpTrajectory, JumpError>> = (0..cfg.multi_start.max(1))
        .into_par_iter()
        .map(|i| {
            let seed = if i == 0 { None } else { Some(cfg.seed.wrapping_add(i as u64)) };
            solve_from(problem, cfg, seed)
        })
        .collect();
    let reports: Vec<Result<SolverReport, JumpError>> =
        runs.iter().map(|r| r.as_ref().map(|t| t.report.clone()).map_err(|e| e.clone())).collect();
    let best = runs
        .into_iter()
        .filter_map(Result::ok)
        .min_by(|a, b| a.report.objective.total_cmp(&b.report.objective));
    match best {
        Some(b) => Ok((b, reports)),
        None => Err(reports.into_iter().find_map(Result::err).expect("at least one run")),
    }
}

fn solve_from(problem: &JumpProblem, cfg: &SolverConfig, perturb: Option<u64>) -> Result<JumpTrajectory, JumpError> {
    let t0 = Instant::now();
    problem.validate()?;
    let (bound, need) = (problem.apex_bound(), problem.required_apex());
    if bound < need {
        return Err(JumpError::Infeasible {
            reason: format!("center of mass apex bound {bound:.3} m is below the required {need:.3} m"),
            violation: need - bound,
        });
    }
    let mut asm = assemble(problem)?;
    let mut init = guess::initial_trajectory(problem);
    if let Some(seed) = perturb {
        perturb_guess(&mut init, seed);
    }
    let mut x = asm.nlp.start().to_vec();
    asm.layout.pack(&init, &mut x);
    for (i, v) in x.iter().enumerate() {
        asm.nlp.set_start(i, *v);
    }
    let opts = SolveOptions {
        max_iter: cfg.max_iter,
        tol: cfg.tol,
        max_wall_seconds: cfg.max_wall_seconds,
        verbose: cfg.verbose,
        ..Default::default()
    };
    let sol = asm.nlp.solve(&opts)?;
    let mut traj = asm.layout.unpack(&sol.x, &problem.grid);
    traj.report = SolverReport {
        objective: sol.objective,
        max_violation: sol.max_violation,
        iterations: sol.iterations,
        status: match sol.status {
            SolveStatus::Optimal => "optimal".into(),
            SolveStatus::Acceptable => "acceptable".into(),
        },
        seconds: t0.elapsed().as_secs_f64(),
    };
    Ok(traj)
}

fn perturb_guess(traj: &mut JumpTrajectory, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale: f64 = rng.random_range(0.85..1.15);
    for i in 0..3 {
        traj.durations[i] *= rng.random_range(0.9..1.1);
    }
    for n in traj.nodes.iter_mut().skip(1) {
        let mut q = n.state.q.to_array();
        for qi in q.iter_mut().skip(3) {
            *qi += rng.random_range(-0.05..0.05);
        }
        q[1] *= scale.sqrt();
        n.state.q = PlanarConfig::from_array(q);
    }
}

// ---------------------------------------------------------------------------
// Dense reference
// ---------------------------------------------------------------------------

/// Uniformly sampled reference for tracking.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseReference {
    pub rate_hz: f64,
    pub t: Vec<f64>,
    pub phase: Vec<JumpPhase>,
    pub q: Vec<[f64; NQ]>,
    pub qdot: Vec<[f64; NQ]>,
    pub tau: Vec<[f64; 4]>,
    pub forces: Vec<[f64; 4]>,
    /// Start times of phases 2–4 and the end time.
    pub boundaries: [f64; 4],
}

impl DenseReference {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn phase_at(&self, t: f64) -> JumpPhase {
        phase_at(&self.boundaries, t)
    }

    /// Linear interpolation at an arbitrary time (clamped to the ends).
    pub fn sample(&self, t: f64) -> ([f64; NQ], [f64; NQ], [f64; 4]) {
        let n = self.t.len();
        let idx = ((t * self.rate_hz).floor().max(0.0) as usize).min(n.saturating_sub(2));
        let (t0, t1) = (self.t[idx], self.t[(idx + 1).min(n - 1)]);
        let s = if t1 > t0 { ((t - t0) / (t1 - t0)).clamp(0.0, 1.0) } else { 0.0 };
        let j = (idx + 1).min(n - 1);
        (
            lerp_arr(&self.q[idx], &self.q[j], s),
            lerp_arr(&self.qdot[idx], &self.qdot[j], s),
            lerp_arr(&self.tau[idx], &self.tau[j], s),
        )
    }
}

fn phase_at(b: &[f64; 4], t: f64) -> JumpPhase {
    if t < b[0] {
        JumpPhase::AllFeetContact
    } else if t < b[1] {
        JumpPhase::RearFeetContact
    } else if t < b[2] {
        JumpPhase::Flight
    } else {
        JumpPhase::Landing
    }
}

fn lerp_arr<const N: usize>(a: &[f64; N], b: &[f64; N], s: f64) -> [f64; N] {
    std::array::from_fn(|i| a[i] + (b[i] - a[i]) * s)
}

/// Piecewise-linear resampling of the node trajectory at `rate_hz`, with
/// samples at `j / rate_hz` for `j = 0 ..= floor(duration · rate_hz)`.
pub fn resample(traj: &JumpTrajectory, rate_hz: f64) -> DenseReference {
    assert!(rate_hz > 0.0, "rate must be positive");
    let total = traj.duration();
    // tolerate round-off in the product so exact multiples keep their endpoint
    let count = ((total * rate_hz) * (1.0 + 1e-12)).floor() as usize + 1;
    let boundaries = traj.phase_boundaries();
    let mut out = DenseReference {
        rate_hz,
        t: Vec::with_capacity(count),
        phase: Vec::with_capacity(count),
        q: Vec::with_capacity(count),
        qdot: Vec::with_capacity(count),
        tau: Vec::with_capacity(count),
        forces: Vec::with_capacity(count),
        boundaries,
    };
    let nodes = &traj.nodes;
    let mut seg = 0;
    for j in 0..count {
        let t = (j as f64 / rate_hz).min(total);
        while seg + 2 < nodes.len() && nodes[seg + 1].t <= t {
            seg += 1;
        }
        let (a, b) = (&nodes[seg], &nodes[seg + 1]);
        let s = if b.t > a.t { ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0) } else { 0.0 };
        out.t.push(t);
        out.phase.push(phase_at(&boundaries, t));
        out.q.push(lerp_arr(&a.state.q.to_array(), &b.state.q.to_array(), s));
        out.qdot.push(lerp_arr(&a.state.qdot, &b.state.qdot, s));
        out.tau.push(lerp_arr(&a.u.tau, &b.u.tau, s));
        out.forces.push(lerp_arr(&a.forces.t, &b.forces.t, s));
    }
    out
}

/// Obstacle polygon helper for callers that only need the parts.
pub fn window_parts(obstacle: &WindowObstacle) -> [&ConvexRegion; 2] {
    obstacle.parts()
}

#[cfg(test)]
mod tests;
