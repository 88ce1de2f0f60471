//! Closed-loop verification: the planar jump under joint PD + feedforward
//! control on a penalty-contact ground, and kinematic walking.

use nalgebra::Vector2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collision::{BoundingBox, WindowObstacle};
use crate::jump::{resample, DenseReference, JumpTrajectory};
use crate::model::{
    self, forward_dynamics_generic, foot_position, foot_velocity, JumpPhase, Leg, ModelParams, PlanarConfig, NQ, NU,
    static_equilibrium,
};
use crate::nav::VelocityPlan;
use crate::world::{wrap_angle, Pose2};

mod episode;
pub use episode::*;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("simulation diverged at t = {t:.4} s: {reason}")]
    SimDiverged { t: f64, reason: String },
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Per-phase joint gains (rows indexed by phase, columns by joint).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainSchedule {
    pub kp: [[f64; NU]; 4],
    pub kd: [[f64; NU]; 4],
    /// Gains reached at the end of the landing phase.
    pub landing_kp: [f64; NU],
    pub landing_kd: [f64; NU],
    /// Blend landing gains over the landing duration.
    pub interpolate_landing: bool,
    /// Scale on the landing feedforward torque, in (0, 1].
    pub landing_scale: f64,
}

impl Default for GainSchedule {
    fn default() -> Self {
        let stance = [80.0; NU];
        let flight = [60.0; NU];
        Self {
            kp: [stance, stance, flight, flight],
            kd: [[2.0; NU], [2.0; NU], [1.5; NU], [1.5; NU]],
            landing_kp: [30.0; NU],
            landing_kd: [4.0; NU],
            interpolate_landing: true,
            landing_scale: 0.5,
        }
    }
}

impl GainSchedule {
    pub fn validate(&self) -> Result<(), SimError> {
        let all = self.kp.iter().chain(&self.kd).flatten().chain(&self.landing_kp).chain(&self.landing_kd);
        if all.clone().any(|g| !(*g >= 0.0)) {
            return Err(SimError::Config("gains must be nonnegative".into()));
        }
        if !(self.landing_scale > 0.0 && self.landing_scale <= 1.0) {
            return Err(SimError::Config("landing_scale must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Gains in `phase` at fractional progress `s` through it.
    pub fn gains(&self, phase: JumpPhase, s: f64) -> ([f64; NU], [f64; NU]) {
        let i = phase.index();
        if phase == JumpPhase::Landing && self.interpolate_landing {
            let s = s.clamp(0.0, 1.0);
            let blend = |a: &[f64; NU], b: &[f64; NU]| std::array::from_fn(|j| a[j] + (b[j] - a[j]) * s);
            (blend(&self.kp[i], &self.landing_kp), blend(&self.kd[i], &self.landing_kd))
        } else {
            (self.kp[i], self.kd[i])
        }
    }
}

/// Where the controller is in the reference: phase and progress through it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseClock {
    pub phase: JumpPhase,
    pub progress: f64,
}

/// `τ = τ_des + K_p (q_des − q) + K_d (q̇_des − q̇)` per joint, with the
/// landing feedforward scaled, clamped to the torque limits.
#[allow(clippy::too_many_arguments)]
pub fn pd_feedforward(
    q_des: &[f64; NU],
    qd_des: &[f64; NU],
    tau_des: &[f64; NU],
    q: &[f64; NU],
    qd: &[f64; NU],
    clock: PhaseClock,
    schedule: &GainSchedule,
    params: &ModelParams,
) -> model::ControlInput {
    let (kp, kd) = schedule.gains(clock.phase, clock.progress);
    let ff = if clock.phase == JumpPhase::Landing { schedule.landing_scale } else { 1.0 };
    let tau = std::array::from_fn(|j| {
        let lim = params.torque_limit_of(j);
        (ff * tau_des[j] + kp[j] * (q_des[j] - q[j]) + kd[j] * (qd_des[j] - qd[j])).clamp(-lim, lim)
    });
    model::ControlInput { tau }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContactModel {
    pub stiffness: f64,
    pub damping: f64,
    pub friction_mu: f64,
}

impl Default for ContactModel {
    fn default() -> Self {
        Self { stiffness: 3e4, damping: 300.0, friction_mu: 0.8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dt: f64,
    pub control_hz: f64,
    pub contact: ContactModel,
    /// Time simulated after the reference ends, s.
    pub settle_time: f64,
    /// Normal force above which a foot counts as loaded, N.
    pub touchdown_force: f64,
    /// How long the load must persist to register an event, s.
    pub touchdown_hold: f64,
    /// Landing timing error: the reference flight is stretched by this much.
    pub landing_shift: f64,
    /// Divergence bound on |q| and |q̇|.
    pub state_bound: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            control_hz: 1000.0,
            contact: ContactModel::default(),
            settle_time: 0.5,
            touchdown_force: 5.0,
            touchdown_hold: 5e-3,
            landing_shift: 0.0,
            state_bound: 100.0,
        }
    }
}

impl SimConfig {
    pub fn substeps(&self) -> Result<usize, SimError> {
        let r = 1.0 / (self.control_hz * self.dt);
        let n = r.round();
        if !(self.dt > 0.0 && self.control_hz > 0.0) || n < 1.0 || (r - n).abs() > 1e-9 {
            return Err(SimError::Config("control period must be an integer multiple of the step".into()));
        }
        Ok(n as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactEventKind {
    LiftOff,
    TouchDown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactEvent {
    pub t: f64,
    pub leg: Leg,
    pub kind: ContactEventKind,
}

/// One controller tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingSample {
    pub t: f64,
    pub phase: JumpPhase,
    pub q: [f64; NQ],
    pub qd: [f64; NQ],
    pub q_des: [f64; NQ],
    pub qd_des: [f64; NQ],
    pub tau_des: [f64; NU],
    pub tau: [f64; NU],
    pub ground_force: [f64; 4],
    pub clearance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpMetrics {
    /// Joint-angle RMS error over the reference duration, per joint.
    pub rms_joint: [f64; NU],
    pub rms_joint_velocity: [f64; NU],
    pub rms_overall: f64,
    pub min_clearance: f64,
    /// Base x at the first post-flight touchdown.
    pub landing_x: Option<f64>,
    pub final_x: f64,
    pub final_pitch: f64,
    pub max_torque_ratio: f64,
    pub torque_violations: usize,
    pub saturated_ticks: usize,
    /// Largest tangential-to-normal ground force ratio while loaded.
    pub max_friction_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpRun {
    pub samples: Vec<TrackingSample>,
    pub events: Vec<ContactEvent>,
    pub metrics: JumpMetrics,
}

impl JumpRun {
    /// Whether the robot ended past `x_obs`, upright, without torque
    /// violations or contact with the obstacle.
    pub fn succeeded(&self, x_obs: f64, max_pitch: f64) -> bool {
        let m = &self.metrics;
        m.landing_x.is_some_and(|x| x >= x_obs)
            && m.final_pitch.abs() <= max_pitch
            && m.torque_violations == 0
            && m.min_clearance >= 0.0
    }
}

/// Penalty ground: spring-damper normal force, tangential spring-damper
/// anchored where the foot touched down, capped by Coulomb friction.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct FootContact {
    anchor: Option<f64>,
}

impl FootContact {
    fn force(&mut self, c: &ContactModel, pos: [f64; 2], vel: [f64; 2]) -> [f64; 2] {
        if pos[1] >= 0.0 {
            self.anchor = None;
            return [0.0, 0.0];
        }
        let fz = (-c.stiffness * pos[1] - c.damping * vel[1]).max(0.0);
        let anchor = *self.anchor.get_or_insert(pos[0]);
        let mut fx = -c.stiffness * (pos[0] - anchor) - c.damping * vel[0];
        let cap = c.friction_mu * fz;
        if fx.abs() > cap {
            fx = fx.signum() * cap;
            // slide: move the anchor so the spring sits at the cone edge
            self.anchor = Some(pos[0] + (fx + c.damping * vel[0]) / c.stiffness);
        }
        [fx, fz]
    }
}

/// Reference time under a landing timing error: the flight segment is
/// stretched by `shift` so the landing reference starts `shift` later.
fn reference_time(t: f64, boundaries: &[f64; 4], shift: f64) -> f64 {
    let (t3, t4) = (boundaries[1], boundaries[2]);
    let flight = t4 - t3;
    if shift == 0.0 || t <= t3 || flight <= 0.0 {
        return t;
    }
    let stretched = (flight + shift).max(1e-6);
    if t < t3 + stretched {
        t3 + (t - t3) * flight / stretched
    } else {
        t - shift
    }
}

fn phase_clock(tr: f64, b: &[f64; 4]) -> PhaseClock {
    let starts = [0.0, b[0], b[1], b[2]];
    let ends = [b[0], b[1], b[2], b[3]];
    let i = (0..4).rev().find(|&i| tr >= starts[i]).unwrap_or(0);
    let len = ends[i] - starts[i];
    let progress = if len > 0.0 { ((tr - starts[i]) / len).clamp(0.0, 1.0) } else { 1.0 };
    PhaseClock { phase: JumpPhase::from_index(i).expect("phase index"), progress }
}

/// Box dimensions of the reference at time `t`, interpolated between nodes
/// that carry boxes.
fn reference_box_dims(traj: &JumpTrajectory, t: f64) -> Option<(f64, f64)> {
    let nodes = &traj.nodes;
    let k = nodes.iter().rposition(|n| n.t <= t)?;
    let a = nodes[k].bbox.as_ref()?;
    match nodes.get(k + 1).and_then(|n| n.bbox.as_ref().map(|b| (n.t, b))) {
        Some((t1, b)) if t1 > nodes[k].t => {
            let s = (t - nodes[k].t) / (t1 - nodes[k].t);
            Some((a.width + (b.width - a.width) * s, a.height + (b.height - a.height) * s))
        }
        _ => Some((a.width, a.height)),
    }
}

/// Box around the simulated key points: centered at their mean and pitched
/// with the body, at least as large as the reference box.
pub fn realized_box(q: &PlanarConfig, params: &ModelParams, min_dims: Option<(f64, f64)>) -> BoundingBox {
    let kp = model::forward_kinematics(q, params).as_array();
    let mut b = crate::collision::minimal_box(&kp, q.theta);
    if let Some((w, h)) = min_dims {
        b.width = b.width.max(w);
        b.height = b.height.max(h);
    }
    b
}

/// Integrates the planar robot tracking `traj` and reports tracking,
/// clearance against `obstacle`, contact events and landing position.
pub fn simulate_jump(
    traj: &JumpTrajectory,
    params: &ModelParams,
    schedule: &GainSchedule,
    cfg: &SimConfig,
    obstacle: &WindowObstacle,
) -> Result<JumpRun, SimError> {
    schedule.validate()?;
    let sub = cfg.substeps()?;
    let reference = resample(traj, cfg.control_hz);
    let b = reference.boundaries;
    let t_end = b[3] + cfg.landing_shift.max(0.0) + cfg.settle_time;
    let n_ticks = (t_end * cfg.control_hz).round() as usize;
    let dt = cfg.dt;

    let mut q = traj.nodes[0].state.q.to_array();
    let mut qd = traj.nodes[0].state.qdot;
    let mut feet = [FootContact::default(); 2];
    let mut loaded = [true; 2];
    let mut pending = [0usize; 2];
    let hold = (cfg.touchdown_hold * cfg.control_hz).round().max(1.0) as usize;
    let mut events = Vec::new();
    let mut samples = Vec::with_capacity(n_ticks);
    let mut flew = false;
    let mut landing_x = None;
    let mut max_ratio: f64 = 0.0;
    let mut violations = 0;
    let mut saturated = 0;
    let mut max_friction: f64 = 0.0;
    let (q_final, _, _) = sample_ref(&reference, b[3]);
    let hold_tau = static_equilibrium(&PlanarConfig::from_array(q_final), params)
        .map(|(u, _)| u.tau)
        .unwrap_or([0.0; NU]);

    for tick in 0..n_ticks {
        let t = tick as f64 / cfg.control_hz;
        let tr = reference_time(t, &b, cfg.landing_shift);
        let (q_des, qd_des, mut tau_des) = sample_ref(&reference, tr);
        let mut clock = phase_clock(tr, &b);
        if tr >= b[3] {
            // reference finished: hand over to the standing controller
            clock = PhaseClock { phase: JumpPhase::AllFeetContact, progress: 0.0 };
            tau_des = hold_tau;
        }
        let j = |a: &[f64; NQ]| -> [f64; NU] { std::array::from_fn(|i| a[3 + i]) };
        let u = pd_feedforward(&j(&q_des), &j(&qd_des), &tau_des, &j(&q), &j(&qd), clock, schedule, params);
        for (i, &tau) in u.tau.iter().enumerate() {
            let lim = params.torque_limit_of(i);
            max_ratio = max_ratio.max(tau.abs() / lim);
            if tau.abs() > lim * (1.0 + 1e-12) {
                violations += 1;
            }
        }
        let raw: [f64; NU] = std::array::from_fn(|i| {
            let (kp, kd) = schedule.gains(clock.phase, clock.progress);
            let ff = if clock.phase == JumpPhase::Landing { schedule.landing_scale } else { 1.0 };
            ff * tau_des[i] + kp[i] * (q_des[3 + i] - q[3 + i]) + kd[i] * (qd_des[3 + i] - qd[3 + i])
        });
        if raw.iter().enumerate().any(|(i, r)| r.abs() > params.torque_limit_of(i)) {
            saturated += 1;
        }

        let mut force = [0.0; 4];
        for _ in 0..sub {
            let mut t4 = [0.0; 4];
            for leg in Leg::BOTH {
                let o = leg.force_offset();
                let p = foot_position(params, leg, &q);
                let v = foot_velocity(params, leg, &q, &qd);
                let f = feet[o / 2].force(&cfg.contact, p, v);
                t4[o] = f[0];
                t4[o + 1] = f[1];
            }
            let qdd = forward_dynamics_generic(params, &q, &qd, &u.tau, &t4);
            for i in 0..NQ {
                qd[i] += dt * qdd[i];
                q[i] += dt * qd[i];
            }
            force = t4;
        }
        let bad = q.iter().chain(&qd).any(|v| !v.is_finite() || v.abs() > cfg.state_bound);
        if bad || q[1] < -0.5 {
            return Err(SimError::SimDiverged { t, reason: "state left the admissible range".into() });
        }

        for leg in Leg::BOTH {
            let o = leg.force_offset();
            let now = force[o + 1] > cfg.touchdown_force;
            if force[o + 1] > cfg.touchdown_force {
                max_friction = max_friction.max(force[o].abs() / force[o + 1]);
            }
            let li = o / 2;
            if now != loaded[li] {
                pending[li] += 1;
                if pending[li] >= hold {
                    loaded[li] = now;
                    pending[li] = 0;
                    let kind = if now { ContactEventKind::TouchDown } else { ContactEventKind::LiftOff };
                    events.push(ContactEvent { t: t - (hold - 1) as f64 / cfg.control_hz, leg, kind });
                    if now && flew && landing_x.is_none() {
                        landing_x = Some(q[0]);
                    }
                }
            } else {
                pending[li] = 0;
            }
        }
        if !loaded[0] && !loaded[1] && tr >= b[1] {
            flew = true;
        }

        let qc = PlanarConfig::from_array(q);
        let bbox = realized_box(&qc, params, reference_box_dims(traj, tr));
        samples.push(TrackingSample {
            t: t + 1.0 / cfg.control_hz,
            phase: clock.phase,
            q,
            qd,
            q_des,
            qd_des,
            tau_des,
            tau: u.tau,
            ground_force: force,
            clearance: obstacle.clearance(&bbox),
        });
    }

    let metrics = summarize(&samples, b[3] + cfg.landing_shift.max(0.0), landing_x, violations, saturated, max_ratio, max_friction);
    Ok(JumpRun { samples, events, metrics })
}

fn sample_ref(r: &DenseReference, t: f64) -> ([f64; NQ], [f64; NQ], [f64; NU]) {
    r.sample(t)
}

fn summarize(
    samples: &[TrackingSample],
    t_ref_end: f64,
    landing_x: Option<f64>,
    torque_violations: usize,
    saturated_ticks: usize,
    max_torque_ratio: f64,
    max_friction_ratio: f64,
) -> JumpMetrics {
    let within: Vec<&TrackingSample> = samples.iter().filter(|s| s.t <= t_ref_end + 1e-9).collect();
    let n = within.len().max(1) as f64;
    let rms = |f: &dyn Fn(&TrackingSample, usize) -> f64| -> [f64; NU] {
        std::array::from_fn(|j| (within.iter().map(|s| f(s, j).powi(2)).sum::<f64>() / n).sqrt())
    };
    let rms_joint = rms(&|s, j| s.q[3 + j] - s.q_des[3 + j]);
    let rms_joint_velocity = rms(&|s, j| s.qd[3 + j] - s.qd_des[3 + j]);
    let rms_overall = (rms_joint.iter().map(|r| r * r).sum::<f64>() / NU as f64).sqrt();
    let last = samples.last().expect("at least one tick");
    JumpMetrics {
        rms_joint,
        rms_joint_velocity,
        rms_overall,
        min_clearance: samples.iter().map(|s| s.clearance).fold(f64::INFINITY, f64::min),
        landing_x,
        final_x: last.q[0],
        final_pitch: last.q[2],
        max_torque_ratio,
        torque_violations,
        saturated_ticks,
        max_friction_ratio,
    }
}

/// Replays the reference exactly (no dynamics) and reports the clearance
/// of the realized box at every node time.
pub fn replay_clearance(traj: &JumpTrajectory, params: &ModelParams, obstacle: &WindowObstacle) -> Vec<(usize, f64)> {
    traj.nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| n.bbox.is_some())
        .map(|(k, n)| {
            let b = realized_box(&n.state.q, params, reference_box_dims(traj, n.t));
            (k, obstacle.clearance(&b))
        })
        .collect()
}

/// Body-frame velocity response of the walking controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WalkConfig {
    pub dt: f64,
    /// First-order lag time constant, s (0 = none).
    pub lag: f64,
    /// Standard deviation of additive velocity noise.
    pub velocity_noise: f64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self { dt: 1e-3, lag: 0.0, velocity_noise: 0.0 }
    }
}

/// Planar pose plus body-frame velocity `(forward, lateral, yaw rate)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WalkState {
    pub t: f64,
    pub pose: Pose2,
    pub body_velocity: [f64; 3],
}

impl WalkState {
    pub fn world_velocity(&self) -> [f64; 3] {
        let (s, c) = self.pose.yaw.sin_cos();
        let [vf, vl, w] = self.body_velocity;
        [c * vf - s * vl, s * vf + c * vl, w]
    }
}

/// Kinematic walking: the plan's world-frame velocities are turned into
/// body-frame commands along the planned heading, passed through an
/// optional first-order lag, and integrated as a unicycle with sideslip.
pub fn simulate_walk<R: Rng>(
    start: &WalkState,
    plan: &VelocityPlan,
    duration: f64,
    cfg: &WalkConfig,
    rng: &mut R,
) -> Vec<WalkState> {
    let steps = (duration / cfg.dt).round() as usize;
    let alpha = if cfg.lag > 0.0 { 1.0 - (-cfg.dt / cfg.lag).exp() } else { 1.0 };
    let noise = (cfg.velocity_noise > 0.0).then(|| Normal::new(0.0, cfg.velocity_noise).expect("positive sigma"));
    let mut s = *start;
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        let tp = k as f64 * cfg.dt;
        let v = plan.velocity_at(tp);
        let heading = plan_heading(plan, tp);
        let (sn, cs) = heading.sin_cos();
        let cmd = [cs * v[0] + sn * v[1], -sn * v[0] + cs * v[1], v[2]];
        for i in 0..3 {
            s.body_velocity[i] += alpha * (cmd[i] - s.body_velocity[i]);
            if let Some(n) = &noise {
                s.body_velocity[i] += n.sample(rng);
            }
        }
        let w = s.world_velocity();
        s.pose.x += cfg.dt * w[0];
        s.pose.y += cfg.dt * w[1];
        s.pose.yaw = wrap_angle(s.pose.yaw + cfg.dt * w[2]);
        s.t += cfg.dt;
        out.push(s);
    }
    out
}

fn plan_heading(plan: &VelocityPlan, t: f64) -> f64 {
    let n = plan.position.len();
    let s = (t / plan.dt).clamp(0.0, (n - 1) as f64);
    let k = (s.floor() as usize).min(n.saturating_sub(2));
    let a = s - k as f64;
    plan.position[k][2] * (1.0 - a) + plan.position[(k + 1).min(n - 1)][2] * a
}

pub const TRACKING_SCHEMA: &str = "quadjump-tracking v1";

const JOINT_NAMES: [&str; NU] = ["f1", "f2", "b1", "b2"];

/// Desired versus simulated joint angle, velocity and torque per tick, plus
/// base pose, ground forces and clearance.
pub fn write_tracking<W: std::io::Write>(run: &JumpRun, mut w: W) -> std::io::Result<()> {
    writeln!(w, "# {TRACKING_SCHEMA}")?;
    let m = &run.metrics;
    writeln!(w, "# rms_joint {} {} {} {}", m.rms_joint[0], m.rms_joint[1], m.rms_joint[2], m.rms_joint[3])?;
    let v = &m.rms_joint_velocity;
    writeln!(w, "# rms_joint_velocity {} {} {} {}", v[0], v[1], v[2], v[3])?;
    let mut cols = vec!["t".to_string(), "phase".into(), "x".into(), "z".into(), "theta".into()];
    for j in JOINT_NAMES {
        for c in ["q_des", "q", "qd_des", "qd", "tau_des", "tau"] {
            cols.push(format!("{j}_{c}"));
        }
    }
    cols.extend(["f_fx", "f_fz", "f_bx", "f_bz", "clearance"].map(String::from));
    writeln!(w, "# columns {}", cols.join(" "))?;
    for s in &run.samples {
        let mut row = vec![s.t.to_string(), s.phase.name().to_string()];
        row.extend(s.q[..3].iter().map(|v| v.to_string()));
        for j in 0..NU {
            let i = 3 + j;
            row.extend([s.q_des[i], s.q[i], s.qd_des[i], s.qd[i], s.tau_des[j], s.tau[j]].map(|v| v.to_string()));
        }
        row.extend(s.ground_force.iter().map(|v| v.to_string()));
        row.push(s.clearance.to_string());
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

/// Signed distance from a point to the nearest footprint edge.
pub fn point_clearance(p: &Vector2<f64>, prisms: &[crate::world::Prism]) -> f64 {
    prisms
        .iter()
        .map(|pr| {
            let (s, c) = pr.yaw.sin_cos();
            let d = p - pr.center;
            let l = Vector2::new(c * d.x + s * d.y, -s * d.x + c * d.y);
            let e = Vector2::new(l.x.abs() - pr.half.x, l.y.abs() - pr.half.y);
            let outside = Vector2::new(e.x.max(0.0), e.y.max(0.0)).norm();
            outside + e.x.max(e.y).min(0.0)
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests;
