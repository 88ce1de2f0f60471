//! Heuristic starting trajectory: stand, pitch up on the rear legs, fly a
//! ballistic arc over the sill with tucked legs, land standing.

use std::f64::consts::FRAC_PI_2;

use nalgebra::Vector2;

use crate::collision::{dual_witness, minimal_box, DualVariables};
use crate::model::{self, ContactForces, ControlInput, JumpPhase, Leg, PlanarConfig, PlanarState, NQ, NX};

use super::{JumpProblem, JumpTrajectory, NodeBox, SolverReport, TrajNode, STAND_HIP, STAND_KNEE};

const TUCK_HIP: f64 = -1.2;
const TUCK_KNEE: f64 = 2.4;

/// Two-link inverse kinematics: joint angles placing the foot of `leg` at
/// `foot` for the given base pose, knee bent backwards.
fn leg_ik(p: &crate::model::ModelParams, leg: Leg, base: [f64; 3], foot: Vector2<f64>) -> (f64, f64) {
    let th = base[2];
    let hip = Vector2::new(base[0], base[1]) + leg.hip_sign() * p.body_half_length * Vector2::new(th.cos(), th.sin());
    let d = foot - hip;
    let (l1, l2) = (p.link_length[0], p.link_length[1]);
    let r = d.norm().clamp((l1 - l2).abs() + 1e-6, l1 + l2 - 1e-6);
    let knee = ((r * r - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0).acos();
    let a1 = d.y.atan2(d.x) - (l2 * knee.sin()).atan2(l1 + l2 * knee.cos());
    (a1 - th + FRAC_PI_2, knee)
}

fn lerp(a: f64, b: f64, s: f64) -> f64 {
    a + (b - a) * s
}

/// Smoothstep on [0, 1].
fn ease(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

/// Shape parameters of the heuristic jump.
#[derive(Debug, Clone, Copy)]
struct Shape {
    takeoff_pitch: f64,
    bulge: f64,
}

/// Starting trajectory. Takeoff pitch and arc height are picked from a
/// small grid as the first pair whose boxes clear the window by a margin
/// (the clearest pair when none does).
pub fn initial_trajectory(problem: &JumpProblem) -> JumpTrajectory {
    let mut best: Option<(f64, JumpTrajectory)> = None;
    for bulge in [0.08, 0.12, 0.16, 0.2, 0.25, 0.3, 0.36, 0.43, 0.5, 0.6] {
        for takeoff_pitch in [0.25, 0.4, 0.55, 0.7] {
            let traj = build(problem, Shape { takeoff_pitch, bulge });
            let c = traj.min_clearance(&problem.params, &problem.obstacle);
            if c >= problem.d_min + 0.02 {
                return traj;
            }
            if best.as_ref().is_none_or(|b| c > b.0) {
                best = Some((c, traj));
            }
        }
    }
    best.expect("candidate grid is not empty").1
}

/// Offsets of the guess box's smallest and largest x from the base.
fn box_x_extent(problem: &JumpProblem, q: &PlanarConfig) -> (f64, f64) {
    let kp = model::forward_kinematics(q, &problem.params).as_array();
    let mut b = minimal_box(&kp, q.theta);
    b.width *= 1.05;
    b.height *= 1.05;
    let v = b.vertices();
    let lo = v.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let hi = v.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    (lo - q.x, hi - q.x)
}

fn build(problem: &JumpProblem, shape: Shape) -> JumpTrajectory {
    let p = &problem.params;
    let grid = &problem.grid;
    let mut durations: [f64; 4] =
        std::array::from_fn(|i| grid.duration_guess[i].clamp(grid.duration_min[i], grid.duration_max[i]));
    let n = grid.n_nodes();
    let (s2, s3, s4) = (grid.phase_start(1), grid.phase_start(2), grid.phase_start(3));

    let stand = problem.x0.q;
    let back_foot = model::forward_kinematics(&stand, p).foot_back;
    let (_, hi) = problem.obstacle.lower.extent();
    let standing_at = |x: f64| model::standing_config(p, x, STAND_HIP, STAND_KNEE);
    let (lo_off, _) = box_x_extent(problem, &standing_at(0.0));
    let foot_off = model::forward_kinematics(&standing_at(0.0), p).foot_back.x;
    let x_land = (hi.x + problem.d_min + 0.03 - lo_off).max(problem.landing_x() - foot_off + 0.02);

    // takeoff pose: pitched about the planted back foot
    let takeoff_at = |s: f64| -> [f64; NQ] {
        let th = shape.takeoff_pitch * s;
        // back hip straight above the foot at a growing extension
        let r = p.leg_length() * lerp(0.7, 0.93, s);
        let hip = Vector2::new(back_foot.x, back_foot.y + r);
        let base = hip + p.body_half_length * Vector2::new(th.cos(), th.sin());
        let (b1, b2) = leg_ik(p, Leg::Back, [base.x, base.y, th], back_foot);
        [base.x, base.y, th, lerp(STAND_HIP, TUCK_HIP, s), lerp(STAND_KNEE, TUCK_KNEE, s), b1, b2]
    };
    let q_to = takeoff_at(1.0);
    let (x_to, z_to) = (q_to[0], q_to[1]);
    let z_land = stand.z;
    let g = p.gravity;
    let t_flight = (8.0 * shape.bulge / g).sqrt().clamp(grid.duration_min[2], grid.duration_max[2]);
    durations[2] = t_flight;
    let times = grid.node_times(&durations);

    let mut qs: Vec<[f64; NQ]> = Vec::with_capacity(n);
    for k in 0..n {
        let t = times[k];
        let q = if k < s2 {
            stand.to_array()
        } else if k < s3 {
            let s = ease((t - times[s2]) / (times[s3] - times[s2]));
            let mut q = takeoff_at(s);
            // start from the standing pose exactly
            let q0 = takeoff_at(0.0);
            let st = stand.to_array();
            for i in 0..NQ {
                q[i] += (st[i] - q0[i]) * (1.0 - s);
            }
            q
        } else if k < s4 {
            let s = (t - times[s3]) / t_flight;
            let z = z_to + (z_land - z_to) * s + 4.0 * shape.bulge * s * (1.0 - s);
            let th = lerp(shape.takeoff_pitch, -0.05, s);
            let tuck = ease((s / 0.25).min(1.0)) * ease(((1.0 - s) / 0.25).min(1.0));
            let hip_s = lerp(STAND_HIP, TUCK_HIP, tuck);
            let knee_s = lerp(STAND_KNEE, TUCK_KNEE, tuck);
            let (f1, f2) = (lerp(TUCK_HIP, hip_s, s.min(0.5) * 2.0), lerp(TUCK_KNEE, knee_s, s.min(0.5) * 2.0));
            let (b1, b2) = (lerp(q_to[5], hip_s, (s * 4.0).min(1.0)), lerp(q_to[6], knee_s, (s * 4.0).min(1.0)));
            [lerp(x_to, x_land, s), z, th, f1, f2, b1, b2]
        } else {
            standing_at(x_land).to_array()
        };
        qs.push(q);
    }

    // velocities and accelerations by finite differences on the node times
    let diff = |vals: &Vec<[f64; NQ]>, k: usize| -> [f64; NQ] {
        let (a, b) = if k == 0 {
            (0, 1)
        } else if k == n - 1 {
            (n - 2, n - 1)
        } else {
            (k - 1, k + 1)
        };
        let dt = times[b] - times[a];
        std::array::from_fn(|i| (vals[b][i] - vals[a][i]) / dt)
    };
    let mut vs: Vec<[f64; NQ]> = (0..n).map(|k| diff(&qs, k)).collect();
    for k in 0..n {
        let ph = grid.phase_of_node(k);
        if k == 0 || ph == JumpPhase::AllFeetContact || (ph == JumpPhase::Landing && k > s4) {
            vs[k] = [0.0; NQ];
        }
    }
    let accs: Vec<[f64; NQ]> = (0..n).map(|k| diff(&vs, k)).collect();

    let weight = p.total_mass() * p.gravity;
    let avoid = problem.avoidance_nodes();
    let nodes = (0..n)
        .map(|k| {
            let phase = grid.phase_of_node(k);
            let q = PlanarConfig::from_array(qs[k]);
            let (u, forces) = match phase {
                JumpPhase::Flight => (ControlInput { tau: [0.0; 4] }, ContactForces { t: [0.0; 4] }),
                JumpPhase::RearFeetContact => {
                    let (u, _) = model::static_equilibrium(&q, p).unwrap_or_default();
                    let tz = weight.clamp(p.contact_force_z_min, p.contact_force_z_max);
                    (u, ContactForces { t: [0.0, 0.0, 0.0, tz] })
                }
                _ => model::static_equilibrium(&q, p).unwrap_or_default(),
            };
            let mut xdot = [0.0; NX];
            xdot[..NQ].copy_from_slice(&vs[k]);
            xdot[NQ..].copy_from_slice(&accs[k]);
            let bbox = avoid.contains(&k).then(|| node_guess_box(problem, &q));
            TrajNode { t: times[k], phase, state: PlanarState { q, qdot: vs[k] }, xdot, u, forces, bbox }
        })
        .collect();
    JumpTrajectory { nodes, durations, delta: 0.0, report: SolverReport::default() }
}

fn node_guess_box(problem: &JumpProblem, q: &PlanarConfig) -> NodeBox {
    let kp = model::forward_kinematics(q, &problem.params).as_array();
    let mut b = minimal_box(&kp, q.theta);
    b.width = (b.width * 1.05).max(0.06);
    b.height = (b.height * 1.05).max(0.06);
    let gamma = std::array::from_fn(|i| b.corner_weights(&kp[i]));
    let duals = std::array::from_fn(|part| {
        let region = problem.obstacle.parts()[part];
        dual_witness(&b, region, 0.9).unwrap_or(DualVariables { lambda: [0.05; 4], mu: [0.05; 4] })
    });
    NodeBox { width: b.width, height: b.height, gamma: Some(gamma), duals: Some(duals) }
}
