use super::*;
use crate::jump::{NodeBox, SolverReport, TrajNode, STAND_HIP, STAND_KNEE};
use crate::model::{ContactForces, ControlInput, PlanarState, NX};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn clock(phase: JumpPhase, progress: f64) -> PhaseClock {
    PhaseClock { phase, progress }
}

fn no_feedforward_scaling() -> GainSchedule {
    GainSchedule { landing_scale: 1.0, ..GainSchedule::default() }
}

#[test]
fn zero_error_passes_feedforward_through() {
    let p = ModelParams::default();
    let q = [0.1, 1.2, -0.3, 1.5];
    let tau_des = [3.0, -4.0, 5.0, -6.0];
    for phase in JumpPhase::ALL {
        let u = pd_feedforward(&q, &[0.0; NU], &tau_des, &q, &[0.0; NU], clock(phase, 0.5), &no_feedforward_scaling(), &p);
        assert_eq!(u.tau, tau_des);
    }
}

#[test]
fn proportional_term_on_one_joint() {
    let p = ModelParams::default();
    let mut s = GainSchedule::default();
    s.kp[0] = [50.0; NU];
    s.kd[0] = [0.0; NU];
    let q_des = [0.1, 0.0, 0.0, 0.0];
    let u = pd_feedforward(&q_des, &[0.0; NU], &[0.0; NU], &[0.0; NU], &[0.0; NU], clock(JumpPhase::AllFeetContact, 0.0), &s, &p);
    assert!((u.tau[0] - 5.0).abs() < 1e-12);
    assert_eq!(&u.tau[1..], &[0.0; 3]);
}

#[test]
fn landing_gains_blend_linearly() {
    let mut s = GainSchedule::default();
    s.kp[3] = [80.0; NU];
    s.landing_kp = [20.0; NU];
    let (kp, _) = s.gains(JumpPhase::Landing, 0.5);
    assert_eq!(kp, [50.0; NU]);
    let (kp0, _) = s.gains(JumpPhase::Landing, 0.0);
    let (kp1, _) = s.gains(JumpPhase::Landing, 1.0);
    assert_eq!((kp0[0], kp1[0]), (80.0, 20.0));
    s.interpolate_landing = false;
    assert_eq!(s.gains(JumpPhase::Landing, 0.5).0, [80.0; NU]);
}

#[test]
fn landing_feedforward_is_scaled() {
    let p = ModelParams::default();
    let s = GainSchedule::default();
    let tau_des = [10.0; NU];
    let z = [0.0; NU];
    let u = pd_feedforward(&z, &z, &tau_des, &z, &z, clock(JumpPhase::Landing, 0.3), &s, &p);
    assert_eq!(u.tau, [10.0 * s.landing_scale; NU]);
    let u = pd_feedforward(&z, &z, &tau_des, &z, &z, clock(JumpPhase::Flight, 0.3), &s, &p);
    assert_eq!(u.tau, tau_des);
}

#[test]
fn output_is_clamped_to_torque_limits() {
    let p = ModelParams::default();
    let s = GainSchedule::default();
    let z = [0.0; NU];
    let u = pd_feedforward(&[10.0, -10.0, 10.0, -10.0], &z, &z, &z, &z, clock(JumpPhase::AllFeetContact, 0.0), &s, &p);
    for j in 0..NU {
        assert_eq!(u.tau[j].abs(), p.torque_limit_of(j));
    }
}

#[test]
fn invalid_schedules_are_rejected() {
    let mut s = GainSchedule::default();
    s.landing_scale = 0.0;
    assert!(s.validate().is_err());
    let mut s = GainSchedule::default();
    s.kd[2][1] = -1.0;
    assert!(s.validate().is_err());
    assert!(GainSchedule::default().validate().is_ok());
}

#[test]
fn controller_period_must_divide_into_steps() {
    assert_eq!(SimConfig::default().substeps().unwrap(), 10);
    let bad = SimConfig { dt: 3e-4, ..SimConfig::default() };
    assert!(bad.substeps().is_err());
    let bad = SimConfig { control_hz: 0.0, ..SimConfig::default() };
    assert!(bad.substeps().is_err());
}

#[test]
fn stretched_reference_time_is_continuous() {
    let b = [0.4, 0.7, 1.1, 1.6];
    for shift in [-0.02, 0.0, 0.02] {
        assert_eq!(reference_time(0.3, &b, shift), 0.3);
        assert!((reference_time(0.7, &b, shift) - 0.7).abs() < 1e-12);
        assert!((reference_time(1.1 + shift, &b, shift) - 1.1).abs() < 1e-12);
        assert!((reference_time(1.5 + shift, &b, shift) - 1.5).abs() < 1e-12);
    }
}

fn plan(velocity: [f64; 3], seconds: f64) -> VelocityPlan {
    let n = 31;
    VelocityPlan { dt: seconds / (n - 1) as f64, velocity: vec![velocity; n], position: vec![[0.0; 3]; n] }
}

#[test]
fn constant_forward_velocity_advances_the_base() {
    let trace = simulate_walk(&WalkState::default(), &plan([0.3, 0.0, 0.0], 1.0), 1.0, &WalkConfig::default(), &mut ChaCha8Rng::seed_from_u64(0));
    let last = trace.last().unwrap();
    assert!((last.pose.x - 0.3).abs() < 1e-9);
    assert!(last.pose.y.abs() < 1e-12);
    assert!((last.t - 1.0).abs() < 1e-9);
}

#[test]
fn constant_yaw_rate_turns_the_heading() {
    let trace = simulate_walk(&WalkState::default(), &plan([0.0, 0.0, PI / 2.0], 1.0), 1.0, &WalkConfig::default(), &mut ChaCha8Rng::seed_from_u64(0));
    assert!((trace.last().unwrap().pose.yaw - PI / 2.0).abs() < 1e-9);
}

#[test]
fn lagged_step_response_reaches_63_percent_at_the_time_constant() {
    let cfg = WalkConfig { lag: 0.2, ..WalkConfig::default() };
    let trace = simulate_walk(&WalkState::default(), &plan([1.0, 0.0, 0.0], 1.0), 0.2, &cfg, &mut ChaCha8Rng::seed_from_u64(0));
    let v = trace.last().unwrap().body_velocity[0];
    assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-9, "{v}");
}

#[test]
fn world_velocity_follows_the_heading() {
    let heading = PI / 3.0;
    let n = 11;
    let p = VelocityPlan {
        dt: 0.1,
        velocity: vec![[0.2 * heading.cos(), 0.2 * heading.sin(), 0.0]; n],
        position: vec![[0.0, 0.0, heading]; n],
    };
    let start = WalkState { pose: Pose2::new(0.0, 0.0, heading), ..WalkState::default() };
    let trace = simulate_walk(&start, &p, 1.0, &WalkConfig::default(), &mut ChaCha8Rng::seed_from_u64(0));
    let last = trace.last().unwrap();
    assert!((last.body_velocity[0] - 0.2).abs() < 1e-12 && last.body_velocity[1].abs() < 1e-12);
    assert!((last.pose.x - 0.2 * heading.cos()).abs() < 1e-9);
    assert!((last.pose.y - 0.2 * heading.sin()).abs() < 1e-9);
}

/// A "jump" that never moves: every node is the standing pose holding
/// the static equilibrium torques.
fn stationary_trajectory(params: &ModelParams) -> JumpTrajectory {
    let q = model::standing_config(params, 0.0, STAND_HIP, STAND_KNEE);
    let (u, f) = static_equilibrium(&q, params).unwrap();
    let durations = [0.25; 4];
    let nodes = (0..=20)
        .map(|k| {
            let t = k as f64 * 0.05;
            let phase = JumpPhase::from_index(((t / 0.25) as usize).min(3)).unwrap();
            TrajNode {
                t,
                phase,
                state: PlanarState { q, qdot: [0.0; NQ] },
                xdot: [0.0; NX],
                u: ControlInput { tau: u.tau },
                forces: ContactForces { t: f.t },
                bbox: (phase == JumpPhase::Flight).then_some(NodeBox { width: 0.5, height: 0.3, gamma: None, duals: None }),
            }
        })
        .collect();
    JumpTrajectory { nodes, durations, delta: 0.0, report: SolverReport::default() }
}

#[test]
fn standing_reference_is_held_at_rest() {
    let params = ModelParams::default();
    let traj = stationary_trajectory(&params);
    let obstacle = WindowObstacle::new(2.0, 0.05, 0.1, 0.7, 1.6).unwrap();
    let run = simulate_jump(&traj, &params, &no_feedforward_scaling(), &SimConfig::default(), &obstacle).unwrap();
    let q0 = traj.nodes[0].state.q.to_array();
    let last = run.samples.last().unwrap();
    // the penalty ground lets the feet sink by about m g / (2 k)
    let sink = params.total_mass() * params.gravity / (2.0 * ContactModel::default().stiffness);
    assert!((last.q[1] - (q0[1] - sink)).abs() < 2e-3, "z {} vs {}", last.q[1], q0[1]);
    assert!(last.q[0].abs() < 1e-3 && last.q[2].abs() < 1e-2);
    for j in 3..NQ {
        assert!((last.q[j] - q0[j]).abs() < 1e-2);
    }
    assert!(run.metrics.landing_x.is_none());
    assert_eq!(run.metrics.torque_violations, 0);
}

#[test]
fn tracking_file_has_all_joint_columns() {
    let params = ModelParams::default();
    let traj = stationary_trajectory(&params);
    let obstacle = WindowObstacle::new(2.0, 0.05, 0.1, 0.7, 1.6).unwrap();
    let run = simulate_jump(&traj, &params, &GainSchedule::default(), &SimConfig::default(), &obstacle).unwrap();
    let mut buf = Vec::new();
    write_tracking(&run, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with(&format!("# {TRACKING_SCHEMA}")));
    let header = text.lines().find(|l| l.starts_with("# columns")).unwrap();
    for j in ["f1", "f2", "b1", "b2"] {
        for c in ["q_des", "q", "qd_des", "qd", "tau_des", "tau"] {
            assert!(header.split_whitespace().any(|h| h == format!("{j}_{c}")), "{j}_{c}");
        }
    }
    let width = header.split_whitespace().count() - 2;
    let rows: Vec<_> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), run.samples.len());
    assert!(rows.iter().all(|r| r.split_whitespace().count() == width));
}

#[test]
fn samples_have_increasing_times() {
    let params = ModelParams::default();
    let traj = stationary_trajectory(&params);
    let obstacle = WindowObstacle::new(2.0, 0.05, 0.1, 0.7, 1.6).unwrap();
    let run = simulate_jump(&traj, &params, &GainSchedule::default(), &SimConfig::default(), &obstacle).unwrap();
    assert!(run.samples.windows(2).all(|w| w[1].t > w[0].t));
    assert!(run.samples.iter().all(|s| s.clearance > 1.0));
}

#[test]
fn point_clearance_is_signed() {
    let p = crate::world::Prism { center: Vector2::new(0.0, 0.0), half: Vector2::new(1.0, 0.5), yaw: 0.0, z_lo: 0.0, z_hi: 1.0 };
    assert!((point_clearance(&Vector2::new(2.0, 0.0), &[p]) - 1.0).abs() < 1e-12);
    assert!((point_clearance(&Vector2::new(0.0, 0.0), &[p]) + 0.5).abs() < 1e-12);
    assert!((point_clearance(&Vector2::new(4.0, 4.5), &[p]) - 5.0).abs() < 1e-12);
}
