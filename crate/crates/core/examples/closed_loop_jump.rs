//! Optimizes the 13 cm jump, tracks it with the scheduled PD controller on
//! a compliant ground, and sweeps the landing time by ±20 ms.

use quadjump::cli::{landing_sweep, UPRIGHT_PITCH};
use quadjump::jump::config::JumpConfig;
use quadjump::jump::solve;
use quadjump::sim::{simulate_jump, GainSchedule, SimConfig};

fn main() {
    let cfg = JumpConfig::default();
    let params = cfg.params();
    let obstacle = cfg.obstacle().unwrap();
    let traj = solve(&cfg.problem().unwrap(), &cfg.solver).expect("13 cm jump");
    let gains = GainSchedule::default();
    let sim = SimConfig::default();
    let run = simulate_jump(&traj, &params, &gains, &sim, &obstacle).unwrap();
    let m = &run.metrics;
    println!("joint angle rms {:?} rad", m.rms_joint.map(|v| (v * 1e4).round() / 1e4));
    println!("landing x {:.3} (window at {:.2}), final pitch {:.3}", m.landing_x.unwrap_or(f64::NAN), obstacle.x_obs, m.final_pitch);
    println!("min clearance {:.4} m, peak torque {:.0}% of limit", m.min_clearance, 100.0 * m.max_torque_ratio);
    for e in &run.events {
        println!("  {:.3} s {:?} {:?}", e.t, e.leg, e.kind);
    }
    println!("landing-time sweep:");
    for row in landing_sweep(&traj, &params, &gains, &sim, &obstacle) {
        let pitch = row.run.as_ref().map(|r| r.metrics.final_pitch).unwrap_or(f64::NAN);
        let blend = if row.interpolate { "blended" } else { "fixed  " };
        println!("  {blend} {:+.3} s  final pitch {pitch:+.3}  ok {}", row.shift, row.passes(UPRIGHT_PITCH));
    }
}
