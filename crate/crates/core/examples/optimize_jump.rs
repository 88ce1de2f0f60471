//! Optimizes the jump through a 13 cm window with the sensor payload and
//! prints the phase durations, apex and clearance certificate.
//!
//! `cargo run --release --example optimize_jump [sill_height]`

use quadjump::jump::config::JumpConfig;
use quadjump::jump::{cost_breakdown, solve};

fn main() {
    let mut cfg = JumpConfig::default();
    if let Some(h) = std::env::args().nth(1) {
        cfg.window.sill = h.parse().expect("sill height in metres");
    }
    let problem = cfg.problem().unwrap();
    let obstacle = cfg.obstacle().unwrap();
    let params = cfg.params();
    let traj = match solve(&problem, &cfg.solver) {
        Ok(t) => t,
        Err(e) => {
            println!("no jump over a {:.2} m sill: {e}", cfg.window.sill);
            return;
        }
    };
    let r = &traj.report;
    println!("{} after {} iterations in {:.1} s", r.status, r.iterations, r.seconds);
    println!("phase durations {:?}", traj.durations.map(|d| (d * 1000.0).round() / 1000.0));
    let apex = traj.nodes.iter().map(|n| n.state.q.z).fold(f64::MIN, f64::max);
    println!("apex {:.3} m, final x {:.3} m (window at {:.2})", apex, traj.final_state().q.x, obstacle.x_obs);
    for (k, c) in traj.certificate(&params, &obstacle) {
        println!("  node {k:2} {:>10}  clearance {c:.4}", traj.nodes[k].phase.name());
    }
    for (name, v) in cost_breakdown(&traj, &problem.weights, &problem.q_ref).terms() {
        println!("  cost {name:>12} {v:.4}");
    }
}
