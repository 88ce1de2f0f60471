//! Full navigation episode in the bundled window scenario: walk around a
//! box, stop in front of the 13 cm window, jump, and continue to the goal.

use quadjump::sim::{run_episode, EpisodeConfig, JumpCache};
use quadjump::world::WorldScenario;

fn main() {
    let scenario = WorldScenario::parse(include_str!("../scenarios/window13.scn")).unwrap();
    let mut cache = JumpCache::new();
    let log = match run_episode(&scenario, &EpisodeConfig::default(), &mut cache) {
        Ok(log) => log,
        Err(e) => {
            println!("episode failed: {}", e.failure);
            *e.log
        }
    };
    let s = &log.summary;
    println!("goal reached {} after {:.1} s, {} jump(s), {} global plans", s.goal_reached, s.time, s.jumps, s.replans);
    let modes: Vec<&str> = s.mode_segments.iter().map(|m| m.name()).collect();
    println!("modes: {}", modes.join(" -> "));
    for j in &log.jumps {
        let m = &j.run.metrics;
        println!(
            "jump at t = {:.1} s from {:.3} m: landed at {:.3} m, clearance {:.4} m, pitch {:.3}",
            j.t_start,
            j.distance,
            m.landing_x.unwrap_or(f64::NAN),
            m.min_clearance,
            m.final_pitch
        );
    }
    for r in log.records.iter().step_by(25) {
        println!("  {:5.1} s {:>8} ({:.2}, {:.2})", r.t, r.mode.name(), r.pose.x, r.pose.y);
    }
}
