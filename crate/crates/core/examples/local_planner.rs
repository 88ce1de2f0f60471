//! Velocity plans from the double-integrator local planner toward a near
//! and a far waypoint, executed with the kinematic walking model.

use nalgebra::Vector2;
use quadjump::nav::{plan_local, LocalPlannerConfig, LocomotionMode, TargetCommand};
use quadjump::sim::{simulate_walk, WalkConfig, WalkState};
use quadjump::world::{Pose2, RobotPoseEstimate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let cfg = LocalPlannerConfig::default();
    let pose = RobotPoseEstimate { x: 0.0, y: 0.0, z: 0.29, yaw: 0.0, velocity: [0.0; 4] };
    for (x, y, yaw) in [(0.2, 0.0, 0.0), (0.3, 0.2, 0.6), (10.0, 0.0, 0.0)] {
        let cmd = TargetCommand { waypoint: Vector2::new(x, y), yaw, z_obs: 0.0, mode: LocomotionMode::Walking };
        let plan = plan_local(&pose, &cmd, &cfg).expect("local plan");
        let end = plan.position.last().unwrap();
        let vmax = plan.velocity.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max);
        println!("target ({x}, {y}, {yaw}): plan ends at ({:.4}, {:.4}, {:.4}), peak speed {vmax:.3} m/s", end[0], end[1], end[2]);
        let walk = WalkConfig { lag: 0.05, ..WalkConfig::default() };
        let start = WalkState { pose: Pose2::new(0.0, 0.0, 0.0), ..WalkState::default() };
        let trace = simulate_walk(&start, &plan, cfg.horizon, &walk, &mut ChaCha8Rng::seed_from_u64(0));
        let last = trace.last().unwrap().pose;
        println!("  walked with 50 ms lag to ({:.4}, {:.4}, {:.4})", last.x, last.y, last.yaw);
    }
}
