//! A* on a mapped scenario with 0.4 m inflation, and the 0.3 m lookahead
//! waypoint seen from a few poses along the path.

use nalgebra::Vector2;
use quadjump::nav::{plan_global, select_waypoint, DEFAULT_INFLATION, DEFAULT_LOOKAHEAD};
use quadjump::world::{sense, Pose2, SensorConfig, WorldMaps, WorldScenario};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let scenario = WorldScenario::parse(include_str!("../scenarios/window13.scn")).unwrap();
    let mut maps = WorldMaps::for_scenario(&scenario);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for x in [0.5, 2.5, 4.0] {
        for y in [1.0, 2.0, 3.0] {
            for k in 0..4 {
                let pose = Pose2::new(x, y, k as f64 * std::f64::consts::FRAC_PI_2);
                maps.integrate(&sense(&scenario, &pose, &SensorConfig::default(), &mut rng));
            }
        }
    }
    let start = scenario.start_pose().position();
    let path = plan_global(&maps.occupancy, start, scenario.goal(), DEFAULT_INFLATION).expect("route through the window");
    println!("path of {} cells, length {:.3} m", path.points.len(), path.cost);
    for p in path.points.iter().step_by(8) {
        let wp = select_waypoint(&path, p, DEFAULT_LOOKAHEAD, &maps.heights);
        println!("  at ({:.2}, {:.2}) -> waypoint ({:.2}, {:.2}) obstacle height {:.2}", p.x, p.y, wp.point.x, wp.point.y, wp.z_obs);
    }
    let blocked = plan_global(&maps.occupancy, start, Vector2::new(5.0, 0.5), DEFAULT_INFLATION);
    println!("goal inside the wall: {:?}", blocked.err());
}
