//! Builds the occupancy grid and height map of the bundled window scenario
//! from a scripted sweep of the depth sensor and prints them as text.

use quadjump::world::{sense, Pose2, SensorConfig, WorldMaps, WorldScenario};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let scenario = WorldScenario::parse(include_str!("../scenarios/window13.scn")).unwrap();
    let mut maps = WorldMaps::for_scenario(&scenario);
    let sensor = SensorConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut points = 0;
    for (x, y) in [(0.5, 2.0), (3.0, 0.6), (3.0, 3.4), (4.2, 2.0)] {
        for k in 0..8 {
            let pose = Pose2::new(x, y, k as f64 * std::f64::consts::FRAC_PI_4);
            let cloud = sense(&scenario, &pose, &sensor, &mut rng);
            points += cloud.len();
            maps.integrate(&cloud);
        }
    }
    println!("{points} points, {} cells observed", maps.occupancy.observed_count());
    let g = maps.occupancy.geometry;
    println!("occupancy ('#' blocked, '^' jumpable, '.' free or unseen):");
    for j in (0..g.ny).rev() {
        let row: String = (0..g.nx)
            .map(|i| match maps.occupancy.observed_height(i, j) {
                _ if !maps.occupancy.is_free(i, j) => '#',
                Some(h) if h > 0.02 => '^',
                _ => '.',
            })
            .collect();
        println!("{row}");
    }
    let h = &maps.heights;
    let tall = h.tiles().iter().cloned().fold(0.0, f64::max);
    println!("highest tile {tall:.3} m; tile under the window sill {:.3} m", h.height_at(&nalgebra::Vector2::new(5.0, 2.0)));
}
