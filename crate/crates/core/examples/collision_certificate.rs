//! Dual certificate of separation between a pitched bounding box and a
//! window sill, compared against the exact polygon distance.

use nalgebra::Vector2;
use quadjump::collision::{
    dual_witness, max_dual_distance, signed_distance_oracle, BoundingBox, DualAvoidance, WindowObstacle,
};

fn main() {
    let window = WindowObstacle::new(0.5, 0.05, 0.13, 0.7, 1.2).unwrap();
    let sill = &window.lower;
    for (x, z, pitch) in [(0.2, 0.35, 0.0), (0.45, 0.5, 0.2), (0.5, 0.3, -0.1), (0.8, 0.3, 0.4)] {
        let b = BoundingBox { center: Vector2::new(x, z), pitch, width: 0.5, height: 0.25 };
        let exact = signed_distance_oracle(&b.vertices(), &sill.vertices()).unwrap();
        let dual = max_dual_distance(&b, sill).map(|(d, _)| d);
        print!("box at ({x:.2}, {z:.2}) pitch {pitch:+.2}: distance {exact:.4}");
        match dual {
            Ok(d) => print!(", best dual bound {d:.4}"),
            Err(e) => print!(", dual solve failed: {e}"),
        }
        // A witness scaled just inside the unit dual ball certifies 90% of the distance.
        if let Some(w) = dual_witness(&b, sill, 0.99) {
            let d_min = 0.9 * exact;
            let certifies = DualAvoidance::new(sill.clone(), d_min).violation(&b, &w) <= 1e-9;
            print!(", witness certifies {d_min:.4}: {certifies}");
        }
        println!("; window clearance {:.4}", window.clearance(&b));
    }
}
