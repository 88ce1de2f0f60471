mod common;

use nalgebra::{Vector2, Vector3};
use proptest::prelude::*;
use quadjump::collision::{BoundingBox, ConvexRegion, DualAvoidance, DualVariables};
use quadjump::model::{mass_matrix, potential_energy, JumpPhase, ModelParams, PlanarConfig, NU};
use quadjump::nav::{is_valid_mode_sequence, plan_global, plan_local, LocalPlannerConfig, LocomotionMode, TargetCommand};
use quadjump::sim::{pd_feedforward, GainSchedule, PhaseClock};
use quadjump::world::{wrap_angle, GridGeometry, OccupancyGrid, RobotPoseEstimate, WorldMaps};

use common::*;

fn config_within_limits() -> impl Strategy<Value = PlanarConfig> {
    let p = ModelParams::default();
    let (lo, hi) = (p.joint_angle_min, p.joint_angle_max);
    (-2.0..2.0f64, 0.1..1.0f64, -1.0..1.0f64, lo[0]..hi[0], lo[1]..hi[1], lo[0]..hi[0], lo[1]..hi[1])
        .prop_map(|(x, z, th, a, b, c, d)| PlanarConfig::from_array([x, z, th, a, b, c, d]))
}

fn region_and_box() -> impl Strategy<Value = (BoundingBox, ConvexRegion)> {
    let boxes = |r: f64| {
        (-r..r, -r..r, -1.5..1.5f64, 0.05..0.8f64, 0.05..0.8f64)
            .prop_map(|(x, z, p, w, h)| BoundingBox { center: Vector2::new(x, z), pitch: p, width: w, height: h })
    };
    (boxes(0.5), boxes(2.0)).prop_map(|(b, o)| (b, o.region()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mass_matrix_is_symmetric_positive_definite(q in config_within_limits()) {
        let d = mass_matrix(&q, &ModelParams::default());
        prop_assert!((d - d.transpose()).amax() <= 1e-12);
        prop_assert!(d.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn base_translation_changes_only_potential(q in config_within_limits(), dx in -1.0..1.0f64, dz in -0.5..0.5f64) {
        let p = ModelParams::default();
        let mut a = q.to_array();
        a[0] += dx;
        a[1] += dz;
        let moved = PlanarConfig::from_array(a);
        prop_assert!((mass_matrix(&q, &p) - mass_matrix(&moved, &p)).amax() <= 1e-12);
        let dv = potential_energy(&moved, &p) - potential_energy(&q, &p);
        prop_assert!((dv - p.total_mass() * p.gravity * dz).abs() <= 1e-9);
    }

    #[test]
    fn box_vertices_lie_on_the_box_boundary((b, _) in region_and_box()) {
        let r = b.rotation();
        let l = b.l_vector();
        for v in b.vertices() {
            let local = r.transpose() * (v - b.center);
            let lz = [local.x, local.y, -local.x, -local.y];
            for k in 0..4 {
                prop_assert!(lz[k] <= l[k] + 1e-10);
            }
        }
    }

    #[test]
    fn feasible_duals_certify_the_margin((b, obs) in region_and_box(), lambda in prop::array::uniform4(0.0..1.0f64), shrink in 0.5..0.999f64) {
        let a: Vector2<f64> = (0..4).map(|k| obs.normals[k] * lambda[k]).sum();
        prop_assume!(a.norm() > 1e-6);
        let lambda = lambda.map(|l| l * shrink / a.norm());
        let a = a * shrink / a.norm();
        let (s, c) = b.pitch.sin_cos();
        let (r0, r1) = (-(c * a.x + s * a.y), s * a.x - c * a.y);
        let mu = [r0.max(0.0), r1.max(0.0), (-r0).max(0.0), (-r1).max(0.0)];
        let d = DualVariables { lambda, mu };
        let mut g = -((mu[0] + mu[2]) * b.width + (mu[1] + mu[3]) * b.height) * 0.5;
        for k in 0..4 {
            g += lambda[k] * (obs.normals[k].dot(&b.center) - obs.offsets[k]);
        }
        if g <= 1e-4 {
            return Ok(());
        }
        let d_min = g - 1e-5;
        prop_assert!(DualAvoidance::new(obs.clone(), d_min).violation(&b, &d) <= 1e-12);
        let bp: Vec<P2> = b.vertices().iter().map(|v| [v.x, v.y]).collect();
        let op: Vec<P2> = obs.vertices().iter().map(|v| [v.x, v.y]).collect();
        prop_assert!(polygon_distance(&bp, &op) >= d_min - 1e-6);
    }

    #[test]
    fn controller_output_respects_torque_limits(
        q_des in prop::array::uniform4(-3.0..3.0f64),
        q in prop::array::uniform4(-3.0..3.0f64),
        qd in prop::array::uniform4(-40.0..40.0f64),
        tau in prop::array::uniform4(-100.0..100.0f64),
        phase in 0usize..4,
        progress in 0.0..1.0f64,
    ) {
        let p = ModelParams::default();
        let clock = PhaseClock { phase: JumpPhase::from_index(phase).unwrap(), progress };
        let u = pd_feedforward(&q_des, &[0.0; NU], &tau, &q, &qd, clock, &GainSchedule::default(), &p);
        for j in 0..NU {
            prop_assert!(u.tau[j].abs() <= p.torque_limit_of(j));
        }
    }

    #[test]
    fn wrapped_angles_lie_in_half_open_interval(a in -50.0..50.0f64) {
        let w = wrap_angle(a);
        prop_assert!(w > -std::f64::consts::PI && w <= std::f64::consts::PI);
        prop_assert!(((a - w) / std::f64::consts::TAU - ((a - w) / std::f64::consts::TAU).round()).abs() < 1e-9);
    }

    #[test]
    fn mode_sequence_check_matches_the_grammar(seq in prop::collection::vec(0usize..3, 0..12)) {
        let modes: Vec<LocomotionMode> = seq.iter().map(|&i| [LocomotionMode::Walking, LocomotionMode::Standing, LocomotionMode::Jumping][i]).collect();
        let names: Vec<&str> = modes.iter().map(|m| m.name()).collect();
        prop_assert_eq!(is_valid_mode_sequence(&modes), mode_grammar(&names));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn map_updates_never_lower_heights_and_agree_with_occupancy(
        batches in prop::collection::vec(prop::collection::vec((0.0..4.0f64, 0.0..3.0f64, 0.0..0.6f64), 1..40), 1..6),
    ) {
        let mut maps = WorldMaps::new([0.0, 0.0, 4.0, 3.0], 0.13);
        let mut prev = maps.heights.tiles().to_vec();
        for batch in &batches {
            let pts: Vec<Vector3<f64>> = batch.iter().map(|&(x, y, z)| Vector3::new(x, y, z)).collect();
            maps.integrate(&pts);
            let now = maps.heights.tiles().to_vec();
            prop_assert!(now.iter().zip(&prev).all(|(a, b)| a >= b));
            prev = now;
        }
        let g = maps.occupancy.geometry;
        for j in 0..g.ny {
            for i in 0..g.nx {
                if !maps.occupancy.is_free(i, j) {
                    prop_assert!(maps.heights.height_at(&g.center(i, j)) > 0.13);
                }
            }
        }
    }

    #[test]
    fn astar_matches_dijkstra_on_small_grids(
        cells in prop::collection::vec(prop::bool::weighted(0.08), 400),
        s in 0usize..400,
        t in 0usize..400,
    ) {
        let res = 0.1;
        let inflation = 0.15;
        let blocked = inflate_brute(20, 20, &cells, res, inflation);
        prop_assume!(!blocked[s] && !blocked[t]);
        let geometry = GridGeometry::covering([0.0, 0.0, 2.0, 2.0], res);
        let free: Vec<bool> = cells.iter().map(|c| !c).collect();
        let grid = OccupancyGrid::from_cells(geometry, &free);
        let (s, t) = ((s % 20, s / 20), (t % 20, t / 20));
        let planned = plan_global(&grid, geometry.center(s.0, s.1), geometry.center(t.0, t.1), inflation);
        match dijkstra(20, 20, &blocked, s, t) {
            None => prop_assert!(planned.is_err()),
            Some(c) => {
                let p = planned.unwrap();
                prop_assert!((p.cost - c * res).abs() <= 1e-9);
                for cell in &p.cells {
                    prop_assert!(!occupied_within(20, 20, &cells, res, *cell, inflation));
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn local_plans_respect_velocity_limits(dx in -3.0..3.0f64, dy in -3.0..3.0f64, yaw in -3.0..3.0f64, heading in -3.0..3.0f64) {
        let cfg = LocalPlannerConfig::default();
        let pose = RobotPoseEstimate { x: 0.0, y: 0.0, z: 0.29, yaw: heading, velocity: [0.0; 4] };
        let cmd = TargetCommand { waypoint: Vector2::new(dx, dy), yaw, z_obs: 0.0, mode: LocomotionMode::Walking };
        let plan = plan_local(&pose, &cmd, &cfg).unwrap();
        for v in &plan.velocity {
            prop_assert!(v[0].abs() <= cfg.v_max + 1e-6 && v[1].abs() <= cfg.v_max + 1e-6);
            prop_assert!(v[2].abs() <= cfg.yaw_rate_max + 1e-6);
        }
    }
}
