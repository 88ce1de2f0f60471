use super::*;
use crate::ad::{weighted_hessian, LocalFn, Scalar};
use crate::model::ModelParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn window(sill: f64) -> WindowObstacle {
    WindowObstacle::new(0.4, 0.05, sill, 0.7, 1.6).unwrap()
}

fn problem() -> JumpProblem {
    JumpProblem::standing(ModelParams::default().with_payload(2.25), window(0.13), 0.03)
}

/// Same function with every input treated as curved.
struct Full<'a, F>(&'a F);

impl<F: LocalFn> LocalFn for Full<'_, F> {
    fn n_in(&self) -> usize {
        self.0.n_in()
    }
    fn n_out(&self) -> usize {
        self.0.n_out()
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        self.0.eval(x, out)
    }
}

fn check_curved<F: LocalFn>(f: &F, rng: &mut ChaCha8Rng) {
    let n = f.n_in();
    for _ in 0..3 {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..f.n_out()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut h1 = vec![0.0; n * n];
        let mut h2 = vec![0.0; n * n];
        weighted_hessian(f, &x, &w, &mut h1);
        weighted_hessian(&Full(f), &x, &w, &mut h2);
        for k in 0..n * n {
            assert!((h1[k] - h2[k]).abs() <= 1e-9 * (1.0 + h2[k].abs()), "entry {k}: {} vs {}", h1[k], h2[k]);
        }
    }
}

#[test]
fn curved_inputs_cover_every_second_derivative() {
    let p = ModelParams::default();
    let obs = window(0.13);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    check_curved(&Dynamics::new(p.clone()), &mut rng);
    check_curved(&FootVelocity::new(p.clone(), Leg::Front), &mut rng);
    check_curved(&FootCoord { params: p.clone(), leg: Leg::Back, axis: 0, with_offset: false }, &mut rng);
    check_curved(&FootCoord { params: p.clone(), leg: Leg::Back, axis: 1, with_offset: true }, &mut rng);
    check_curved(&Defect { inv_nodes: 0.1 }, &mut rng);
    check_curved(&KeypointBox { params: p.clone() }, &mut rng);
    check_curved(&NodeDual::new(p.clone(), obs.lower.clone()), &mut rng);
}

#[test]
fn dynamics_block_vanishes_at_forward_dynamics() {
    let p = ModelParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let q: [f64; 7] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let v: [f64; 7] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
        let u: [f64; 4] = std::array::from_fn(|_| rng.random_range(-20.0..20.0));
        let t: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..100.0));
        let a = model::forward_dynamics_generic(&p, &q, &v, &u, &t);
        let mut x = Vec::new();
        for part in [&q[..], &v, &a, &u, &t] {
            x.extend_from_slice(part);
        }
        let mut out = [0.0; 7];
        Dynamics::new(p.clone()).eval(&x, &mut out);
        assert!(out.iter().all(|r| r.abs() < 1e-9), "{out:?}");
    }
}

#[test]
fn pack_unpack_round_trip() {
    let prob = problem();
    let asm = assemble(&prob).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x: Vec<f64> = (0..asm.layout.n_vars).map(|_| rng.random_range(-1.0..1.0)).collect();
    let traj = asm.layout.unpack(&x, &prob.grid);
    let mut y = vec![0.0; asm.layout.n_vars];
    asm.layout.pack(&traj, &mut y);
    assert_eq!(x, y);
}

#[test]
fn layout_covers_every_variable_once() {
    let prob = problem();
    let asm = assemble(&prob).unwrap();
    let l = &asm.layout;
    let mut seen = vec![0u8; l.n_vars];
    let mut mark = |v: usize| seen[v] += 1;
    for nv in &l.nodes {
        nv.q.iter().chain(&nv.v).chain(&nv.a).chain(&nv.u).chain(&nv.t).for_each(|&v| mark(v));
        if let Some(b) = &nv.bbox {
            mark(b.w);
            mark(b.h);
            b.gamma.iter().chain(b.lambda.iter().flatten()).chain(b.mu.iter().flatten()).for_each(|&v| mark(v));
        }
    }
    l.durations.iter().for_each(|&v| mark(v));
    mark(l.delta);
    assert!(seen.iter().all(|&c| c == 1));
}

#[test]
fn friction_cone_rows() {
    let prob = problem();
    let asm = assemble(&prob).unwrap();
    let k = 3;
    let nv = &asm.layout.nodes[k];
    let rows: Vec<usize> = (0..asm.nlp.n_rows()).filter(|&r| asm.nlp.row_label(r) == ("friction", k)).collect();
    assert_eq!(rows.len(), 4);
    let feasible = |tx: f64, tz: f64| {
        let mut x = asm.nlp.start().to_vec();
        x[nv.t[0]] = tx;
        x[nv.t[1]] = tz;
        let mut c = vec![0.0; asm.nlp.n_rows()];
        asm.nlp.constraints(&x, &mut c);
        rows.iter().all(|&r| c[r] >= asm.nlp.row_bounds(r).0)
    };
    assert!(feasible(49.0, 100.0));
    assert!(feasible(-49.0, 100.0));
    assert!(!feasible(51.0, 100.0));
    assert!(!feasible(-51.0, 100.0));
}

#[test]
fn free_leg_forces_are_fixed_to_zero() {
    let prob = problem();
    let asm = assemble(&prob).unwrap();
    for (k, nv) in asm.layout.nodes.iter().enumerate() {
        let phase = prob.grid.phase_of_node(k);
        for leg in Leg::BOTH {
            if !phase.in_contact(leg) {
                let o = leg.force_offset();
                assert_eq!(asm.nlp.bounds(nv.t[o]), (0.0, 0.0));
                assert_eq!(asm.nlp.bounds(nv.t[o + 1]), (0.0, 0.0));
            }
        }
    }
}

#[test]
fn phases_partition_nodes_in_order() {
    let grid = PhaseGrid::default();
    let phases: Vec<usize> = (0..grid.n_nodes()).map(|k| grid.phase_of_node(k).index()).collect();
    assert!(phases.windows(2).all(|w| w[0] <= w[1]));
    for i in 0..4 {
        assert_eq!(phases.iter().filter(|&&p| p == i).count(), grid.intervals[i] + usize::from(i == 3));
    }
    let times = grid.node_times(&[0.2, 0.3, 0.4, 0.3]);
    assert_eq!(times.len(), grid.n_nodes());
    assert!((times[grid.phase_start(2)] - 0.5).abs() < 1e-15);
    assert!((times.last().unwrap() - 1.2).abs() < 1e-12);
}

fn random_traj(rng: &mut ChaCha8Rng, prob: &JumpProblem) -> JumpTrajectory {
    let asm = assemble(prob).unwrap();
    let x: Vec<f64> = (0..asm.layout.n_vars).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut t = asm.layout.unpack(&x, &prob.grid);
    t.durations = [0.2, 0.3, 0.4, 0.3];
    t
}

/// Term-by-term summation with explicit index loops.
fn naive_cost(t: &JumpTrajectory, w: &CostWeights, q_ref: &PlanarConfig) -> f64 {
    let mut j = 0.0;
    let qf = t.nodes.last().unwrap().state.q.to_array();
    let r = q_ref.to_array();
    for a in 0..7 {
        for b in 0..7 {
            j += (qf[a] - r[a]) * w.terminal[(a, b)] * (qf[b] - r[b]);
        }
    }
    for n in &t.nodes {
        for a in 0..7 {
            for b in 0..7 {
                j += n.state.qdot[a] * w.qdot[(a, b)] * n.state.qdot[b];
                j += n.xdot[7 + a] * w.qddot[(a, b)] * n.xdot[7 + b];
            }
        }
        for a in 0..4 {
            for b in 0..4 {
                j += n.forces.t[a] * w.force[(a, b)] * n.forces.t[b];
                j += n.u.tau[a] * w.input[(a, b)] * n.u.tau[b];
            }
        }
        if let Some(bx) = &n.bbox {
            j += w.box_size * (bx.width.powi(2) + bx.height.powi(2));
        }
    }
    j + w.time[0] * t.durations[0] + w.time[1] * t.durations[1] + w.delta * t.delta
}

#[test]
fn cost_matches_naive_summation_and_nlp_objective() {
    let mut prob = problem();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    // a dense terminal weight exercises the non-diagonal path
    let m = Mat7::from_fn(|_, _| rng.random_range(-1.0..1.0));
    prob.weights.terminal = m * m.transpose();
    let t = random_traj(&mut rng, &prob);
    let a = evaluate_cost(&t, &prob.weights, &prob.q_ref);
    let b = naive_cost(&t, &prob.weights, &prob.q_ref);
    assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "{a} vs {b}");
    let asm = assemble(&prob).unwrap();
    let mut x = vec![0.0; asm.layout.n_vars];
    asm.layout.pack(&t, &mut x);
    let f = asm.nlp.objective(&x);
    assert!((f - a).abs() <= 1e-9 * a.abs().max(1.0), "{f} vs {a}");
}

#[test]
fn cost_of_zero_trajectory_is_zero() {
    let prob = problem();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut t = random_traj(&mut rng, &prob);
    for n in &mut t.nodes {
        n.state = PlanarState::default();
        n.xdot = [0.0; NX];
        n.u = ControlInput::default();
        n.forces = ContactForces::default();
        if let Some(b) = &mut n.bbox {
            b.width = 0.0;
            b.height = 0.0;
        }
    }
    t.nodes.last_mut().unwrap().state.q = prob.q_ref;
    t.durations = [0.0; 4];
    t.delta = 0.0;
    assert_eq!(evaluate_cost(&t, &prob.weights, &prob.q_ref), 0.0);
}

#[test]
fn doubling_inputs_quadruples_input_cost() {
    let prob = problem();
    let w = CostWeights {
        terminal: Mat7::zeros(),
        qdot: Mat7::zeros(),
        qddot: Mat7::zeros(),
        force: Matrix4::zeros(),
        input: Matrix4::identity() * 0.3,
        time: [0.0, 0.0],
        delta: 0.0,
        box_size: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut t = random_traj(&mut rng, &prob);
    let j1 = evaluate_cost(&t, &w, &prob.q_ref);
    for n in &mut t.nodes {
        n.u.tau = n.u.tau.map(|v| 2.0 * v);
    }
    let j2 = evaluate_cost(&t, &w, &prob.q_ref);
    assert!((j2 - 4.0 * j1).abs() <= 1e-12 * j2);
}

#[test]
fn invalid_problems_are_rejected() {
    let mut prob = problem();
    prob.x0.q.f1 = 3.0;
    assert!(matches!(assemble(&prob), Err(JumpError::InconsistentProblem(_))));
    let mut prob = problem();
    prob.x0.qdot[0] = 0.1;
    assert!(matches!(assemble(&prob), Err(JumpError::InconsistentProblem(_))));
    let mut prob = problem();
    prob.grid.intervals[2] = 1;
    assert!(matches!(assemble(&prob), Err(JumpError::InconsistentProblem(_))));
    let mut prob = problem();
    prob.weights.qdot[(0, 1)] = 1.0;
    assert!(matches!(assemble(&prob), Err(JumpError::InconsistentProblem(_))));
    let mut prob = problem();
    prob.landing_mu_scale = 0.0;
    assert!(matches!(assemble(&prob), Err(JumpError::InconsistentProblem(_))));
}

#[test]
fn resample_hits_knots_midpoints_and_count() {
    let prob = problem();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut t = random_traj(&mut rng, &prob);
    // every node and midpoint falls on the 1 ms grid
    t.durations = [0.3, 0.3, 0.5, 0.3];
    let times = prob.grid.node_times(&t.durations);
    for (n, &tk) in t.nodes.iter_mut().zip(&times) {
        n.t = tk;
    }
    let dense = resample(&t, 1000.0);
    assert_eq!(dense.len(), 1401);
    assert!((dense.t.last().unwrap() - t.duration()).abs() < 1e-12);
    assert_eq!(dense.boundaries, t.phase_boundaries());
    for (k, n) in t.nodes.iter().enumerate().take(t.nodes.len() - 1) {
        let (q, qd, tau) = dense.sample(n.t);
        let q_ref = n.state.q.to_array();
        for i in 0..7 {
            assert!((q[i] - q_ref[i]).abs() < 1e-9, "node {k}");
            assert!((qd[i] - n.state.qdot[i]).abs() < 1e-9);
        }
        for i in 0..4 {
            assert!((tau[i] - n.u.tau[i]).abs() < 1e-9);
        }
        let m = &t.nodes[k + 1];
        let (q, _, _) = dense.sample(0.5 * (n.t + m.t));
        let qm = m.state.q.to_array();
        for i in 0..7 {
            assert!((q[i] - 0.5 * (q_ref[i] + qm[i])).abs() < 1e-9);
        }
    }
}

#[test]
fn trajectory_file_round_trip() {
    let prob = problem();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let t = random_traj(&mut rng, &prob);
    let mut buf = Vec::new();
    io::write_trajectory(&t, &prob.params, &prob.obstacle, &mut buf).unwrap();
    let back = io::read_trajectory(buf.as_slice()).unwrap();
    assert_eq!(back.durations, t.durations);
    assert_eq!(back.nodes.len(), t.nodes.len());
    for (a, b) in back.nodes.iter().zip(&t.nodes) {
        assert_eq!(a.state, b.state);
        assert_eq!(a.xdot, b.xdot);
        assert_eq!(a.u, b.u);
        assert_eq!(a.forces, b.forces);
        assert_eq!(a.phase, b.phase);
        assert_eq!(a.bbox.as_ref().map(|x| (x.width, x.height)), b.bbox.as_ref().map(|x| (x.width, x.height)));
    }
}

#[test]
fn malformed_trajectory_files_are_rejected() {
    assert!(io::read_trajectory("".as_bytes()).is_err());
    assert!(io::read_trajectory("1 2 3\n".as_bytes()).is_err());
    let prob = problem();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let t = random_traj(&mut rng, &prob);
    let mut buf = Vec::new();
    io::write_trajectory(&t, &prob.params, &prob.obstacle, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap().replace("all_feet", "hopping");
    assert!(io::read_trajectory(text.as_bytes()).is_err());
}

#[test]
fn initial_guess_is_consistent_with_layout() {
    let prob = problem();
    let g = initial_trajectory(&prob);
    assert_eq!(g.nodes.len(), prob.grid.n_nodes());
    assert_eq!(g.nodes[0].state, prob.x0);
    let last = g.nodes.last().unwrap();
    assert!(last.state.q.x >= prob.obstacle.x_obs);
    for (k, n) in g.nodes.iter().enumerate() {
        assert_eq!(n.bbox.is_some(), prob.avoidance_nodes().contains(&k));
    }
}

#[test]
fn apex_bound_rejects_unreachable_sills() {
    let params = ModelParams::default().with_payload(2.25);
    let obs = WindowObstacle::new(0.4, 0.05, 1.5, 0.7, 2.6).unwrap();
    let prob = JumpProblem::standing(params, obs, 0.03);
    assert!(prob.apex_bound() < prob.required_apex());
    let err = solve(&prob, &SolverConfig::default()).unwrap_err();
    assert!(matches!(err, JumpError::Infeasible { .. }), "{err}");
    assert!(problem().apex_bound() > problem().required_apex());
}
