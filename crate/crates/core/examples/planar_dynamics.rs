//! Kinematics and dynamics of the planar model: a standing pose, the
//! torques that hold it, and an energy check on a short passive flight.

use quadjump::model::{
    forward_kinematics, kinetic_energy, mass_matrix, phase_dynamics, potential_energy, standing_config,
    static_equilibrium, ContactForces, ControlInput, JumpPhase, ModelParams, PlanarState, NQ,
};

fn main() {
    let params = ModelParams::default();
    let q = standing_config(&params, 0.0, -0.8, 1.6);
    let kp = forward_kinematics(&q, &params);
    println!("standing base height {:.4} m", q.z);
    println!("front foot ({:.3}, {:.3}), back foot ({:.3}, {:.3})", kp.foot_front.x, kp.foot_front.y, kp.foot_back.x, kp.foot_back.y);

    let d = mass_matrix(&q, &params);
    let eig = d.symmetric_eigenvalues();
    println!("mass matrix eigenvalues in [{:.4}, {:.4}]", eig.min(), eig.max());

    let (u, f) = static_equilibrium(&q, &params).expect("standing pose is not singular");
    println!("holding torques {:?}", u.tau.map(|t| (t * 100.0).round() / 100.0));
    println!("vertical ground forces front {:.2} N, back {:.2} N", f.t[1], f.t[3]);

    // A passive flight conserves energy; semi-implicit Euler shows a small drift.
    let mut s = PlanarState { q, qdot: [0.5, 1.0, 0.3, 1.0, -1.0, 0.5, -0.5] };
    s.q.z += 0.3;
    let e0 = kinetic_energy(&s, &params) + potential_energy(&s.q, &params);
    let dt = 1e-4;
    for _ in 0..2000 {
        let xd = phase_dynamics(&s, &ControlInput::default(), &ContactForces::default(), JumpPhase::Flight, &params).unwrap();
        let mut qa = s.q.to_array();
        for i in 0..NQ {
            s.qdot[i] += dt * xd[NQ + i];
            qa[i] += dt * s.qdot[i];
        }
        s.q = quadjump::model::PlanarConfig::from_array(qa);
    }
    let e1 = kinetic_energy(&s, &params) + potential_energy(&s.q, &params);
    println!("energy after 0.2 s of flight: {e0:.5} J -> {e1:.5} J");
}
