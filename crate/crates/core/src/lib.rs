//! Walk-and-jump navigation for a planar quadruped.
//!
//! The robot is modelled in the sagittal plane with front and rear leg pairs
//! lumped into one leg each ([`model`]). Jumps through windows are found by
//! trapezoidal direct collocation over four contact phases ([`jump`]), with
//! obstacle avoidance written in dual form so that a feasible solution
//! certifies a minimum distance between the body's bounding box and the
//! window ([`collision`]). The resulting nonlinear program is solved by a
//! sparse interior point method ([`nlp`], [`sparse`]) with exact derivatives
//! from forward-mode automatic differentiation ([`ad`]).
//!
//! Around the jump, [`world`] builds occupancy and height maps from a
//! simulated depth sensor, [`nav`] plans globally with A* and locally with a
//! short velocity horizon, and [`sim`] tracks trajectories with a joint PD
//! controller on a penalty-contact simulation and runs whole episodes.
//! [`cli`] holds the `optimize`, `simulate` and `episode` commands.
//!
//! ```no_run
//! use quadjump::jump::config::JumpConfig;
//!
//! let cfg = JumpConfig::default();
//! let problem = cfg.problem().unwrap();
//! let traj = quadjump::jump::solve(&problem, &cfg.solver).unwrap();
//! println!("{:?}", traj.durations);
//! ```

pub mod ad;
pub mod cli;
pub mod collision;
pub mod jump;
pub mod model;
pub mod nav;
pub mod nlp;
pub mod sim;
pub mod sparse;
pub mod world;
