//! Variable-complexity quadruped gait controller.
//!
//! A single complexity knob in `[0, 1]` widens the box that a fixed-size
//! genotype is mapped onto, from conservative gaits around hand-picked
//! centers to the full parameter ranges. Gaits are crawl trajectories (a
//! straight stance line plus a looping Hermite swing spline and a balancing
//! wag), optimized for speed and stability with NSGA-II against a
//! deterministic kinematic surrogate.

pub mod config;
pub mod evolution;
pub mod experiment;
pub mod gait_params;
pub mod kinematics;
pub mod metrics;
pub mod simulator;
pub mod trajectory;
pub mod vec3;

pub use gait_params::{Complexity, GaitPhenotype, Genotype, ParamId, ParamSpec, ParamTable};
pub use simulator::{Objectives, Simulator};
pub use trajectory::Leg;
pub use vec3::Vec3;
