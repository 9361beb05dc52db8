//! Planning and closed-loop simulation toolkit for affine-transformation
//! maneuvers of a multi-quadcopter swarm.
//!
//! The pipeline is: build the leader/follower communication topology from the
//! initial formation ([`topology`]), plan the rigid-body displacement and
//! deformation-feature trajectories through an obstacle field ([`planner`]),
//! solve for the minimal safe travel time, and simulate the full nonlinear
//! closed loop of feedback-linearized quadcopters ([`sim`]), auditing the
//! separation / containment / deviation guarantees along the way.

pub mod affine;
pub mod pipeline;
pub mod planner;
pub mod scenario;
pub mod sim;
pub mod topology;
pub mod vehicle;

pub use affine::{DeformationFeatures, Mat3, Vec3};
