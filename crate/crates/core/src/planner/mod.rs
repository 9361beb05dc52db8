//! Maneuver planning: obstacle-aware waypoints for the containment ball,
//! quintic time profiles for displacement and deformation features, eigenvalue
//! safety bounds, and the minimal safe travel time.

pub mod astar;
pub mod grid;
pub mod safety;
pub mod traj;
pub mod travel_time;

pub use astar::{astar_waypoints, AstarError, InflatedGrid};
pub use grid::{GridError, OccupancyGrid};
pub use safety::{
    primary_axis, safety_bounds, shear_angles, validate_plan, PlanReport, SafetyBounds,
    SafetyError, TargetConfiguration,
};
pub use traj::{gamma_profile, MotionPlan, TrajError};
pub use travel_time::{solve_travel_time, TravelTimeError, TravelTimeSolution};
