//! Minimal safe travel time: the smallest horizon for which the forced
//! linear error dynamics keep every agent within its share of the deviation
//! budget, found by multiplicative expansion and integer bisection.

use super::traj::{MotionPlan, TrajError};
use crate::sim::{plan_forcing, simulate_error_dynamics};
use crate::topology::{compute_h, CommTopology, TopologyError};
use crate::vehicle::Gains;
use crate::Vec3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TravelTimeError {
    #[error("gains fail the stability conditions of the closed-loop quartic")]
    UnstableGains,
    #[error("topology matrix L is not Hurwitz; the error dynamics diverge")]
    UnstableTopology,
    #[error("deviation budget fraction rho = {0} must lie in (0, 1)")]
    BadRho(f64),
    #[error("no feasible travel time at or below the cap of {cap} s (deviation {deviation} m exceeds budget {budget} m)")]
    NoFeasibleTime {
        cap: f64,
        deviation: f64,
        budget: f64,
    },
    #[error(transparent)]
    Traj(#[from] TrajError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Debug, Clone)]
pub struct SolveSettings {
    /// Search resolution in seconds.
    pub resolution: f64,
    /// Largest horizon tried before giving up, in seconds.
    pub cap: f64,
    /// Upper bound on the error-dynamics integration step.
    pub base_dt: f64,
}

impl Default for SolveSettings {
    fn default() -> Self {
        Self {
            resolution: 1.0,
            cap: 1e4,
            base_dt: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TravelTimeSolution {
    /// Minimal feasible horizon (seconds past the plan's start time).
    pub tf_star: f64,
    /// Worst linear-model deviation at the solution.
    pub max_deviation: f64,
    /// Budget the deviation was held under, `(1 - rho) * delta`.
    pub budget: f64,
}

fn error_dt(plan: &MotionPlan, base_dt: f64) -> f64 {
    let min_mu = plan
        .mu
        .iter()
        .copied()
        .filter(|&m| m > 0.0)
        .fold(1.0, f64::min);
    // Resolve both the whole horizon and the shortest segment.
    base_dt
        .min(plan.duration() / 2000.0)
        .min(min_mu * plan.duration() / 50.0)
        .max(1e-4)
}

/// Worst deviation of the forced linear error dynamics when the template
/// plan is rescaled to horizon `horizon` seconds.
pub fn horizon_deviation(
    template: &MotionPlan,
    topology: &CommTopology,
    leader_positions: &[Vec3],
    gains: &Gains,
    horizon: f64,
    base_dt: f64,
) -> Result<f64, TravelTimeError> {
    let plan = template.with_times(template.t0, template.t0 + horizon)?;
    let h = compute_h(topology)?;
    let d0 = plan.waypoints[0];
    let forcing = plan_forcing(&plan, leader_positions, &d0);
    let dt = error_dt(&plan, base_dt);
    let res = simulate_error_dynamics(
        &topology.l,
        &h,
        gains,
        forcing,
        plan.t0,
        plan.tf,
        dt,
        None,
    );
    Ok(res.max_deviation)
}

/// Finds the smallest horizon (to `settings.resolution`) keeping the linear
/// error response within `(1 - rho) * delta`; `leader_positions` are the
/// initial leader positions in the topology's leader ordering.
pub fn solve_travel_time(
    template: &MotionPlan,
    topology: &CommTopology,
    leader_positions: &[Vec3],
    gains: &Gains,
    delta: f64,
    rho: f64,
    settings: &SolveSettings,
) -> Result<TravelTimeSolution, TravelTimeError> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(TravelTimeError::BadRho(rho));
    }
    if !crate::sim::routh_stable(gains) {
        return Err(TravelTimeError::UnstableGains);
    }
    let l_hurwitz = crate::topology::complex_eigenvalues_bounded(&topology.l)
        .iter()
        .all(|e| e.re < -1e-9);
    if !l_hurwitz {
        return Err(TravelTimeError::UnstableTopology);
    }

    let budget = (1.0 - rho) * delta;
    let deviation_at = |horizon: f64| {
        horizon_deviation(
            template,
            topology,
            leader_positions,
            gains,
            horizon,
            settings.base_dt,
        )
    };

    // Multiplicative expansion to bracket a feasible horizon.
    let mut hi = settings.resolution.max(1.0);
    let mut hi_dev = deviation_at(hi)?;
    let mut lo = 0.0;
    while hi_dev > budget {
        if hi >= settings.cap {
            return Err(TravelTimeError::NoFeasibleTime {
                cap: settings.cap,
                deviation: hi_dev,
                budget,
            });
        }
        lo = hi;
        hi = (hi * 2.0).min(settings.cap);
        hi_dev = deviation_at(hi)?;
    }

    // Bisection on multiples of the resolution: lo infeasible (or 0), hi
    // feasible.
    let res = settings.resolution;
    let mut dev_at_hi = hi_dev;
    while hi - lo > res + 1e-9 {
        let mid = (((lo + hi) / 2.0) / res).round() * res;
        if mid <= lo || mid >= hi {
            break;
        }
        let dev = deviation_at(mid)?;
        if dev <= budget {
            hi = mid;
            dev_at_hi = dev;
        } else {
            lo = mid;
        }
    }

    Ok(TravelTimeSolution {
        tf_star: hi,
        max_deviation: dev_at_hi,
        budget,
    })
}
