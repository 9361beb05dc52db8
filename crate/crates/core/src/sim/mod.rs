//! Collective simulation: gain certificates, linear error dynamics for
//! travel-time solving, and the full nonlinear closed loop with safety
//! auditing.

pub mod error_dyn;
pub mod gains;
pub mod nonlinear;

pub use error_dyn::{plan_forcing, simulate_error_dynamics, ErrorSimResult, ErrorStack};
pub use gains::{
    check_gain_stability, closed_loop_roots, collective_spectrum, collective_stable,
    polynomial_roots, routh_stable, GainStabilityReport,
};
pub use nonlinear::{
    audit_safety, simulate_nonlinear, AuditReport, CheckResult, SampleRecord, SimError,
    SimSettings, SwarmState, TrajectoryLog,
};
