//! Inter-agent safety bounds on the deformation eigenvalues, the shear-angle
//! choice that maximizes the minimum projected separation, and sampled
//! validation of an assembled plan against those bounds.

use super::traj::MotionPlan;
use crate::affine::{build_jacobian, deformation_eigvecs, DeformationFeatures, Mat3, Vec3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SafetyError {
    #[error("agents {0} and {1} are coincident")]
    CoincidentAgents(usize, usize),
    #[error("need at least two agents")]
    TooFewAgents,
    #[error("delta, epsilon, and r_max must be positive")]
    NonPositiveParameter,
    #[error("containment radius r_max = {r_max} must exceed delta + epsilon = {margin}")]
    RadiusTooSmall { r_max: f64, margin: f64 },
    #[error(
        "infeasible safety window: lambda_min = {lambda_min} >= lambda_max = {lambda_max} \
         (d_min = {d_min}, d_max = {d_max})"
    )]
    InfeasibleWindow {
        lambda_min: f64,
        lambda_max: f64,
        d_min: f64,
        d_max: f64,
    },
    #[error(
        "target deformation features disagree with the target Jacobian: \
         residual {residual} exceeds {tolerance}"
    )]
    InconsistentTarget { residual: f64, tolerance: f64 },
}

/// Primary deformation axis for shear angles `(0, beta5, beta6)`; this is the
/// eigenvector the separation guarantee projects onto.
pub fn primary_axis(beta5: f64, beta6: f64) -> Vec3 {
    deformation_eigvecs(0.0, beta5, beta6).0
}

fn pair_deltas(positions: &[Vec3]) -> Result<Vec<Vec3>, SafetyError> {
    if positions.len() < 2 {
        return Err(SafetyError::TooFewAgents);
    }
    let mut deltas = Vec::with_capacity(positions.len() * (positions.len() - 1) / 2);
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            let d = positions[i] - positions[j];
            if d.norm() < 1e-12 {
                return Err(SafetyError::CoincidentAgents(i, j));
            }
            deltas.push(d);
        }
    }
    Ok(deltas)
}

fn min_abs_projection(deltas: &[Vec3], u: &Vec3) -> f64 {
    deltas
        .iter()
        .map(|d| d.dot(u).abs())
        .fold(f64::INFINITY, f64::min)
}

/// Shear angles `(beta5, beta6)` in `[0, pi)^2` maximizing the minimum over
/// agent pairs of the absolute projection of the pair separation onto the
/// primary deformation axis. Grid search at 1e-3 rad, then local refinement.
pub fn shear_angles(positions: &[Vec3]) -> Result<(f64, f64), SafetyError> {
    let deltas = pair_deltas(positions)?;

    let eval = |b5: f64, b6: f64| min_abs_projection(&deltas, &primary_axis(b5, b6));

    let coarse = 1e-3;
    let n = (std::f64::consts::PI / coarse).ceil() as usize;
    let (mut best_val, mut best_b5, mut best_b6) = (0..n)
        .into_par_iter()
        .map(|i5| {
            let b5 = i5 as f64 * coarse;
            let mut row_best = (f64::NEG_INFINITY, b5, 0.0);
            for i6 in 0..n {
                let b6 = i6 as f64 * coarse;
                let v = eval(b5, b6);
                if v > row_best.0 {
                    row_best = (v, b5, b6);
                }
            }
            row_best
        })
        .reduce(
            || (f64::NEG_INFINITY, 0.0, 0.0),
            |a, b| {
                // Deterministic tie-break on the angles themselves.
                if b.0 > a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) {
                    b
                } else {
                    a
                }
            },
        );

    // Shrinking-window grid refinement around the coarse optimum.
    let mut step = coarse / 10.0;
    for _ in 0..3 {
        let (c5, c6) = (best_b5, best_b6);
        for i5 in -20..=20 {
            let b5 = c5 + i5 as f64 * step;
            for i6 in -20..=20 {
                let b6 = c6 + i6 as f64 * step;
                let v = eval(b5, b6);
                if v > best_val {
                    best_val = v;
                    best_b5 = b5;
                    best_b6 = b6;
                }
            }
        }
        step /= 10.0;
    }
    let pi = std::f64::consts::PI;
    Ok((best_b5.rem_euclid(pi), best_b6.rem_euclid(pi)))
}

/// Separation / containment bounds on the deformation eigenvalues.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SafetyBounds {
    pub delta: f64,
    pub epsilon: f64,
    pub r_max: f64,
    pub beta5: f64,
    pub beta6: f64,
    /// Minimum pairwise separation projected onto the primary axis.
    pub d_min: f64,
    /// Maximum initial distance of an agent from the formation center.
    pub d_max: f64,
    /// `2 (delta + epsilon) / d_min`; the first eigenvalue must stay above it.
    pub lambda_min: f64,
    /// `(r_max - delta - epsilon) / d_max`; all eigenvalue magnitudes must
    /// stay at or below it.
    pub lambda_max: f64,
}

/// Computes the eigenvalue safety window for the initial formation
/// `positions` with center `d0` and the chosen shear angles.
pub fn safety_bounds(
    positions: &[Vec3],
    d0: &Vec3,
    delta: f64,
    epsilon: f64,
    r_max: f64,
    beta5: f64,
    beta6: f64,
) -> Result<SafetyBounds, SafetyError> {
    if delta <= 0.0 || epsilon <= 0.0 || r_max <= 0.0 {
        return Err(SafetyError::NonPositiveParameter);
    }
    if r_max <= delta + epsilon {
        return Err(SafetyError::RadiusTooSmall {
            r_max,
            margin: delta + epsilon,
        });
    }
    let deltas = pair_deltas(positions)?;
    let d_min = min_abs_projection(&deltas, &primary_axis(beta5, beta6));
    let d_max = positions
        .iter()
        .map(|p| (p - d0).norm())
        .fold(0.0, f64::max);
    let lambda_min = 2.0 * (delta + epsilon) / d_min;
    let lambda_max = (r_max - delta - epsilon) / d_max;
    if lambda_min >= lambda_max {
        return Err(SafetyError::InfeasibleWindow {
            lambda_min,
            lambda_max,
            d_min,
            d_max,
        });
    }
    Ok(SafetyBounds {
        delta,
        epsilon,
        r_max,
        beta5,
        beta6,
        d_min,
        d_max,
        lambda_min,
        lambda_max,
    })
}

/// Final pose of the formation: target Jacobian and rigid displacement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetConfiguration {
    pub q_f: Mat3,
    pub d_f: Vec3,
}

impl TargetConfiguration {
    /// Checks that the final deformation features reproduce the target
    /// Jacobian to 1e-9.
    pub fn check_consistency(&self, theta_f: &DeformationFeatures) -> Result<(), SafetyError> {
        let residual = (build_jacobian(theta_f) - self.q_f).norm();
        let tolerance = 1e-9;
        if residual > tolerance {
            return Err(SafetyError::InconsistentTarget {
                residual,
                tolerance,
            });
        }
        Ok(())
    }
}

/// Outcome of sampling a plan against its eigenvalue bounds.
#[derive(Debug, Clone, Serialize)]
pub struct PlanReport {
    pub ok: bool,
    /// Time and description of the first bound violation, if any.
    pub first_violation: Option<(f64, String)>,
    pub min_lambda1: f64,
    pub max_abs_lambda: f64,
    /// Residual of the final Jacobian against the target (when given).
    pub target_jacobian_residual: Option<f64>,
    /// Residual of the final displacement against the target (when given).
    pub target_displacement_residual: Option<f64>,
}

/// Samples the deformation-feature trajectory at `sample_dt` and checks the
/// eigenvalue window `lambda1 > lambda_min`, `|lambda_i| <= lambda_max` at
/// every sample, plus final-configuration consistency to 1e-9 when a target
/// is supplied. Violations are report entries, not errors.
pub fn validate_plan(
    plan: &MotionPlan,
    bounds: &SafetyBounds,
    target: Option<&TargetConfiguration>,
    sample_dt: f64,
) -> PlanReport {
    let mut first_violation: Option<(f64, String)> = None;
    let mut min_lambda1 = f64::INFINITY;
    let mut max_abs_lambda = f64::NEG_INFINITY;

    let steps = ((plan.duration() / sample_dt).ceil() as usize).max(1);
    for k in 0..=steps {
        let t = plan.t0 + plan.duration() * (k as f64 / steps as f64);
        let theta = plan.theta_at(t).expect("sample inside plan interval");
        min_lambda1 = min_lambda1.min(theta.lambda[0]);
        for &l in &theta.lambda {
            max_abs_lambda = max_abs_lambda.max(l.abs());
        }
        if first_violation.is_none() {
            if theta.lambda[0] <= bounds.lambda_min {
                first_violation = Some((
                    t,
                    format!(
                        "lambda1 = {} at or below lambda_min = {}",
                        theta.lambda[0], bounds.lambda_min
                    ),
                ));
            } else if let Some(&l) = theta
                .lambda
                .iter()
                .find(|l| l.abs() > bounds.lambda_max)
            {
                first_violation =
                    Some((t, format!("|lambda| = {} exceeds lambda_max = {}", l.abs(), bounds.lambda_max)));
            }
        }
    }

    let mut target_jacobian_residual = None;
    let mut target_displacement_residual = None;
    if let Some(target) = target {
        let theta_f = plan.theta_at(plan.tf).expect("tf inside plan interval");
        let qr = (build_jacobian(&theta_f) - target.q_f).norm();
        let d_f = plan.rigid_displacement(plan.tf).expect("tf inside plan interval")[0];
        let dr = (d_f - target.d_f).norm();
        if first_violation.is_none() && qr > 1e-9 {
            first_violation = Some((plan.tf, format!("final Jacobian residual {qr} exceeds 1e-9")));
        }
        if first_violation.is_none() && dr > 1e-9 {
            first_violation =
                Some((plan.tf, format!("final displacement residual {dr} exceeds 1e-9")));
        }
        target_jacobian_residual = Some(qr);
        target_displacement_residual = Some(dr);
    }

    PlanReport {
        ok: first_violation.is_none(),
        first_violation,
        min_lambda1,
        max_abs_lambda,
        target_jacobian_residual,
        target_displacement_residual,
    }
}
