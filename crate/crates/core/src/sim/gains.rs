//! Gain stability: Routh–Hurwitz test of the per-agent closed-loop quartic,
//! an explicit root-finding cross-check, and the collective spectrum built
//! from the topology Laplacian's eigenvalues.

use crate::vehicle::Gains;
use nalgebra::Complex;
use serde::Serialize;

/// Roots of a monic polynomial with complex coefficients
/// `s^n + c[n-1] s^{n-1} + ... + c[0]` by Durand–Kerner iteration.
pub fn polynomial_roots(coeffs: &[Complex<f64>]) -> Vec<Complex<f64>> {
    let n = coeffs.len();
    if n == 0 {
        return Vec::new();
    }
    let eval = |s: Complex<f64>| {
        let mut p = Complex::new(1.0, 0.0);
        for &c in coeffs.iter().rev() {
            p = p * s + c;
        }
        p
    };
    // Standard non-real, non-unit-modulus starting points.
    let base = Complex::new(0.4, 0.9);
    let mut roots: Vec<Complex<f64>> = (0..n).map(|k| base.powu(k as u32 + 1)).collect();
    for _ in 0..500 {
        let mut max_step = 0.0f64;
        for i in 0..n {
            let mut denom = Complex::new(1.0, 0.0);
            for j in 0..n {
                if j != i {
                    denom *= roots[i] - roots[j];
                }
            }
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
            max_step = max_step.max(step.norm());
        }
        if max_step < 1e-13 {
            break;
        }
    }
    roots
}

/// Roots of `s^4 + k1 s^3 + k2 s^2 + k3 s + k4`.
pub fn closed_loop_roots(gains: &Gains) -> Vec<Complex<f64>> {
    polynomial_roots(&[
        Complex::new(gains.k4, 0.0),
        Complex::new(gains.k3, 0.0),
        Complex::new(gains.k2, 0.0),
        Complex::new(gains.k1, 0.0),
    ])
}

/// Routh–Hurwitz conditions for the quartic
/// `s^4 + k1 s^3 + k2 s^2 + k3 s + k4`.
pub fn routh_stable(gains: &Gains) -> bool {
    let (k1, k2, k3, k4) = (gains.k1, gains.k2, gains.k3, gains.k4);
    k1 > 0.0 && k3 > 0.0 && k4 > 0.0 && k1 * k2 * k3 > k3 * k3 + k1 * k1 * k4
}

#[derive(Debug, Clone, Serialize)]
pub struct GainStabilityReport {
    pub routh_stable: bool,
    /// Quartic roots as (re, im).
    pub roots: Vec<(f64, f64)>,
    pub roots_stable: bool,
    /// Routh and root verdicts agree.
    pub consistent: bool,
    pub stable: bool,
}

/// Checks one gain tuple by Routh–Hurwitz and by explicit roots of the
/// closed-loop quartic; `stable` requires both to agree on stability.
pub fn check_gain_stability(gains: &Gains) -> GainStabilityReport {
    let routh = routh_stable(gains);
    let roots = closed_loop_roots(gains);
    let roots_stable = roots.iter().all(|r| r.re < -1e-9);
    GainStabilityReport {
        routh_stable: routh,
        roots: roots.iter().map(|r| (r.re, r.im)).collect(),
        roots_stable,
        consistent: routh == roots_stable,
        stable: routh && roots_stable,
    }
}

/// Eigenvalues of the collective error dynamics, computed from its block
/// structure: for each eigenvalue `l` of the topology matrix `L`, the four
/// roots of `s^4 - l (k1 s^3 + k2 s^2 + k3 s + k4)`.
pub fn collective_spectrum(l_eigs: &[(f64, f64)], gains: &Gains) -> Vec<Complex<f64>> {
    let mut out = Vec::with_capacity(4 * l_eigs.len());
    for &(re, im) in l_eigs {
        let l = Complex::new(re, im);
        out.extend(polynomial_roots(&[
            -l * gains.k4,
            -l * gains.k3,
            -l * gains.k2,
            -l * gains.k1,
        ]));
    }
    out
}

/// True when every collective eigenvalue lies strictly in the left
/// half-plane.
pub fn collective_stable(l_eigs: &[(f64, f64)], gains: &Gains) -> bool {
    collective_spectrum(l_eigs, gains)
        .iter()
        .all(|s| s.re < -1e-9)
}
