//! Time parameterization of the maneuver: a quintic rest-to-rest profile on
//! each path segment, deformation features interpolated along cumulative arc
//! length, and time derivatives of the formation Jacobian up to fourth order.

use crate::affine::{build_jacobian, DeformationFeatures, Mat3, Vec3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrajError {
    #[error("travel time must be positive, got tf - t0 = {0}")]
    NonPositiveDuration(f64),
    #[error("time {t} is outside the plan interval [{t0}, {tf}]")]
    TimeOutOfRange { t: f64, t0: f64, tf: f64 },
    #[error("a motion plan needs at least two waypoints")]
    TooFewWaypoints,
}

/// Quintic rest-to-rest profile `10 s^3 - 15 s^4 + 6 s^5` and its first four
/// derivatives with respect to the unit segment time `s in [0, 1]`.
pub fn gamma_profile(s: f64) -> [f64; 5] {
    [
        s * s * s * (10.0 - 15.0 * s + 6.0 * s * s),
        s * s * (30.0 - 60.0 * s + 30.0 * s * s),
        s * (60.0 - 180.0 * s + 120.0 * s * s),
        60.0 - 360.0 * s + 360.0 * s * s,
        -360.0 + 720.0 * s,
    ]
}

/// Finite-difference weights on the nodes `x` for derivatives of order
/// `0..=m` at the evaluation point `z` (Fornberg's recursion).
/// Returns `w[k][j]`: weight of node `j` in the order-`k` derivative.
pub(crate) fn fornberg_weights(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    assert!(n > m, "need more nodes than derivative order");
    let mut c = vec![vec![0.0f64; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    let mut out = vec![vec![0.0; n]; m + 1];
    for k in 0..=m {
        for j in 0..n {
            out[k][j] = c[j][k];
        }
    }
    out
}

/// Piecewise plan for the whole maneuver: polyline waypoints for the rigid
/// displacement, a quintic time profile per segment, and deformation features
/// that progress with cumulative path fraction.
#[derive(Debug, Clone)]
pub struct MotionPlan {
    pub waypoints: Vec<Vec3>,
    /// Path-length fraction of each segment; sums to 1.
    pub mu: Vec<f64>,
    /// Duration of each segment, `mu[l] * (tf - t0)`.
    pub segment_times: Vec<f64>,
    pub t0: f64,
    pub tf: f64,
    pub theta0: DeformationFeatures,
    pub thetaf: DeformationFeatures,
    /// Cumulative fraction at the start of each segment plus a trailing 1.
    cum: Vec<f64>,
}

impl MotionPlan {
    pub fn new(
        waypoints: Vec<Vec3>,
        t0: f64,
        tf: f64,
        theta0: DeformationFeatures,
        thetaf: DeformationFeatures,
    ) -> Result<Self, TrajError> {
        if waypoints.len() < 2 {
            return Err(TrajError::TooFewWaypoints);
        }
        if !(tf - t0 > 0.0) {
            return Err(TrajError::NonPositiveDuration(tf - t0));
        }
        let lengths: Vec<f64> = waypoints
            .windows(2)
            .map(|w| (w[1] - w[0]).norm())
            .collect();
        let total: f64 = lengths.iter().sum();
        // A stationary maneuver (deformation only) keeps a single segment
        // spanning the full duration.
        let mu: Vec<f64> = if total > 0.0 {
            lengths.iter().map(|&l| l / total).collect()
        } else {
            let mut mu = vec![0.0; lengths.len()];
            mu[0] = 1.0;
            mu
        };
        let segment_times: Vec<f64> = mu.iter().map(|&m| m * (tf - t0)).collect();
        let mut cum = Vec::with_capacity(mu.len() + 1);
        let mut acc = 0.0;
        cum.push(0.0);
        for &m in &mu {
            acc += m;
            cum.push(acc);
        }
        *cum.last_mut().unwrap() = 1.0;
        Ok(Self {
            waypoints,
            mu,
            segment_times,
            t0,
            tf,
            theta0,
            thetaf,
            cum,
        })
    }

    /// Same path and feature endpoints, rescaled onto `[t0, tf]`.
    pub fn with_times(&self, t0: f64, tf: f64) -> Result<Self, TrajError> {
        Self::new(self.waypoints.clone(), t0, tf, self.theta0, self.thetaf)
    }

    pub fn duration(&self) -> f64 {
        self.tf - self.t0
    }

    fn check_time(&self, t: f64) -> Result<f64, TrajError> {
        if t < self.t0 - 1e-9 || t > self.tf + 1e-9 {
            return Err(TrajError::TimeOutOfRange {
                t,
                t0: self.t0,
                tf: self.tf,
            });
        }
        Ok(t.clamp(self.t0, self.tf))
    }

    /// Active segment index and local unit time `s in [0, 1]` at `t`.
    /// Zero-duration segments are skipped.
    pub fn segment_at(&self, t: f64) -> Result<(usize, f64), TrajError> {
        let t = self.check_time(t)?;
        let mut start = self.t0;
        for (l, &dt) in self.segment_times.iter().enumerate() {
            if dt <= 0.0 {
                continue;
            }
            let end = start + dt;
            let last_active = self.segment_times[l + 1..].iter().all(|&d| d <= 0.0);
            if t < end || last_active {
                return Ok((l, ((t - start) / dt).clamp(0.0, 1.0)));
            }
            start = end;
        }
        unreachable!("segment times sum to the plan duration");
    }

    /// Rigid displacement of the formation center and its first four time
    /// derivatives at `t`.
    pub fn rigid_displacement(&self, t: f64) -> Result<[Vec3; 5], TrajError> {
        let (l, s) = self.segment_at(t)?;
        let dt = self.segment_times[l];
        let g = gamma_profile(s);
        let dw = self.waypoints[l + 1] - self.waypoints[l];
        let mut out = [Vec3::zeros(); 5];
        out[0] = self.waypoints[l] + dw * g[0];
        for k in 1..5 {
            out[k] = dw * (g[k] / dt.powi(k as i32));
        }
        Ok(out)
    }

    /// Deformation features at the start of segment `l`.
    fn theta_node(&self, l: usize) -> DeformationFeatures {
        self.theta0.lerp(&self.thetaf, self.cum[l])
    }

    /// Deformation features at `t`.
    pub fn theta_at(&self, t: f64) -> Result<DeformationFeatures, TrajError> {
        let (l, s) = self.segment_at(t)?;
        let g = gamma_profile(s);
        Ok(self.theta_node(l).lerp(&self.theta_node(l + 1), g[0]))
    }

    /// First four time derivatives of the deformation features at `t`,
    /// as componentwise feature deltas.
    pub fn theta_derivatives(&self, t: f64) -> Result<[DeformationFeatures; 4], TrajError> {
        let (l, s) = self.segment_at(t)?;
        let dt = self.segment_times[l];
        let g = gamma_profile(s);
        let d = self.theta_node(l).delta(&self.theta_node(l + 1));
        let mut out = [DeformationFeatures::identity(); 4];
        for k in 1..5 {
            let scale = g[k] / dt.powi(k as i32);
            let mut dk = d;
            for i in 0..3 {
                dk.lambda[i] *= scale;
            }
            for i in 0..6 {
                dk.beta[i] *= scale;
            }
            out[k - 1] = dk;
        }
        Ok(out)
    }

    /// Formation Jacobian `Q` and its first four time derivatives at `t`.
    ///
    /// Within a segment `Q` is a smooth function of the unit profile value
    /// `g = gamma(s)` alone, so its profile-space derivatives are taken with a
    /// nine-point finite-difference stencil in `g` and composed with the
    /// profile's time derivatives (Faa di Bruno through fourth order).
    pub fn jacobian_derivatives(&self, t: f64) -> Result<[Mat3; 5], TrajError> {
        let (l, s) = self.segment_at(t)?;
        let dt = self.segment_times[l];
        let g = gamma_profile(s);
        let ta = self.theta_node(l);
        let tb = self.theta_node(l + 1);
        let q_of_g = |gv: f64| build_jacobian(&ta.lerp(&tb, gv));

        // Profile-space derivatives f^(k)(g0), k = 0..4.
        let h = 1e-2;
        let nodes: Vec<f64> = (-4..=4).map(|j| g[0] + j as f64 * h).collect();
        let w = fornberg_weights(g[0], &nodes, 4);
        let samples: Vec<Mat3> = nodes.iter().map(|&gv| q_of_g(gv)).collect();
        let mut f = [Mat3::zeros(); 5];
        f[0] = q_of_g(g[0]);
        for k in 1..5 {
            let mut acc = Mat3::zeros();
            for (j, sample) in samples.iter().enumerate() {
                acc += sample * w[k][j];
            }
            f[k] = acc;
        }

        // Time derivatives of g within the segment.
        let gd: Vec<f64> = (1..5).map(|k| g[k] / dt.powi(k as i32)).collect();
        let (g1, g2, g3, g4) = (gd[0], gd[1], gd[2], gd[3]);

        let mut out = [Mat3::zeros(); 5];
        out[0] = f[0];
        out[1] = f[1] * g1;
        out[2] = f[2] * (g1 * g1) + f[1] * g2;
        out[3] = f[3] * (g1 * g1 * g1) + f[2] * (3.0 * g1 * g2) + f[1] * g3;
        out[4] = f[4] * (g1 * g1 * g1 * g1)
            + f[3] * (6.0 * g1 * g1 * g2)
            + f[2] * (3.0 * g2 * g2 + 4.0 * g1 * g3)
            + f[1] * g4;
        Ok(out)
    }

    /// Global desired position of an agent with initial position `r0`
    /// (initial formation center `d0`), and its first four time derivatives:
    /// `r_a = Q (r0 - d0) + d`.
    pub fn leader_reference(
        &self,
        t: f64,
        r0: &Vec3,
        d0: &Vec3,
    ) -> Result<[Vec3; 5], TrajError> {
        let q = self.jacobian_derivatives(t)?;
        let d = self.rigid_displacement(t)?;
        let rel = r0 - d0;
        let mut out = [Vec3::zeros(); 5];
        for k in 0..5 {
            out[k] = q[k] * rel + d[k];
        }
        Ok(out)
    }
}
