//! Exact linear-algebra kernel: 3-2-1 Euler rotations, the deformation
//! decomposition of the Jacobian `Q`, simplex rank / containment tests, and
//! leader-coefficient computation.
//!
//! Everything here is a pure function of its inputs.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Relative singular-value cutoff used by [`rank_fn`].
pub const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum AffineError {
    #[error("points do not form a non-degenerate {expected}-simplex (rank {got})")]
    DegenerateSimplex { expected: usize, got: usize },
    #[error("leader positions violate the rank condition: rank {got}, need {expected}")]
    RankDeficientLeaders { expected: usize, got: usize },
    #[error("agent {agent} lies {distance:.3e} m off the leaders' hyperplane (tolerance {tolerance:.3e})")]
    OffHyperplane {
        agent: usize,
        distance: f64,
        tolerance: f64,
    },
    #[error("singular edge matrix in barycentric solve")]
    SingularEdgeMatrix,
    #[error("dimension n must be 1, 2, or 3 (got {0})")]
    BadDimension(usize),
}

/// Deformation feature vector: three stretch eigenvalues and six angles.
/// `beta[0..3]` are the rigid-rotation Euler angles, `beta[3..6]` the
/// eigenvector-frame Euler angles of the symmetric stretch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeformationFeatures {
    pub lambda: [f64; 3],
    pub beta: [f64; 6],
}

impl DeformationFeatures {
    pub fn identity() -> Self {
        Self {
            lambda: [1.0, 1.0, 1.0],
            beta: [0.0; 6],
        }
    }

    pub fn new(lambda: [f64; 3], beta: [f64; 6]) -> Self {
        Self { lambda, beta }
    }

    /// Componentwise `self + s * (other - self)`.
    pub fn lerp(&self, other: &Self, s: f64) -> Self {
        let mut out = *self;
        for i in 0..3 {
            out.lambda[i] += s * (other.lambda[i] - self.lambda[i]);
        }
        for i in 0..6 {
            out.beta[i] += s * (other.beta[i] - self.beta[i]);
        }
        out
    }

    /// Componentwise difference `other - self`, as a feature vector.
    pub fn delta(&self, other: &Self) -> Self {
        let mut out = Self::identity();
        for i in 0..3 {
            out.lambda[i] = other.lambda[i] - self.lambda[i];
        }
        for i in 0..6 {
            out.beta[i] = other.beta[i] - self.beta[i];
        }
        out
    }
}

/// Rotation matrix for standard 3-2-1 Euler angles.
pub fn rotation_matrix(x: f64, y: f64, z: f64) -> Mat3 {
    let (sx, cx) = x.sin_cos();
    let (sy, cy) = y.sin_cos();
    let (sz, cz) = z.sin_cos();
    Mat3::new(
        cy * cz,
        cy * sz,
        -sy,
        sx * sy * cz - cx * sz,
        sx * sy * sz + cx * cz,
        sx * cy,
        cx * sy * cz + sx * sz,
        cx * sy * sz - sx * cz,
        cx * cy,
    )
}

/// Eigenvectors of the deformation matrix: `u_i = R^T(b4,b5,b6) e_i`.
pub fn deformation_eigvecs(beta4: f64, beta5: f64, beta6: f64) -> (Vec3, Vec3, Vec3) {
    let rt = rotation_matrix(beta4, beta5, beta6).transpose();
    (
        rt.column(0).into(),
        rt.column(1).into(),
        rt.column(2).into(),
    )
}

/// Symmetric stretch factor `U_D = sum_i lambda_i u_i u_i^T = R^T Lambda R`
/// with `R = R(b4,b5,b6)`.
pub fn deformation_matrix(theta: &DeformationFeatures) -> Mat3 {
    let r = rotation_matrix(theta.beta[3], theta.beta[4], theta.beta[5]);
    let lambda = Mat3::from_diagonal(&Vector3::new(
        theta.lambda[0],
        theta.lambda[1],
        theta.lambda[2],
    ));
    r.transpose() * lambda * r
}

/// Jacobian `Q = Phi(Theta) = R_r(b1,b2,b3) U_D`.
pub fn build_jacobian(theta: &DeformationFeatures) -> Mat3 {
    let rr = rotation_matrix(theta.beta[0], theta.beta[1], theta.beta[2]);
    rr * deformation_matrix(theta)
}

/// Rank of the edge-vector matrix `[p_2 - p_1, ..., p_{n+1} - p_1]`,
/// with singular values below `RANK_TOL * sigma_max` treated as zero.
pub fn rank_fn(points: &[Vec3], n: usize) -> Result<usize, AffineError> {
    if !(1..=3).contains(&n) {
        return Err(AffineError::BadDimension(n));
    }
    assert_eq!(points.len(), n + 1, "need n+1 points");
    let mut m = DMatrix::<f64>::zeros(3, n);
    for (k, p) in points[1..].iter().enumerate() {
        m.set_column(k, &DVector::from_column_slice((p - points[0]).as_slice()));
    }
    let svals = m.singular_values();
    let smax = svals.max();
    if smax == 0.0 {
        return Ok(0);
    }
    Ok(svals.iter().filter(|&&s| s > RANK_TOL * smax).count())
}

/// Orthonormal basis of the affine hull spanned by `points` relative to
/// `points[0]`, by Gram-Schmidt on the edge vectors. Returns `n` basis
/// vectors.
pub(crate) fn affine_frame(points: &[Vec3], n: usize) -> Result<Vec<Vec3>, AffineError> {
    let mut basis: Vec<Vec3> = Vec::with_capacity(n);
    let scale = points[1..]
        .iter()
        .map(|p| (p - points[0]).norm())
        .fold(0.0, f64::max)
        .max(1.0);
    for p in &points[1..] {
        let mut v = p - points[0];
        for b in &basis {
            v -= b * v.dot(b);
        }
        if v.norm() > RANK_TOL * scale {
            basis.push(v.normalize());
        }
        if basis.len() == n {
            break;
        }
    }
    if basis.len() != n {
        return Err(AffineError::DegenerateSimplex {
            expected: n,
            got: basis.len(),
        });
    }
    Ok(basis)
}

fn frame_coords(basis: &[Vec3], origin: &Vec3, p: &Vec3) -> Vec<f64> {
    basis.iter().map(|b| (p - origin).dot(b)).collect()
}

/// Containment function: the sum of `sign(det D_i)` over the n+1 matrices
/// formed by replacing vertex `i` with the query point `c`. `|result| = n+1`
/// iff `c` is strictly inside the simplex. For `n < 3` the determinants are
/// evaluated in the simplex's affine coordinate frame.
pub fn containment_fn(points: &[Vec3], c: &Vec3, n: usize) -> Result<i32, AffineError> {
    if !(1..=3).contains(&n) {
        return Err(AffineError::BadDimension(n));
    }
    assert_eq!(points.len(), n + 1, "need n+1 vertices");
    let got = rank_fn(points, n)?;
    if got != n {
        return Err(AffineError::DegenerateSimplex { expected: n, got });
    }

    // Homogeneous coordinates of each vertex (and of c) in an n-D frame.
    let coords: Vec<Vec<f64>>;
    let c_coords: Vec<f64>;
    if n == 3 {
        coords = points.iter().map(|p| vec![p.x, p.y, p.z]).collect();
        c_coords = vec![c.x, c.y, c.z];
    } else {
        let basis = affine_frame(points, n)?;
        coords = points
            .iter()
            .map(|p| frame_coords(&basis, &points[0], p))
            .collect();
        c_coords = frame_coords(&basis, &points[0], c);
    }

    let scale = points[1..]
        .iter()
        .map(|p| (p - points[0]).norm())
        .fold(1.0, f64::max);
    let det_tol = RANK_TOL * scale.powi((n + 1) as i32);

    let det_of = |cols: &[&[f64]]| -> f64 {
        match n {
            1 => {
                let m = nalgebra::Matrix2::new(cols[0][0], cols[1][0], 1.0, 1.0);
                m.determinant()
            }
            2 => {
                let m = Matrix3::new(
                    cols[0][0], cols[1][0], cols[2][0], cols[0][1], cols[1][1], cols[2][1], 1.0,
                    1.0, 1.0,
                );
                m.determinant()
            }
            _ => {
                let m = Matrix4::new(
                    cols[0][0], cols[1][0], cols[2][0], cols[3][0], cols[0][1], cols[1][1],
                    cols[2][1], cols[3][1], cols[0][2], cols[1][2], cols[2][2], cols[3][2], 1.0,
                    1.0, 1.0, 1.0,
                );
                m.determinant()
            }
        }
    };

    let mut total = 0i32;
    for i in 0..=n {
        let cols: Vec<&[f64]> = (0..=n)
            .map(|j| {
                if j == i {
                    c_coords.as_slice()
                } else {
                    coords[j].as_slice()
                }
            })
            .collect();
        let d = det_of(&cols);
        if d > det_tol {
            total += 1;
        } else if d < -det_tol {
            total -= 1;
        }
    }
    Ok(total)
}

/// Barycentric coordinates of `point` with respect to the `n+1` `vertices`,
/// solved in the simplex's affine frame. The weights sum to 1 and
/// reconstruct `point` exactly when it lies in the simplex's hull plane.
pub fn barycentric_weights(vertices: &[Vec3], point: &Vec3, n: usize) -> Result<Vec<f64>, AffineError> {
    if !(1..=3).contains(&n) {
        return Err(AffineError::BadDimension(n));
    }
    assert_eq!(vertices.len(), n + 1);
    let basis = affine_frame(vertices, n)?;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for (k, v) in vertices[1..].iter().enumerate() {
        let col = frame_coords(&basis, &vertices[0], v);
        for (row, &x) in col.iter().enumerate() {
            m[(row, k)] = x;
        }
    }
    let rhs = DVector::from_vec(frame_coords(&basis, &vertices[0], point));
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or(AffineError::SingularEdgeMatrix)?;
    let mut w = Vec::with_capacity(n + 1);
    w.push(1.0 - sol.sum());
    w.extend(sol.iter());
    Ok(w)
}

/// Leader-coefficient matrix `H`: row `i` gives the unique affine weights of
/// agent `i`'s initial position over the `n+1` leader positions.
///
/// Errors if the leaders are rank-deficient or an agent sits off the leaders'
/// hyperplane by more than `1e-6 * d_max`, where `d_max` is the formation
/// radius about the first leader.
pub fn leader_coefficients(
    positions: &[Vec3],
    leaders: &[Vec3],
    n: usize,
) -> Result<DMatrix<f64>, AffineError> {
    if !(1..=3).contains(&n) {
        return Err(AffineError::BadDimension(n));
    }
    assert_eq!(leaders.len(), n + 1);
    let got = rank_fn(leaders, n)?;
    if got != n {
        return Err(AffineError::RankDeficientLeaders { expected: n, got });
    }
    let basis = affine_frame(leaders, n)?;
    let d_max = positions
        .iter()
        .map(|p| (p - leaders[0]).norm())
        .fold(1.0, f64::max);
    let tol = 1e-6 * d_max;

    let mut h = DMatrix::<f64>::zeros(positions.len(), n + 1);
    for (i, p) in positions.iter().enumerate() {
        // Off-plane component must vanish.
        let mut resid = p - leaders[0];
        for b in &basis {
            resid -= b * resid.dot(b);
        }
        let dist = resid.norm();
        if dist > tol {
            return Err(AffineError::OffHyperplane {
                agent: i,
                distance: dist,
                tolerance: tol,
            });
        }
        let w = barycentric_weights(leaders, p, n)?;
        for (j, &wj) in w.iter().enumerate() {
            h[(i, j)] = wj;
        }
    }
    Ok(h)
}

/// Global desired position `r_a = Q (r_0 - d_0) + d`.
pub fn global_desired_position(q: &Mat3, d: &Vec3, d0: &Vec3, r_i0: &Vec3) -> Vec3 {
    q * (r_i0 - d0) + d
}
