//! Proximity-based communication topology: role classification, in-neighbor
//! assignment, follower weights, the W/F/G/L matrices, and the stability
//! certificates they must satisfy.

use crate::affine::{self, AffineError, Vec3};
use nalgebra::{Complex, DMatrix};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error(transparent)]
    Affine(#[from] AffineError),
    #[error("leader {0} is not a boundary agent")]
    LeaderNotOnBoundary(usize),
    #[error("need at least n+1 = {needed} boundary agents, found {found}")]
    TooFewBoundary { needed: usize, found: usize },
    #[error("agent {0} is not strictly interior: no containing simplex exists among the other agents")]
    NotInterior(usize),
    #[error("duplicate or out-of-range leader id {0}")]
    BadLeaderId(usize),
    #[error("L matrix is singular")]
    SingularL,
}

/// Agent roles derived from the initial formation.
#[derive(Debug, Clone)]
pub struct Formation {
    pub n: usize,
    pub positions: Vec<Vec3>,
    pub leader_ids: Vec<usize>,
    pub boundary_ids: Vec<usize>,
    pub interior_ids: Vec<usize>,
}

impl Formation {
    /// Builds a formation, classifying boundary/interior roles and validating
    /// that the designated leaders are boundary agents forming an n-simplex.
    pub fn new(positions: Vec<Vec3>, leader_ids: Vec<usize>, n: usize) -> Result<Self, TopologyError> {
        let num = positions.len();
        if leader_ids.len() != n + 1 {
            return Err(TopologyError::TooFewBoundary {
                needed: n + 1,
                found: leader_ids.len(),
            });
        }
        let mut seen = vec![false; num];
        for &l in &leader_ids {
            if l >= num || seen[l] {
                return Err(TopologyError::BadLeaderId(l));
            }
            seen[l] = true;
        }
        let leader_pos: Vec<Vec3> = leader_ids.iter().map(|&i| positions[i]).collect();
        let rank = affine::rank_fn(&leader_pos, n)?;
        if rank != n {
            return Err(TopologyError::Affine(AffineError::RankDeficientLeaders {
                expected: n,
                got: rank,
            }));
        }
        let (boundary_ids, interior_ids) = classify_roles(&positions, n, &leader_ids)?;
        Ok(Self {
            n,
            positions,
            leader_ids,
            boundary_ids,
            interior_ids,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.positions.len()
    }

    pub fn leader_positions(&self) -> Vec<Vec3> {
        self.leader_ids.iter().map(|&i| self.positions[i]).collect()
    }

    pub fn is_leader(&self, i: usize) -> bool {
        self.leader_ids.contains(&i)
    }
}

/// True when a strictly containing n-simplex for `positions[i]` exists among
/// the other agents. By Caratheodory this is equivalent to `positions[i]`
/// being strictly inside the convex hull of the others (within the
/// formation's hyperplane).
fn has_containing_simplex(positions: &[Vec3], i: usize, n: usize) -> bool {
    find_containing_simplex_within(positions, i, n, f64::INFINITY).is_some()
}

/// Splits agents into boundary (on the convex hull of the formation) and
/// interior agents, validating `leader_ids` against the boundary set.
pub fn classify_roles(
    positions: &[Vec3],
    n: usize,
    leader_ids: &[usize],
) -> Result<(Vec<usize>, Vec<usize>), TopologyError> {
    let mut boundary = Vec::new();
    let mut interior = Vec::new();
    for i in 0..positions.len() {
        if has_containing_simplex(positions, i, n) {
            interior.push(i);
        } else {
            boundary.push(i);
        }
    }
    for &l in leader_ids {
        if !boundary.contains(&l) {
            return Err(TopologyError::LeaderNotOnBoundary(l));
        }
    }
    if boundary.len() < n + 1 {
        return Err(TopologyError::TooFewBoundary {
            needed: n + 1,
            found: boundary.len(),
        });
    }
    Ok((boundary, interior))
}

/// Enumerates (n+1)-subsets of `candidates` in lexicographic order, calling
/// `visit` on each; stops when `visit` returns `true`.
fn for_each_combination(candidates: &[usize], k: usize, visit: &mut dyn FnMut(&[usize]) -> bool) {
    fn rec(
        candidates: &[usize],
        k: usize,
        start: usize,
        current: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize]) -> bool,
        done: &mut bool,
    ) {
        if *done {
            return;
        }
        if current.len() == k {
            *done = visit(current);
            return;
        }
        for idx in start..candidates.len() {
            if candidates.len() - idx < k - current.len() {
                break;
            }
            current.push(candidates[idx]);
            rec(candidates, k, idx + 1, current, visit, done);
            current.pop();
            if *done {
                return;
            }
        }
    }
    let mut done = false;
    rec(candidates, k, 0, &mut Vec::new(), visit, &mut done);
}

/// First (id-lexicographic) strictly containing n-simplex for agent `i` among
/// agents within `radius` of it, or `None`.
fn find_containing_simplex_within(
    positions: &[Vec3],
    i: usize,
    n: usize,
    radius: f64,
) -> Option<Vec<usize>> {
    let mut candidates: Vec<usize> = (0..positions.len())
        .filter(|&j| j != i && (positions[j] - positions[i]).norm() <= radius)
        .collect();
    candidates.sort_unstable();
    let mut found = None;
    for_each_combination(&candidates, n + 1, &mut |subset| {
        let verts: Vec<Vec3> = subset.iter().map(|&j| positions[j]).collect();
        if !matches!(affine::rank_fn(&verts, n), Ok(r) if r == n) {
            return false;
        }
        match affine::containment_fn(&verts, &positions[i], n) {
            Ok(kappa) if kappa.unsigned_abs() as usize == n + 1 => {
                found = Some(subset.to_vec());
                true
            }
            _ => false,
        }
    });
    found
}

/// Minimal-proximity in-neighbor assignment for an interior agent: sweeps the
/// sorted distances to all other agents and returns the first containing
/// simplex found at the smallest feasible radius. Ties at the minimal radius
/// break to the lexicographically smallest sorted vertex-id tuple.
pub fn proximity_in_neighbors(
    positions: &[Vec3],
    i: usize,
    n: usize,
) -> Result<Vec<usize>, TopologyError> {
    let all_dists: Vec<f64> = (0..positions.len())
        .filter(|&j| j != i)
        .map(|j| (positions[j] - positions[i]).norm())
        .collect();
    let mut dists = all_dists.clone();
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    dists.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    for &radius in &dists {
        let within = all_dists.iter().filter(|&&d| d <= radius).count();
        if within < n + 1 {
            continue;
        }
        if let Some(simplex) = find_containing_simplex_within(positions, i, n, radius) {
            return Ok(simplex);
        }
    }
    Err(TopologyError::NotInterior(i))
}

/// Barycentric communication weights of agent `i` over its in-neighbor
/// simplex: they sum to 1 and reconstruct `r_{i,0}`.
pub fn communication_weights(
    positions: &[Vec3],
    i: usize,
    in_neighbors: &[usize],
    n: usize,
) -> Result<Vec<f64>, TopologyError> {
    let verts: Vec<Vec3> = in_neighbors.iter().map(|&j| positions[j]).collect();
    Ok(affine::barycentric_weights(&verts, &positions[i], n)?)
}

/// Assembled communication topology.
///
/// Rows and columns of `w`, `l`, and `h` use the *permuted* agent ordering
/// `order`: leaders first (in `leader_ids` order), then the remaining agents
/// ascending. `order[row]` is the original agent id of that row.
#[derive(Debug, Clone)]
pub struct CommTopology {
    pub n: usize,
    /// Permuted ordering: row -> original agent id.
    pub order: Vec<usize>,
    /// Inverse of `order`: original agent id -> row.
    pub row_of: Vec<usize>,
    /// Per-follower (original id) in-neighbor ids and weights.
    pub in_neighbors: Vec<(usize, Vec<usize>, Vec<f64>)>,
    pub w: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub l0: DMatrix<f64>,
}

/// Builds the full topology for a formation: leaders have no in-neighbors,
/// non-leader boundary agents take all n+1 leaders as in-neighbors, interior
/// agents get the minimal-proximity simplex.
pub fn assemble_matrices(formation: &Formation) -> Result<CommTopology, TopologyError> {
    let num = formation.num_agents();
    let n = formation.n;
    let mut order = formation.leader_ids.clone();
    order.extend((0..num).filter(|i| !formation.is_leader(*i)));
    let mut row_of = vec![0usize; num];
    for (row, &id) in order.iter().enumerate() {
        row_of[id] = row;
    }

    let mut in_neighbors = Vec::new();
    let mut w = DMatrix::<f64>::zeros(num, num);
    for &i in order.iter().skip(n + 1) {
        let neigh = if formation.interior_ids.contains(&i) {
            proximity_in_neighbors(&formation.positions, i, n)?
        } else {
            formation.leader_ids.clone()
        };
        let weights = communication_weights(&formation.positions, i, &neigh, n)?;
        for (&j, &wj) in neigh.iter().zip(weights.iter()) {
            w[(row_of[i], row_of[j])] = wj;
        }
        in_neighbors.push((i, neigh, weights));
    }

    let f = w.view((n + 1, 0), (num - n - 1, n + 1)).into_owned();
    let g = w.view((n + 1, n + 1), (num - n - 1, num - n - 1)).into_owned();
    let l = -DMatrix::<f64>::identity(num, num) + &w;
    let mut l0 = DMatrix::<f64>::zeros(num, n + 1);
    for j in 0..=n {
        l0[(j, j)] = 1.0;
    }
    Ok(CommTopology {
        n,
        order,
        row_of,
        in_neighbors,
        w,
        f,
        g,
        l,
        l0,
    })
}

/// Stability certificate for an assembled topology.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub rho_g: f64,
    /// Eigenvalues of L as (re, im) pairs.
    pub l_eigs: Vec<(f64, f64)>,
    pub hurwitz: bool,
    /// True when some follower weight is negative (follower outside its
    /// in-neighbor simplex); certification may then legitimately fail.
    pub negative_weights: bool,
}

pub fn certify_stability(topology: &CommTopology) -> StabilityReport {
    let rho_g = if topology.g.nrows() == 0 {
        0.0
    } else {
        spectral_radius(&topology.g)
    };
    let eigs: Vec<Complex<f64>> = complex_eigenvalues_bounded(&topology.l);
    let hurwitz = eigs.iter().all(|e| e.re < -1e-9);
    let negative_weights = topology
        .in_neighbors
        .iter()
        .any(|(_, _, w)| w.iter().any(|&x| x < 0.0));
    StabilityReport {
        rho_g,
        l_eigs: eigs.iter().map(|e| (e.re, e.im)).collect(),
        hurwitz,
        negative_weights,
    }
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    complex_eigenvalues_bounded(m)
        .iter()
        .map(|e| e.norm())
        .fold(0.0, f64::max)
}

/// Eigenvalues via a Schur decomposition with a bounded iteration budget.
///
/// `Matrix::complex_eigenvalues` iterates until every subdiagonal entry drops
/// below machine epsilon, with no iteration cap. Follower-weight matrices are
/// similar to matrices with nilpotent blocks, so their Laplacians can be
/// defective and the unbounded QR loop then never terminates. Retrying with a
/// progressively relaxed tolerance keeps the result accurate while
/// guaranteeing termination.
pub fn complex_eigenvalues_bounded(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    for eps in [f64::EPSILON, 1e-13, 1e-11, 1e-9] {
        if let Some(schur) = nalgebra::linalg::Schur::try_new(m.clone(), eps, 100_000) {
            return schur.complex_eigenvalues().iter().copied().collect();
        }
    }
    // A deterministic diagonal perturbation of ~1e-8 splits any remaining
    // defective cluster; it moves the eigenvalues by no more than the
    // tolerances already accepted above.
    let mut p = m.clone();
    let n = p.nrows().max(1) as f64;
    for i in 0..p.nrows() {
        p[(i, i)] += 1e-8 * (i as f64 + 1.0) / n;
    }
    nalgebra::linalg::Schur::try_new(p, 1e-9, 100_000)
        .map(|s| s.complex_eigenvalues().iter().copied().collect())
        .unwrap_or_else(|| (0..m.nrows()).map(|i| Complex::new(m[(i, i)], 0.0)).collect())
}

/// Leader-coefficient matrix from the topology: `H = -L^{-1} L_0`, rows in
/// the topology's permuted ordering.
pub fn compute_h(topology: &CommTopology) -> Result<DMatrix<f64>, TopologyError> {
    let lu = topology.l.clone().lu();
    let rhs = -&topology.l0;
    lu.solve(&rhs).ok_or(TopologyError::SingularL)
}

/// JSON-serializable audit of a topology and its certificate.
#[derive(Debug, Serialize)]
pub struct TopologyAudit {
    pub n: usize,
    pub num_agents: usize,
    pub leader_ids: Vec<usize>,
    pub boundary_ids: Vec<usize>,
    pub interior_ids: Vec<usize>,
    pub followers: Vec<FollowerAudit>,
    pub rho_g: f64,
    pub l_eigs: Vec<(f64, f64)>,
    pub hurwitz: bool,
    pub negative_weights: bool,
}

#[derive(Debug, Serialize)]
pub struct FollowerAudit {
    pub agent: usize,
    pub in_neighbors: Vec<usize>,
    pub weights: Vec<f64>,
}

impl TopologyAudit {
    pub fn new(formation: &Formation, topology: &CommTopology, report: &StabilityReport) -> Self {
        Self {
            n: formation.n,
            num_agents: formation.num_agents(),
            leader_ids: formation.leader_ids.clone(),
            boundary_ids: formation.boundary_ids.clone(),
            interior_ids: formation.interior_ids.clone(),
            followers: topology
                .in_neighbors
                .iter()
                .map(|(agent, neigh, w)| FollowerAudit {
                    agent: *agent,
                    in_neighbors: neigh.clone(),
                    weights: w.clone(),
                })
                .collect(),
            rho_g: report.rho_g,
            l_eigs: report.l_eigs.clone(),
            hurwitz: report.hurwitz,
            negative_weights: report.negative_weights,
        }
    }
}
