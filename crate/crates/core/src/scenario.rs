//! Scenario files: a JSON description of the initial formation, obstacle
//! grid, target configuration, safety margins, vehicle model, and solver
//! settings. Loading cross-validates every invariant and reports *all*
//! violations, each named with its field path.

use crate::affine::{self, build_jacobian, DeformationFeatures, Mat3, Vec3};
use crate::planner::{GridError, OccupancyGrid, TargetConfiguration};
use crate::topology::Formation;
use crate::vehicle::{Gains, QuadParams};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario JSON parse error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid scenario:\n{}", .0.join("\n"))]
    Validation(Vec<String>),
}

/// On-disk scenario schema. Optional fields have physically sensible
/// defaults; see the individual types.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: Option<String>,
    pub formation: FormationSpec,
    /// Obstacle grid: either a path to a grid text file (relative to the
    /// scenario file) or inline dimensions with occupied boxes.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    pub target: TargetSpec,
    pub safety: SafetySpec,
    pub vehicle: VehicleSpec,
    pub gains: Gains,
    #[serde(default)]
    pub solver: SolverSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FormationSpec {
    pub positions: Vec<[f64; 3]>,
    pub leader_ids: Vec<usize>,
    /// Formation dimension n; inferred as `leader_ids.len() - 1` when absent.
    #[serde(default)]
    pub dimension: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    /// Path to a grid text file, relative to the scenario file.
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub origin: Option<[f64; 3]>,
    #[serde(default)]
    pub cell_size: Option<f64>,
    #[serde(default)]
    pub dims: Option<[usize; 3]>,
    /// Axis-aligned occupied boxes `[lo, hi]` (used with the inline form).
    #[serde(default)]
    pub boxes: Vec<([f64; 3], [f64; 3])>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetSpec {
    /// Final deformation features (stretch eigenvalues and angles).
    #[serde(default)]
    pub theta_f: Option<ThetaSpec>,
    /// Final Jacobian, row-major; redundant with `theta_f` and
    /// cross-checked to 1e-9 when both are given.
    #[serde(default)]
    pub q_f: Option<[[f64; 3]; 3]>,
    /// Final rigid displacement (containment-ball center).
    pub d_f: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThetaSpec {
    pub lambda: [f64; 3],
    pub beta: [f64; 6],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SafetySpec {
    pub delta: f64,
    pub epsilon: f64,
    pub r_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub mass: f64,
    pub inertia: [f64; 3],
    #[serde(default)]
    pub gravity: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSpec {
    /// Nonlinear-simulation integration step (seconds).
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Log every this many integration steps.
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    /// Travel-time search resolution (seconds).
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    /// Travel-time cap (seconds).
    #[serde(default = "default_cap")]
    pub cap: f64,
    /// Fraction of the deviation budget reserved for nonlinear effects;
    /// the linear error response must stay within `(1 - rho) * delta`.
    #[serde(default = "default_rho")]
    pub rho: f64,
}

fn default_dt() -> f64 {
    1e-3
}
fn default_sample_every() -> usize {
    10
}
fn default_resolution() -> f64 {
    1.0
}
fn default_cap() -> f64 {
    1e4
}
fn default_rho() -> f64 {
    0.5
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            sample_every: default_sample_every(),
            resolution: default_resolution(),
            cap: default_cap(),
            rho: default_rho(),
        }
    }
}

/// Fully validated, resolved scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: Option<String>,
    pub formation: Formation,
    pub grid: Option<OccupancyGrid>,
    pub theta_f: DeformationFeatures,
    pub target: TargetConfiguration,
    pub delta: f64,
    pub epsilon: f64,
    pub r_max: f64,
    pub params: QuadParams,
    pub gains: Gains,
    pub solver: SolverSpec,
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn mat3(rows: [[f64; 3]; 3]) -> Mat3 {
    Mat3::from_rows(&[
        Vec3::new(rows[0][0], rows[0][1], rows[0][2]).transpose(),
        Vec3::new(rows[1][0], rows[1][1], rows[1][2]).transpose(),
        Vec3::new(rows[2][0], rows[2][1], rows[2][2]).transpose(),
    ])
}

fn resolve_grid(spec: &GridSpec, base_dir: &Path) -> Result<OccupancyGrid, String> {
    if let Some(path) = &spec.path {
        let full = base_dir.join(path);
        let text = std::fs::read_to_string(&full)
            .map_err(|e| format!("grid.path: cannot read {}: {e}", full.display()))?;
        return OccupancyGrid::from_text(&text).map_err(|e| format!("grid.path: {e}"));
    }
    let origin = spec
        .origin
        .ok_or_else(|| "grid.origin: required for an inline grid".to_string())?;
    let cell_size = spec
        .cell_size
        .ok_or_else(|| "grid.cell_size: required for an inline grid".to_string())?;
    let dims = spec
        .dims
        .ok_or_else(|| "grid.dims: required for an inline grid".to_string())?;
    if cell_size <= 0.0 {
        return Err(format!("grid.cell_size: must be positive, got {cell_size}"));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(format!("grid.dims: all must be positive, got {dims:?}"));
    }
    let mut grid = OccupancyGrid::empty(vec3(origin), cell_size, dims);
    for (lo, hi) in &spec.boxes {
        grid.fill_box(vec3(*lo), vec3(*hi));
    }
    Ok(grid)
}

/// Validates and resolves a parsed scenario; `base_dir` anchors relative
/// grid paths. All invariant violations are collected, not just the first.
pub fn resolve_scenario(file: &ScenarioFile, base_dir: &Path) -> Result<Scenario, ScenarioError> {
    let mut errors: Vec<String> = Vec::new();

    let positions: Vec<Vec3> = file.formation.positions.iter().map(|&p| vec3(p)).collect();
    let n = file
        .formation
        .dimension
        .unwrap_or_else(|| file.formation.leader_ids.len().saturating_sub(1));
    if !(1..=3).contains(&n) {
        errors.push(format!("formation.dimension: n = {n} outside 1..=3"));
    }
    if file.formation.leader_ids.len() != n + 1 {
        errors.push(format!(
            "formation.leader_ids: need n + 1 = {} leaders, got {}",
            n + 1,
            file.formation.leader_ids.len()
        ));
    }

    // Rank condition on the leading simplex.
    let leader_pos: Vec<Vec3> = file
        .formation
        .leader_ids
        .iter()
        .filter(|&&i| i < positions.len())
        .map(|&i| positions[i])
        .collect();
    if leader_pos.len() == n + 1 {
        match affine::rank_fn(&leader_pos, n) {
            Ok(r) if r == n => {}
            Ok(r) => errors.push(format!(
                "formation.leader_ids: leading simplex is rank-deficient \
                 (rank {r}, need {n}); leaders must span an n-simplex"
            )),
            Err(e) => errors.push(format!("formation.leader_ids: {e}")),
        }
    }

    // Hyperplane membership for planar/linear formations: every agent must
    // lie in the leaders' affine span.
    if leader_pos.len() == n + 1 && n < 3 {
        let basis: Vec<Vec3> = leader_pos[1..].iter().map(|p| p - leader_pos[0]).collect();
        for (i, p) in positions.iter().enumerate() {
            let rel = p - leader_pos[0];
            // Project out the span and measure the residual.
            let mut residual = rel;
            // Gram-Schmidt on the (tiny) basis.
            let mut ortho: Vec<Vec3> = Vec::new();
            for b in &basis {
                let mut v = *b;
                for o in &ortho {
                    v -= o * o.dot(&v);
                }
                if v.norm() > 1e-12 {
                    ortho.push(v / v.norm());
                }
            }
            for o in &ortho {
                residual -= o * o.dot(&residual);
            }
            if residual.norm() > 1e-9 {
                errors.push(format!(
                    "formation.positions[{i}]: off the leaders' {n}-dimensional \
                     hyperplane by {} m",
                    residual.norm()
                ));
            }
        }
    }

    let formation = match Formation::new(positions, file.formation.leader_ids.clone(), n) {
        Ok(f) => Some(f),
        Err(e) => {
            errors.push(format!("formation: {e}"));
            None
        }
    };

    // Target: need theta_f, q_f, or both (consistent to 1e-9).
    let theta_f = file
        .target
        .theta_f
        .as_ref()
        .map(|t| DeformationFeatures::new(t.lambda, t.beta));
    let q_f_given = file.target.q_f.map(mat3);
    let (theta_f, q_f) = match (theta_f, q_f_given) {
        (Some(th), Some(q)) => {
            let residual = (build_jacobian(&th) - q).norm();
            if residual > 1e-9 {
                errors.push(format!(
                    "target: theta_f and q_f disagree (residual {residual:.3e} > 1e-9)"
                ));
            }
            (th, q)
        }
        (Some(th), None) => {
            let q = build_jacobian(&th);
            (th, q)
        }
        (None, Some(_)) => {
            errors.push(
                "target.theta_f: required (q_f alone does not determine the \
                 deformation-feature trajectory)"
                    .to_string(),
            );
            (DeformationFeatures::identity(), Mat3::identity())
        }
        (None, None) => {
            errors.push("target: one of theta_f or q_f is required".to_string());
            (DeformationFeatures::identity(), Mat3::identity())
        }
    };

    let s = &file.safety;
    if s.delta <= 0.0 {
        errors.push(format!("safety.delta: must be positive, got {}", s.delta));
    }
    if s.epsilon <= 0.0 {
        errors.push(format!("safety.epsilon: must be positive, got {}", s.epsilon));
    }
    if s.r_max <= s.delta + s.epsilon {
        errors.push(format!(
            "safety.r_max: must exceed delta + epsilon = {}, got {}",
            s.delta + s.epsilon,
            s.r_max
        ));
    }

    if file.vehicle.mass <= 0.0 {
        errors.push(format!(
            "vehicle.mass: must be positive, got {}",
            file.vehicle.mass
        ));
    }
    if file.vehicle.inertia.iter().any(|&i| i <= 0.0) {
        errors.push(format!(
            "vehicle.inertia: all principal moments must be positive, got {:?}",
            file.vehicle.inertia
        ));
    }

    let sv = &file.solver;
    if sv.dt <= 0.0 {
        errors.push(format!("solver.dt: must be positive, got {}", sv.dt));
    }
    if sv.sample_every == 0 {
        errors.push("solver.sample_every: must be at least 1".to_string());
    }
    if sv.resolution <= 0.0 {
        errors.push(format!(
            "solver.resolution: must be positive, got {}",
            sv.resolution
        ));
    }
    if sv.cap <= 0.0 {
        errors.push(format!("solver.cap: must be positive, got {}", sv.cap));
    }
    if !(sv.rho > 0.0 && sv.rho < 1.0) {
        errors.push(format!("solver.rho: must lie in (0, 1), got {}", sv.rho));
    }

    let grid = match &file.grid {
        None => None,
        Some(spec) => match resolve_grid(spec, base_dir) {
            Ok(g) => Some(g),
            Err(e) => {
                errors.push(e);
                None
            }
        },
    };

    if !errors.is_empty() {
        return Err(ScenarioError::Validation(errors));
    }

    let mut params = QuadParams::new(file.vehicle.mass, vec3(file.vehicle.inertia));
    if let Some(g) = file.vehicle.gravity {
        params.gravity = g;
    }

    Ok(Scenario {
        name: file.name.clone(),
        formation: formation.expect("validated above"),
        grid,
        theta_f,
        target: TargetConfiguration {
            q_f,
            d_f: vec3(file.target.d_f),
        },
        delta: s.delta,
        epsilon: s.epsilon,
        r_max: s.r_max,
        params,
        gains: file.gains,
        solver: file.solver.clone(),
    })
}

/// Reads, parses, and validates a scenario JSON file.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    let file: ScenarioFile = serde_json::from_str(&text)?;
    let base_dir = path.parent().unwrap_or_else(|| Path::new("."));
    resolve_scenario(&file, base_dir)
}
