//! Linear tracking-error dynamics of the swarm: the stacked error
//! `E = Y - Y_a` obeys a chain of four integrators closed through the
//! topology matrix `L` and forced by the fourth derivative of the leader
//! reference trajectories weighted by the leader-coefficient matrix `H`.

use crate::planner::MotionPlan;
use crate::vehicle::Gains;
use crate::Vec3;
use nalgebra::DMatrix;

/// Error-dynamics state: four N x 3 stacks (error and its first three
/// derivatives, one row per agent, columns x/y/z).
pub type ErrorStack = [DMatrix<f64>; 4];

/// Result of integrating the forced error dynamics.
#[derive(Debug, Clone)]
pub struct ErrorSimResult {
    /// Largest per-agent position-error norm over the horizon.
    pub max_deviation: f64,
    pub max_deviation_time: f64,
    pub max_deviation_agent: usize,
    /// Per-agent maxima of the position-error norm.
    pub per_agent_max: Vec<f64>,
    /// Position-error norms at the final time.
    pub final_deviation: f64,
}

fn row_norms_max(e1: &DMatrix<f64>) -> (usize, f64) {
    let mut best = (0, 0.0);
    for i in 0..e1.nrows() {
        let n = (e1[(i, 0)].powi(2) + e1[(i, 1)].powi(2) + e1[(i, 2)].powi(2)).sqrt();
        if n > best.1 {
            best = (i, n);
        }
    }
    best
}

/// Integrates the error dynamics by fixed-step RK4.
///
/// `l` is the N x N topology matrix (rows in the topology's permuted
/// ordering), `h` the N x (n+1) leader-coefficient matrix in the same
/// ordering, and `forcing(t)` the (n+1) x 3 stack of leader reference
/// fourth derivatives. The error's fourth derivative is
/// `k4 L E1 + k3 L E2 + k2 L E3 + k1 L E4 - H forcing(t)`.
pub fn simulate_error_dynamics<F>(
    l: &DMatrix<f64>,
    h: &DMatrix<f64>,
    gains: &Gains,
    forcing: F,
    t0: f64,
    tf: f64,
    dt: f64,
    e0: Option<ErrorStack>,
) -> ErrorSimResult
where
    F: Fn(f64) -> DMatrix<f64>,
{
    let num = l.nrows();
    let zero = || DMatrix::<f64>::zeros(num, 3);
    let mut e: ErrorStack = e0.unwrap_or_else(|| [zero(), zero(), zero(), zero()]);

    let deriv = |e: &ErrorStack, t: f64| -> ErrorStack {
        let forced = h * forcing(t);
        [
            e[1].clone(),
            e[2].clone(),
            e[3].clone(),
            l * (gains.k4 * &e[0] + gains.k3 * &e[1] + gains.k2 * &e[2] + gains.k1 * &e[3])
                - forced,
        ]
    };
    let axpy = |e: &ErrorStack, k: &ErrorStack, hstep: f64| -> ErrorStack {
        std::array::from_fn(|i| &e[i] + hstep * &k[i])
    };

    let steps = ((tf - t0) / dt).ceil() as usize;
    let mut per_agent_max = vec![0.0f64; num];
    let mut max_dev = 0.0;
    let mut max_dev_t = t0;
    let mut max_dev_agent = 0;
    let mut track = |e1: &DMatrix<f64>, t: f64| {
        for i in 0..num {
            let n = (e1[(i, 0)].powi(2) + e1[(i, 1)].powi(2) + e1[(i, 2)].powi(2)).sqrt();
            per_agent_max[i] = per_agent_max[i].max(n);
        }
        let (agent, worst) = row_norms_max(e1);
        if worst > max_dev {
            max_dev = worst;
            max_dev_t = t;
            max_dev_agent = agent;
        }
    };
    track(&e[0], t0);

    for step in 0..steps {
        let t = t0 + (tf - t0) * (step as f64 / steps as f64);
        let hstep = (tf - t0) / steps as f64;
        let k1 = deriv(&e, t);
        let k2 = deriv(&axpy(&e, &k1, hstep / 2.0), t + hstep / 2.0);
        let k3 = deriv(&axpy(&e, &k2, hstep / 2.0), t + hstep / 2.0);
        let k4 = deriv(&axpy(&e, &k3, hstep), t + hstep);
        for i in 0..4 {
            e[i] += hstep / 6.0 * (&k1[i] + 2.0 * &k2[i] + 2.0 * &k3[i] + &k4[i]);
        }
        track(&e[0], t + hstep);
    }

    let (_, final_dev) = row_norms_max(&e[0]);
    ErrorSimResult {
        max_deviation: max_dev,
        max_deviation_time: max_dev_t,
        max_deviation_agent: max_dev_agent,
        per_agent_max,
        final_deviation: final_dev,
    }
}

/// Forcing stack for a motion plan: rows are the fourth time derivatives of
/// the leader references `Q''''(t)(r_j0 - d0) + d''''(t)` for each leader.
pub fn plan_forcing<'a>(
    plan: &'a MotionPlan,
    leader_positions: &[Vec3],
    d0: &Vec3,
) -> impl Fn(f64) -> DMatrix<f64> + 'a {
    let leaders = leader_positions.to_vec();
    let d0 = *d0;
    move |t: f64| {
        let q = plan
            .jacobian_derivatives(t)
            .expect("forcing sampled inside plan interval");
        let d = plan
            .rigid_displacement(t)
            .expect("forcing sampled inside plan interval");
        let mut out = DMatrix::<f64>::zeros(leaders.len(), 3);
        for (row, r0) in leaders.iter().enumerate() {
            let snap = q[4] * (r0 - d0) + d[4];
            for c in 0..3 {
                out[(row, c)] = snap[c];
            }
        }
        out
    }
}
