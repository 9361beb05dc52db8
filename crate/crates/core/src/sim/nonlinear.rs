//! Closed-loop simulation of the full nonlinear swarm: leaders track their
//! planned references, followers track the weighted combination of their
//! in-neighbors' actual motion, and every vehicle runs the feedback-linearized
//! snap controller. Includes the post-run safety audit.

use crate::planner::{MotionPlan, OccupancyGrid, TrajError};
use crate::topology::{CommTopology, Formation};
use crate::vehicle::{
    acceleration, extended_derivative, feedback_linearize, jerk, outer_loop, Gains, QuadParams,
    QuadState, VehicleError,
};
use crate::Vec3;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("vehicle {agent} failed at t = {t}: {source}")]
    Vehicle {
        t: f64,
        agent: usize,
        source: VehicleError,
    },
    #[error(transparent)]
    Traj(#[from] TrajError),
}

/// All vehicle states at one instant.
#[derive(Debug, Clone)]
pub struct SwarmState {
    pub t: f64,
    pub agents: Vec<QuadState>,
}

#[derive(Debug, Clone)]
pub struct SimSettings {
    pub dt: f64,
    /// Log/monitor every this many integrator steps.
    pub sample_every: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            sample_every: 10,
        }
    }
}

/// One logged row: agent pose, thrust, and deviation from the global desired
/// trajectory at a sample time.
#[derive(Debug, Clone)]
pub struct SampleRecord {
    pub t: f64,
    pub agent: usize,
    pub pos: Vec3,
    pub deviation: f64,
    pub p: f64,
    pub euler: Vec3,
}

#[derive(Debug, Clone, Default)]
pub struct TrajectoryLog {
    pub records: Vec<SampleRecord>,
}

impl TrajectoryLog {
    /// CSV with one row per agent per sample.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,agent_id,x,y,z,dev,p,phi,theta,psi\n");
        for r in &self.records {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.t,
                r.agent,
                r.pos.x,
                r.pos.y,
                r.pos.z,
                r.deviation,
                r.p,
                r.euler.x,
                r.euler.y,
                r.euler.z
            )
            .unwrap();
        }
        s
    }

    /// Parses the CSV form written by [`TrajectoryLog::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut records = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 10 {
                return Err(format!(
                    "line {}: expected 10 fields, got {}",
                    lineno + 1,
                    fields.len()
                ));
            }
            let num =
                |k: usize| -> Result<f64, String> {
                    fields[k]
                        .parse()
                        .map_err(|_| format!("line {}: bad number {:?}", lineno + 1, fields[k]))
                };
            records.push(SampleRecord {
                t: num(0)?,
                agent: fields[1]
                    .parse()
                    .map_err(|_| format!("line {}: bad agent id {:?}", lineno + 1, fields[1]))?,
                pos: Vec3::new(num(2)?, num(3)?, num(4)?),
                deviation: num(5)?,
                p: num(6)?,
                euler: Vec3::new(num(7)?, num(8)?, num(9)?),
            });
        }
        Ok(Self { records })
    }

    /// Iterates over samples grouped by time (records are time-major).
    pub fn samples(&self) -> impl Iterator<Item = &[SampleRecord]> {
        self.records.chunks_exact(self.num_agents())
    }

    pub fn num_agents(&self) -> usize {
        self.records
            .iter()
            .map(|r| r.agent + 1)
            .max()
            .unwrap_or(0)
    }
}

/// Global desired position and first three derivatives for one agent, from
/// shared frame derivatives.
fn agent_reference(
    q: &[crate::Mat3; 5],
    d: &[Vec3; 5],
    r0: &Vec3,
    d0: &Vec3,
) -> ([Vec3; 4], Vec3) {
    let rel = r0 - d0;
    (
        [
            q[0] * rel + d[0],
            q[1] * rel + d[1],
            q[2] * rel + d[2],
            q[3] * rel + d[3],
        ],
        q[4] * rel + d[4],
    )
}

struct SwarmModel<'a> {
    formation: &'a Formation,
    plan: &'a MotionPlan,
    params: &'a QuadParams,
    gains: &'a Gains,
    d0: Vec3,
    /// Per original agent id: leader flag and follower in-neighbor weights.
    follower_info: Vec<Option<(Vec<usize>, Vec<f64>)>>,
}

impl<'a> SwarmModel<'a> {
    fn new(
        formation: &'a Formation,
        topology: &'a CommTopology,
        plan: &'a MotionPlan,
        params: &'a QuadParams,
        gains: &'a Gains,
    ) -> Self {
        let mut follower_info = vec![None; formation.num_agents()];
        for (agent, neigh, weights) in &topology.in_neighbors {
            follower_info[*agent] = Some((neigh.clone(), weights.clone()));
        }
        Self {
            formation,
            plan,
            params,
            gains,
            d0: plan.waypoints[0],
            follower_info,
        }
    }

    /// Whole-swarm derivative at one RK4 stage. Followers read their
    /// in-neighbors' chain quantities from the shared stage snapshot, so the
    /// result is independent of evaluation order and thread count.
    fn derivative(&self, states: &[QuadState], t: f64) -> Result<Vec<[f64; 14]>, SimError> {
        let q = self.plan.jacobian_derivatives(t)?;
        let d = self.plan.rigid_displacement(t)?;
        let chain: Vec<[Vec3; 4]> = states
            .iter()
            .map(|s| {
                [
                    s.r,
                    s.v,
                    acceleration(s, self.params),
                    jerk(s, self.params),
                ]
            })
            .collect();

        (0..states.len())
            .into_par_iter()
            .map(|i| {
                let desired = match &self.follower_info[i] {
                    None => {
                        agent_reference(&q, &d, &self.formation.positions[i], &self.d0).0
                    }
                    Some((neigh, weights)) => {
                        let mut acc = [Vec3::zeros(); 4];
                        for (&j, &wj) in neigh.iter().zip(weights.iter()) {
                            for k in 0..4 {
                                acc[k] += wj * chain[j][k];
                            }
                        }
                        acc
                    }
                };
                let wrap = |source: VehicleError| SimError::Vehicle {
                    t,
                    agent: i,
                    source,
                };
                let cmd =
                    outer_loop(&states[i], &desired, self.gains, self.params).map_err(wrap)?;
                let input = feedback_linearize(&states[i], &cmd, self.params).map_err(wrap)?;
                extended_derivative(&states[i], &input, self.params).map_err(wrap)
            })
            .collect()
    }
}

/// Simulates the closed loop over the plan horizon from rest on the initial
/// formation and logs pose and deviation every `sample_every` steps.
pub fn simulate_nonlinear(
    formation: &Formation,
    topology: &CommTopology,
    plan: &MotionPlan,
    params: &QuadParams,
    gains: &Gains,
    settings: &SimSettings,
) -> Result<(TrajectoryLog, SwarmState), SimError> {
    let model = SwarmModel::new(formation, topology, plan, params, gains);
    let num = formation.num_agents();
    let mut agents: Vec<QuadState> = formation
        .positions
        .iter()
        .map(|&r| QuadState::hover(r, params))
        .collect();

    let steps = (plan.duration() / settings.dt).ceil() as usize;
    let hstep = plan.duration() / steps as f64;
    let mut log = TrajectoryLog::default();

    let record = |agents: &[QuadState], t: f64, log: &mut TrajectoryLog| -> Result<(), SimError> {
        let q = plan.jacobian_derivatives(t)?;
        let d = plan.rigid_displacement(t)?;
        for (i, s) in agents.iter().enumerate() {
            let (r_ref, _) = agent_reference(&q, &d, &formation.positions[i], &model.d0);
            log.records.push(SampleRecord {
                t,
                agent: i,
                pos: s.r,
                deviation: (s.r - r_ref[0]).norm(),
                p: s.p,
                euler: s.euler,
            });
        }
        Ok(())
    };
    record(&agents, plan.t0, &mut log)?;

    let add = |states: &[QuadState], k: &[[f64; 14]], h: f64| -> Vec<QuadState> {
        states
            .iter()
            .zip(k.iter())
            .map(|(s, ds)| {
                let mut a = s.to_array();
                for j in 0..14 {
                    a[j] += h * ds[j];
                }
                QuadState::from_array(&a)
            })
            .collect()
    };

    for step in 0..steps {
        let t = plan.t0 + plan.duration() * (step as f64 / steps as f64);
        let k1 = model.derivative(&agents, t)?;
        let k2 = model.derivative(&add(&agents, &k1, hstep / 2.0), t + hstep / 2.0)?;
        let k3 = model.derivative(&add(&agents, &k2, hstep / 2.0), t + hstep / 2.0)?;
        let k4 = model.derivative(&add(&agents, &k3, hstep), t + hstep)?;
        for (i, s) in agents.iter_mut().enumerate() {
            let mut a = s.to_array();
            for j in 0..14 {
                a[j] += hstep / 6.0 * (k1[i][j] + 2.0 * k2[i][j] + 2.0 * k3[i][j] + k4[i][j]);
            }
            *s = QuadState::from_array(&a);
        }
        let t_next = plan.t0 + plan.duration() * ((step + 1) as f64 / steps as f64);
        if (step + 1) % settings.sample_every == 0 || step + 1 == steps {
            record(&agents, t_next, &mut log)?;
        }
        debug_assert_eq!(agents.len(), num);
    }

    let t_final = plan.tf;
    Ok((
        log,
        SwarmState {
            t: t_final,
            agents,
        },
    ))
}

/// One audited condition: its worst observed value and the first violating
/// sample, if any.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub worst_value: f64,
    pub threshold: f64,
    pub first_violation: Option<(f64, String)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub pass: bool,
    pub checks: Vec<CheckResult>,
}

/// Audits a trajectory log sample by sample:
/// (a) pairwise separation > 2 epsilon, (b) containment of every agent in the
/// moving ball of radius r_max, (c) deviation from the global desired
/// trajectory at most delta, (d) no agent inside an occupied grid cell.
pub fn audit_safety(
    log: &TrajectoryLog,
    plan: &MotionPlan,
    delta: f64,
    epsilon: f64,
    r_max: f64,
    grid: Option<&OccupancyGrid>,
) -> AuditReport {
    let mut sep = CheckResult {
        name: "pairwise_separation".into(),
        pass: true,
        worst_value: f64::INFINITY,
        threshold: 2.0 * epsilon,
        first_violation: None,
    };
    let mut contain = CheckResult {
        name: "ball_containment".into(),
        pass: true,
        worst_value: 0.0,
        threshold: r_max,
        first_violation: None,
    };
    let mut dev = CheckResult {
        name: "tracking_deviation".into(),
        pass: true,
        worst_value: 0.0,
        threshold: delta,
        first_violation: None,
    };
    let mut clear = CheckResult {
        name: "obstacle_clearance".into(),
        pass: true,
        worst_value: f64::INFINITY,
        threshold: 0.0,
        first_violation: None,
    };
    let distance_field = grid.map(|g| g.distance_field());

    for sample in log.samples() {
        let t = sample[0].t;
        let center = plan
            .rigid_displacement(t)
            .map(|d| d[0])
            .unwrap_or_else(|_| Vec3::zeros());
        for (a, ra) in sample.iter().enumerate() {
            // (a) separation
            for rb in sample.iter().skip(a + 1) {
                let dist = (ra.pos - rb.pos).norm();
                sep.worst_value = sep.worst_value.min(dist);
                if dist <= 2.0 * epsilon && sep.first_violation.is_none() {
                    sep.first_violation = Some((
                        t,
                        format!("agents {} and {} at distance {dist}", ra.agent, rb.agent),
                    ));
                }
            }
            // (b) containment (closed ball)
            let from_center = (ra.pos - center).norm();
            contain.worst_value = contain.worst_value.max(from_center);
            if from_center > r_max && contain.first_violation.is_none() {
                contain.first_violation = Some((
                    t,
                    format!("agent {} at {from_center} m from the ball center", ra.agent),
                ));
            }
            // (c) deviation
            dev.worst_value = dev.worst_value.max(ra.deviation);
            if ra.deviation > delta && dev.first_violation.is_none() {
                dev.first_violation = Some((
                    t,
                    format!("agent {} deviates {} m", ra.agent, ra.deviation),
                ));
            }
            // (d) occupancy (points outside the grid count as free space)
            if let (Some(grid), Some(field)) = (grid, &distance_field) {
                if let Ok(cell) = grid.cell_of(&ra.pos) {
                    let c = field[grid.index(cell)];
                    clear.worst_value = clear.worst_value.min(c);
                    if c <= 0.0 && clear.first_violation.is_none() {
                        clear.first_violation =
                            Some((t, format!("agent {} inside an occupied cell", ra.agent)));
                    }
                }
            }
        }
    }
    sep.pass = sep.first_violation.is_none();
    contain.pass = contain.first_violation.is_none();
    dev.pass = dev.first_violation.is_none();
    clear.pass = clear.first_violation.is_none();
    let checks = vec![sep, contain, dev, clear];
    AuditReport {
        pass: checks.iter().all(|c| c.pass),
        checks,
    }
}
