//! Pipeline orchestration: topology build and certification, shear-angle
//! choice, eigenvalue safety bounds, obstacle-aware waypoint planning, plan
//! validation, minimal-travel-time solving, nonlinear simulation, and the
//! final safety audit — with per-stage reports and artifact emission.

use crate::planner::{
    astar_waypoints, safety_bounds, shear_angles, solve_travel_time, validate_plan, MotionPlan,
    PlanReport, SafetyBounds, TravelTimeSolution,
};
use crate::planner::travel_time::SolveSettings;
use crate::scenario::Scenario;
use crate::sim::{
    audit_safety, check_gain_stability, collective_stable, simulate_nonlinear, AuditReport,
    GainStabilityReport, SimSettings, TrajectoryLog,
};
use crate::topology::{assemble_matrices, certify_stability, CommTopology, TopologyAudit};
use crate::Vec3;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Flags steering which stages run and with what overrides.
#[derive(Debug, Clone, Default)]
pub struct PipelineFlags {
    /// Stop after plan validation; no travel-time solve or simulation.
    pub plan_only: bool,
    /// Stop after the travel-time solve; no simulation.
    pub solve_only: bool,
    /// Fixed horizon in seconds, bypassing the travel-time solver.
    pub tf: Option<f64>,
    /// Override of the simulation integration step.
    pub dt: Option<f64>,
}

/// One executed stage: wall time and a JSON summary of its outcome.
#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub name: String,
    pub ok: bool,
    pub wall_time_s: f64,
    pub detail: serde_json::Value,
}

/// Serializable run summary.
#[derive(Debug, Clone, Serialize, Default)]
pub struct RunReport {
    pub scenario: Option<String>,
    pub stages: Vec<StageReport>,
    /// Name and error of the stage that aborted the run, if any.
    pub failed_stage: Option<(String, String)>,
    /// Chosen horizon (solved or overridden), seconds.
    pub tf: Option<f64>,
    pub audit_pass: Option<bool>,
}

impl RunReport {
    /// True when every executed stage succeeded and the audit (when run)
    /// passed.
    pub fn success(&self) -> bool {
        self.failed_stage.is_none() && self.audit_pass != Some(false)
    }
}

/// Everything the stages produced, for artifact emission and tests.
#[derive(Debug, Default)]
pub struct PipelineArtifacts {
    pub topology: Option<CommTopology>,
    pub topology_audit: Option<TopologyAudit>,
    pub gain_report: Option<GainStabilityReport>,
    pub bounds: Option<SafetyBounds>,
    pub waypoints: Option<Vec<Vec3>>,
    pub plan_report: Option<PlanReport>,
    pub travel_time: Option<TravelTimeSolution>,
    pub plan: Option<MotionPlan>,
    pub log: Option<TrajectoryLog>,
    pub audit: Option<AuditReport>,
}

/// Formation center used as the initial containment-ball center.
pub fn formation_center(positions: &[Vec3]) -> Vec3 {
    positions.iter().sum::<Vec3>() / positions.len() as f64
}

fn run_stage<T, E: std::fmt::Display>(
    report: &mut RunReport,
    name: &str,
    f: impl FnOnce() -> Result<(T, serde_json::Value), E>,
) -> Option<T> {
    let start = Instant::now();
    match f() {
        Ok((value, detail)) => {
            report.stages.push(StageReport {
                name: name.to_string(),
                ok: true,
                wall_time_s: start.elapsed().as_secs_f64(),
                detail,
            });
            Some(value)
        }
        Err(e) => {
            report.stages.push(StageReport {
                name: name.to_string(),
                ok: false,
                wall_time_s: start.elapsed().as_secs_f64(),
                detail: serde_json::json!({ "error": e.to_string() }),
            });
            report.failed_stage = Some((name.to_string(), e.to_string()));
            None
        }
    }
}

/// Executes the pipeline on a validated scenario. A stage failure stops the
/// run; everything produced so far is still returned so it can be dumped.
pub fn run_pipeline(scenario: &Scenario, flags: &PipelineFlags) -> (RunReport, PipelineArtifacts) {
    let mut report = RunReport {
        scenario: scenario.name.clone(),
        ..RunReport::default()
    };
    let mut art = PipelineArtifacts::default();
    let positions = &scenario.formation.positions;
    let d0 = formation_center(positions);

    // 1. Topology build + certification (matrix spectra and gain check).
    let Some(topology) = run_stage(&mut report, "topology", || {
        let topology = assemble_matrices(&scenario.formation).map_err(|e| e.to_string())?;
        let cert = certify_stability(&topology);
        let gain_report = check_gain_stability(&scenario.gains);
        let collective = collective_stable(&cert.l_eigs, &scenario.gains);
        let audit = TopologyAudit::new(&scenario.formation, &topology, &cert);
        let detail = serde_json::json!({
            "rho_g": cert.rho_g,
            "hurwitz": cert.hurwitz,
            "gain_stable": gain_report.stable,
            "collective_stable": collective,
        });
        if !cert.hurwitz {
            return Err("topology matrix L is not Hurwitz".to_string());
        }
        if !gain_report.stable {
            return Err(format!(
                "gains ({}, {}, {}, {}) fail the stability check",
                scenario.gains.k1, scenario.gains.k2, scenario.gains.k3, scenario.gains.k4
            ));
        }
        if !collective {
            return Err("collective error spectrum is not in the left half-plane".to_string());
        }
        art.topology_audit = Some(audit);
        art.gain_report = Some(gain_report);
        Ok::<_, String>((topology, detail))
    }) else {
        return (report, art);
    };

    // 2. Shear angles + 3. safety bounds.
    let Some(bounds) = run_stage(&mut report, "safety_bounds", || {
        let (beta5, beta6) = shear_angles(positions)?;
        let bounds = safety_bounds(
            positions,
            &d0,
            scenario.delta,
            scenario.epsilon,
            scenario.r_max,
            beta5,
            beta6,
        )?;
        let detail = serde_json::to_value(&bounds).unwrap();
        Ok::<_, crate::planner::SafetyError>((bounds, detail))
    }) else {
        art.topology = Some(topology);
        return (report, art);
    };
    art.bounds = Some(bounds);

    // 4. Waypoints for the containment-ball center (A* when a grid exists).
    let Some(waypoints) = run_stage(&mut report, "waypoints", || {
        let wps = match &scenario.grid {
            Some(grid) => astar_waypoints(grid, &d0, &scenario.target.d_f, scenario.r_max)
                .map_err(|e| e.to_string())?,
            None => vec![d0, scenario.target.d_f],
        };
        let detail = serde_json::json!({
            "count": wps.len(),
            "length_m": wps.windows(2).map(|w| (w[1] - w[0]).norm()).sum::<f64>(),
        });
        Ok::<_, String>((wps, detail))
    }) else {
        art.topology = Some(topology);
        return (report, art);
    };
    art.waypoints = Some(waypoints.clone());

    // 5. Plan template + validation. The eigenvalue window and endpoint
    // checks are horizon-independent, so validate on a unit horizon.
    let Some(template) = run_stage(&mut report, "plan_validate", || {
        // Start from the unit stretch with the *target's* stretch-axis
        // angles: lambda = 1 makes Q(0) = I for any axes, and keeping the
        // axes fixed over the maneuver preserves the projected-separation
        // guarantee.
        let theta_0 = crate::DeformationFeatures::new(
            [1.0, 1.0, 1.0],
            [
                0.0,
                0.0,
                0.0,
                scenario.theta_f.beta[3],
                scenario.theta_f.beta[4],
                scenario.theta_f.beta[5],
            ],
        );
        let template = MotionPlan::new(
            waypoints.clone(),
            0.0,
            1.0,
            theta_0,
            scenario.theta_f,
        )
        .map_err(|e| e.to_string())?;
        let plan_report = validate_plan(&template, &bounds, Some(&scenario.target), 1e-3);
        let detail = serde_json::to_value(&plan_report).unwrap();
        let ok = plan_report.ok;
        art.plan_report = Some(plan_report);
        if !ok {
            return Err("plan violates the eigenvalue safety window or misses the target"
                .to_string());
        }
        Ok::<_, String>((template, detail))
    }) else {
        art.topology = Some(topology);
        return (report, art);
    };

    if flags.plan_only {
        art.plan = Some(template);
        art.topology = Some(topology);
        return (report, art);
    }

    // 6. Travel time: solve for the minimal safe horizon unless overridden.
    let tf = if let Some(tf) = flags.tf {
        report.stages.push(StageReport {
            name: "travel_time".into(),
            ok: true,
            wall_time_s: 0.0,
            detail: serde_json::json!({ "overridden": true, "tf": tf }),
        });
        tf
    } else {
        let settings = SolveSettings {
            resolution: scenario.solver.resolution,
            cap: scenario.solver.cap,
            ..SolveSettings::default()
        };
        let leaders = scenario.formation.leader_positions();
        match run_stage(&mut report, "travel_time", || {
            let sol = solve_travel_time(
                &template,
                &topology,
                &leaders,
                &scenario.gains,
                scenario.delta,
                scenario.solver.rho,
                &settings,
            )?;
            let detail = serde_json::json!({
                "tf_star": sol.tf_star,
                "max_deviation": sol.max_deviation,
                "budget": sol.budget,
            });
            Ok::<_, crate::planner::TravelTimeError>((sol, detail))
        }) {
            Some(sol) => {
                let tf = sol.tf_star;
                art.travel_time = Some(sol);
                tf
            }
            None => {
                art.plan = Some(template);
                art.topology = Some(topology);
                return (report, art);
            }
        }
    };
    report.tf = Some(tf);

    let plan = match template.with_times(0.0, tf) {
        Ok(p) => p,
        Err(e) => {
            report.failed_stage = Some(("travel_time".into(), e.to_string()));
            art.plan = Some(template);
            art.topology = Some(topology);
            return (report, art);
        }
    };
    art.plan = Some(plan.clone());

    if flags.solve_only {
        art.topology = Some(topology);
        return (report, art);
    }

    // 7. Nonlinear closed-loop simulation.
    let settings = SimSettings {
        dt: flags.dt.unwrap_or(scenario.solver.dt),
        sample_every: scenario.solver.sample_every,
    };
    let Some(log) = run_stage(&mut report, "simulate", || {
        let (log, final_state) = simulate_nonlinear(
            &scenario.formation,
            &topology,
            &plan,
            &scenario.params,
            &scenario.gains,
            &settings,
        )?;
        let detail = serde_json::json!({
            "dt": settings.dt,
            "samples": log.records.len() / scenario.formation.num_agents(),
            "t_final": final_state.t,
        });
        Ok::<_, crate::sim::SimError>((log, detail))
    }) else {
        art.topology = Some(topology);
        return (report, art);
    };

    // 8. Safety audit of the logged trajectories.
    let audit = {
        let start = Instant::now();
        let audit = audit_safety(
            &log,
            &plan,
            scenario.delta,
            scenario.epsilon,
            scenario.r_max,
            scenario.grid.as_ref(),
        );
        report.stages.push(StageReport {
            name: "audit".into(),
            ok: audit.pass,
            wall_time_s: start.elapsed().as_secs_f64(),
            detail: serde_json::to_value(&audit).unwrap(),
        });
        audit
    };
    report.audit_pass = Some(audit.pass);
    art.log = Some(log);
    art.audit = Some(audit);
    art.topology = Some(topology);
    (report, art)
}

/// Re-audits a previously written trajectory CSV against a scenario: the
/// plan is rebuilt from the scenario (same waypoint stage) over the log's
/// time span.
pub fn audit_log(
    scenario: &Scenario,
    log: &TrajectoryLog,
) -> Result<AuditReport, String> {
    let d0 = formation_center(&scenario.formation.positions);
    let waypoints = match &scenario.grid {
        Some(grid) => astar_waypoints(grid, &d0, &scenario.target.d_f, scenario.r_max)
            .map_err(|e| e.to_string())?,
        None => vec![d0, scenario.target.d_f],
    };
    let tf = log
        .records
        .iter()
        .map(|r| r.t)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(tf > 0.0) {
        return Err("trajectory log is empty".to_string());
    }
    let theta_0 = crate::DeformationFeatures::new(
        [1.0, 1.0, 1.0],
        [
            0.0,
            0.0,
            0.0,
            scenario.theta_f.beta[3],
            scenario.theta_f.beta[4],
            scenario.theta_f.beta[5],
        ],
    );
    let plan = MotionPlan::new(waypoints, 0.0, tf, theta_0, scenario.theta_f)
        .map_err(|e| e.to_string())?;
    Ok(audit_safety(
        log,
        &plan,
        scenario.delta,
        scenario.epsilon,
        scenario.r_max,
        scenario.grid.as_ref(),
    ))
}

fn write_series(
    path: &Path,
    log: &TrajectoryLog,
    value: impl Fn(&crate::sim::SampleRecord) -> f64,
) -> std::io::Result<()> {
    use std::fmt::Write as _;
    let num_agents = log.num_agents();
    let mut s = String::from("t");
    for a in 0..num_agents {
        write!(s, ",agent_{a}").unwrap();
    }
    s.push('\n');
    for sample in log.samples() {
        write!(s, "{}", sample[0].t).unwrap();
        for r in sample {
            write!(s, ",{}", value(r)).unwrap();
        }
        s.push('\n');
    }
    std::fs::write(path, s)
}

/// Writes all artifacts of a (possibly aborted) run into `outdir`:
/// `report.json`, `trajectory.csv`, `audit.json`, plot-ready per-agent
/// series (deviation, x/y/z position, thrust, roll, pitch), and a
/// `MANIFEST.txt` naming every file and any failed stage. Returns the
/// written paths.
pub fn emit_outputs(
    report: &RunReport,
    artifacts: &PipelineArtifacts,
    outdir: &Path,
) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(outdir)?;
    let mut written = Vec::new();
    let write = |name: &str, contents: String| -> std::io::Result<PathBuf> {
        let path = outdir.join(name);
        std::fs::write(&path, contents)?;
        Ok(path)
    };

    written.push(write("report.json", serde_json::to_string_pretty(report)?)?);
    if let Some(audit) = &artifacts.topology_audit {
        written.push(write(
            "topology.json",
            serde_json::to_string_pretty(audit)?,
        )?);
    }
    if let Some(bounds) = &artifacts.bounds {
        written.push(write("bounds.json", serde_json::to_string_pretty(bounds)?)?);
    }
    if let Some(wps) = &artifacts.waypoints {
        let rows: Vec<[f64; 3]> = wps.iter().map(|w| [w.x, w.y, w.z]).collect();
        written.push(write(
            "waypoints.json",
            serde_json::to_string_pretty(&rows)?,
        )?);
    }
    if let Some(audit) = &artifacts.audit {
        written.push(write("audit.json", serde_json::to_string_pretty(audit)?)?);
    }
    if let Some(log) = &artifacts.log {
        written.push(write("trajectory.csv", log.to_csv())?);
        for (name, f) in [
            ("deviation.csv", (|r| r.deviation) as fn(&crate::sim::SampleRecord) -> f64),
            ("position_x.csv", |r| r.pos.x),
            ("position_y.csv", |r| r.pos.y),
            ("position_z.csv", |r| r.pos.z),
            ("thrust.csv", |r| r.p),
            ("roll.csv", |r| r.euler.x),
            ("pitch.csv", |r| r.euler.y),
        ] {
            let path = outdir.join(name);
            write_series(&path, log, f)?;
            written.push(path);
        }
    }

    // Human-readable summary.
    let mut summary = String::new();
    {
        use std::fmt::Write as _;
        writeln!(
            summary,
            "scenario: {}",
            report.scenario.as_deref().unwrap_or("(unnamed)")
        )
        .unwrap();
        for stage in &report.stages {
            writeln!(
                summary,
                "stage {:<14} {}  ({:.3} s)",
                stage.name,
                if stage.ok { "ok" } else { "FAILED" },
                stage.wall_time_s
            )
            .unwrap();
        }
        if let Some(tf) = report.tf {
            writeln!(summary, "horizon tf = {tf} s").unwrap();
        }
        match report.audit_pass {
            Some(true) => writeln!(summary, "audit: PASS").unwrap(),
            Some(false) => writeln!(summary, "audit: FAIL").unwrap(),
            None => writeln!(summary, "audit: not run").unwrap(),
        }
        if let Some((stage, err)) = &report.failed_stage {
            writeln!(summary, "aborted at stage {stage}: {err}").unwrap();
        }
    }
    written.push(write("summary.txt", summary)?);

    // Manifest last, naming everything written above.
    let mut manifest = String::new();
    {
        use std::fmt::Write as _;
        writeln!(manifest, "# run artifacts").unwrap();
        if let Some((stage, err)) = &report.failed_stage {
            writeln!(manifest, "# RUN ABORTED at stage {stage}: {err}").unwrap();
        }
        for path in &written {
            writeln!(
                manifest,
                "{}",
                path.file_name().unwrap().to_string_lossy()
            )
            .unwrap();
        }
    }
    let manifest_path = outdir.join("MANIFEST.txt");
    std::fs::write(&manifest_path, manifest)?;
    written.push(manifest_path);
    Ok(written)
}
