//! Command-line front end: plan, solve the travel time, simulate, audit, or
//! run the whole pipeline on a scenario file.

use affine_swarm::pipeline::{audit_log, emit_outputs, run_pipeline, PipelineFlags};
use affine_swarm::scenario::load_scenario;
use affine_swarm::sim::TrajectoryLog;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Environment variable giving the default output directory.
const OUT_ENV: &str = "AFFINE_SWARM_OUT";

#[derive(Parser)]
#[command(
    name = "affine-swarm",
    about = "Plan and simulate safe affine formation maneuvers for a quadcopter swarm"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory (default: $AFFINE_SWARM_OUT or ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the topology, choose safety bounds, and validate the plan;
    /// no travel-time solve or simulation.
    Plan {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Plan, then solve for the minimal safe travel time.
    SolveTime {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Plan, solve (or take a fixed horizon), simulate, and audit.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Fixed horizon in seconds, bypassing the travel-time solver.
        #[arg(long)]
        tf: Option<f64>,
        /// Simulation integration step in seconds.
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Re-audit a previously written trajectory CSV against a scenario.
    Audit {
        #[command(flatten)]
        common: CommonArgs,
        /// Trajectory CSV produced by a previous run.
        #[arg(long)]
        trajectory: PathBuf,
    },
    /// Full pipeline: plan, solve, simulate, audit, emit all artifacts.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Fixed horizon in seconds, bypassing the travel-time solver.
        #[arg(long)]
        tf: Option<f64>,
        /// Simulation integration step in seconds.
        #[arg(long)]
        dt: Option<f64>,
        /// Stop after plan validation.
        #[arg(long)]
        plan_only: bool,
    },
}

fn outdir(common: &CommonArgs) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn init_threads(common: &CommonArgs) {
    if let Some(threads) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .expect("thread pool is configured once, before any parallel work");
    }
}

fn execute(common: &CommonArgs, flags: PipelineFlags) -> ExitCode {
    init_threads(common);
    let scenario = match load_scenario(&common.scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let (report, artifacts) = run_pipeline(&scenario, &flags);
    let dir = outdir(common);
    if let Err(e) = emit_outputs(&report, &artifacts, &dir) {
        eprintln!("cannot write outputs to {}: {e}", dir.display());
        return ExitCode::from(4);
    }
    for stage in &report.stages {
        println!(
            "stage {:<14} {}  ({:.3} s)",
            stage.name,
            if stage.ok { "ok" } else { "FAILED" },
            stage.wall_time_s
        );
    }
    if let Some(tf) = report.tf {
        println!("horizon tf = {tf} s");
    }
    if let Some((stage, err)) = &report.failed_stage {
        eprintln!("aborted at stage {stage}: {err}");
        return ExitCode::from(3);
    }
    match report.audit_pass {
        Some(true) => println!("audit: PASS"),
        Some(false) => {
            eprintln!("audit: FAIL (see {}/audit.json)", dir.display());
            return ExitCode::from(1);
        }
        None => {}
    }
    println!("artifacts written to {}", dir.display());
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Plan { common } => execute(
            &common,
            PipelineFlags {
                plan_only: true,
                ..Default::default()
            },
        ),
        Command::SolveTime { common } => execute(
            &common,
            PipelineFlags {
                solve_only: true,
                ..Default::default()
            },
        ),
        Command::Simulate { common, tf, dt } => execute(
            &common,
            PipelineFlags {
                tf,
                dt,
                ..Default::default()
            },
        ),
        Command::Run {
            common,
            tf,
            dt,
            plan_only,
        } => execute(
            &common,
            PipelineFlags {
                tf,
                dt,
                plan_only,
                ..Default::default()
            },
        ),
        Command::Audit { common, trajectory } => {
            init_threads(&common);
            let scenario = match load_scenario(&common.scenario) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(2);
                }
            };
            let text = match std::fs::read_to_string(&trajectory) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("cannot read {}: {e}", trajectory.display());
                    return ExitCode::from(2);
                }
            };
            let log = match TrajectoryLog::from_csv(&text) {
                Ok(l) => l,
                Err(e) => {
                    eprintln!("bad trajectory CSV: {e}");
                    return ExitCode::from(2);
                }
            };
            let audit = match audit_log(&scenario, &log) {
                Ok(a) => a,
                Err(e) => {
                    eprintln!("audit failed: {e}");
                    return ExitCode::from(3);
                }
            };
            let dir = outdir(&common);
            if std::fs::create_dir_all(&dir).is_ok() {
                let _ = std::fs::write(
                    dir.join("audit.json"),
                    serde_json::to_string_pretty(&audit).unwrap(),
                );
            }
            for check in &audit.checks {
                println!(
                    "check {:<22} {}  (worst {:.6}, threshold {:.6})",
                    check.name,
                    if check.pass { "ok" } else { "FAILED" },
                    check.worst_value,
                    check.threshold
                );
            }
            if audit.pass {
                println!("audit: PASS");
                ExitCode::SUCCESS
            } else {
                eprintln!("audit: FAIL");
                ExitCode::from(1)
            }
        }
    }
}
