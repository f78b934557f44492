mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::Parser;
use nalgebra::DMatrix;
use varevo::diagnostics::reconstruct_costates_for;
use varevo::problems::BuiltinProblem;
use varevo::{evolve, Config, Gains, StopReason, VemError};

use output::RunSummary;

/// Environment variable overriding the default output directory.
const OUT_DIR_ENV: &str = "VAREVO_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "varevo-out";

#[derive(Parser, Debug)]
#[command(name = "varevo", version)]
#[command(about = "Solve a built-in optimal control problem by variation evolution")]
struct Args {
    /// Built-in problem: double-integrator or brachistochrone
    #[arg(long)]
    problem: BuiltinProblem,

    /// Number of time nodes (default depends on the problem)
    #[arg(long)]
    nodes: Option<usize>,

    /// Control gain K as a multiple of the identity
    #[arg(long, default_value_t = 0.1, conflicts_with = "k_matrix")]
    k_scale: f64,

    /// File holding the full control gain matrix, one row per line
    #[arg(long)]
    k_matrix: Option<PathBuf>,

    /// Terminal-time gain
    #[arg(long, default_value_t = 0.05)]
    k_tf: f64,

    #[arg(long, default_value_t = 300.0)]
    tau_max: f64,

    #[arg(long, default_value_t = 1e-3)]
    rel_tol: f64,

    #[arg(long, default_value_t = 1e-6)]
    abs_tol: f64,

    /// Stop once both optimality residuals fall below this
    #[arg(long, default_value_t = 1e-6)]
    residual_tol: f64,

    /// Spacing in tau between recorded snapshots
    #[arg(long, default_value_t = 1.0)]
    snapshot_every: f64,

    /// Ceiling on the initial dynamics and constraint residual
    #[arg(long, default_value_t = varevo::engine::DEFAULT_FEASIBILITY_TOL)]
    feasibility_tol: f64,

    /// Evolve nodal values without following the stretching time grid
    #[arg(long)]
    no_stretch_correction: bool,

    /// Output directory [env: VAREVO_OUT_DIR] [default: varevo-out]
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<f64>()
                        .with_context(|| format!("bad number {s:?}"))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        bail!("gain matrix must be square, got {} rows", n);
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

enum Failure {
    Usage(anyhow::Error),
    Solve(anyhow::Error),
}

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn solve(args: Args) -> Result<StopReason, Failure> {
    let problem = args.problem.model::<f64>();
    let nodes = args.nodes.unwrap_or_else(|| args.problem.default_nodes());
    let k = match &args.k_matrix {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(usage)?;
            parse_matrix(&text).map_err(usage)?
        }
        None => DMatrix::identity(problem.control_dim(), problem.control_dim()) * args.k_scale,
    };
    let gains = Gains::new(k, args.k_tf).map_err(usage)?;
    let cfg = Config {
        tau_max: args.tau_max,
        rel_tol: args.rel_tol,
        abs_tol: args.abs_tol,
        residual_tol: args.residual_tol,
        snapshot_every: args.snapshot_every,
        feasibility_tol: args.feasibility_tol,
        stretch_correction: !args.no_stretch_correction,
    };
    cfg.validate().map_err(usage)?;
    let init = args.problem.initial_trajectory(nodes).map_err(usage)?;
    let dir = out_dir(args.out);

    let start = Instant::now();
    let report = match evolve(&problem, &init, &gains, &cfg) {
        Ok(r) => r,
        Err(e @ VemError::Config(_)) => return Err(usage(e)),
        Err(e) => return Err(Failure::Solve(e.into())),
    };
    let wall = start.elapsed().as_secs_f64();
    let last = report.last();
    let costates = reconstruct_costates_for(&problem, &last.trajectory, &last.pi);
    if let Err(e) = &costates {
        log::warn!("costate reconstruction failed: {e}");
    }
    let summary = RunSummary {
        problem: args.problem.to_string(),
        nodes,
        stop_reason: report.stop_reason.as_str().to_string(),
        failure: report.failure.as_ref().map(ToString::to_string),
        tau: last.tau,
        cost: last.cost,
        pi: last.pi.iter().copied().collect(),
        t_f: last.tf,
        res_u: last.res_u,
        res_tf: last.res_tf,
        g_drift: last.g_drift,
        snapshots: report.snapshots.len(),
        steps_accepted: report.steps_accepted,
        steps_rejected: report.steps_rejected,
        rhs_evaluations: report.rhs_evaluations,
        wall_time_s: wall,
    };
    write_outputs(&dir, &report.snapshots, costates.ok().as_ref(), &summary)
        .map_err(Failure::Usage)?;
    eprintln!(
        "{}: {} at tau = {}, J = {}, t_f = {}",
        summary.problem, summary.stop_reason, summary.tau, summary.cost, summary.t_f
    );
    Ok(report.stop_reason)
}

fn write_outputs(
    dir: &Path,
    snapshots: &[varevo::Snapshot<f64>],
    costates: Option<&varevo::diagnostics::CostateTrajectory<f64>>,
    summary: &RunSummary,
) -> Result<()> {
    let written = output::write_all(dir, snapshots, costates, summary)
        .with_context(|| format!("writing results to {}", dir.display()))?;
    log::info!("wrote {} files to {}", written.len(), dir.display());
    Ok(())
}

fn run<I, S>(argv: I) -> u8
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match solve(args) {
        Ok(StopReason::ResidualMet | StopReason::TauMaxReached) => 0,
        Ok(StopReason::Diverged | StopReason::FeasibilityLost) => 2,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            1
        }
        Err(Failure::Solve(e)) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    ExitCode::from(run(std::env::args_os()))
}
