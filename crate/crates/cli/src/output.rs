//! CSV and JSON writers for solve results.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use varevo::diagnostics::CostateTrajectory;
use varevo::{Snapshot, Trajectory};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn row<W: Write>(out: &mut W, values: impl IntoIterator<Item = f64>) -> io::Result<()> {
    let cells: Vec<String> = values.into_iter().map(num).collect();
    writeln!(out, "{}", cells.join(","))
}

fn header<W: Write>(out: &mut W, fixed: &[&str], prefix: &str, count: usize) -> io::Result<()> {
    let mut cols: Vec<String> = fixed.iter().map(|s| s.to_string()).collect();
    cols.extend((1..=count).map(|k| format!("{prefix}_{k}")));
    writeln!(out, "{}", cols.join(","))
}

pub fn write_history<W: Write>(out: &mut W, snapshots: &[Snapshot<f64>]) -> io::Result<()> {
    let q = snapshots.first().map_or(0, |s| s.pi.len());
    header(
        out,
        &["tau", "J", "res_u", "res_tf", "t_f", "g_drift"],
        "pi",
        q,
    )?;
    for s in snapshots {
        let fixed = [s.tau, s.cost, s.res_u, s.res_tf, s.tf, s.g_drift];
        row(out, fixed.into_iter().chain(s.pi.iter().copied()))?;
    }
    Ok(())
}

pub fn write_trajectory<W: Write>(out: &mut W, traj: &Trajectory) -> io::Result<()> {
    let (n, m) = (traj.state_dim(), traj.control_dim());
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|k| format!("x_{k}")));
    cols.extend((1..=m).map(|k| format!("u_{k}")));
    writeln!(out, "{}", cols.join(","))?;
    for i in 0..traj.nodes() {
        let (x, u) = (traj.x.column(i), traj.u.column(i));
        let values = std::iter::once(traj.time(i))
            .chain(x.iter().copied())
            .chain(u.iter().copied());
        row(out, values)?;
    }
    Ok(())
}

pub fn write_costates<W: Write>(
    out: &mut W,
    traj: &Trajectory,
    costates: &CostateTrajectory<f64>,
) -> io::Result<()> {
    header(out, &["t"], "gamma", costates.gamma.nrows())?;
    for i in 0..traj.nodes() {
        row(
            out,
            std::iter::once(traj.time(i)).chain(costates.gamma.column(i).iter().copied()),
        )?;
    }
    Ok(())
}

pub fn trajectory_file_name(tau: f64) -> String {
    format!("trajectory_{tau:.3}.csv")
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub problem: String,
    pub nodes: usize,
    pub stop_reason: String,
    pub failure: Option<String>,
    pub tau: f64,
    #[serde(rename = "J")]
    pub cost: f64,
    pub pi: Vec<f64>,
    pub t_f: f64,
    pub res_u: f64,
    pub res_tf: f64,
    pub g_drift: f64,
    pub snapshots: usize,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub rhs_evaluations: usize,
    pub wall_time_s: f64,
}

/// Writes every output file into `dir` and returns the paths written.
pub fn write_all(
    dir: &Path,
    snapshots: &[Snapshot<f64>],
    costates: Option<&CostateTrajectory<f64>>,
    summary: &RunSummary,
) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let path = dir.join("history.csv");
    let mut f = create(&path)?;
    write_history(&mut f, snapshots)?;
    f.flush()?;
    written.push(path);

    for s in snapshots {
        let path = dir.join(trajectory_file_name(s.tau));
        let mut f = create(&path)?;
        write_trajectory(&mut f, &s.trajectory)?;
        f.flush()?;
        written.push(path);
    }

    if let (Some(ct), Some(last)) = (costates, snapshots.last()) {
        let path = dir.join("costates.csv");
        let mut f = create(&path)?;
        write_costates(&mut f, &last.trajectory, ct)?;
        f.flush()?;
        written.push(path);
    }

    let path = dir.join("report.json");
    let mut f = create(&path)?;
    serde_json::to_writer_pretty(&mut f, summary)?;
    writeln!(f)?;
    f.flush()?;
    written.push(path);
    Ok(written)
}
