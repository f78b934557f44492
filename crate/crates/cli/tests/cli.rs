use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use varevo::problems;

fn varevo(args: &[&str], out: Option<&Path>, env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_varevo"));
    cmd.args(args).env_remove("VAREVO_OUT_DIR");
    if let Some(dir) = out {
        cmd.arg("--out").arg(dir);
    }
    if let Some(dir) = env_out {
        cmd.env("VAREVO_OUT_DIR", dir);
    }
    cmd.output().unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn zero_horizon_writes_one_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let out = varevo(
        &["--problem", "double-integrator", "--tau-max", "0"],
        Some(tmp.path()),
        None,
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let (header, rows) = read_csv(&tmp.path().join("history.csv"));
    assert_eq!(
        header,
        ["tau", "J", "res_u", "res_tf", "t_f", "g_drift", "pi_1", "pi_2"]
    );
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], 0.0);
    assert_eq!(rows[0][4], 2.0);

    let (header, rows) = read_csv(&tmp.path().join("costates.csv"));
    assert_eq!(header, ["t", "gamma_1", "gamma_2"]);
    assert_eq!(rows.len(), 41);

    let r = report(tmp.path());
    assert_eq!(r["stop_reason"], "TauMaxReached");
    assert_eq!(r["snapshots"], 1);
    assert!(r["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(r["pi"].as_array().unwrap().len(), 2);
}

#[test]
fn trajectory_csv_round_trips_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = varevo(
        &[
            "--problem",
            "brachistochrone",
            "--tau-max",
            "0",
            "--nodes",
            "33",
        ],
        Some(tmp.path()),
        None,
    );
    assert_eq!(out.status.code(), Some(0));
    let (header, rows) = read_csv(&tmp.path().join("trajectory_0.000.csv"));
    assert_eq!(header, ["t", "x_1", "x_2", "x_3", "u_1"]);
    let init = problems::init_straightline_brachistochrone::<f64>(33).unwrap();
    assert_eq!(rows.len(), 33);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0].to_bits(), init.time(i).to_bits());
        for k in 0..3 {
            assert_eq!(r[1 + k].to_bits(), init.x[(k, i)].to_bits());
        }
        assert_eq!(r[4].to_bits(), init.u[(0, i)].to_bits());
    }
}

#[test]
fn usage_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        &["--problem", "pendulum"][..],
        &["--problem", "brachistochrone", "--frobnicate"],
        &["--problem", "brachistochrone", "--rel-tol", "-1"],
        &["--problem", "brachistochrone", "--nodes", "2"],
        &["--problem", "brachistochrone", "--k-scale", "-0.1"],
    ] {
        let out = varevo(args, Some(tmp.path()), None);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    assert!(!tmp.path().join("report.json").exists());
}

#[test]
fn output_directory_precedence() {
    let flag = tempfile::tempdir().unwrap();
    let env = tempfile::tempdir().unwrap();
    let args = ["--problem", "double-integrator", "--tau-max", "0"];

    let out = varevo(&args, None, Some(env.path()));
    assert_eq!(out.status.code(), Some(0));
    assert!(env.path().join("report.json").exists());

    fs::remove_file(env.path().join("report.json")).unwrap();
    let out = varevo(&args, Some(flag.path()), Some(env.path()));
    assert_eq!(out.status.code(), Some(0));
    assert!(flag.path().join("report.json").exists());
    assert!(!env.path().join("report.json").exists());
}

#[test]
fn gain_matrix_file() {
    let tmp = tempfile::tempdir().unwrap();
    let k = tmp.path().join("k.txt");
    fs::write(&k, "0.1\n").unwrap();
    let out = varevo(
        &[
            "--problem",
            "double-integrator",
            "--tau-max",
            "2",
            "--k-matrix",
            k.to_str().unwrap(),
        ],
        Some(&tmp.path().join("run")),
        None,
    );
    assert_eq!(out.status.code(), Some(0));
    let (_, rows) = read_csv(&tmp.path().join("run/history.csv"));
    assert_eq!(rows.len(), 3);
    assert!(rows[2][1] < rows[0][1]);

    fs::write(&k, "1 0\n0 1\n").unwrap();
    let out = varevo(
        &[
            "--problem",
            "double-integrator",
            "--k-matrix",
            k.to_str().unwrap(),
        ],
        Some(tmp.path()),
        None,
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn double_integrator_reaches_the_minimum() {
    let tmp = tempfile::tempdir().unwrap();
    let out = varevo(
        &["--problem", "double-integrator", "--tau-max", "300"],
        Some(tmp.path()),
        None,
    );
    assert_eq!(out.status.code(), Some(0));
    let r = report(tmp.path());
    assert!((r["J"].as_f64().unwrap() - 3.25).abs() <= 0.01);
}

#[test]
fn brachistochrone_defaults_reach_the_descent_time() {
    let tmp = tempfile::tempdir().unwrap();
    let out = varevo(&["--problem", "brachistochrone"], Some(tmp.path()), None);
    assert_eq!(out.status.code(), Some(0));
    let r = report(tmp.path());
    let tf = r["t_f"].as_f64().unwrap();
    assert!((tf - 0.8168).abs() <= 0.005, "{tf}");
    let (header, rows) = read_csv(&tmp.path().join("history.csv"));
    assert_eq!(header.len(), 8);
    assert!(rows.windows(2).all(|w| w[1][0] > w[0][0]));
}

#[test]
fn lost_feasibility_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = varevo(
        &[
            "--problem",
            "brachistochrone",
            "--no-stretch-correction",
            "--feasibility-tol",
            "0.01",
            "--tau-max",
            "40",
        ],
        Some(tmp.path()),
        None,
    );
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(report(tmp.path())["stop_reason"], "FeasibilityLost");
}
