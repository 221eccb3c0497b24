use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn llot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_llot")).args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn two_site_transport_has_value_one() {
    let out = llot(&["mmot", "--density", path_str(&data("two_site.csv")), "--n", "2", "--solver", "lp"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["command"], "mmot");
    assert_eq!(v["config"]["n"], 2);
    assert_eq!(v["config"]["solver"], "lp");
    assert!((v["result"]["value"].as_f64().unwrap() - 1.0).abs() < 1e-10);
    assert_eq!(v["result"]["dual"]["passed"], true);
}

#[test]
fn particle_number_convention_rescales() {
    let dir = tempfile::tempdir().unwrap();
    let rho = dir.path().join("rho.csv");
    std::fs::write(&rho, "x,value\n0,1\n1,1\n2,1\n").unwrap();
    let out = llot(&["mmot", "--density", path_str(&rho), "--n", "3", "--convention", "particle-number"]);
    assert_eq!(out.status.code(), Some(0));
    assert!((json(&out)["result"]["value"].as_f64().unwrap() - 2.5).abs() < 1e-10);
    // the same file read as a probability density has the wrong mass
    let out = llot(&["mmot", "--density", path_str(&rho), "--n", "3"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn malformed_csv_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x,value\n0,0.5\n1,oops\n").unwrap();
    let out = llot(&["mmot", "--density", path_str(&bad), "--n", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn unknown_flag_prints_usage() {
    let out = llot(&["mmot", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(llot(&["--help"]).status.code(), Some(0));
}

#[test]
fn plain_sinkhorn_refuses_large_beta() {
    let out = llot(&[
        "mmot",
        "--density",
        path_str(&data("sixteen_site.csv")),
        "--n",
        "2",
        "--solver",
        "sinkhorn",
        "--plain",
        "--beta",
        "80",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("log-domain"));
}

#[test]
fn missing_output_directory_fails_before_compute() {
    let out = llot(&[
        "sweep",
        "--density",
        path_str(&data("semiclassical.csv")),
        "--n",
        "2",
        "--out",
        "/no/such/dir/sweep.csv",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
}

#[test]
fn sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let report = dir.path().join("report.json");
    let out = llot(&[
        "sweep",
        "--density",
        path_str(&data("semiclassical.csv")),
        "--n",
        "2",
        "--etas",
        "1e-4:1e-1:10",
        "--out",
        path_str(&csv),
        "--report",
        path_str(&report),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("eta,eps_opt,e_ot,trial_total,gap,assembled_C"));
    assert_eq!(lines.count(), 10);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let slope = v["result"]["fitted_slope"].as_f64().unwrap();
    assert!((0.4..=0.6).contains(&slope));
}

#[test]
fn transport_plan_feeds_the_regularizer() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.json");
    let rho = data("two_points_rho.csv");
    let out = llot(&["mmot", "--density", path_str(&rho), "--n", "2", "--out", path_str(&plan)]);
    assert_eq!(out.status.code(), Some(0));
    let out = llot(&[
        "regularize",
        "--plan",
        path_str(&plan),
        "--density",
        path_str(&rho),
        "--eps",
        "0.125",
        "--checks",
        "marginal,kinetic",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert!(v["result"]["marginal"]["l1"].as_f64().unwrap() <= 1e-10);
    assert_eq!(v["result"]["kinetic"]["passed"], true);
    assert!(v["result"]["potential"].is_null());
}

#[test]
fn too_wide_mollifier_is_a_validation_error() {
    let out = llot(&[
        "regularize",
        "--plan",
        path_str(&data("two_points_plan.json")),
        "--density",
        path_str(&data("two_points_rho.csv")),
        "--eps",
        "0.3",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("too wide"));
}

#[test]
fn thread_count_does_not_change_results() {
    let run = |threads: &str| {
        let out = llot(&[
            "--threads",
            threads,
            "quantum-check",
            "--plan",
            path_str(&data("two_bumps_plan.json")),
            "--density",
            path_str(&data("two_bumps_rho.csv")),
            "--eps",
            "0.0625",
        ]);
        assert_eq!(out.status.code(), Some(0));
        json(&out)["result"].clone()
    };
    let one = run("1");
    assert_eq!(one, run("3"));
    assert_eq!(one["passed"], true);
}
