use std::fs;
use std::process::Command;

fn iongate() -> Command {
    Command::new(env!("CARGO_BIN_EXE_iongate"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("binary runs");
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn crystal_json_has_documented_keys() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    run_ok(iongate().args(["crystal", "--ions", "5", "--json"]).arg(&path));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["n"], 5);
    for key in ["positions", "mode_eigenvalues", "mode_vectors", "local_frequencies"] {
        assert!(v[key].is_array(), "{key}");
    }
    assert!((v["mode_eigenvalues"][1].as_f64().unwrap() - 3.0).abs() < 1e-9);
}

#[test]
fn gate_evaluation_and_optimization() {
    let out = run_ok(iongate().args(["gate", "--ions", "20", "--tau", "2", "--mu", "0.5", "--nbar", "3"]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!((v["phi_total"].as_f64().unwrap().abs() - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    assert_eq!(v["alpha_i_re"].as_array().unwrap().len(), 20);

    let out = run_ok(iongate().args([
        "gate", "--ions", "6", "--pair", "3,4", "--tau", "0.5", "--mu", "4", "--segments", "13", "--optimize",
        "--nbar", "1",
    ]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["scope"], "full");
    assert_eq!(v["segments"], 13);
    assert!((v["fidelity"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn gate_rejects_bad_input() {
    let out = iongate()
        .args(["gate", "--ions", "4", "--pair", "2,2", "--tau", "1", "--mu", "1", "--nbar", "1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let out = iongate()
        .args(["gate", "--ions", "4", "--tau", "1", "--mu", "1", "--segments", "2", "--amps", "1", "--nbar", "1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn sweep_csv_with_config_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("spec.json");
    fs::write(
        &config,
        r#"{"ions": 4, "pair": [2, 3], "tau": [1.0], "mu_min": 0.5, "mu_max": 2.0, "points": 4, "segments": 1, "nbar": 1.0}"#,
    )
    .unwrap();
    let csv = dir.path().join("out.csv");
    run_ok(iongate().arg("sweep").arg("--config").arg(&config).args(["--points", "6", "--csv"]).arg(&csv));
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("mu,tau_over_tau0,segments,fidelity,required_amp"));
    assert_eq!(lines.len(), 7);
    assert!(lines[1].starts_with("0.5,1,1,"));

    let again = dir.path().join("again.csv");
    run_ok(iongate().arg("--sequential").arg("sweep").arg("--config").arg(&config).args(["--points", "6", "--csv"]).arg(&again));
    assert_eq!(fs::read(&csv).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn oracle_reports_json() {
    let out = run_ok(iongate().args(["oracle", "--ions", "2", "--tau", "1", "--mu", "0.6", "--segments", "5", "--nbar", "1"]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!((v["fidelity_numeric"].as_f64().unwrap() - 1.0).abs() < 1e-5);
    assert!(v["convergence"].as_array().unwrap().len() >= 2);
    assert!(v["abs_difference"].as_f64().is_some());
}

#[test]
fn reproduce_rejects_unknown_target() {
    let dir = tempfile::tempdir().unwrap();
    let out = iongate().args(["reproduce", "fig9", "--out"]).arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn reproduce_fig2_files() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(iongate().args(["reproduce", "fig2", "--out"]).arg(dir.path()));
    let b = fs::read_to_string(dir.path().join("fig2b.csv")).unwrap();
    let lines: Vec<&str> = b.lines().collect();
    assert_eq!(lines[0], "segment_index,scope,amp_normalized");
    assert_eq!(lines.len(), 26);
    assert_eq!(lines[1], "1,n=0,1");
    let a = fs::read_to_string(dir.path().join("fig2a.csv")).unwrap();
    assert_eq!(a.lines().next().unwrap(), "mu,tau_over_tau0,fidelity");
    assert_eq!(a.lines().count(), 1 + 3 * 2400);
}
