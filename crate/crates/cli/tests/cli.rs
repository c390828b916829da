use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn regq(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regq"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn dumped_environment_loads_as_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = regq(&["env", "--name", "example1", "--dump", "ex1.json"], dir.path());
    assert!(out.status.success());

    let from_file = json(&regq(&["exact", "--mdp", "ex1.json"], dir.path()));
    let builtin = json(&regq(&["exact", "--mdp", "example1"], dir.path()));
    assert_eq!(from_file, builtin);
    let bound = from_file["q_bound"].as_f64().unwrap();
    assert!((bound - 200.0).abs() < 1e-9);
}

#[test]
fn solve_methods_agree() {
    let dir = tempfile::tempdir().unwrap();
    let theta = |method: &str| -> Vec<f64> {
        let v = json(&regq(&["solve", "--mdp", "example1", "--eta", "1.98", "--method", method], dir.path()));
        serde_json::from_value(v["theta_e"].clone()).unwrap()
    };
    let fixed = theta("fixed");
    for other in [theta("iter"), theta("enum")] {
        for (a, b) in fixed.iter().zip(&other) {
            assert!((a - b).abs() <= 1e-6, "{fixed:?} vs {other:?}");
        }
    }
}

#[test]
fn thresholds_report_at_eta() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(&regq(&["thresholds", "--mdp", "ode-mdp", "--eta", "2.25"], dir.path()));
    assert!((v["eta_gersh"].as_f64().unwrap() - 0.60875).abs() < 1e-12);
    assert_eq!(v["min_eig_sym"].as_array().unwrap().len(), 4);
    assert!(v["lipschitz_l"].as_f64().unwrap() > 0.0);
}

#[test]
fn bound_below_threshold_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let ok = json(&regq(&["bound", "--mdp", "example1", "--eta", "1.98"], dir.path()));
    assert!(ok["actual"].as_f64().unwrap() <= ok["bound"].as_f64().unwrap());

    let out = regq(&["bound", "--mdp", "example1", "--eta", "0.01"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // Baird's features are rank deficient.
    assert_eq!(regq(&["solve", "--mdp", "baird", "--eta", "2"], dir.path()).status.code(), Some(2));
    assert_eq!(regq(&["solve", "--mdp", "nowhere", "--eta", "2"], dir.path()).status.code(), Some(2));
    assert_eq!(regq(&["--jobs", "0", "thresholds", "--mdp", "example1"], dir.path()).status.code(), Some(2));
    let capped = regq(&["solve", "--mdp", "example1", "--eta", "0", "--max-iter", "50"], dir.path());
    assert_eq!(capped.status.code(), Some(4));
    let coarse = regq(&["ode", "--mdp", "ode-mdp", "--eta", "2.25", "--dt", "5", "--out", "o.csv"], dir.path());
    assert_eq!(coarse.status.code(), Some(2));
}

#[test]
fn ode_writes_three_systems() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(&regq(
        &["--out-dir", "res", "ode", "--mdp", "ode-mdp", "--eta", "2.25", "--t-end", "5", "--out", "traj.csv"],
        dir.path(),
    ));
    assert!(v["max_violation"].as_f64().unwrap() <= 1e-7);
    let text = fs::read_to_string(dir.path().join("res/traj.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,system,theta_1,theta_2");
    let rows: Vec<&str> = lines.collect();
    // 500 steps plus the initial point, per system.
    assert_eq!(rows.len(), 3 * 501);
    for system in ["upper", "original", "lower"] {
        assert!(rows.iter().any(|r| r.split(',').nth(1) == Some(system)));
    }
}

#[test]
fn run_writes_traces_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        [
            "--seed", "5", "run", "--env", "baird", "--agent", "regq", "--steps", "2000", "--runs", "3", "--out", out,
        ]
    };
    json(&regq(&args("a/trace.csv"), dir.path()));
    json(&regq(&args("b/trace.csv"), dir.path()));

    let a = fs::read_to_string(dir.path().join("a/trace.csv")).unwrap();
    let b = fs::read_to_string(dir.path().join("b/trace.csv")).unwrap();
    assert_eq!(a, b);
    let header = a.lines().next().unwrap();
    assert_eq!(header, "run,step,norm_theta,dist_to_theta_e,diverged");
    // No reference solution on Baird, so the distance column is empty.
    let second = a.lines().nth(1).unwrap();
    assert_eq!(second.split(',').nth(3), Some(""));
    assert!(dir.path().join("a/trace_aggregate.csv").exists());

    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/trace.json")).unwrap()).unwrap();
    assert_eq!(sidecar["seed"], 5);
    assert_eq!(sidecar["agent"]["kind"], "regq");
}

#[test]
fn run_overrides_eta_and_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let out = regq(
        &[
            "run", "--env", "theta2theta", "--agent", "regq", "--agent", "qlearn", "--eta", "0", "--alpha", "0.25",
            "--steps", "300", "--out", "t.csv",
        ],
        dir.path(),
    );
    let v = json(&out);
    // With eta = 0 both agents follow the same update.
    let runs = v["runs"].as_array().unwrap();
    assert_eq!(runs[0]["final_theta"], runs[1]["final_theta"]);
    assert!(dir.path().join("t-regq.csv").exists());
    assert!(dir.path().join("t-qlearn.csv").exists());
}

#[test]
fn repro_reports_checks() {
    let dir = tempfile::tempdir().unwrap();
    let out = regq(&["--out-dir", "exp", "repro", "theta2theta"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("PASS criterion  8"));
    assert!(dir.path().join("exp/theta2theta/regq.csv").exists());
    assert!(dir.path().join("exp/theta2theta/cql.json").exists());
}

#[test]
fn repro_requires_a_recipe() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(regq(&["repro"], dir.path()).status.code(), Some(2));
}
