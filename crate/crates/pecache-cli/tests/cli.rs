//! End-to-end tests of the `pecache` binary: determinism of CSV output,
//! plan round-trips, and error signalling.

use std::process::{Command, Output};

fn pecache(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pecache"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_of(args: &[&str]) -> String {
    let out = pecache(args);
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn experiment_output_is_byte_identical_across_runs() {
    let args = ["exp", "--exp", "4"];
    let a = stdout_of(&args);
    let b = stdout_of(&args);
    assert_eq!(a, b);
    assert!(a.starts_with("# exp=4"), "config echo missing:\n{a}");
    assert!(a.contains("eps,n_star,d_max_chain,d_max_merge"), "header missing:\n{a}");
}

#[test]
fn experiment_writes_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp1.csv");
    let out = pecache(&["exp", "--exp", "1", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, stdout_of(&["exp", "--exp", "1"]));
}

#[test]
fn calc_rows_match_known_values() {
    let out = stdout_of(&["calc", "nstar", "--eps", "0.01", "--delta", "0.1"]);
    assert_eq!(out, "eps,delta,n_star\n0.01,0.1,10\n");

    let out = stdout_of(&["calc", "rstar", "--kappa", "500", "--eps", "0.2", "--delta", "0.1"]);
    assert_eq!(out, "kappa,eps,delta,r_star\n500,0.2,0.1,112\n");

    let out = stdout_of(&["calc", "kl", "--p", "0.2", "--q", "0.2"]);
    assert!(out.ends_with("0.2,0.2,0\n"), "{out}");
}

#[test]
fn simulate_is_deterministic_apart_from_wall_time() {
    let args =
        ["simulate", "coded", "--kappa", "50", "--eps", "0.3", "--r", "20", "--trials", "20000", "--seed", "5"];
    let strip = |s: String| {
        s.lines()
            .map(|l| l.rsplit_once(',').map(|(head, _)| head.to_string()).unwrap_or_default())
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(stdout_of(&args)), strip(stdout_of(&args)));
}

#[test]
fn plan_then_simulate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.json");
    stdout_of(&[
        "plan", "derivation", "--arch", "chain", "--k", "2", "--m", "8", "--depth", "5",
        "--tuple", "1,2,3,4,5,6", "--eps", "0.1", "--delta", "0.1", "--out",
        plan.to_str().unwrap(),
    ]);
    let out = stdout_of(&[
        "simulate", "end-to-end", "--arch", "chain", "--k", "2", "--m", "8", "--depth", "5",
        "--tuple", "1,2,3,4,5,6", "--eps", "0.1", "--plan", plan.to_str().unwrap(),
        "--trials", "20000", "--seed", "3",
    ]);
    // One exposed leaf at eps = 0.1: failure rate near 0.1.
    let p_hat: f64 = out.lines().nth(1).unwrap().split(',').nth(3).unwrap().parse().unwrap();
    assert!((p_hat - 0.1).abs() < 0.01, "p_hat {p_hat}");
}

#[test]
fn coded_plan_is_valid_versioned_json() {
    let out = stdout_of(&[
        "plan", "coded", "--deps", "3,1,7,5", "--eps", "0.3", "--delta", "0.1", "--m", "16",
    ]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["version"], 1);
    assert_eq!(v["plan"]["scheme"], "coded");
    assert_eq!(v["plan"]["dep_indices"], serde_json::json!([1, 3, 5, 7]));
}

#[test]
fn dump_noise_writes_bitmask_rows() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.json");
    let noise = dir.path().join("noise.csv");
    stdout_of(&[
        "plan", "derivation", "--arch", "chain", "--k", "2", "--m", "8", "--depth", "2",
        "--tuple", "1,2,3", "--eps", "0.1", "--delta", "0.1", "--out", plan.to_str().unwrap(),
    ]);
    stdout_of(&[
        "simulate", "end-to-end", "--arch", "chain", "--k", "2", "--m", "8", "--depth", "2",
        "--tuple", "1,2,3", "--eps", "0.1", "--plan", plan.to_str().unwrap(),
        "--trials", "16", "--seed", "3", "--dump-noise", noise.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&noise).unwrap();
    assert_eq!(text.lines().count(), 16);
    for line in text.lines() {
        assert_eq!(line.split(',').count(), 9); // trial index + 8 mask bits
    }
}

#[test]
fn invalid_arguments_exit_nonzero_with_diagnostic() {
    let out = pecache(&["calc", "nstar", "--eps", "1.5", "--delta", "0.1"]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());

    let out = pecache(&["exp", "--exp", "9"]);
    assert!(!out.status.success());

    // Unknown plan version must be rejected on read.
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.json");
    std::fs::write(&plan, r#"{"version": 99, "plan": {"scheme": "derivation", "facts": [], "storage_bits": 0.0, "protected_leaves": [], "exposed_count": 0}}"#).unwrap();
    let out = pecache(&[
        "simulate", "end-to-end", "--arch", "chain", "--k", "2", "--m", "8", "--depth", "2",
        "--tuple", "1,2,3", "--eps", "0.1", "--plan", plan.to_str().unwrap(), "--trials", "10",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("version"));
}
