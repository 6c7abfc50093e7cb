//! End-to-end checks of the `setmerge` binary: exit codes, JSON round-trips,
//! and deterministic CSV output.

use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_setmerge"))
}

fn write_temp(name: &str, body: &str) -> PathBuf {
    let path = std::env::temp_dir().join(format!("setmerge-cli-{name}-{}", std::process::id()));
    std::fs::write(&path, body).unwrap();
    path
}

fn run_merge(request: &str, name: &str) -> Output {
    let path = write_temp(name, request);
    bin().arg("merge").arg("--in").arg(&path).output().unwrap()
}

fn merged_intervals(output: &Output) -> Vec<(f64, f64)> {
    let v: Value = serde_json::from_slice(&output.stdout).unwrap();
    v["merged"]["intervals"]
        .as_array()
        .unwrap()
        .iter()
        .map(|iv| (iv[0].as_f64().unwrap(), iv[1].as_f64().unwrap()))
        .collect()
}

#[test]
fn majority_vote_fixture() {
    // Five equal-level studies merged with the e-mean at tau = 1/2 keep
    // exactly the region covered by a strict majority (3 of 5).
    let request = r#"{
        "space": {"kind": "continuous", "lo": -10, "hi": 10},
        "studies": [
            {"alpha": 0.05, "intervals": [[0, 4]]},
            {"alpha": 0.05, "intervals": [[1, 5]]},
            {"alpha": 0.05, "intervals": [[2, 6]]},
            {"alpha": 0.05, "intervals": [[3, 7]]},
            {"alpha": 0.05, "intervals": [[-2, -1]]}
        ],
        "method": "am-e", "alpha": 0.05, "tau": 0.5, "seed": 1
    }"#;
    let out = run_merge(request, "vote");
    assert!(out.status.success());
    // Majority region: points in at least 3 of the 5 intervals = [2, 5].
    assert_eq!(merged_intervals(&out), vec![(2.0, 5.0)]);
}

#[test]
fn single_study_identity() {
    let request = r#"{
        "space": {"kind": "continuous", "lo": -10, "hi": 10},
        "studies": [{"alpha": 0.05, "intervals": [[-1.5, 2.5]]}],
        "method": "am-e", "alpha": 0.05, "tau": 1.0, "seed": 1
    }"#;
    let out = run_merge(request, "single");
    assert!(out.status.success());
    assert_eq!(merged_intervals(&out), vec![(-1.5, 2.5)]);
}

#[test]
fn malformed_json_exits_2_with_diagnostic() {
    let out = run_merge("{\"space\": [unclosed", "malformed");
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn missing_file_exits_2() {
    let out = bin().arg("merge").arg("--in").arg("/nonexistent/req.json").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn independent_only_rule_requires_assertion() {
    let base = r#"{
        "space": {"kind": "continuous", "lo": -10, "hi": 10},
        "studies": [
            {"alpha": 0.05, "intervals": [[0, 4]]},
            {"alpha": 0.05, "intervals": [[1, 5]]}
        ],
        "method": "fisher", "alpha": 0.05, "seed": 1INDEP
    }"#;
    let refused = run_merge(&base.replace("INDEP", ""), "dep");
    assert_eq!(refused.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&refused.stderr).contains("independen"));
    let allowed = run_merge(&base.replace("INDEP", ", \"independent\": true"), "indep");
    assert!(allowed.status.success());
}

#[test]
fn mode_mismatch_is_a_validation_error() {
    let request = r#"{
        "space": {"kind": "continuous", "lo": -10, "hi": 10},
        "studies": [{"alpha": 0.05, "intervals": [[0, 4]]}],
        "method": "am-e", "alpha": 0.05, "mode": "p", "seed": 1
    }"#;
    let out = run_merge(request, "mode");
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn merged_output_is_canonical() {
    // Re-canonicalizing the emitted intervals is the identity: sorted,
    // disjoint, non-adjacent.
    let request = r#"{
        "space": {"kind": "continuous", "lo": -10, "hi": 10},
        "studies": [
            {"alpha": 0.2, "intervals": [[0, 1], [3, 4]]},
            {"alpha": 0.2, "intervals": [[0.5, 3.5]]},
            {"alpha": 0.2, "intervals": [[-2, -1]]}
        ],
        "method": "rueger", "alpha": 0.1, "seed": 9
    }"#;
    let out = run_merge(request, "canonical");
    assert!(out.status.success());
    let merged = merged_intervals(&out);
    for w in merged.windows(2) {
        assert!(w[0].1 < w[1].0, "intervals sorted and disjoint: {merged:?}");
    }
    for &(lo, hi) in &merged {
        assert!(lo <= hi);
    }
}

#[test]
fn discrete_space_merge() {
    let request = r#"{
        "space": {"kind": "discrete", "labels": ["a", "b", "c", "d"]},
        "studies": [
            {"alpha": 0.05, "labels": ["a", "b"]},
            {"alpha": 0.05, "labels": ["b", "c"]},
            {"alpha": 0.05, "labels": ["b"]}
        ],
        "method": "am-e", "alpha": 0.05, "tau": 0.5, "seed": 1
    }"#;
    let out = run_merge(request, "discrete");
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["merged"]["labels"], serde_json::json!(["b"]));
}

#[test]
fn simulate_normal_shape_and_determinism() {
    let run = || {
        bin()
            .args([
                "simulate", "normal", "--scenario", "S1", "--reps", "60", "--seed", "7",
                "--methods", "SyP+Fisher,SyE+AM",
            ])
            .output()
            .unwrap()
    };
    let a = run();
    assert!(a.status.success());
    let text = String::from_utf8(a.stdout.clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "scenario,grid_value,method,coverage,coverage_se,size,size_se,reps");
    // 10 grid points x (2 methods + 3 single-set benchmarks).
    assert_eq!(lines.len(), 1 + 10 * 5);
    let b = run();
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn simulate_sensitivity_quantile_columns() {
    let out = bin()
        .args([
            "simulate", "sensitivity", "--scenario", "S2", "--reps", "5", "--seed", "3",
            "--inner", "40",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let header = text.lines().next().unwrap();
    for col in ["min", "p2.5", "median", "p97.5", "max"] {
        assert!(header.split(',').any(|c| c == col), "missing column {col}");
    }
}

#[test]
fn simulate_bad_scenario_exits_3() {
    let out = bin()
        .args(["simulate", "normal", "--scenario", "S9", "--reps", "10"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn mt_synth_point_mass_and_e_row_sums() {
    let request = r#"{
        "m": 8,
        "studies": [
            {"alpha": 0.1, "rejected": []},
            {"alpha": 0.1, "rejected": [0, 3, 5]}
        ],
        "variant": "point-mass-one",
        "seed": 11
    }"#;
    let path = write_temp("mt", request);
    let run = || bin().arg("mt-synth").arg("--in").arg(&path).output().unwrap();
    let out = run();
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    // No rejections: every synthetic p-value is 1 under the point mass.
    for p in v["p"][0].as_array().unwrap() {
        assert_eq!(p.as_f64().unwrap(), 1.0);
    }
    // E-values over the rejected set sum to m / alpha.
    let e_sum: f64 = v["e"][1].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
    assert!((e_sum - 8.0 / 0.1).abs() < 1e-9, "e sum {e_sum}");
    // Fixed seed reproducibility.
    assert_eq!(out.stdout, run().stdout);
}
