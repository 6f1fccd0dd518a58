//! End-to-end tests of the command-line interface: schemas, exit codes,
//! and rerun determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_biaslab")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("BIASLAB_SEED")
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn analyze_nullspace_fixture_reports_zero_ovb_and_positive_meb() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "analyze",
        "--input",
        fixture("nullspace_classical.json").to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("report.json"));
    let ovb = report["report"]["ovb"][0].as_f64().unwrap();
    let meb_z = report["report"]["meb_z"][0].as_f64().unwrap();
    assert!(ovb.abs() <= 1e-12);
    assert!((meb_z - 0.0257).abs() <= 5e-4);
    assert_eq!(report["report"]["ovb_signs"][0], "zero");
    assert_eq!(report["manifest"], "manifest.json");
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn analyze_berkson_fixture_reports_zero_meb() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "analyze",
        "--input",
        fixture("berkson.json").to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let report = read_json(&dir.path().join("report.json"));
    for v in report["report"]["meb_full"].as_array().unwrap() {
        assert!(v.as_f64().unwrap().abs() <= 1e-10);
        }
    for s in report["report"]["meb_full_signs"].as_array().unwrap() {
        assert_eq!(s, "zero");
    }
}

#[test]
fn analyze_malformed_json_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = run(&[
        "analyze",
        "--input",
        bad.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn analyze_asymmetric_matrix_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("asym.json");
    std::fs::write(
        &bad,
        r#"{"beta_x":[1.0],"classical_uncorrelated":{"a":[[1.0,0.2],[0.1,1.0]],"b":[[0.1],[0.1]],"d":[[1.0]],"error_variances":[0.5]}}"#,
    )
    .unwrap();
    let out = run(&[
        "analyze",
        "--input",
        bad.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analyze_non_pd_input_exits_2_and_names_the_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("npd.json");
    // Cov(Z,X) has correlation 2: not positive definite
    std::fs::write(
        &bad,
        r#"{"beta_x":[1.0],"classical_uncorrelated":{"a":[[1.0]],"b":[[2.0]],"d":[[1.0]],"error_variances":[0.5]}}"#,
    )
    .unwrap();
    let out = run(&[
        "analyze",
        "--input",
        bad.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Cov(Z,X)"));
}

#[test]
fn simulate_is_deterministic_across_reruns_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out_dir, threads) in [(&a, "1"), (&b, "4")] {
        let out = run(&[
            "simulate",
            "--trials",
            "500",
            "--seed",
            "7",
            "--threads",
            threads,
            "--out-dir",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    let ta = std::fs::read(a.join("tally.json")).unwrap();
    let tb = std::fs::read(b.join("tally.json")).unwrap();
    // identical apart from the echoed thread count
    let ja: serde_json::Value = serde_json::from_slice(&ta).unwrap();
    let jb: serde_json::Value = serde_json::from_slice(&tb).unwrap();
    assert_eq!(ja["tally"]["strata"], jb["tally"]["strata"]);
    assert_eq!(ja["tally"]["bins"], jb["tally"]["bins"]);
    assert_eq!(ja["tally"]["r2_hist"], jb["tally"]["r2_hist"]);
    // same flags entirely => byte-identical outputs
    let c = dir.path().join("c");
    let out = run(&[
        "simulate", "--trials", "500", "--seed", "7", "--threads", "1", "--out-dir",
        c.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(ta, std::fs::read(c.join("tally.json")).unwrap());
    assert_eq!(
        std::fs::read(a.join("tally.csv")).unwrap(),
        std::fs::read(c.join("tally.csv")).unwrap()
    );
}

#[test]
fn simulate_zero_trials_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate",
        "--trials",
        "0",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let tally = read_json(&dir.path().join("tally.json"));
    assert_eq!(tally["tally"]["n_trials"], 0);
}

#[test]
fn simulate_env_seed_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let out = Command::new(bin())
        .args(["simulate", "--trials", "200", "--out-dir", a.to_str().unwrap()])
        .env("BIASLAB_SEED", "99")
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = run(&[
        "simulate", "--trials", "200", "--seed", "99", "--out-dir", b.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(
        std::fs::read(a.join("tally.json")).unwrap(),
        std::fs::read(b.join("tally.json")).unwrap()
    );
}

#[test]
fn theory_check_passes_and_emits_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let report_path = dir.path().join("report.json");
    let out = run(&[
        "theory-check",
        "--instances",
        "40",
        "--seed",
        "5",
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["all_passed"], true);
    assert_eq!(read_json(&report_path), report);
}

#[test]
fn theory_check_zero_instances_passes() {
    let out = run(&["theory-check", "--instances", "0"]);
    assert!(out.status.success());
}

#[test]
fn theory_check_fault_injection_fails_naming_the_check() {
    let out = run(&[
        "theory-check",
        "--instances",
        "20",
        "--seed",
        "5",
        "--inject-fault",
        "omega-sign",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["all_passed"], false);
    let failed: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["passed"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(failed, ["omega_sign_structure"]);
}

fn small_synth_config(dir: &Path) -> PathBuf {
    let path = dir.join("synth.json");
    std::fs::write(
        &path,
        r#"{"n_units":40,"n_years":8,"seed":5,"crops":["corn"],"crop_beta_scale":[1.0]}"#,
    )
    .unwrap();
    path
}

#[test]
fn validate_panel_same_main_and_control_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_synth_config(dir.path());
    let out = run(&[
        "validate-panel",
        "--synthetic",
        cfg.to_str().unwrap(),
        "--combos",
        "o3:o3:corn",
        "--bootstrap",
        "1",
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_panel_requires_a_data_source() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "validate-panel",
        "--bootstrap",
        "1",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_panel_synthetic_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_synth_config(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(&[
        "validate-panel",
        "--synthetic",
        cfg.to_str().unwrap(),
        "--combos",
        "o3:pm25:corn,pm25:o3:corn",
        "--bootstrap",
        "5",
        "--seed",
        "3",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let results = read_json(&out_dir.join("results.json"));
    assert_eq!(results["entries"].as_array().unwrap().len(), 2);
    assert_eq!(results["bootstrap"]["all"]["replicates"].as_array().unwrap().len(), 5);
    assert!(out_dir.join("panel.csv").exists());
    assert!(out_dir.join("generator_manifest.json").exists());

    // the emitted CSV feeds back through --data with identical results
    let out_dir2 = dir.path().join("out2");
    let out = run(&[
        "validate-panel",
        "--data",
        out_dir.join("panel.csv").to_str().unwrap(),
        "--combos",
        "o3:pm25:corn,pm25:o3:corn",
        "--bootstrap",
        "5",
        "--seed",
        "3",
        "--out-dir",
        out_dir2.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let results2 = read_json(&out_dir2.join("results.json"));
    assert_eq!(results["entries"], results2["entries"]);
    assert_eq!(results["bootstrap"], results2["bootstrap"]);
}

#[test]
fn unknown_pollutant_in_combo_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_synth_config(dir.path());
    let out = run(&[
        "validate-panel",
        "--synthetic",
        cfg.to_str().unwrap(),
        "--combos",
        "nh3:o3:corn",
        "--bootstrap",
        "1",
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
