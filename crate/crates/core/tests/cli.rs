use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};

const MANIFEST: &str = env!("CARGO_MANIFEST_DIR");
const TRUTH_Y1: f64 = 3.80262;

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn shipped(name: &str) -> Value {
    read_json(&Path::new(MANIFEST).join("configs").join(name))
}

fn assert_schema_valid(report: &Value) {
    let schema = read_json(&Path::new(MANIFEST).join("schema/report.schema.json"));
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator
        .iter_errors(report)
        .map(|e| format!("{} at {}", e, e.instance_path()))
        .collect();
    assert!(errors.is_empty(), "schema violations: {errors:#?}");
}

/// A shipped analysis config with the fixture input and outputs in `dir`.
fn analysis_config(dir: &Path, name: &str) -> (PathBuf, Value) {
    let mut cfg = shipped(name);
    cfg["input"] = json!(format!("{MANIFEST}/fixtures/d1.csv"));
    cfg["output"] = json!({ "report": "report.json", "summary": "summary.txt" });
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    (path, cfg)
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_trialbench"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn without_timestamps(mut v: Value) -> Value {
    let meta = v["metadata"].as_object_mut().unwrap();
    meta.remove("started_at");
    meta.remove("finished_at");
    v
}

fn estimate<'a>(report: &'a Value, label: &str) -> &'a Value {
    report["estimates"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["label"] == label)
        .unwrap()
}

#[test]
fn analyze_fixture_with_full_config() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _) = analysis_config(dir.path(), "analyze_d1.json");
    let (code, stdout, stderr) = run(&["analyze", cfg.to_str().unwrap()]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("Benchmarking"));

    let report = read_json(&dir.path().join("report.json"));
    assert_schema_valid(&report);
    assert_eq!(report["schema_version"], 1);
    for label in ["phi(1)", "chi(1)", "psi(1)"] {
        let e = estimate(&report, label);
        assert!(
            (e["value"].as_f64().unwrap() - TRUTH_Y1).abs() < 0.1,
            "{label}"
        );
        let methods: Vec<&str> = e["intervals"]
            .as_array()
            .unwrap()
            .iter()
            .map(|i| i["method"].as_str().unwrap())
            .collect();
        assert_eq!(methods, ["sandwich", "bootstrap-percentile"]);
    }
    let bench = &report["contrasts"]["benchmarking"];
    let delta1 = bench["deltas"]
        .as_array()
        .unwrap()
        .iter()
        .find(|d| d["arm"] == 1)
        .unwrap();
    assert!(delta1["test"]["p_value"].as_f64().unwrap() >= 0.05);
    assert_eq!(bench["status"], "agreement");
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("does not prove"));
}

#[test]
fn psi_only_omits_benchmarking_and_says_why() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _) = analysis_config(dir.path(), "analyze_psi_only.json");
    let (code, _, stderr) = run(&["analyze", cfg.to_str().unwrap()]);
    assert_eq!(code, 0, "{stderr}");
    let report = read_json(&dir.path().join("report.json"));
    assert_schema_valid(&report);
    let bench = &report["contrasts"]["benchmarking"];
    assert_eq!(bench["status"], "omitted");
    assert!(bench["deltas"].as_array().unwrap().is_empty());
    let reason = bench["reason"].as_str().unwrap();
    assert!(reason.contains("phi") && reason.contains("chi"));
    assert!(report["estimates"]
        .as_array()
        .unwrap()
        .iter()
        .all(|e| e["estimator"] == "psi"));
    assert!(std::fs::read_to_string(dir.path().join("summary.txt"))
        .unwrap()
        .contains("not reported"));
}

#[test]
fn missing_schema_is_a_config_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let (path, mut cfg) = analysis_config(dir.path(), "analyze_d1.json");
    cfg.as_object_mut().unwrap().remove("schema");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let (code, _, stderr) = run(&["analyze", path.to_str().unwrap()]);
    assert_eq!(code, 2);
    let err: Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_schema_valid(&err);
    assert_eq!(err["error"]["field"], "schema");
    assert_eq!(err["error"]["kind"], "config");
}

fn write_csv(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("data.csv");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn data_and_fit_errors_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (path, mut cfg) = analysis_config(dir.path(), "analyze_psi_only.json");

    cfg["input"] = json!(write_csv(
        dir.path(),
        "S,A,Y,X1\n1,1,1,0\n0,0,1,1\n2,1,0,1\n"
    ));
    std::fs::write(&path, cfg.to_string()).unwrap();
    let (code, _, stderr) = run(&["analyze", path.to_str().unwrap()]);
    assert_eq!(code, 3);
    let err: Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(err["error"]["row"], 3);

    // X1 separates the studies perfectly, so the participation fit diverges
    let mut rows = String::from("S,A,Y,X1\n");
    for i in 0..40 {
        let s = i % 2;
        rows += &format!("{s},{},{}.5,{s}\n", (i / 2) % 2, i % 7);
    }
    cfg["input"] = json!(write_csv(dir.path(), &rows));
    std::fs::write(&path, cfg.to_string()).unwrap();
    let (code, _, stderr) = run(&["analyze", path.to_str().unwrap()]);
    assert_eq!(code, 4, "{stderr}");
    let err: Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_schema_valid(&err);
    assert_eq!(err["error"]["model"], "participation");

    let (code, stdout, _) = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(code, 0, "{stdout}");
}

#[test]
fn analysis_reports_are_reproducible_from_the_echoed_config() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _) = analysis_config(dir.path(), "analyze_d1.json");
    let first = without_timestamps(
        serde_json::to_value(trialbench::cli::run_analysis(&cfg).unwrap()).unwrap(),
    );
    let again = without_timestamps(
        serde_json::to_value(trialbench::cli::run_analysis(&cfg).unwrap()).unwrap(),
    );
    assert_eq!(first, again);

    let echo = dir.path().join("echo.json");
    std::fs::write(&echo, first["metadata"]["config"].to_string()).unwrap();
    let rerun = without_timestamps(
        serde_json::to_value(trialbench::cli::run_analysis(&echo).unwrap()).unwrap(),
    );
    assert_eq!(first, rerun);
}

fn simulation_config(dir: &Path, name: &str, replicates: Option<u64>) -> PathBuf {
    let mut cfg = shipped(name);
    if let Some(r) = replicates {
        cfg["monte_carlo"]["replicates"] = json!(r);
    }
    cfg["output"] = json!({ "report": "mc.json" });
    let path = dir.join("sim.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn simulate_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulation_config(dir.path(), "simulate_d1.json", None);
    let (code, _, stderr) = run(&["simulate", cfg.to_str().unwrap()]);
    assert_eq!(code, 0, "{stderr}");
    let report = read_json(&dir.path().join("mc.json"));
    assert_schema_valid(&report);
    let r = &report["results"];
    assert_eq!(
        (
            r["replicates"].as_u64(),
            r["n_trial"].as_u64(),
            r["seed"].as_u64()
        ),
        (Some(50), Some(2000), Some(11))
    );
    for q in r["quantities"].as_array().unwrap() {
        for field in [
            "truth",
            "mean",
            "bias",
            "empirical_sd",
            "mc_se",
            "mean_sandwich_se",
            "coverage",
        ] {
            assert!(q[field].is_f64(), "{} {field}", q["label"]);
        }
    }
    for rate in ["delta_rejection_rate", "restriction_rejection_rate"] {
        assert_eq!(r[rate].as_array().unwrap().len(), 2);
    }
}

#[test]
fn confounded_row_flags_conditions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulation_config(dir.path(), "simulate_truth_ft.json", Some(10));
    let report = serde_json::to_value(trialbench::cli::run_simulation(&cfg).unwrap()).unwrap();
    assert_schema_valid(&report);
    let t = &report["results"]["truths"];
    assert_eq!(
        (
            t["emulation_exchangeable"].as_bool(),
            t["transport_exchangeable"].as_bool()
        ),
        (Some(false), Some(true))
    );
    assert!(report["results"]["delta_rejection_rate"][0]["rate"].is_f64());
}

#[test]
fn simulation_reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulation_config(dir.path(), "simulate_d1.json", Some(10));
    let first = without_timestamps(
        serde_json::to_value(trialbench::cli::run_simulation(&cfg).unwrap()).unwrap(),
    );
    let again = without_timestamps(
        serde_json::to_value(trialbench::cli::run_simulation(&cfg).unwrap()).unwrap(),
    );
    assert_eq!(first, again);
    let echo = dir.path().join("echo.json");
    std::fs::write(&echo, first["metadata"]["config"].to_string()).unwrap();
    let rerun = without_timestamps(
        serde_json::to_value(trialbench::cli::run_simulation(&echo).unwrap()).unwrap(),
    );
    assert_eq!(first, rerun);
}

#[test]
fn validate_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _) = analysis_config(dir.path(), "analyze_d1.json");
    let (code, stdout, _) = run(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["data"]["status"], "pass");

    let sim = simulation_config(dir.path(), "simulate_truth_tf.json", None);
    let (code, stdout, _) = run(&["validate", sim.to_str().unwrap()]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["truths"]["transport_exchangeable"], false);

    let (path, mut cfg) = analysis_config(dir.path(), "analyze_d1.json");
    cfg["input"] = json!(write_csv(
        dir.path(),
        "S,A,Y,X1\n1,1,1,0\n1,0,1,1\n0,0,1,1\n0,0,2,0\n"
    ));
    std::fs::write(&path, cfg.to_string()).unwrap();
    let (code, stdout, _) = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(code, 3);
    assert!(stdout.contains("emulation_positivity_a1"));
}
