//! End-to-end tests driving the compiled binary.

use std::path::Path;
use std::process::{Command, Output};

fn mcpl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcpl"))
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn write(path: &Path, content: &str) {
    std::fs::write(path, content).unwrap();
}

fn gen_small_scm(dir: &Path) {
    let out = mcpl(&[
        "gen",
        "scm",
        "--seed",
        "7",
        "--n-per-env",
        "300",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_success(&out);
}

#[test]
fn gen_scm_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    gen_small_scm(&a);
    gen_small_scm(&b);
    for name in ["train.csv", "test.csv"] {
        let left = std::fs::read(a.join(name)).unwrap();
        let right = std::fs::read(b.join(name)).unwrap();
        assert_eq!(left, right, "{name} differs between identical invocations");
    }
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("gen_meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["seed"], 7);
    assert_eq!(meta["config"]["n_per_env"], 300);
}

#[test]
fn config_file_yields_to_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("gen.cfg");
    write(&cfg, "seed = 3\nn_per_env = 40\n");
    let out_dir = tmp.path().join("data");
    let out = mcpl(&[
        "gen",
        "scm",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "9",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_success(&out);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("gen_meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["config"]["seed"], 9, "flag must override the file");
    assert_eq!(meta["config"]["n_per_env"], 40, "file value must survive");
}

#[test]
fn run_and_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    gen_small_scm(&data_dir);

    let run_dir = tmp.path().join("run");
    let out = mcpl(&[
        "run",
        "--train",
        data_dir.join("train.csv").to_str().unwrap(),
        "--basis",
        "constant",
        "--min-bins",
        "4",
        "--min-bin-count",
        "10",
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert_success(&out);
    let summary = stdout_json(&out);
    assert_eq!(summary["basis"], "constant");
    assert!(run_dir.join("model.json").exists());
    assert!(run_dir.join("trace.json").exists());
    assert!(run_dir.join("trace.csv").exists());

    let out = mcpl(&[
        "eval",
        "--model",
        run_dir.join("model.json").to_str().unwrap(),
        "--data",
        data_dir.join("test.csv").to_str().unwrap(),
        "--basis",
        "constant",
        "--trace",
        run_dir.join("trace.json").to_str().unwrap(),
    ]);
    assert_success(&out);
    let report = stdout_json(&out);
    assert!(report["rmse"].as_f64().unwrap() > 0.0);
    assert!(report["k2"].is_number());
    assert!(report["certificate"]["alpha"].is_number());
    // The test split carries no environment column, so no per-env table.
    assert!(report["per_env_rmse"].is_null());
}

#[test]
fn jtt_needs_fid_then_dispatches() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    gen_small_scm(&data_dir);
    let train = data_dir.join("train.csv");

    let run_dir = tmp.path().join("first");
    let out = mcpl(&[
        "run",
        "--train",
        train.to_str().unwrap(),
        "--basis",
        "jtt",
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1), "missing --fid is a usage error");

    let first = tmp.path().join("const_run");
    let out = mcpl(&[
        "run",
        "--train",
        train.to_str().unwrap(),
        "--basis",
        "constant",
        "--min-bins",
        "4",
        "--min-bin-count",
        "10",
        "--out",
        first.to_str().unwrap(),
    ]);
    assert_success(&out);

    let second = tmp.path().join("jtt_run");
    let out = mcpl(&[
        "run",
        "--train",
        train.to_str().unwrap(),
        "--basis",
        "jtt",
        "--fid",
        first.join("model.json").to_str().unwrap(),
        "--min-bins",
        "4",
        "--min-bin-count",
        "10",
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_success(&out);
    assert!(second.join("model.json").exists());
}

#[test]
fn rerun_with_same_seed_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    gen_small_scm(&data_dir);
    let train = data_dir.join("train.csv");

    let mut traces = Vec::new();
    for name in ["r1", "r2"] {
        let dir = tmp.path().join(name);
        let out = mcpl(&[
            "run",
            "--train",
            train.to_str().unwrap(),
            "--basis",
            "env",
            "--feature-map",
            "linear",
            "--min-bins",
            "4",
            "--min-bin-count",
            "10",
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert_success(&out);
        traces.push(std::fs::read(dir.join("trace.csv")).unwrap());
    }
    assert_eq!(traces[0], traces[1]);
}

#[test]
fn missing_env_column_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    gen_small_scm(&data_dir);
    let out = mcpl(&[
        "run",
        "--train",
        data_dir.join("train.csv").to_str().unwrap(),
        "--basis",
        "env",
        "--env-col",
        "nonexistent",
        "--out",
        tmp.path().join("r").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = mcpl(&["run", "--definitely-not-a-flag"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eval_perfect_model_has_zero_rmse() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data.csv");
    write(&data, "x,y\n1,2\n2,4\n3,6\n-1,-2\n0.5,1\n");
    let model = tmp.path().join("model.json");
    write(&model, r#"{"coeffs":[2.0],"intercept":0.0,"clamp":null,"bin_spec":null}"#);
    let out = mcpl(&[
        "eval",
        "--model",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
    ]);
    assert_success(&out);
    let report = stdout_json(&out);
    assert_eq!(report["rmse"].as_f64().unwrap(), 0.0);
}

#[test]
fn analyze_reports_one_step_rate_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let sigma = tmp.path().join("sigma.csv");
    // Third coordinate (the label) makes the second conditionally
    // independent of it given the first: 0.15 = 0.3 * 0.5.
    write(&sigma, "1,0.3,0.5\n0.3,1,0.15\n0.5,0.15,1\n");
    let out = mcpl(&["analyze", "--sigma", sigma.to_str().unwrap(), "--d-phi", "1"]);
    assert_success(&out);
    let report = stdout_json(&out);
    assert!(report["m"].as_f64().unwrap() < 1e-10);
    assert!(report["warning"].is_null());
}

#[test]
fn analyze_warns_on_near_singular_rate() {
    let tmp = tempfile::tempdir().unwrap();
    let sigma = tmp.path().join("sigma.csv");
    write(&sigma, "1,0,0\n0,1,0.9999\n0,0.9999,1\n");
    let out = mcpl(&["analyze", "--sigma", sigma.to_str().unwrap(), "--d-phi", "1"]);
    assert_success(&out);
    let report = stdout_json(&out);
    assert!(report["m"].as_f64().unwrap() >= 0.99);
    assert!(report["warning"].as_str().unwrap().contains("close to 1"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn analyze_rejects_indefinite_covariance() {
    let tmp = tempfile::tempdir().unwrap();
    let sigma = tmp.path().join("sigma.csv");
    write(&sigma, "1,0,0\n0,1,2\n0,2,1\n");
    let out = mcpl(&["analyze", "--sigma", sigma.to_str().unwrap(), "--d-phi", "1"]);
    assert_eq!(out.status.code(), Some(3), "indefinite matrix is a numerical failure");
}

#[test]
fn gen_gaussian_writes_one_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let sigma = tmp.path().join("sigma.csv");
    write(
        &sigma,
        "1,0.2,0.1,0.5\n0.2,1,0.15,0.4\n0.1,0.15,1,0.3\n0.5,0.4,0.3,1\n",
    );
    let out_csv = tmp.path().join("draws.csv");
    let out = mcpl(&[
        "gen",
        "gaussian",
        "--sigma",
        sigma.to_str().unwrap(),
        "--n",
        "500",
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    assert_success(&out);
    let text = std::fs::read_to_string(&out_csv).unwrap();
    assert_eq!(text.lines().count(), 501);
    // Default split: all but one feature in the leading block.
    assert_eq!(text.lines().next().unwrap(), "phi1,phi2,psi1,y");
}

#[test]
fn analyze_compare_recovers_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let sigma = tmp.path().join("sigma.csv");
    write(
        &sigma,
        "1,0.2,0.1,0.5\n0.2,1,0.15,0.4\n0.1,0.15,1,0.3\n0.5,0.4,0.3,1\n",
    );
    let out = mcpl(&[
        "analyze",
        "--sigma",
        sigma.to_str().unwrap(),
        "--d-phi",
        "2",
        "--compare",
        "--n",
        "20000",
    ]);
    assert_success(&out);
    let report = stdout_json(&out);
    let dev = report["compare"]["max_coeff_deviation"].as_f64().unwrap();
    assert!(dev < 0.15, "sampled run strayed {dev} from the closed form");
}

#[test]
fn analyze_table_csv_has_requested_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let sigma = tmp.path().join("sigma.csv");
    write(&sigma, "1,0,0.6\n0,1,0.5\n0.6,0.5,1\n");
    let table = tmp.path().join("table.csv");
    let out = mcpl(&[
        "analyze",
        "--sigma",
        sigma.to_str().unwrap(),
        "--d-phi",
        "1",
        "--t-max",
        "12",
        "--table-csv",
        table.to_str().unwrap(),
    ]);
    assert_success(&out);
    let text = std::fs::read_to_string(&table).unwrap();
    // Header plus t = 0..=12.
    assert_eq!(text.lines().count(), 14);
    assert!(text.lines().next().unwrap().starts_with("t,a_phi1,a_psi1"));
}
