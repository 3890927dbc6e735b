//! End-to-end tests of the `hjflow` binary: real processes, real files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hjflow::net::GeneratingFunctionNet;

fn hjflow_cmd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hjflow"))
}

fn run(args: &[&str]) -> Output {
    hjflow_cmd()
        .args(args)
        .output()
        .expect("spawning the hjflow binary")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn tiny_config_text(seed: u64) -> String {
    format!(
        r#"{{
  "p_box": [[-3.0, -3.0, -3.0], [3.0, 3.0, 3.0]],
  "t_max": 0.15,
  "n_points": 64,
  "n_iterations": 25,
  "batch_size": 64,
  "learning_rate": 0.01,
  "adam_beta1": 0.9,
  "adam_beta2": 0.999,
  "adam_epsilon": 1e-8,
  "layer_sizes": [4, 8, 1],
  "seed": {seed}
}}
"#
    )
}

fn write_tiny_config(dir: &Path, seed: u64) -> (PathBuf, String) {
    let path = dir.join("config.json");
    let text = tiny_config_text(seed);
    std::fs::write(&path, &text).unwrap();
    (path, text)
}

fn save_random_net(dir: &Path, seed: u64) -> PathBuf {
    let path = dir.join(format!("net_{seed}.json"));
    GeneratingFunctionNet::init_xavier(&[4, 16, 16, 1], seed)
        .unwrap()
        .save_weights(&path)
        .unwrap();
    path
}

fn column(csv: &str, index: usize) -> Vec<f64> {
    csv.lines()
        .skip(1)
        .map(|line| line.split(',').nth(index).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn train_writes_model_loss_history_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (config, config_text) = write_tiny_config(dir.path(), 12);
    let model = dir.path().join("model.json");
    let out = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
    ]);
    assert_success(&out);

    let net = GeneratingFunctionNet::load_weights(&model).unwrap();
    assert_eq!(net.layer_sizes(), &[4, 8, 1]);
    assert_eq!(net.seed, Some(12));

    let loss_csv = std::fs::read_to_string(dir.path().join("model.loss.csv")).unwrap();
    let lines: Vec<&str> = loss_csv.lines().collect();
    assert_eq!(lines[0], "iteration,loss,dropped_points");
    assert_eq!(lines.len(), 26, "header plus one row per iteration");

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("model.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 12);
    assert_eq!(manifest["output_paths"].as_array().unwrap().len(), 2);
    // The digest ties the manifest to the exact config bytes, and the model
    // records the same digest.
    let expected_digest: String = {
        use sha2::Digest;
        sha2::Sha256::digest(config_text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    };
    assert_eq!(manifest["config_digest"], expected_digest.as_str());
    assert_eq!(net.training_config_digest.as_deref(), Some(expected_digest.as_str()));
}

#[test]
fn train_rejects_configs_with_unknown_fields() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    let mut value: serde_json::Value = serde_json::from_str(&tiny_config_text(0)).unwrap();
    value["momentum"] = serde_json::json!(0.9);
    std::fs::write(&config, serde_json::to_string(&value).unwrap()).unwrap();
    let out = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("model.json").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("momentum"),
        "rejection should name the offending field, got: {stderr}"
    );
}

#[test]
fn repeated_training_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (config, _) = write_tiny_config(dir.path(), 3);
    let mut csvs = Vec::new();
    for name in ["a", "b"] {
        let model = dir.path().join(format!("{name}.json"));
        let out = run(&[
            "train",
            "--config",
            config.to_str().unwrap(),
            "--out",
            model.to_str().unwrap(),
        ]);
        assert_success(&out);
        csvs.push(std::fs::read(dir.path().join(format!("{name}.loss.csv"))).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let a = std::fs::read_to_string(dir.path().join("a.json")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("b.json")).unwrap();
    assert_eq!(a, b, "weight files should also be byte-identical");
}

#[test]
fn simulate_zero_steps_writes_exactly_the_initial_row() {
    let dir = tempfile::tempdir().unwrap();
    let model = save_random_net(dir.path(), 1);
    let csv_path = dir.path().join("traj.csv");
    let out = run(&[
        "simulate",
        "--model",
        model.to_str().unwrap(),
        "--initial",
        "1,1,2",
        "--step-size",
        "0.1",
        "--steps",
        "0",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert_success(&out);
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "step,t,mu1,mu2,mu3,H,C,newton_iters,newton_residual");
    let row: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(row[0], "0");
    let h: f64 = row[5].parse().unwrap();
    let c: f64 = row[6].parse().unwrap();
    assert!((h - 83.0 / 60.0).abs() < 1e-12);
    assert_eq!(c, 3.0);
}

#[test]
fn simulate_keeps_the_casimir_column_flat_for_any_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = save_random_net(dir.path(), 2);
    let csv_path = dir.path().join("traj.csv");
    let out = run(&[
        "simulate",
        "--model",
        model.to_str().unwrap(),
        "--initial",
        "1,1,2",
        "--step-size",
        "0.1",
        "--steps",
        "50",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert_success(&out);
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let c = column(&csv, 6);
    assert_eq!(c.len(), 51);
    let drift = c.iter().map(|v| (v - c[0]).abs()).fold(0.0, f64::max);
    assert!(drift <= 1e-7, "Casimir drift {drift}");
    // The trajectory genuinely moves even though C stays put.
    let mu1 = column(&csv, 2);
    assert!((mu1[50] - mu1[0]).abs() > 1e-3);
}

#[test]
fn simulate_flushes_the_partial_trajectory_on_newton_failure() {
    let dir = tempfile::tempdir().unwrap();
    let model = save_random_net(dir.path(), 3);
    let csv_path = dir.path().join("traj.csv");
    let out = run(&[
        "simulate",
        "--model",
        model.to_str().unwrap(),
        "--initial",
        "1,1,2",
        "--step-size",
        "0.2",
        "--steps",
        "5",
        "--max-iterations",
        "1",
        "--tolerance",
        "1e-15",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("step 1 failed"),
        "failure should carry the step index, got: {stderr}"
    );
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(csv.lines().count(), 2, "header plus the flushed step-0 row");
}

#[test]
fn check_passes_without_a_model_and_lists_each_property_once() {
    let dir = tempfile::tempdir().unwrap();
    let report_path = dir.path().join("report.json");
    let out = run(&["check", "--out", report_path.to_str().unwrap()]);
    assert_success(&out);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["all_passed"], true);
    let props = report["properties"].as_array().unwrap();
    assert_eq!(props.len(), 5);
    let mut names: Vec<&str> = props.iter().map(|p| p["name"].as_str().unwrap()).collect();
    let total = names.len();
    names.sort_unstable();
    names.dedup();
    assert_eq!(names.len(), total, "property names must be unique");
    for p in props {
        assert_eq!(p["passed"], true, "property {p} failed");
    }
}

#[test]
fn check_accepts_a_model_file() {
    let dir = tempfile::tempdir().unwrap();
    let model = save_random_net(dir.path(), 4);
    let report_path = dir.path().join("report.json");
    let out = run(&[
        "check",
        "--model",
        model.to_str().unwrap(),
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert_success(&out);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["all_passed"], true);
    assert!(report["model"].as_str().unwrap().contains("net_4.json"));
}

#[test]
fn check_reports_a_structured_error_for_corrupt_models() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("corrupt.json");
    std::fs::write(&model, "{ not json").unwrap();
    let out = run(&[
        "check",
        "--model",
        model.to_str().unwrap(),
        "--out",
        dir.path().join("report.json").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("loading model") && stderr.contains("corrupt.json"),
        "got: {stderr}"
    );
}

#[test]
fn compare_oracle_with_itself_has_an_all_zero_error_column() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("cmp.csv");
    let out = run(&[
        "compare",
        "--oracle-self",
        "--initial",
        "1,1,2",
        "--step-size",
        "0.1",
        "--steps",
        "30",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert_success(&out);
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "step,t,error_norm,H_model,H_oracle,C_model,C_oracle"
    );
    for line in csv.lines().skip(1) {
        assert_eq!(line.split(',').nth(2), Some("0"));
    }
}

#[test]
fn compare_with_a_model_keeps_its_casimir_column_flat() {
    let dir = tempfile::tempdir().unwrap();
    let model = save_random_net(dir.path(), 5);
    let csv_path = dir.path().join("cmp.csv");
    let out = run(&[
        "compare",
        "--model",
        model.to_str().unwrap(),
        "--initial",
        "1,1,2",
        "--step-size",
        "0.1",
        "--steps",
        "40",
        "--substeps",
        "20",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert_success(&out);
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let c_model = column(&csv, 5);
    assert_eq!(c_model.len(), 41);
    let drift = c_model
        .iter()
        .map(|v| (v - c_model[0]).abs())
        .fold(0.0, f64::max);
    assert!(drift <= 1e-7, "model Casimir drift {drift}");
    // The untrained model diverges from the oracle while preserving C.
    let errors = column(&csv, 2);
    assert!(errors.last().unwrap() > &1e-3);
}
