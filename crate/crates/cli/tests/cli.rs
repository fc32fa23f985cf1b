use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const THREE_POINT: &str = r#"{"labels": ["0", "x", "y"], "dist": [[0, 1, 1], [1, 0, "1/2"], [1, "1/2", 0]]}"#;
const NOT_ULTRA: &str = "0,1,2\n1,0,1\n2,1,0\n";

fn ultrafree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ultrafree"))
        .args(args)
        .env_remove("ULTRAFREE_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn json(output: &Output) -> Value {
    serde_json::from_slice(&output.stdout).expect("stdout is JSON")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn validate_passes_on_an_ultrametric() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "u.json", THREE_POINT);
    let out = ultrafree(&["validate", &input]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["kind"], "validate");
    assert_eq!(report["data"]["is_ultrametric"], true);
    assert_eq!(report["data"]["is_dyadic"], true);
}

#[test]
fn validate_reports_a_failing_triple() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "line.csv", NOT_ULTRA);
    let out = ultrafree(&["validate", &input]);
    assert_eq!(out.status.code(), Some(1));
    let data = &json(&out)["data"];
    assert_eq!(data["is_metric"], true);
    assert_eq!(data["is_ultrametric"], false);
    assert!(data["failing_triple"].is_array());
}

#[test]
fn tool_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json").display().to_string();
    assert_eq!(ultrafree(&["validate", &missing]).status.code(), Some(2));
    let bad = write(dir.path(), "bad.csv", "0,1\n1,zero\n");
    let out = ultrafree(&["embed", &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2, column 2"));
    assert_eq!(ultrafree(&["threepoint", "--s", "2/0"]).status.code(), Some(2));
}

#[test]
fn format_flag_overrides_the_extension() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "matrix.txt", "0,1\n1,0\n");
    assert_eq!(ultrafree(&["validate", &input]).status.code(), Some(2));
    assert_eq!(ultrafree(&["--format", "csv", "validate", &input]).status.code(), Some(0));
}

#[test]
fn basis_with_explicit_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "u.json", THREE_POINT);
    let out = ultrafree(&["basis", &input, "--ordering", "0,y,x"]);
    assert_eq!(out.status.code(), Some(0));
    let data = &json(&out)["data"];
    assert_eq!(data["basis_constant"], "1");
    assert_eq!(data["ordering_labels"], serde_json::json!(["0", "y", "x"]));
    assert_eq!(data["basis_vectors"][1], serde_json::json!({"x": "1", "y": "-1"}));
}

#[test]
fn norm_prints_a_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "u.json", THREE_POINT);
    let vector = write(dir.path(), "v.json", r#"{"x": 1, "y": "-1"}"#);
    let out = ultrafree(&["norm", &input, "--vector", &format!("@{vector}"), "--function", r#"{"x": 1, "y": "1/2"}"#]);
    assert_eq!(out.status.code(), Some(0));
    let data = &json(&out)["data"];
    assert_eq!(data["norm"]["value"], "1/2");
    assert!(data["norm"]["primal_flow"].is_array());
    assert!(data["norm"]["dual_certificate"].is_object());
    assert_eq!(data["lip_norm"], "1");
}

#[test]
fn embed_and_l1check_pass_on_the_three_point_space() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "u.json", THREE_POINT);
    let embed = ultrafree(&["embed", &input]);
    assert_eq!(embed.status.code(), Some(0));
    let l1 = ultrafree(&["--seed", "3", "l1check", &input, "--vectors", "5"]);
    assert_eq!(l1.status.code(), Some(0));
    let data = &json(&l1)["data"];
    assert_eq!(data["retraction_constant"], "4");
    assert_eq!(data["l1_lower"], "2/3");
}

#[test]
fn threepoint_accepts_both_resolution_spellings() {
    let a = ultrafree(&["threepoint", "--s", "3/4", "--resolution", "8"]);
    let b = ultrafree(&["threepoint", "--s", "3/4", "--resolution", "1/8"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(json(&a)["data"]["search"]["resolution"], 8);
}

#[test]
fn out_flag_and_environment_directory() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "u.json", THREE_POINT);
    let target = dir.path().join("reports/validate.json");
    let out = ultrafree(&["--out", &target.display().to_string(), "validate", &input]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let written: Value = serde_json::from_str(&std::fs::read_to_string(&target).unwrap()).unwrap();
    assert_eq!(written["kind"], "validate");

    let env_dir = dir.path().join("env");
    let out = Command::new(env!("CARGO_BIN_EXE_ultrafree"))
        .args(["embed", &input])
        .env("ULTRAFREE_OUT_DIR", &env_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(env_dir.join("embed.json").exists());
}

#[test]
fn campaign_is_deterministic() {
    let args = ["--seed", "11", "campaign", "--sizes", "3-5", "--seeds", "2", "--resolution", "4"];
    let first = ultrafree(&args);
    let second = ultrafree(&args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
    let data = &json(&first)["data"];
    assert_eq!(data["totals"]["instances"], 6);
}

#[test]
fn campaign_records_bad_inputs_without_aborting() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", "{");
    let out = ultrafree(&["campaign", "--sizes", "3", "--seeds", "1", "--stages", "validate,basis", &bad]);
    assert_eq!(out.status.code(), Some(1));
    let data = &json(&out)["data"];
    assert_eq!(data["totals"]["instances"], 2);
}

#[test]
fn sequential_flag_gives_identical_output() {
    let args = ["campaign", "--sizes", "4", "--seeds", "3", "--stages", "validate,basis,embed"];
    let parallel = ultrafree(&args);
    let mut seq_args = vec!["--sequential"];
    seq_args.extend(args);
    assert_eq!(parallel.stdout, ultrafree(&seq_args).stdout);
}
