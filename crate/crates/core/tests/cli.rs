//! Command-line behaviour through the library entry point.

use std::fs;

use casimir_core::cli::{manifest_path, run_with, sha256_hex};
use serde_json::Value;

fn run(args: &[&str]) -> (i32, String, String) {
    let argv: Vec<String> = std::iter::once("casimir").chain(args.iter().copied()).map(String::from).collect();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run_with(&argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn config_of(json: &str) -> Value {
    serde_json::from_str::<Value>(json).unwrap()["config"].clone()
}

#[test]
fn cp_curve_emits_requested_rows() {
    let (code, out, _) = run(&[
        "cp-curve", "--u", "1e-4", "--d-min", "1e-3", "--d-max", "1e3", "--points", "60", "--log-grid", "--method",
        "second-order",
    ]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "d,value,error");
    assert_eq!(lines.len(), 61);
    for line in &lines[1..] {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols.len(), 3);
        assert!(cols[1] < 0.0);
    }
}

#[test]
fn csv_values_round_trip_exactly() {
    let (_, out, _) = run(&["density", "--k-min", "0.1", "--k-max", "3", "--points", "7"]);
    for line in out.lines().skip(1) {
        for cell in line.split(',') {
            let v: f64 = cell.parse().unwrap();
            assert_eq!(format!("{v:.16e}"), cell);
        }
    }
}

#[test]
fn unstable_config_exits_with_physics_error() {
    let (code, out, err) = run(&["energy", "--method", "exact-resolvent", "--u", "1e-3", "--kc", "100"]);
    assert_eq!(code, 1);
    assert!(out.is_empty());
    assert!(err.contains("stability condition"), "{err}");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["no-such-command"]).0, 2);
    assert_eq!(run(&["energy", "--bogus-flag"]).0, 2);
    assert_eq!(run(&["energy", "--kc", "-1"]).0, 2);
    assert_eq!(run(&["energy", "--config", "/nonexistent/casimir.toml"]).0, 2);
    assert_eq!(run(&["validate", "--suite", "12"]).0, 2);
}

#[test]
fn flag_overrides_file_overrides_default() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(&path, "[model]\nu = 2e-4\nkc = 5.0\n").unwrap();
    let p = path.to_str().unwrap();

    let (_, out, _) = run(&["energy", "--method", "second-order"]);
    let c = config_of(&out);
    assert_eq!(c["osc"]["coupling"], 1e-4);
    assert_eq!(c["reg"]["cutoff"], 10.0);

    let (_, out, _) = run(&["energy", "--method", "second-order", "--config", p]);
    let c = config_of(&out);
    assert_eq!(c["osc"]["coupling"], 2e-4);
    assert_eq!(c["reg"]["cutoff"], 5.0);

    let (_, out, _) = run(&["energy", "--method", "second-order", "--config", p, "--kc", "7"]);
    let c = config_of(&out);
    assert_eq!(c["osc"]["coupling"], 2e-4);
    assert_eq!(c["reg"]["cutoff"], 7.0);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "[model]\ncoupling = 1e-4\n").unwrap();
    assert_eq!(run(&["stability", "--config", path.to_str().unwrap()]).0, 2);
}

#[test]
fn output_file_gets_manifest_with_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    let p = path.to_str().unwrap();
    let args = ["cp-curve", "--points", "6", "--log-grid", "--output", p];
    assert_eq!(run(&args).0, 0);
    let first = fs::read(&path).unwrap();
    let manifest: Value = serde_json::from_str(&fs::read_to_string(manifest_path(&path)).unwrap()).unwrap();
    assert_eq!(manifest["command"], "cp-curve");
    assert_eq!(manifest["outputs"][0]["sha256"], sha256_hex(&first));
    assert_eq!(manifest["config"]["osc"]["coupling"], 1e-4);
    // Re-running the recorded arguments reproduces the output bit for bit.
    assert_eq!(run(&args).0, 0);
    assert_eq!(fs::read(&path).unwrap(), first);
}

#[test]
fn scalar_commands_report_json() {
    let (code, out, _) = run(&["stability", "--u", "1e-4"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert!((v["lhs"].as_f64().unwrap() - (1.0 - 16.0 / (3.0 * std::f64::consts::PI) * 0.1)).abs() < 1e-8);

    let (code, out, _) = run(&["pole", "--kc", "3"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert!(v["z_im"].as_f64().unwrap() < 0.0);
    assert!(v["residual"].as_f64().unwrap() < 1e-10);

    let (code, out, _) = run(&["pole", "--regularization", "sharp"]);
    assert_eq!(code, 1, "{out}");
}

#[test]
fn grid_commands_have_headers() {
    let (code, out, _) = run(&["resolvent", "--points", "5"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().next().unwrap(), "k,re_g_plus,im_g_plus,re_g_minus,im_g_minus");
    assert_eq!(out.lines().count(), 6);
    let (code, out, _) = run(&["eta", "--points", "5", "--axis", "imaginary"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().next().unwrap(), "xi,re_eta,im_eta");
    let (code, out, _) = run(&["force-curve", "--points", "5", "--d-min", "0.5", "--d-max", "2", "--format", "json"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["points"].as_array().unwrap().len(), 5);
}

#[test]
fn oracle_compare_reports_all_fields() {
    let (code, out, err) = run(&["oracle-compare", "--regularization", "sharp", "--kc", "4", "--box-pi", "4"]);
    assert_eq!(code, 0, "{err}");
    let v: Value = serde_json::from_str(&out).unwrap();
    for key in ["L", "N", "E_disc", "E_8a", "E_14", "E2_disc", "E2_cont", "bogoliubov_residual"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(run(&["oracle-compare"]).0, 2);
}

#[test]
fn validate_subset_passes() {
    let (code, out, _) = run(&["validate", "--suite", "1,8"]);
    assert_eq!(code, 0);
    assert!(out.contains("2/2 criteria passed"));
}
