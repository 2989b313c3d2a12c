use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_roughw");

fn roughw(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("ROUGHW_THREADS").output().unwrap()
}

fn schema(name: &str) -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas").join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

fn assert_valid(schema_name: &str, value: &Value) {
    let v = schema(schema_name);
    let errors: Vec<String> = v.iter_errors(value).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{schema_name}: {errors:?}");
}

fn json_out(args: &[&str]) -> Value {
    let out = roughw(args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn tmp(dir: &tempfile::TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

#[test]
fn documented_invocations_pass() {
    for args in [
        &["verify-chen", "--lift", "brownian", "--seed", "7", "--n", "256"][..],
        &["verify-wentzell", "--scenario", "h_zero_quadratic", "--lift", "pwl-circle", "--mesh-ladder", "3"],
        &["verify-wentzell", "--scenario", "h_linear", "--lift", "brownian-ito", "--seed", "42", "--mesh-ladder", "4"],
    ] {
        let out = roughw(args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn json_outputs_follow_the_schemas() {
    assert_valid("rough_path.schema.json", &json_out(&["lift", "--kind", "brownian", "--dim", "2", "--n", "16"]));
    assert_valid("rough_path.schema.json", &json_out(&["lift", "--kind", "pure-area", "--n", "4"]));
    assert_valid("chen_sweep.schema.json", &json_out(&["verify-chen", "--lift", "pwl-circle", "--n", "64"]));
    assert_valid(
        "wentzell_reports.schema.json",
        &json_out(&["verify-wentzell", "--scenario", "h_linear", "--n", "64", "--mesh-ladder", "2"]),
    );
    assert_valid(
        "wentzell_reports.schema.json",
        &json_out(&["verify-wentzell", "--scenario", "kz_drift", "--lift", "pwl-sawtooth", "--n", "32", "--mesh-ladder", "1"]),
    );
    for study in ["conversion", "flow"] {
        assert_valid("convergence_report.schema.json", &json_out(&["convergence", "--study", study, "--n", "128"]));
    }
}

#[test]
fn the_schemas_reject_malformed_documents() {
    let bad = serde_json::json!({"alpha": 0.2, "times": [0.0, 1.0], "values": [[0.0], [1.0]], "cum2": [[[0.0]], [[0.5]]]});
    assert!(!schema("rough_path.schema.json").is_valid(&bad));
    assert!(!schema("run_config.schema.json").is_valid(&serde_json::json!({"mesh_ladder": 9})));
    assert!(!schema("run_config.schema.json").is_valid(&serde_json::json!({"meshladder": 3})));
}

#[test]
fn shipped_inputs_follow_their_schemas() {
    let config = serde_json::json!({"command": "verify-wentzell", "seed": 3, "alpha": 0.45, "scenario": "h_linear", "mesh_ladder": 3});
    assert_valid("run_config.schema.json", &config);
    let transport = serde_json::json!({"p": [[0.5, 0.2]], "q1": [0.1], "phi": [0.0, 1.0]});
    assert_valid("transport_spec.schema.json", &transport);
    let p = roughw::lifts::brownian_ito(1, 2, 4, 1.0, 4, 0.45).unwrap();
    let y = roughw::ControlledPath::canonical(&p);
    assert_valid("controlled_path.schema.json", &serde_json::to_value(y.to_file("driver.json")).unwrap());
}

#[test]
fn usage_and_configuration_errors_exit_with_one() {
    for args in [
        &["frobnicate"][..],
        &["lift", "--alpha", "0.25"],
        &["lift", "--kind", "no-such-lift"],
        &["verify-wentzell", "--mesh-ladder", "7"],
        &["verify-wentzell", "--scenario", "unknown"],
        &["solve-rde", "--field", "cubic:2"],
        &["solve-transport", "--xgrid", "0:1"],
        &["integrate", "--integrand", "file"],
        &["convergence", "--study", "nothing"],
    ] {
        let out = roughw(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    assert_eq!(roughw(&["--help"]).status.code(), Some(0));
    assert_eq!(roughw(&["--version"]).status.code(), Some(0));
}

#[test]
fn failed_verification_exits_with_two() {
    // The separable field on a Brownian driver converges faster than the
    // generic rate, so the slope check rejects it.
    let out = roughw(&["verify-wentzell", "--scenario", "separable", "--lift", "brownian-ito", "--n", "1024", "--mesh-ladder", "3"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let reports: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 3);
}

#[test]
fn transport_needs_a_geometric_driver() {
    let out = roughw(&["solve-transport", "--lift", "brownian-ito", "--n", "32"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("geometric"));
    let out = roughw(&["solve-transport", "--lift", "brownian-ito", "--n", "32", "--geometrize"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn every_run_logs_its_config_hash_and_seed() {
    let out = roughw(&["lift", "--n", "4", "--seed", "11"]);
    let log = String::from_utf8_lossy(&out.stderr);
    let line = log.lines().next().unwrap();
    assert!(line.contains("seed 11"), "{line}");
    let hash = line.split("config ").nth(1).unwrap().split_whitespace().next().unwrap();
    assert_eq!(hash.len(), 64);
    let again = roughw(&["lift", "--n", "4", "--seed", "11"]);
    assert_eq!(again.stderr, out.stderr);
}

#[test]
fn flags_override_the_config_file_and_unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = tmp(&dir, "run.json");
    std::fs::write(&config, r#"{"command": "lift", "n": 8, "seed": 5, "lift": "brownian"}"#).unwrap();
    let cfg = config.to_str().unwrap();
    let from_file = json_out(&["lift", "--config", cfg]);
    assert_eq!(from_file["times"].as_array().unwrap().len(), 9);
    let overridden = json_out(&["lift", "--config", cfg, "--n", "4"]);
    assert_eq!(overridden["times"].as_array().unwrap().len(), 5);
    let same_seed = json_out(&["lift", "--n", "8", "--seed", "5", "--kind", "brownian"]);
    assert_eq!(from_file, same_seed);

    std::fs::write(&config, r#"{"n": 8, "sead": 5}"#).unwrap();
    assert_eq!(roughw(&["lift", "--config", cfg]).status.code(), Some(1));
    std::fs::write(&config, r#"{"command": "integrate"}"#).unwrap();
    assert_eq!(roughw(&["lift", "--config", cfg]).status.code(), Some(1));
}

#[test]
fn out_file_matches_standard_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = tmp(&dir, "y.csv");
    let args = ["solve-rde", "--field", "linear:-0.3", "--y0", "1,-2", "--lift", "pwl-sawtooth", "--n", "32"];
    let stdout = roughw(&args).stdout;
    let mut with_out: Vec<&str> = args.to_vec();
    with_out.extend(["--out", out.to_str().unwrap()]);
    assert_eq!(roughw(&with_out).status.code(), Some(0));
    assert_eq!(std::fs::read(&out).unwrap(), stdout);
    let text = String::from_utf8(stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,y1,y2");
    assert_eq!(text.lines().count(), 34);
}

#[test]
fn csv_floats_round_trip() {
    let out = roughw(&["integrate", "--lift", "brownian-ito", "--dim", "2", "--n", "64", "--seed", "3"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let p = roughw::lifts::brownian_ito(3, 2, 64, 1.0, 16, 0.45).unwrap();
    let r = roughw::rough_integral(&roughw::ControlledPath::canonical(&p), &p).unwrap();
    for (i, line) in text.lines().skip(1).enumerate() {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols[0], p.grid().t(i));
        assert_eq!(cols[1], r.value(i)[0]);
    }
}

#[test]
fn csv_samples_are_lifted_piecewise_linearly() {
    let dir = tempfile::tempdir().unwrap();
    let csv = tmp(&dir, "x.csv");
    std::fs::write(&csv, "t,x1\n0,0\n0.25,0.5\n0.5,-0.5\n1,1\n").unwrap();
    let out = roughw(&["integrate", "--driver", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let last = String::from_utf8(out.stdout).unwrap().lines().last().unwrap().to_string();
    let value: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    // ∫ X dX = X_T² / 2 for a geometric lift.
    assert!((value - 0.5).abs() < 1e-15);
}

#[test]
fn integrand_files_and_integral_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let driver = tmp(&dir, "p.json");
    let status = roughw(&["lift", "--kind", "brownian-ito", "--n", "32", "--seed", "2", "--out", driver.to_str().unwrap()]);
    assert_eq!(status.status.code(), Some(0));
    let p = roughw::io::read_driver(&driver, 0.45).unwrap();
    let y = roughw::ControlledPath::canonical(&p);
    let integrand = tmp(&dir, "y.json");
    std::fs::write(&integrand, serde_json::to_string(&y.to_file("p.json")).unwrap()).unwrap();
    let d = driver.to_str().unwrap();
    let from_file = roughw(&["integrate", "--driver", d, "--integrand", "file", "--integrand-file", integrand.to_str().unwrap()]);
    let canonical = roughw(&["integrate", "--driver", d]);
    assert_eq!(from_file.stdout, canonical.stdout);

    // Itô: ∫ X dX = (X_T² − T) / 2, and the trace bracket integral of 1 is T.
    let last = |out: Output| -> f64 {
        let text = String::from_utf8(out.stdout).unwrap();
        text.lines().last().unwrap().split(',').nth(1).unwrap().parse().unwrap()
    };
    let xt = p.values()[[32, 0]] - p.values()[[0, 0]];
    assert!((last(canonical) - 0.5 * (xt * xt - 1.0)).abs() < 1e-13);
    let young = roughw(&["integrate", "--driver", d, "--kind", "young"]);
    assert_eq!(young.status.code(), Some(0));
    let controlled = roughw(&["integrate", "--driver", d, "--kind", "controlled"]);
    assert!((last(controlled) - 0.5 * (xt * xt - 1.0)).abs() < 1e-13);
}

#[test]
fn transport_custom_json_matches_the_builtin_translation() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tmp(&dir, "t.json");
    // P = 0.7, Q = 0, φ(x) = x: u(t, x) = x + 0.7 X_{0t}.
    std::fs::write(&spec, r#"{"p": [[0.7]], "phi": [0.0, 1.0]}"#).unwrap();
    let out = roughw(&[
        "solve-transport", "--scenario", "custom-json", "--transport-spec", spec.to_str().unwrap(),
        "--lift", "pwl-root", "--n", "64", "--xgrid", "-1:1:5",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "x,u");
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!((v[1] - (v[0] + 0.7)).abs() < 1e-12, "{line}");
    }
    let off_grid = roughw(&["solve-transport", "--lift", "pwl-root", "--n", "64", "--t", "0.3"]);
    assert_eq!(off_grid.status.code(), Some(1));
}

#[test]
fn thread_cap_is_validated() {
    let out = Command::new(BIN).args(["lift", "--n", "4"]).env("ROUGHW_THREADS", "0").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let a = Command::new(BIN).args(["verify-chen", "--n", "64"]).env("ROUGHW_THREADS", "1").output().unwrap();
    let b = Command::new(BIN).args(["verify-chen", "--n", "64"]).env("ROUGHW_THREADS", "3").output().unwrap();
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}
