use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BERNOULLI: &str = r#"{"type":"iid","support":[0,1],"probs":[0.5,0.5]}"#;
const DEFANT: &str = r#"{"type":"defant"}"#;

fn gfclt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gfclt"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas")
}

fn kernel_file(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../kernels")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn assert_valid(schema: &str, instance: &Value) {
    let text = std::fs::read_to_string(schema_dir().join(schema)).unwrap();
    let schema: Value = serde_json::from_str(&text).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator
        .iter_errors(instance)
        .map(|e| e.to_string())
        .collect();
    assert!(errors.is_empty(), "{schema:?} rejects output: {errors:#?}");
}

#[test]
fn analyze_defant_from_file() {
    let out = gfclt(&["analyze", "--kernel", &kernel_file("defant.json")]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_valid("analyze.schema.json", &v);
    let mu = v["limits"]["mu"][0].as_f64().unwrap();
    let s2 = v["limits"]["sigma"][0][0].as_f64().unwrap();
    assert!((mu - 0.2817181715).abs() < 1e-10, "{mu}");
    assert!((s2 - 0.0475075580).abs() < 1e-10, "{s2}");
    assert_eq!(v["version"], gfclt::VERSION);
    assert_eq!(v["config"]["kernel_spec"]["type"], "defant");
}

#[test]
fn analyze_bernoulli() {
    let out = gfclt(&["analyze", "--kernel", &kernel_file("bernoulli_half.json")]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_valid("analyze.schema.json", &v);
    assert!((v["limits"]["mu"][0].as_f64().unwrap() - 0.5).abs() < 1e-14);
    assert!((v["limits"]["sigma"][0][0].as_f64().unwrap() - 0.25).abs() < 1e-14);
}

#[test]
fn analyze_two_dimensional() {
    let out = gfclt(&["analyze", "--kernel", &kernel_file("iid_2d.json")]);
    assert_eq!(out.status.code(), Some(0));
    assert_valid("analyze.schema.json", &json(&out));
}

#[test]
fn malformed_kernel_is_a_usage_error() {
    for bad in [
        "{not json",
        r#"{"type":"iid","support":[0,1],"probs":[0.7,0.7]}"#,
        "/no/such/file.json",
    ] {
        let out = gfclt(&["analyze", "--kernel", bad]);
        assert_eq!(out.status.code(), Some(1), "{bad}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(gfclt(&[]).status.code(), Some(1));
    assert_eq!(gfclt(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(gfclt(&["simulate", "--n", "abc"]).status.code(), Some(1));
    assert_eq!(gfclt(&["--help"]).status.code(), Some(0));
    assert_eq!(gfclt(&["--version"]).status.code(), Some(0));
}

#[test]
fn coeffs_at_origin_are_ones() {
    let out = gfclt(&["coeffs", "--kernel", DEFANT, "--x", "0", "--n-max", "20"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_valid("coeffs.schema.json", &v);
    for route in ["series", "quadrature"] {
        for c in v[route].as_array().unwrap() {
            assert!((c[0].as_f64().unwrap() - 1.0).abs() < 1e-9);
            assert!(c[1].as_f64().unwrap().abs() < 1e-9);
        }
    }
}

#[test]
fn coeffs_decay_fit_for_defant() {
    let out = gfclt(&["coeffs", "--kernel", DEFANT, "--x", "0.2", "--n-max", "48"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_valid("coeffs.schema.json", &v);
    assert!(v["decay"]["slope"].as_f64().unwrap() < 0.0);
    assert!(v["dual_path_diff"].as_f64().unwrap() < 1e-8);
}

#[test]
fn coeffs_csv_layout() {
    let out = gfclt(&[
        "coeffs", "--kernel", BERNOULLI, "--x", "-0.5", "--n-max", "4", "--format", "csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,method,re,im,principal_err"));
    assert_eq!(lines.count(), 15);
}

#[test]
fn coeffs_radius_past_pole_exits_two() {
    let out = gfclt(&["coeffs", "--kernel", DEFANT, "--x", "0.2", "--r", "1.4"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("quadrature domain"));
}

#[test]
fn coeffs_dimension_mismatch() {
    let out = gfclt(&[
        "coeffs",
        "--kernel",
        &kernel_file("iid_2d.json"),
        "--x",
        "0.1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let out = gfclt(&[
        "coeffs",
        "--kernel",
        &kernel_file("iid_2d.json"),
        "--x",
        "0.1,-0.2",
        "--n-max",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn dump_series_writes_coefficient_table() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fhat.csv");
    let out = gfclt(&[
        "analyze",
        "--kernel",
        DEFANT,
        "--trunc",
        "10",
        "--dump-series",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("m,n,re,im\n"));
    assert!(text.lines().count() > 10);
    let out = gfclt(&[
        "analyze",
        "--kernel",
        BERNOULLI,
        "--dump-series",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_exact_small() {
    let out = gfclt(&["simulate", "--n", "3", "--exact"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_valid("simulate.schema.json", &v);
    assert_eq!(v["mode"], "exact");
    assert_eq!(v["counts"], serde_json::json!({"1": 5, "2": 1}));
}

#[test]
fn simulate_exact_too_large_falls_back_to_sampling() {
    let out = gfclt(&["simulate", "--n", "12", "--exact", "--samples", "500"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["mode"], "monte_carlo");
    assert!(String::from_utf8_lossy(&out.stderr).contains("sampling instead"));
}

#[test]
fn simulate_zero_samples() {
    assert_eq!(
        gfclt(&["simulate", "--n", "5", "--samples", "0"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn simulate_is_deterministic_and_writes_out() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let out = gfclt(&[
            "simulate",
            "--n",
            "300",
            "--samples",
            "20000",
            "--seed",
            "11",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        assert!(out.stdout.is_empty());
    }
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    let v: Value = serde_json::from_slice(&ta).unwrap();
    assert_valid("simulate.schema.json", &v);
    assert_eq!(v["seed"], 11);

    let other = gfclt(&[
        "simulate",
        "--n",
        "300",
        "--samples",
        "20000",
        "--seed",
        "12",
    ]);
    assert_ne!(other.stdout, ta);
}

#[test]
fn simulate_csv() {
    let out = gfclt(&["simulate", "--n", "4", "--exact", "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("value,count\n"));
    let total: u64 = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 24);
}

#[test]
fn verify_defant_small_grid() {
    let out = gfclt(&["verify-defant", "--n-grid", "50,400", "--samples", "20000"]);
    let v = json(&out);
    assert_valid("verify-defant.schema.json", &v);
    assert!(v["identity"]["passed"].as_bool().unwrap());
    assert!(v["limits"]["passed"].as_bool().unwrap());
    assert!(v["truncation"]["stable"].as_bool().unwrap());
    assert!(v["monte_carlo"]["ks_trend_down"].as_bool().unwrap());
    assert_eq!(v["identity"]["rows"].as_array().unwrap().len(), 9);
}

#[test]
fn verify_defant_low_truncation_warns() {
    let out = gfclt(&[
        "verify-defant",
        "--trunc",
        "8",
        "--n-grid",
        "50",
        "--samples",
        "2000",
    ]);
    let v = json(&out);
    assert_valid("verify-defant.schema.json", &v);
    assert!(!v["truncation"]["stable"].as_bool().unwrap());
    let warnings = v["warnings"].as_array().unwrap();
    assert!(warnings
        .iter()
        .any(|w| w.as_str().unwrap().contains("truncation 8")));
    assert!(String::from_utf8_lossy(&out.stderr).contains("truncation 8"));
}

#[test]
fn verify_defant_csv_table() {
    let out = gfclt(&[
        "verify-defant",
        "--n-grid",
        "50,100",
        "--samples",
        "5000",
        "--format",
        "csv",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("n,samples,mean_over_n,var_over_n,ks\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn kernel_files_match_schema() {
    let text = std::fs::read_to_string(schema_dir().join("kernel-spec.schema.json")).unwrap();
    let schema: Value = serde_json::from_str(&text).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    for name in ["defant.json", "bernoulli_half.json", "iid_2d.json"] {
        let v: Value =
            serde_json::from_str(&std::fs::read_to_string(kernel_file(name)).unwrap()).unwrap();
        assert!(validator.is_valid(&v), "{name}");
    }
    assert!(!validator.is_valid(&serde_json::json!({"type": "defant", "extra": 1})));
}

#[test]
fn thread_cap_does_not_change_results() {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_gfclt"))
            .args([
                "simulate",
                "--n",
                "100",
                "--samples",
                "30000",
                "--seed",
                "5",
            ])
            .env("GFCLT_THREADS", threads)
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(run("1"), run("3"));
}
