mod common;

use common::{cli_report, fixture, run_cli, service_report, write_reversal_fixture, Scenario};
use serde_json::{json, Value};

fn path(p: &std::path::Path) -> String {
    p.display().to_string()
}

fn assert_report_schema(v: &Value) {
    let file = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../docs/schema/cli_report.schema.json"
    );
    let schema: Value = serde_json::from_slice(&std::fs::read(file).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator
        .iter_errors(v)
        .map(|e| format!("{e} at {}", e.instance_path))
        .collect();
    assert!(errors.is_empty(), "{errors:#?}");
}

#[test]
fn missing_cause_is_usage_error() {
    let o = run_cli(&["--data", "x.csv", "--outcome", "y"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("--cause"), "{err}");
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn unknown_column_is_validation_error_with_body() {
    let dir = tempfile::tempdir().unwrap();
    let lalonde = fixture("lalonde_psid.csv");
    let o = run_cli(&[
        "--data",
        &path(&lalonde),
        "--cause",
        "treat",
        "--outcome",
        "nope",
        "--out",
        &path(&dir.path().join("r.json")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let body: Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!(body["error_code"], "unknown_column");
    assert!(body["message"].is_string());
    assert!(body.get("detail").is_some());
}

#[test]
fn missing_file_is_validation_error() {
    let o = run_cli(&[
        "--data",
        "/definitely/not/here.csv",
        "--cause",
        "a",
        "--outcome",
        "b",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn degenerate_analysis_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let mut s = String::from("x,y,c,z\n");
    for i in 0..40 {
        s.push_str(&format!("{},{},1,{}\n", i % 2, i % 7, (i * 3) % 11));
    }
    std::fs::write(&data, s).unwrap();
    let o = run_cli(&[
        "--data",
        &path(&data),
        "--cause",
        "x",
        "--outcome",
        "y",
        "--auto-k",
        "2",
        "--min-size",
        "5",
        "--features",
        "c",
        "--out",
        &path(&dir.path().join("r.json")),
        "--quiet",
    ]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let body: Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!(body["error_code"], "single_leaf");
}

#[test]
fn auto_k_needs_min_size() {
    let o = run_cli(&[
        "--data",
        "x.csv",
        "--cause",
        "a",
        "--outcome",
        "b",
        "--auto-k",
        "4",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn lalonde_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let s = Scenario {
        data: fixture("lalonde_psid.csv"),
        cause: "treat".into(),
        outcome: "re78".into(),
        confounders: vec![],
        partition: Some(json!({"auto": {"target_leaves": 4, "min_leaf_size": 20}})),
        bins: 4,
        boot: 200,
        seed: 7,
    };
    let a = cli_report(&s, dir.path());
    let b = cli_report(&s, dir.path());
    assert_eq!(a, b);
    let v: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["partition"]["subgroups"].as_array().unwrap().len(), 4);
    assert_eq!(v["diagnoses"].as_array().unwrap().len(), 5);
    assert_eq!(v["seed"], 7);
    assert_report_schema(&v);
}

#[test]
fn reversal_fixture_flags_both_strata() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("reversal.csv");
    write_reversal_fixture(&data);
    let rules = dir.path().join("rules.json");
    std::fs::write(&rules, r#"[{"covariate": "stratum"}]"#).unwrap();
    let out = dir.path().join("r.json");
    let o = run_cli(&[
        "--data",
        &path(&data),
        "--cause",
        "x",
        "--outcome",
        "y",
        "--partition",
        &path(&rules),
        "--boot",
        "200",
        "--out",
        &path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("REVERSED"));
    let v: Value = serde_json::from_slice(&std::fs::read(out).unwrap()).unwrap();
    assert_report_schema(&v);
    let d = v["diagnoses"].as_array().unwrap();
    assert_eq!(d.len(), 3);
    assert_eq!(d[0]["simpson_warning"]["result"]["flag"], false);
    for sub in &d[1..] {
        assert_eq!(sub["simpson_warning"]["result"]["flag"], true);
        assert_eq!(
            sub["simpson_warning"]["result"]["message"],
            "Simpson's Paradox"
        );
    }
}

#[test]
fn quiet_suppresses_summary() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("reversal.csv");
    write_reversal_fixture(&data);
    let o = run_cli(&[
        "--data",
        &path(&data),
        "--cause",
        "x",
        "--outcome",
        "y",
        "--boot",
        "100",
        "--quiet",
        "--out",
        &path(&dir.path().join("r.json")),
    ]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
}

#[tokio::test]
async fn manual_partition_parity_with_service() {
    let dir = tempfile::tempdir().unwrap();
    let s = Scenario {
        data: fixture("lalonde_psid.csv"),
        cause: "treat".into(),
        outcome: "re78".into(),
        confounders: vec!["black".into(), "re75".into(), "married".into()],
        partition: Some(
            json!({"manual": {"rules": [{"covariate": "black"}, {"covariate": "re75", "cut_points": [1000.0]}]}}),
        ),
        bins: 3,
        boot: 150,
        seed: 11,
    };
    let cli = cli_report(&s, dir.path());
    let svc = service_report(&s).await;
    assert!(cli == svc, "CLI report and service concatenation differ");
}

#[tokio::test]
async fn no_partition_parity_with_service() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("reversal.csv");
    write_reversal_fixture(&data);
    let s = Scenario {
        data,
        cause: "x".into(),
        outcome: "y".into(),
        confounders: vec![],
        partition: None,
        bins: 4,
        boot: 100,
        seed: 3,
    };
    assert!(cli_report(&s, dir.path()) == service_report(&s).await);
}
