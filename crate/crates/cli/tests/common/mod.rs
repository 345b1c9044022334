//! Shared helpers: run the `spurious` binary, and replay the same analysis
//! through the HTTP service to rebuild the report from route bodies.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use spurious_service::{app, AppState, ServiceConfig};
use tower::ServiceExt;

pub const BIN: &str = env!("CARGO_BIN_EXE_spurious");

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/data")
        .join(name)
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub data: PathBuf,
    pub cause: String,
    pub outcome: String,
    pub confounders: Vec<String>,
    /// `PartitionRequest` JSON, `{"manual": ...}` or `{"auto": ...}`.
    pub partition: Option<Value>,
    pub bins: usize,
    pub boot: usize,
    pub seed: u64,
}

pub fn run_cli(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .output()
        .expect("spawn spurious")
}

/// Runs the CLI for `s` and returns the report file bytes.
pub fn cli_report(s: &Scenario, dir: &Path) -> Vec<u8> {
    let out = dir.join("report.json");
    let mut args: Vec<String> = vec![
        "--data".into(),
        s.data.display().to_string(),
        "--cause".into(),
        s.cause.clone(),
        "--outcome".into(),
        s.outcome.clone(),
        "--bins".into(),
        s.bins.to_string(),
        "--boot".into(),
        s.boot.to_string(),
        "--seed".into(),
        s.seed.to_string(),
        "--out".into(),
        out.display().to_string(),
        "--quiet".into(),
    ];
    if !s.confounders.is_empty() {
        args.push("--confounders".into());
        args.push(s.confounders.join(","));
    }
    match &s.partition {
        Some(p) if p.get("manual").is_some() => {
            let rules = dir.join("rules.json");
            std::fs::write(&rules, serde_json::to_vec(p).unwrap()).unwrap();
            args.push("--partition".into());
            args.push(rules.display().to_string());
        }
        Some(p) => {
            let a = &p["auto"];
            args.push("--auto-k".into());
            args.push(a["target_leaves"].to_string());
            args.push("--min-size".into());
            args.push(a["min_leaf_size"].to_string());
            if let Some(f) = a.get("features").and_then(Value::as_array) {
                let names: Vec<&str> = f.iter().filter_map(Value::as_str).collect();
                args.push("--features".into());
                args.push(names.join(","));
            }
        }
        None => {}
    }
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = run_cli(&refs);
    assert!(
        o.status.success(),
        "cli failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    std::fs::read(out).unwrap()
}

async fn call(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<Vec<u8>>,
    json_body: bool,
) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if json_body {
        req = req.header("content-type", "application/json");
    }
    let req = req
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (
        status,
        resp.into_body()
            .collect()
            .await
            .unwrap()
            .to_bytes()
            .to_vec(),
    )
}

async fn ok(app: &Router, method: &str, uri: &str, body: Option<Value>) -> Vec<u8> {
    let is_json = body.is_some();
    let (s, b) = call(
        app,
        method,
        uri,
        body.map(|v| serde_json::to_vec(&v).unwrap()),
        is_json,
    )
    .await;
    assert!(
        s.is_success(),
        "{method} {uri}: {s} {}",
        String::from_utf8_lossy(&b)
    );
    b
}

fn push(out: &mut Vec<u8>, key: &str, body: &[u8]) {
    if out.len() > 1 {
        out.push(b',');
    }
    out.extend_from_slice(format!("\"{key}\":").as_bytes());
    out.extend_from_slice(body);
}

/// Replays `s` against a fresh service and concatenates the route bodies
/// into the report layout.
pub async fn service_report(s: &Scenario) -> Vec<u8> {
    let app = app(AppState::new(ServiceConfig::default()));
    let (st, b) = call(
        &app,
        "POST",
        "/datasets",
        Some(std::fs::read(&s.data).unwrap()),
        false,
    )
    .await;
    assert_eq!(st, StatusCode::CREATED);
    let ds: Value = serde_json::from_slice(&b).unwrap();
    let created = ok(
        &app,
        "POST",
        "/sessions",
        Some(json!({"dataset_id": ds["dataset_id"], "cause": s.cause, "outcome": s.outcome, "seed": s.seed})),
    )
    .await;
    let sid = serde_json::from_slice::<Value>(&created).unwrap()["session_id"]
        .as_str()
        .unwrap()
        .to_string();
    let health: Value = serde_json::from_slice(&ok(&app, "GET", "/health", None).await).unwrap();

    let mut out = b"{".to_vec();
    push(
        &mut out,
        "engine_version",
        serde_json::to_string(&health["engine_version"])
            .unwrap()
            .as_bytes(),
    );
    push(&mut out, "seed", s.seed.to_string().as_bytes());
    let config = ok(
        &app,
        "PUT",
        &format!("/sessions/{sid}/confounders"),
        Some(json!({"names": s.confounders})),
    )
    .await;
    push(&mut out, "config", &config);
    push(
        &mut out,
        "confounder_ranking",
        &ok(&app, "GET", &format!("/sessions/{sid}/confounders"), None).await,
    );
    let mut ids = Vec::new();
    match &s.partition {
        Some(p) => {
            let body = ok(
                &app,
                "POST",
                &format!("/sessions/{sid}/partition"),
                Some(p.clone()),
            )
            .await;
            let v: Value = serde_json::from_slice(&body).unwrap();
            ids = v["subgroups"]
                .as_array()
                .unwrap()
                .iter()
                .map(|g| g["id"].as_u64().unwrap())
                .collect();
            push(&mut out, "partition", &body);
            push(
                &mut out,
                "subgroup_viewer",
                &ok(&app, "GET", &format!("/sessions/{sid}/subgroups"), None).await,
            );
        }
        None => {
            push(&mut out, "partition", b"null");
            push(&mut out, "subgroup_viewer", b"null");
        }
    }
    push(
        &mut out,
        "storyboard",
        &ok(
            &app,
            "GET",
            &format!("/sessions/{sid}/storyboard?L={}", s.bins),
            None,
        )
        .await,
    );
    let mut diagnoses = b"[".to_vec();
    diagnoses.extend(
        ok(
            &app,
            "GET",
            &format!("/sessions/{sid}/diagnosis?B={}", s.boot),
            None,
        )
        .await,
    );
    for id in ids {
        diagnoses.push(b',');
        diagnoses.extend(
            ok(
                &app,
                "GET",
                &format!("/sessions/{sid}/diagnosis?subgroup={id}&B={}", s.boot),
                None,
            )
            .await,
        );
    }
    diagnoses.push(b']');
    push(&mut out, "diagnoses", &diagnoses);
    out.extend_from_slice(b"}\n");
    out
}

/// Writes the two-strata reversal table (stratum, x, y) to `path`.
pub fn write_reversal_fixture(path: &Path) {
    let mut s = String::from("x,y,stratum\n");
    for (g, x, succ, total) in [
        ("A", 1, 9, 10),
        ("A", 0, 72, 90),
        ("B", 1, 27, 90),
        ("B", 0, 2, 10),
    ] {
        for i in 0..total {
            s.push_str(&format!("{x},{},{g}\n", u8::from(i < succ)));
        }
    }
    std::fs::write(path, s).unwrap();
}
