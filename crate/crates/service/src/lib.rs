//! HTTP session service over the analysis engine.
//!
//! Routes return the engine's JSON payloads verbatim, so a scripted client
//! and the batch report see identical bytes for identical inputs and seeds.

pub mod config;
mod error;
mod state;

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::{BytesRejection, JsonRejection};
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use spurious_core::partition::PartitionRequest;
use spurious_core::stats::DEFAULT_REPLICATES;
use spurious_core::storyboard::DEFAULT_BINS;
use spurious_core::{
    load_table, Analysis, CausalConfig, DatasetSummary, LoadOptions, ENGINE_VERSION,
};

pub use config::ServiceConfig;
pub use error::{status_for, ApiError};
pub use state::{AppState, Session, SessionSnapshot, StoreError};

type ApiResult<T> = Result<T, ApiError>;

pub fn app(state: AppState) -> Router {
    let limit = state.config().max_upload_bytes;
    Router::new()
        .route("/health", get(health))
        .route("/datasets", post(upload_dataset))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_info))
        .route(
            "/sessions/{id}/confounders",
            put(set_confounders).get(confounders),
        )
        .route("/sessions/{id}/partition", post(partition))
        .route("/sessions/{id}/subgroups", get(subgroups))
        .route("/sessions/{id}/storyboard", get(storyboard))
        .route("/sessions/{id}/diagnosis", get(diagnosis))
        .fallback(|| async {
            ApiError::new(StatusCode::NOT_FOUND, "unknown_route", "no such route")
        })
        .method_not_allowed_fallback(|| async {
            ApiError::new(
                StatusCode::METHOD_NOT_ALLOWED,
                "method_not_allowed",
                "method not allowed on this route",
            )
        })
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "engine_version": ENGINE_VERSION }))
}

fn json_body<T>(body: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    body.map(|Json(v)| v)
        .map_err(|r| ApiError::rejection(r.status(), r.body_text()))
}

/// Runs engine work off the async executor.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

fn parse_delimiter(q: &HashMap<String, String>) -> ApiResult<u8> {
    match q.get("delimiter").map(String::as_str) {
        None | Some(",") => Ok(b','),
        Some("tab") | Some("\t") => Ok(b'\t'),
        Some(s) if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        Some(s) => Err(ApiError::bad_query(format!(
            "delimiter must be one ASCII character or `tab`, got `{s}`"
        ))),
    }
}

async fn upload_dataset(
    State(state): State<AppState>,
    Query(q): Query<HashMap<String, String>>,
    body: Result<Bytes, BytesRejection>,
) -> ApiResult<(StatusCode, Json<DatasetSummary>)> {
    let bytes = body.map_err(|r| ApiError::rejection(r.status(), r.body_text()))?;
    let delimiter = parse_delimiter(&q)?;
    let max_rows = state.config().max_rows;
    let st = state.clone();
    let summary = blocking(move || {
        let ds = load_table(
            &bytes,
            LoadOptions {
                delimiter,
                ..LoadOptions::default()
            },
        )?;
        if ds.n_rows() > max_rows {
            let mut e = ApiError::new(
                StatusCode::PAYLOAD_TOO_LARGE,
                "too_many_rows",
                format!("dataset has {} rows; the limit is {max_rows}", ds.n_rows()),
            );
            e.body.detail = json!({ "n_rows": ds.n_rows(), "max_rows": max_rows });
            return Err(e);
        }
        st.persist_dataset(ds.id(), &bytes, delimiter)
            .map_err(|e| ApiError::internal(e.to_string()))?;
        let summary = DatasetSummary::of(&ds);
        st.insert_dataset(Arc::new(ds));
        Ok(summary)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(summary)))
}

#[derive(Debug, Deserialize)]
struct CreateSession {
    dataset_id: String,
    cause: String,
    outcome: String,
    covariates: Option<Vec<String>>,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
}

async fn create_session(
    State(state): State<AppState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SessionCreated>)> {
    let req = json_body(body)?;
    let ds = state
        .dataset(&req.dataset_id)
        .ok_or_else(|| ApiError::unknown_dataset(&req.dataset_id))?;
    let analysis = Analysis::with_defaults(ds, &req.cause, &req.outcome, req.covariates, req.seed)?;
    let session = Session {
        id: uuid::Uuid::new_v4().simple().to_string(),
        dataset_id: req.dataset_id,
        analysis,
        created_at: state::now_secs(),
    };
    state
        .persist_session(&session)
        .map_err(|e| ApiError::internal(e.to_string()))?;
    let id = session.id.clone();
    state.insert_session(session);
    Ok((StatusCode::CREATED, Json(SessionCreated { session_id: id })))
}

/// Locks a session and runs `f` on a blocking thread, persisting the
/// session afterwards when `persist` is set and `f` succeeded.
async fn with_session<T: Send + 'static>(
    state: &AppState,
    id: &str,
    persist: bool,
    f: impl FnOnce(&mut Session) -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    let session = state
        .session(id)
        .ok_or_else(|| ApiError::unknown_session(id))?;
    let mut guard = session.lock_owned().await;
    let st = state.clone();
    blocking(move || {
        let out = f(&mut guard)?;
        if persist {
            st.persist_session(&guard)
                .map_err(|e| ApiError::internal(e.to_string()))?;
        }
        Ok(out)
    })
    .await
}

async fn session_info(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionSnapshot>> {
    with_session(&state, &id, false, |s| Ok(s.snapshot()))
        .await
        .map(Json)
}

#[derive(Debug, Deserialize)]
struct ConfounderNames {
    names: Vec<String>,
}

async fn set_confounders(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<ConfounderNames>, JsonRejection>,
) -> ApiResult<Json<CausalConfig>> {
    let req = json_body(body)?;
    with_session(&state, &id, true, move |s| {
        Ok(s.analysis.set_confounders(req.names)?.clone())
    })
    .await
    .map(Json)
}

async fn confounders(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    with_session(&state, &id, false, |s| {
        Ok(Json(s.analysis.confounder_ranking()?).into_response())
    })
    .await
}

async fn partition(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<PartitionRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let req = json_body(body)?;
    with_session(&state, &id, true, move |s| {
        Ok(Json(s.analysis.set_partition(req)?).into_response())
    })
    .await
}

async fn subgroups(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    with_session(&state, &id, false, |s| {
        Ok(Json(s.analysis.subgroup_viewer()?).into_response())
    })
    .await
}

fn query_usize(q: &HashMap<String, String>, key: &str) -> ApiResult<Option<usize>> {
    q.get(key)
        .map(|v| {
            v.parse().map_err(|_| {
                ApiError::bad_query(format!("`{key}` must be a non-negative integer, got `{v}`"))
            })
        })
        .transpose()
}

async fn storyboard(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let bins = query_usize(&q, "L")?.unwrap_or(DEFAULT_BINS);
    with_session(&state, &id, false, move |s| {
        Ok(Json(s.analysis.storyboard(bins)?).into_response())
    })
    .await
}

async fn diagnosis(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let subgroup = query_usize(&q, "subgroup")?;
    let b = query_usize(&q, "B")?.unwrap_or(DEFAULT_REPLICATES);
    with_session(&state, &id, false, move |s| {
        Ok(Json(s.analysis.diagnosis(subgroup, b)?).into_response())
    })
    .await
}
