//! HTTP API over a root directory of runs, plus the human feedback queue and
//! preference log.
//!
//! GET endpoints only read files. The only writes are appends to
//! `<root>/preferences.jsonl` and feedback handed to a blocked human-mode run.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use bilevel_core::env::{ppm_to_png, read_frame, read_manifest, FrameManifest};
use bilevel_core::eval::{aggregate_preferences, PreferenceRecord};
use bilevel_core::feedback::{
    expert_frame_url, learner_frame_url, FeedbackRecord, FeedbackSubmission, HumanChannel, PendingFeedback,
    SubmitError,
};
use bilevel_core::orchestrator::{
    expert_frames_dir, iteration_dir, list_runs, load_run, read_json, run_dir, Clock, IterationRecord, Mode,
    Report, RunState, RunStatus, ScoreRecord,
};
use serde::{Deserialize, Serialize};

pub const PREFERENCES_FILE: &str = "preferences.jsonl";

/// Error body: `{"code": ..., "message": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status: status.as_u16(),
            code: code.to_string(),
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn internal(message: impl ToString) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub struct AppState {
    pub root: PathBuf,
    pub human: Arc<HumanChannel>,
    pub clock: Box<dyn Clock>,
    preferences: Mutex<()>,
}

impl AppState {
    pub fn new(root: impl Into<PathBuf>, human: Arc<HumanChannel>, clock: Box<dyn Clock>) -> Arc<Self> {
        Arc::new(Self {
            root: root.into(),
            human,
            clock,
            preferences: Mutex::new(()),
        })
    }
}

/// Per-iteration entry of [`RunSummary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub index: usize,
    pub program: String,
    pub score: ScoreRecord,
    pub stats_summary: String,
    pub has_feedback: bool,
    pub frame_count: usize,
    pub frame_urls: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub mode: Mode,
    pub status: RunStatus,
    pub created_at: String,
    pub description: String,
    pub expert_raw_score: Option<f64>,
    pub expert_frame_urls: Vec<String>,
    pub iterations: Vec<IterationSummary>,
}

/// An iteration record plus the URLs of its frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationView {
    #[serde(flatten)]
    pub record: IterationRecord,
    pub frame_urls: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingView {
    pub pending: Option<PendingFeedback>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSummary {
    pub count: usize,
    /// Mean score per run id.
    pub means: std::collections::BTreeMap<String, f64>,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/runs", get(runs))
        .route("/api/runs/{id}", get(run_summary))
        .route("/api/runs/{id}/iterations/{k}", get(iteration))
        .route(
            "/api/runs/{id}/iterations/{k}/feedback",
            axum::routing::post(post_feedback),
        )
        .route("/api/runs/{id}/iterations/{k}/frames/{n}", get(learner_frame))
        .route("/api/runs/{id}/expert/frames/{n}", get(expert_frame))
        .route("/api/pending-feedback", get(pending))
        .route("/api/preferences", get(preferences).post(post_preference))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .with_state(state)
}

/// Binds `addr` and serves until the process exits.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "serving");
    axum::serve(listener, router(state)).await
}

fn check_id(id: &str) -> ApiResult<()> {
    if id.is_empty() || id.starts_with('.') || id.contains(['/', '\\']) {
        return Err(ApiError::not_found(format!("no run '{id}'")));
    }
    Ok(())
}

fn load(root: &Path, id: &str) -> ApiResult<RunState> {
    check_id(id)?;
    if !run_dir(root, id).join("report.json").exists() {
        return Err(ApiError::not_found(format!("no run '{id}'")));
    }
    load_run(root, id).map_err(ApiError::internal)
}

fn frame_urls(id: &str, k: usize, count: usize) -> Vec<String> {
    (0..count).map(|n| learner_frame_url(id, k, n)).collect()
}

async fn runs(State(app): State<Arc<AppState>>) -> ApiResult<Json<Vec<Report>>> {
    let ids = list_runs(&app.root).map_err(ApiError::internal)?;
    let reports = ids
        .iter()
        .map(|id| read_json(&run_dir(&app.root, id).join("report.json")))
        .collect::<Result<Vec<Report>, _>>()
        .map_err(ApiError::internal)?;
    Ok(Json(reports))
}

async fn run_summary(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<RunSummary>> {
    let state = load(&app.root, &id)?;
    let expert_frames = read_manifest(&expert_frames_dir(&app.root, &id)).map_or(0, |m| m.count);
    Ok(Json(RunSummary {
        mode: state.config.mode,
        status: state.status.clone(),
        created_at: state.created_at.clone(),
        description: state.description.clone(),
        expert_raw_score: state.expert.as_ref().map(|e| e.raw_score),
        expert_frame_urls: (0..expert_frames).map(|n| expert_frame_url(&id, n)).collect(),
        iterations: state
            .iterations
            .iter()
            .map(|r| IterationSummary {
                index: r.index,
                program: r.program.clone(),
                score: r.score.clone(),
                stats_summary: r.stats_summary.clone(),
                has_feedback: r.feedback.is_some(),
                frame_count: r.frames.count,
                frame_urls: frame_urls(&id, r.index, r.frames.count),
            })
            .collect(),
        run_id: state.run_id,
    }))
}

async fn iteration(
    State(app): State<Arc<AppState>>,
    UrlPath((id, k)): UrlPath<(String, usize)>,
) -> ApiResult<Json<IterationView>> {
    let state = load(&app.root, &id)?;
    let record = state
        .iterations
        .into_iter()
        .nth(k)
        .ok_or_else(|| ApiError::not_found(format!("run '{id}' has no iteration {k}")))?;
    Ok(Json(IterationView {
        frame_urls: frame_urls(&id, k, record.frames.count),
        record,
    }))
}

fn png_frame(dir: &Path, n: usize) -> ApiResult<Response> {
    let manifest: FrameManifest = read_manifest(dir).map_err(|_| ApiError::not_found("no frames"))?;
    if n >= manifest.count {
        return Err(ApiError::not_found(format!("no frame {n} (count {})", manifest.count)));
    }
    let ppm = read_frame(dir, n).map_err(ApiError::internal)?;
    let png = ppm_to_png(&ppm).map_err(ApiError::internal)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn learner_frame(
    State(app): State<Arc<AppState>>,
    UrlPath((id, k, n)): UrlPath<(String, usize, usize)>,
) -> ApiResult<Response> {
    check_id(&id)?;
    png_frame(&iteration_dir(&app.root, &id, k).join("frames"), n)
}

async fn expert_frame(
    State(app): State<Arc<AppState>>,
    UrlPath((id, n)): UrlPath<(String, usize)>,
) -> ApiResult<Response> {
    check_id(&id)?;
    png_frame(&expert_frames_dir(&app.root, &id), n)
}

async fn pending(State(app): State<Arc<AppState>>) -> Json<PendingView> {
    Json(PendingView {
        pending: app.human.pending(),
    })
}

async fn post_feedback(
    State(app): State<Arc<AppState>>,
    UrlPath((id, k)): UrlPath<(String, usize)>,
    body: Bytes,
) -> ApiResult<Json<FeedbackRecord>> {
    let submission: FeedbackSubmission =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("malformed feedback: {e}")))?;
    let reply = submission.reply_text();
    if reply.trim().is_empty() {
        return Err(ApiError::bad_request("feedback is empty"));
    }
    match app.human.submit(&id, k, submission) {
        Ok(()) => Ok(Json(bilevel_core::feedback::parse_vlm_feedback(&reply))),
        Err(e @ (SubmitError::NothingPending | SubmitError::Mismatch { .. })) => {
            Err(ApiError::new(StatusCode::CONFLICT, "not_pending", e.to_string()))
        }
    }
}

fn read_preferences(path: &Path) -> ApiResult<Vec<PreferenceRecord>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(ApiError::internal(e)),
    };
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(ApiError::internal))
        .collect()
}

async fn preferences(State(app): State<Arc<AppState>>) -> ApiResult<Json<PreferenceSummary>> {
    let records = {
        let _guard = app.preferences.lock().expect("preference lock");
        read_preferences(&app.root.join(PREFERENCES_FILE))?
    };
    Ok(Json(PreferenceSummary {
        count: records.len(),
        means: aggregate_preferences(&records).unwrap_or_default(),
    }))
}

async fn post_preference(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<PreferenceRecord>> {
    let mut record: PreferenceRecord =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("invalid preference: {e}")))?;
    if record.run.is_empty() || record.rater.is_empty() {
        return Err(ApiError::bad_request("run and rater are required"));
    }
    if record.timestamp.is_empty() {
        record.timestamp = app.clock.now();
    }
    let line = serde_json::to_string(&record).map_err(ApiError::internal)? + "\n";
    let _guard = app.preferences.lock().expect("preference lock");
    fs::create_dir_all(&app.root).map_err(ApiError::internal)?;
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(app.root.join(PREFERENCES_FILE))
        .map_err(ApiError::internal)?;
    file.write_all(line.as_bytes()).map_err(ApiError::internal)?;
    Ok(Json(record))
}
