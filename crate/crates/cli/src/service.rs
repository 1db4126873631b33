//! HTTP front for the annotation task pool.
//!
//! * `GET /tasks/next?worker=ID` leases a task (`200` with the task, `204`
//!   when nothing is left for that worker).
//! * `POST /responses` takes an `AnnotatorResponse` (`201` accepted, `200`
//!   for an identical resubmission, `404` unknown task, `409` conflicting
//!   resubmission, `422` invalid).
//! * `GET /progress` reports pool counters.
//!
//! Accepted responses are appended to an optional JSONL store so a restart
//! can restore them.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use abstain_core::annotation::{LeaseError, SubmitOutcome, TaskPool};
use abstain_core::data::read_jsonl;
use abstain_core::AnnotatorResponse;
use anyhow::Context;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

pub type Clock = Arc<dyn Fn() -> Instant + Send + Sync>;

pub struct AppState {
    pool: Mutex<TaskPool>,
    store: Option<Mutex<File>>,
    clock: Clock,
}

impl AppState {
    pub fn new(pool: TaskPool) -> Self {
        Self { pool: Mutex::new(pool), store: None, clock: Arc::new(Instant::now) }
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    /// Replay responses already in `path` into the pool, then append new
    /// ones to it.
    pub fn with_store(mut self, path: &Path) -> anyhow::Result<Self> {
        if path.exists() {
            let stored: Vec<(usize, AnnotatorResponse)> = read_jsonl(path)?;
            let n = stored.len();
            self.pool
                .get_mut()
                .expect("pool lock poisoned")
                .restore(stored.into_iter().map(|(_, r)| r))
                .with_context(|| format!("restoring {}", path.display()))?;
            log::info!("restored {n} response(s) from {}", path.display());
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("opening {}", path.display()))?;
        self.store = Some(Mutex::new(file));
        Ok(self)
    }

    pub fn responses(&self) -> Vec<AnnotatorResponse> {
        self.pool.lock().expect("pool lock poisoned").responses().cloned().collect()
    }
}

#[derive(Deserialize)]
struct NextQuery {
    worker: Option<String>,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

async fn next_task(State(state): State<Arc<AppState>>, Query(q): Query<NextQuery>) -> Response {
    let Some(worker) = q.worker.filter(|w| !w.trim().is_empty()) else {
        return error(StatusCode::BAD_REQUEST, "missing worker id");
    };
    let now = (state.clock)();
    let mut pool = state.pool.lock().expect("pool lock poisoned");
    match pool.next_task(&worker, now) {
        Some(task) => Json(task.clone()).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn submit(State(state): State<Arc<AppState>>, Json(response): Json<AnnotatorResponse>) -> Response {
    let now = (state.clock)();
    let mut pool = state.pool.lock().expect("pool lock poisoned");
    match pool.submit(response.clone(), now) {
        Ok(SubmitOutcome::Accepted) => {
            if let Some(store) = &state.store {
                let line = serde_json::to_string(&response).expect("response serializes");
                let mut f = store.lock().expect("store lock poisoned");
                if let Err(e) = writeln!(f, "{line}").and_then(|_| f.flush()) {
                    log::error!("could not persist response for {}: {e}", response.task_id);
                }
            }
            (StatusCode::CREATED, Json(json!({ "status": "accepted" }))).into_response()
        }
        Ok(SubmitOutcome::Duplicate) => Json(json!({ "status": "duplicate" })).into_response(),
        Err(e @ LeaseError::UnknownTask(_)) => error(StatusCode::NOT_FOUND, e.to_string()),
        Err(e @ LeaseError::Conflict { .. }) => error(StatusCode::CONFLICT, e.to_string()),
        Err(e @ LeaseError::Invalid(_)) => error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
    }
}

async fn progress(State(state): State<Arc<AppState>>) -> Response {
    let now = (state.clock)();
    Json(state.pool.lock().expect("pool lock poisoned").progress(now)).into_response()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/tasks/next", get(next_task))
        .route("/responses", post(submit))
        .route("/progress", get(progress))
        .with_state(state)
}

/// Serve until Ctrl-C.
pub async fn serve(addr: &str, state: Arc<AppState>) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
