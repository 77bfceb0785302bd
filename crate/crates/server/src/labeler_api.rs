//! Labeling API.
//!
//! | method | path | body | reply |
//! |--------|------|------|-------|
//! | GET | `/api/pairs/next?annotator=ID` | | 200 `{pair_id, image_a_b64, image_b_b64, task_text}` or 204 |
//! | POST | `/api/pairs/{id}/label` | `{y, annotator}` | 200 `{pair_id, y}` |
//! | GET | `/api/stats` | | 200 `{pending, labeled, discarded}` |
//!
//! `y` is 1 for image A, 0 for image B and −1 for no preference. Errors
//! reply with `{error}`: 400 for a bad label or missing annotator, 404 for
//! an unknown pair, 409 for a stale lease or a repeated submission. Any
//! other path is served from the static directory, if one is given.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use prefrl_core::labeler::LabelQueue;
use prefrl_core::preference::PreferenceLabel;
use prefrl_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

#[derive(Debug, Deserialize)]
pub struct NextQuery {
    pub annotator: Option<String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct PairPayload {
    pub pair_id: u64,
    pub image_a_b64: String,
    pub image_b_b64: String,
    pub task_text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelBody {
    pub y: i64,
    pub annotator: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct StatsPayload {
    pub pending: usize,
    pub labeled: usize,
    pub discarded: usize,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn status_of(e: &Error) -> StatusCode {
    match e {
        Error::UnknownPair(_) => StatusCode::NOT_FOUND,
        Error::StaleLease(_) | Error::DuplicateSubmission(_) => StatusCode::CONFLICT,
        Error::InvalidArgument(_) => StatusCode::BAD_REQUEST,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

async fn next_pair(State(queue): State<Arc<LabelQueue>>, Query(q): Query<NextQuery>) -> Response {
    let Some(annotator) = q.annotator.filter(|a| !a.is_empty()) else {
        return error(StatusCode::BAD_REQUEST, "missing annotator");
    };
    match queue.next_pair(&annotator) {
        Some(p) => Json(PairPayload {
            pair_id: p.pair_id,
            image_a_b64: B64.encode(&p.image_a),
            image_b_b64: B64.encode(&p.image_b),
            task_text: p.task_text,
        })
        .into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn submit(State(queue): State<Arc<LabelQueue>>, Path(id): Path<u64>, Json(body): Json<LabelBody>) -> Response {
    if body.annotator.is_empty() {
        return error(StatusCode::BAD_REQUEST, "missing annotator");
    }
    if let Err(e) = PreferenceLabel::from_y(body.y) {
        return error(StatusCode::BAD_REQUEST, e.to_string());
    }
    let y = body.y as i8;
    match queue.submit_label(id, y, &body.annotator) {
        Ok(label) => Json(json!({ "pair_id": id, "y": label.y() })).into_response(),
        Err(e) => error(status_of(&e), e.to_string()),
    }
}

async fn stats(State(queue): State<Arc<LabelQueue>>) -> Json<StatsPayload> {
    let s = queue.stats();
    Json(StatsPayload {
        pending: s.pending,
        labeled: s.labeled,
        discarded: s.discarded,
    })
}

pub fn labeler_router(queue: Arc<LabelQueue>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/pairs/next", get(next_pair))
        .route("/api/pairs/{id}/label", post(submit))
        .route("/api/stats", get(stats))
        .with_state(queue);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}
