//! Offline stand-in for a chat-completions model endpoint.
//!
//! Accepts `POST /v1/chat/completions` and replies in the same shape as the
//! real service. The reply depends on how many images the request carries:
//! two is the analysis stage, none is the labeling stage, one is the score
//! stage. Scripted replies and injected faults take precedence over the
//! defaults, in FIFO order.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const CHAT_PATH: &str = "/v1/chat/completions";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StubConfig {
    pub analysis_reply: String,
    pub label_reply: String,
    pub score_reply: String,
    /// The first `fail_first` requests get `fail_status`.
    pub fail_first: u64,
    pub fail_status: u16,
    pub delay_ms: u64,
}

impl Default for StubConfig {
    fn default() -> Self {
        Self {
            analysis_reply: "Image 1 shows the agent closer to the goal.".into(),
            label_reply: "Preference: 1".into(),
            score_reply: "Score: 0.5".into(),
            fail_first: 0,
            fail_status: 503,
            delay_ms: 0,
        }
    }
}

/// One-shot behaviour for the next request.
#[derive(Clone, Debug, PartialEq)]
pub enum Fault {
    Status(u16),
    Delay(Duration),
    /// 200 with a body that is not a chat completion.
    Malformed,
    Reply(String),
}

pub struct StubState {
    cfg: StubConfig,
    script: Mutex<VecDeque<Fault>>,
    log: Mutex<Vec<Value>>,
    count: AtomicU64,
}

impl StubState {
    pub fn new(cfg: StubConfig) -> Arc<Self> {
        Arc::new(Self {
            cfg,
            script: Mutex::new(VecDeque::new()),
            log: Mutex::new(Vec::new()),
            count: AtomicU64::new(0),
        })
    }

    pub fn push(&self, f: Fault) {
        self.script.lock().unwrap().push_back(f);
    }

    pub fn push_reply(&self, text: impl Into<String>) {
        self.push(Fault::Reply(text.into()));
    }

    pub fn request_count(&self) -> u64 {
        self.count.load(Ordering::SeqCst)
    }

    /// Every request body received, including ones answered with a fault.
    pub fn requests(&self) -> Vec<Value> {
        self.log.lock().unwrap().clone()
    }

    fn default_reply(&self, body: &Value) -> &str {
        match image_count(body) {
            0 => &self.cfg.label_reply,
            1 => &self.cfg.score_reply,
            _ => &self.cfg.analysis_reply,
        }
    }
}

pub fn image_count(body: &Value) -> usize {
    body["messages"]
        .as_array()
        .into_iter()
        .flatten()
        .filter_map(|m| m["content"].as_array())
        .flatten()
        .filter(|p| p["type"] == "image_url")
        .count()
}

fn completion(text: &str) -> Response {
    Json(json!({
        "object": "chat.completion",
        "model": "stub-vlm",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
    }))
    .into_response()
}

fn status_reply(code: u16) -> Response {
    let status = StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, Json(json!({"error": {"message": "injected fault"}}))).into_response()
}

async fn chat(State(state): State<Arc<StubState>>, body: String) -> Response {
    let n = state.count.fetch_add(1, Ordering::SeqCst);
    let Ok(body) = serde_json::from_str::<Value>(&body) else {
        return (StatusCode::BAD_REQUEST, "request body is not JSON").into_response();
    };
    state.log.lock().unwrap().push(body.clone());
    if state.cfg.delay_ms > 0 {
        tokio::time::sleep(Duration::from_millis(state.cfg.delay_ms)).await;
    }
    if n < state.cfg.fail_first {
        return status_reply(state.cfg.fail_status);
    }
    let scripted = state.script.lock().unwrap().pop_front();
    match scripted {
        Some(Fault::Status(code)) => status_reply(code),
        Some(Fault::Delay(d)) => {
            tokio::time::sleep(d).await;
            completion(state.default_reply(&body))
        }
        Some(Fault::Malformed) => Json(json!({"unexpected": true})).into_response(),
        Some(Fault::Reply(text)) => completion(&text),
        None => completion(state.default_reply(&body)),
    }
}

pub fn stub_router(state: Arc<StubState>) -> Router {
    Router::new().route(CHAT_PATH, post(chat)).with_state(state)
}
