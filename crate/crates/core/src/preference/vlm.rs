//! Two-stage chat-model labeler and the single-stage score baseline.
//!
//! Wire format (OpenAI-style chat completions), `POST <endpoint_url>`:
//!
//! ```json
//! {
//!   "model": "<model_name>",
//!   "temperature": 0.0,
//!   "messages": [{
//!     "role": "user",
//!     "content": [
//!       {"type": "text", "text": "..."},
//!       {"type": "image_url", "image_url": {"url": "data:image/png;base64,..."}}
//!     ]
//!   }]
//! }
//! ```
//!
//! The reply text is read from `choices[0].message.content`. An API key, if
//! the variable named by `api_key_env` is set, goes in `Authorization: Bearer`.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::label::{parse_vlm_label, parse_vlm_score, PreferenceLabel};
use crate::envs::TaskSpec;
use crate::error::{Error, Result};
use crate::sketch::{encode_png, SketchedObservation};

pub const DEFAULT_API_KEY_ENV: &str = "PREFRL_VLM_API_KEY";

pub const DEFAULT_ANALYSIS_TEMPLATE: &str = "\
You are shown two images of a robot table-top task. Each image is the final frame of one episode with \
the path of the robot drawn on top: the line starts bright yellow and turns dark brown towards the end. \
A cyan dot marks where the path starts and a magenta dot where it ends.
The goal of the task is: {task_text}
Describe what the robot does in Image 1 and in Image 2. Then say whether there is any difference between \
the two images in how well the goal is achieved.";

pub const DEFAULT_LABELING_TEMPLATE: &str = "\
The goal of the task is: {task_text}
Here is an analysis of two episodes, Image 1 and Image 2:
{analysis}
Based on this analysis, is the goal better achieved in Image 1 or Image 2?
Reply with a single line of the form \"Preference: <label>\" where <label> is 1 if Image 1 is better, \
0 if Image 2 is better, and -1 if the analysis is unsure or there is no difference.";

pub const DEFAULT_SCORE_TEMPLATE: &str = "\
You are shown the final frame of one episode of a robot table-top task, with the robot's path drawn on top \
from bright yellow (start) to dark brown (end).
The goal of the task is: {task_text}
Rate how well the goal is achieved with a number between 0 and 1. Reply with a single line of the form \
\"Score: <number>\".";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VlmConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub analysis_template: String,
    pub labeling_template: String,
    pub score_template: String,
    pub temperature: f64,
    /// Extra attempts after a transport failure.
    pub max_retries: u32,
    pub timeout_secs: f64,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    /// Off by default: only loopback endpoints are contacted.
    pub allow_remote: bool,
}

impl Default for VlmConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "http://127.0.0.1:8643/v1/chat/completions".into(),
            model_name: "stub-vlm".into(),
            analysis_template: DEFAULT_ANALYSIS_TEMPLATE.into(),
            labeling_template: DEFAULT_LABELING_TEMPLATE.into(),
            score_template: DEFAULT_SCORE_TEMPLATE.into(),
            temperature: 0.0,
            max_retries: 3,
            timeout_secs: 30.0,
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            allow_remote: false,
        }
    }
}

fn host_of(url: &str) -> Option<String> {
    let rest = url.split_once("://").map(|(_, r)| r).unwrap_or(url);
    let authority = rest.split(['/', '?', '#']).next()?;
    let authority = authority.rsplit_once('@').map(|(_, h)| h).unwrap_or(authority);
    let host = if let Some(stripped) = authority.strip_prefix('[') {
        stripped.split(']').next()?
    } else {
        authority.split(':').next()?
    };
    (!host.is_empty()).then(|| host.to_ascii_lowercase())
}

pub fn is_loopback_url(url: &str) -> bool {
    match host_of(url) {
        Some(h) => h == "localhost" || h.parse::<std::net::IpAddr>().is_ok_and(|ip| ip.is_loopback()),
        None => false,
    }
}

impl VlmConfig {
    pub fn validate(&self) -> Result<()> {
        let need = |name: &str, tpl: &str, keys: &[&str]| {
            for k in keys {
                if !tpl.contains(k) {
                    return Err(Error::Config(format!("{name} is missing the {k} placeholder")));
                }
            }
            Ok(())
        };
        need("analysis_template", &self.analysis_template, &["{task_text}"])?;
        need("labeling_template", &self.labeling_template, &["{task_text}", "{analysis}"])?;
        need("score_template", &self.score_template, &["{task_text}"])?;
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(Error::Config("timeout_secs must be positive".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(Error::Config("temperature must be >= 0".into()));
        }
        if !self.endpoint_url.starts_with("http://") && !self.endpoint_url.starts_with("https://") {
            return Err(Error::Config(format!("endpoint {:?} is not an http(s) URL", self.endpoint_url)));
        }
        self.check_egress()
    }

    pub fn check_egress(&self) -> Result<()> {
        if self.allow_remote || is_loopback_url(&self.endpoint_url) {
            Ok(())
        } else {
            Err(Error::RemoteEndpointBlocked(self.endpoint_url.clone()))
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ContentPart {
    Text(String),
    Png(Vec<u8>),
}

/// One single-turn chat request.
#[derive(Clone, Debug, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub content: Vec<ContentPart>,
}

impl ChatRequest {
    pub fn to_json(&self) -> Value {
        let parts: Vec<Value> = self
            .content
            .iter()
            .map(|p| match p {
                ContentPart::Text(t) => json!({"type": "text", "text": t}),
                ContentPart::Png(bytes) => json!({
                    "type": "image_url",
                    "image_url": {"url": format!("data:image/png;base64,{}", B64.encode(bytes))}
                }),
            })
            .collect();
        json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": "user", "content": parts}],
        })
    }

    pub fn text(&self) -> String {
        self.content
            .iter()
            .filter_map(|p| match p {
                ContentPart::Text(t) => Some(t.as_str()),
                ContentPart::Png(_) => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn image_count(&self) -> usize {
        self.content.iter().filter(|p| matches!(p, ContentPart::Png(_))).count()
    }
}

/// Pulls `choices[0].message.content` out of a chat-completion reply.
pub fn response_text(v: &Value) -> Result<String> {
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| Error::Parse("reply has no choices[0].message.content".into()))
}

/// Carries one request to a chat model. `Err(Error::Transport)` marks a
/// retryable failure.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String>;
}

/// Blocking HTTP transport.
pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(cfg: &VlmConfig) -> Result<Self> {
        cfg.check_egress()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout()))
            .http_status_as_error(false)
            .build()
            .into();
        let api_key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
        Ok(Self {
            agent,
            url: cfg.endpoint_url.clone(),
            api_key,
        })
    }
}

impl ChatTransport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String> {
        let transport = |message: String| Error::Transport { attempts: 1, message };
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(request.to_json()).map_err(|e| transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(transport(format!("HTTP {status}")));
        }
        if status >= 400 {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(Error::Parse(format!("HTTP {status}: {body}")));
        }
        let v: Value = resp.body_mut().read_json().map_err(|e| transport(e.to_string()))?;
        response_text(&v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VlmOutcome {
    pub label: PreferenceLabel,
    pub analysis: String,
    /// Transport retries spent across both stages.
    pub retries: u32,
}

pub struct VlmClient<T: ChatTransport> {
    cfg: VlmConfig,
    transport: T,
    total_retries: AtomicU64,
}

impl VlmClient<HttpTransport> {
    pub fn http(cfg: VlmConfig) -> Result<Self> {
        cfg.validate()?;
        let transport = HttpTransport::new(&cfg)?;
        Ok(Self::with_transport(cfg, transport))
    }
}

fn fill(template: &str, task: &TaskSpec, analysis: &str) -> String {
    template.replace("{task_text}", &task.text).replace("{analysis}", analysis)
}

impl<T: ChatTransport> VlmClient<T> {
    pub fn with_transport(cfg: VlmConfig, transport: T) -> Self {
        Self {
            cfg,
            transport,
            total_retries: AtomicU64::new(0),
        }
    }

    pub fn config(&self) -> &VlmConfig {
        &self.cfg
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    /// Retries spent over the client's lifetime.
    pub fn total_retries(&self) -> u64 {
        self.total_retries.load(Ordering::Relaxed)
    }

    /// Sends with retry; returns the reply and the retries used.
    fn send(&self, request: &ChatRequest) -> Result<(String, u32)> {
        let mut last = String::new();
        for attempt in 0..=self.cfg.max_retries {
            match self.transport.complete(request) {
                Ok(text) => return Ok((text, attempt)),
                Err(Error::Transport { message, .. }) => {
                    last = message;
                    if attempt < self.cfg.max_retries {
                        self.total_retries.fetch_add(1, Ordering::Relaxed);
                    }
                }
                Err(other) => return Err(other),
            }
        }
        Err(Error::Transport {
            attempts: self.cfg.max_retries as usize + 1,
            message: last,
        })
    }

    fn request(&self, content: Vec<ContentPart>) -> ChatRequest {
        ChatRequest {
            model: self.cfg.model_name.clone(),
            temperature: self.cfg.temperature,
            content,
        }
    }

    /// Analysis request with both sketches, then a text-only labeling request.
    pub fn query_two_stage(
        &self,
        obs_a: &SketchedObservation,
        obs_b: &SketchedObservation,
        task: &TaskSpec,
    ) -> Result<VlmOutcome> {
        let analysis_req = self.request(vec![
            ContentPart::Text(fill(&self.cfg.analysis_template, task, "")),
            ContentPart::Text("Image 1:".into()),
            ContentPart::Png(encode_png(&obs_a.composed)?),
            ContentPart::Text("Image 2:".into()),
            ContentPart::Png(encode_png(&obs_b.composed)?),
        ]);
        let (analysis, r1) = self.send(&analysis_req)?;
        let label_req = self.request(vec![ContentPart::Text(fill(&self.cfg.labeling_template, task, &analysis))]);
        let (reply, r2) = self.send(&label_req)?;
        let label = PreferenceLabel::from_y(parse_vlm_label(&reply)? as i64)?;
        Ok(VlmOutcome {
            label,
            analysis,
            retries: r1 + r2,
        })
    }

    /// Single-stage numeric rating in `[0, 1]`.
    pub fn query_score(&self, obs: &SketchedObservation, task: &TaskSpec) -> Result<f64> {
        let req = self.request(vec![
            ContentPart::Text(fill(&self.cfg.score_template, task, "")),
            ContentPart::Png(encode_png(&obs.composed)?),
        ]);
        let (reply, _) = self.send(&req)?;
        parse_vlm_score(&reply)
    }
}
