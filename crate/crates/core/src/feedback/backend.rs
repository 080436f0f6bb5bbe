//! Chat backends: an HTTP chat-completions client, a scripted fixture replayer,
//! and a human stand-in fed through [`HumanChannel`].

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::{FeedbackRecord, PromptKind};

pub const API_KEY_ENV: &str = "REWARD_BACKEND_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Media {
    pub media_type: String,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatTurn {
    pub role: Role,
    pub text: String,
    /// Only user turns carry media.
    pub media: Vec<Media>,
}

impl ChatTurn {
    pub fn system(text: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            text: text.into(),
            media: Vec::new(),
        }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            text: text.into(),
            media: Vec::new(),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            text: text.into(),
            media: Vec::new(),
        }
    }

    pub fn with_media(mut self, media: Vec<Media>) -> Self {
        assert!(
            media.is_empty() || self.role == Role::User,
            "media may only be attached to user turns"
        );
        self.media = media;
        self
    }
}

/// Context a backend may use besides the conversation itself (the human
/// backend shows it; the others ignore it).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RequestMeta {
    pub run_id: String,
    pub iteration: usize,
    pub kind: Option<PromptKind>,
    pub reward_text: String,
    pub stats_summary: String,
    /// Stored frame indices behind the attached expert images.
    pub expert_frames: Vec<usize>,
    pub learner_frames: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub turns: Vec<ChatTurn>,
    pub temperature: f64,
    pub meta: RequestMeta,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected backend response: {0}")]
    Response(String),
    #[error("scripted fixtures in {dir} exhausted after {consumed} repl(ies)")]
    FixturesExhausted { dir: PathBuf, consumed: usize },
    #[error("{path}: {source}")]
    Fixture {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no human feedback arrived within {0:?}")]
    HumanTimeout(Duration),
}

pub trait ChatBackend: Send {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Scripted,
    Human,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Used for single-completion calls.
    pub temperature: f64,
    /// Used when several candidates are sampled from one prompt.
    pub sample_temperature: f64,
    pub max_retries: u32,
    pub retry_backoff_ms: u64,
    pub fixture_path: Option<PathBuf>,
    pub timeout_secs: Option<f64>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Scripted,
            endpoint: None,
            model: None,
            temperature: 0.0,
            sample_temperature: 1.0,
            max_retries: 2,
            retry_backoff_ms: 500,
            fixture_path: None,
            timeout_secs: None,
        }
    }
}

impl BackendConfig {
    pub fn scripted(dir: impl Into<PathBuf>) -> Self {
        Self {
            kind: BackendKind::Scripted,
            fixture_path: Some(dir.into()),
            ..Self::default()
        }
    }

    pub fn human() -> Self {
        Self {
            kind: BackendKind::Human,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let missing = |what: &str| Err(BackendError::Config(format!("{what} is required for a {:?} backend", self.kind)));
        match self.kind {
            BackendKind::Http => {
                if self.endpoint.as_deref().is_none_or(str::is_empty) {
                    return missing("endpoint");
                }
                if self.model.as_deref().is_none_or(str::is_empty) {
                    return missing("model");
                }
            }
            BackendKind::Scripted => {
                if self.fixture_path.is_none() {
                    return missing("fixture_path");
                }
            }
            BackendKind::Human => {}
        }
        if let Some(t) = self.timeout_secs {
            if !(t > 0.0 && t.is_finite()) {
                return Err(BackendError::Config("timeout_secs must be positive".into()));
            }
        }
        if !(self.temperature >= 0.0 && self.sample_temperature >= 0.0) {
            return Err(BackendError::Config("temperatures must be non-negative".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        let default = match self.kind {
            BackendKind::Human => 3600.0,
            _ => 120.0,
        };
        Duration::from_secs_f64(self.timeout_secs.unwrap_or(default))
    }
}

/// Builds the backend described by `config`. Human backends need the channel
/// the service delivers submissions through.
pub fn connect(
    config: &BackendConfig,
    human: Option<Arc<HumanChannel>>,
) -> Result<Box<dyn ChatBackend>, BackendError> {
    config.validate()?;
    Ok(match config.kind {
        BackendKind::Http => Box::new(HttpBackend::new(config)?),
        BackendKind::Scripted => Box::new(ScriptedBackend::open(
            config.fixture_path.as_deref().expect("validated"),
        )?),
        BackendKind::Human => {
            let channel = human.ok_or_else(|| {
                BackendError::Config("human backend requires the feedback service".into())
            })?;
            Box::new(HumanBackend::new(channel, config.timeout()))
        }
    })
}

/// Replays `reply_0000.txt`, `reply_0001.txt`, ... strictly in order.
#[derive(Debug)]
pub struct ScriptedBackend {
    dir: PathBuf,
    replies: Vec<Result<String, PathBuf>>,
    next: usize,
}

pub fn fixture_file_name(index: usize) -> String {
    format!("reply_{index:04}.txt")
}

impl ScriptedBackend {
    pub fn open(dir: &Path) -> Result<Self, BackendError> {
        let entries = fs::read_dir(dir).map_err(|source| BackendError::Fixture {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut names: Vec<String> = entries
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.starts_with("reply_") && n.ends_with(".txt"))
            .collect();
        names.sort();
        Ok(Self {
            dir: dir.to_path_buf(),
            replies: names.into_iter().map(|n| Err(dir.join(n))).collect(),
            next: 0,
        })
    }

    pub fn from_replies(replies: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            dir: PathBuf::from("<memory>"),
            replies: replies.into_iter().map(|r| Ok(r.into())).collect(),
            next: 0,
        }
    }

    pub fn consumed(&self) -> usize {
        self.next
    }

    pub fn remaining(&self) -> usize {
        self.replies.len() - self.next
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&mut self, _request: &ChatRequest) -> Result<String, BackendError> {
        let Some(entry) = self.replies.get(self.next) else {
            return Err(BackendError::FixturesExhausted {
                dir: self.dir.clone(),
                consumed: self.next,
            });
        };
        let text = match entry {
            Ok(text) => text.clone(),
            Err(path) => fs::read_to_string(path).map_err(|source| BackendError::Fixture {
                path: path.clone(),
                source,
            })?,
        };
        self.next += 1;
        Ok(text)
    }
}

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    attempts: u32,
    backoff: Duration,
}

impl HttpBackend {
    pub fn new(config: &BackendConfig) -> Result<Self, BackendError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout())
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: config.endpoint.clone().expect("validated"),
            model: config.model.clone().expect("validated"),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            attempts: config.max_retries + 1,
            backoff: Duration::from_millis(config.retry_backoff_ms),
        })
    }
}

/// Chat-completions request body with base64 image blocks.
pub fn request_body(model: &str, request: &ChatRequest) -> Value {
    let engine = base64::engine::general_purpose::STANDARD;
    let messages: Vec<Value> = request
        .turns
        .iter()
        .map(|turn| {
            let mut content = vec![json!({"type": "text", "text": turn.text})];
            for media in &turn.media {
                content.push(json!({
                    "type": "image",
                    "media_type": media.media_type,
                    "data": engine.encode(&media.data),
                }));
            }
            json!({"role": turn.role, "content": content})
        })
        .collect();
    json!({
        "model": model,
        "temperature": request.temperature,
        "messages": messages,
    })
}

fn text_of(content: &Value) -> Option<String> {
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(blocks) => {
            let parts: Vec<&str> = blocks
                .iter()
                .filter_map(|b| b.get("text").and_then(Value::as_str))
                .collect();
            (!parts.is_empty()).then(|| parts.concat())
        }
        _ => None,
    }
}

/// Reply text from either `choices[0].message.content` or `content[*].text`.
pub fn response_text(body: &Value) -> Option<String> {
    if let Some(content) = body.pointer("/choices/0/message/content") {
        return text_of(content);
    }
    body.get("content").and_then(text_of)
}

impl ChatBackend for HttpBackend {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, BackendError> {
        let body = request_body(&self.model, request);
        let mut last = String::new();
        for attempt in 1..=self.attempts {
            if attempt > 1 {
                std::thread::sleep(self.backoff);
            }
            let mut builder = self.client.post(&self.endpoint).json(&body);
            if let Some(key) = &self.api_key {
                builder = builder.bearer_auth(key);
            }
            match builder.send() {
                Err(e) => last = e.to_string(),
                Ok(resp) => {
                    let status = resp.status();
                    let text = resp.text().unwrap_or_default();
                    if status.is_success() {
                        let value: Value = serde_json::from_str(&text)
                            .map_err(|e| BackendError::Response(e.to_string()))?;
                        return response_text(&value)
                            .ok_or_else(|| BackendError::Response("no reply text in response".into()));
                    }
                    if status.is_server_error() || status.as_u16() == 429 {
                        last = format!("HTTP {status}");
                    } else {
                        return Err(BackendError::Status {
                            status: status.as_u16(),
                            body: text,
                        });
                    }
                }
            }
            tracing::warn!(attempt, error = %last, "backend request failed");
        }
        Err(BackendError::Transport {
            attempts: self.attempts,
            message: last,
        })
    }
}

/// Four-section feedback as posted by a person.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeedbackSubmission {
    pub problems: String,
    pub rewrite_component: String,
    pub remove_component: String,
    pub new_component: String,
    pub raw: String,
}

impl FeedbackSubmission {
    /// Reply text handed to the orchestrator: the structured fields in the
    /// numbered review format, or `raw` when every field is empty.
    pub fn reply_text(&self) -> String {
        let fields = [
            &self.problems,
            &self.rewrite_component,
            &self.remove_component,
            &self.new_component,
        ];
        if fields.iter().all(|f| f.trim().is_empty()) {
            self.raw.clone()
        } else {
            FeedbackRecord::compose(
                &self.problems,
                &self.rewrite_component,
                &self.remove_component,
                &self.new_component,
            )
        }
    }
}

/// What a blocked human-mode run is waiting for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingFeedback {
    pub run_id: String,
    pub iteration: usize,
    pub kind: Option<PromptKind>,
    pub prompt: String,
    pub reward_text: String,
    pub stats_summary: String,
    pub expert_frame_urls: Vec<String>,
    pub learner_frame_urls: Vec<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SubmitError {
    #[error("no feedback is pending")]
    NothingPending,
    #[error("pending feedback is for run '{run_id}' iteration {iteration}")]
    Mismatch { run_id: String, iteration: usize },
}

#[derive(Default)]
struct ChannelState {
    pending: Option<PendingFeedback>,
    submissions: VecDeque<FeedbackSubmission>,
}

/// Rendezvous between a blocked human-mode run and the HTTP service.
#[derive(Default)]
pub struct HumanChannel {
    state: Mutex<ChannelState>,
    ready: Condvar,
}

impl HumanChannel {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn pending(&self) -> Option<PendingFeedback> {
        self.state.lock().expect("channel lock").pending.clone()
    }

    /// Delivers feedback for the pending request of `run_id`/`iteration`.
    pub fn submit(
        &self,
        run_id: &str,
        iteration: usize,
        submission: FeedbackSubmission,
    ) -> Result<(), SubmitError> {
        let mut state = self.state.lock().expect("channel lock");
        let pending = state.pending.as_ref().ok_or(SubmitError::NothingPending)?;
        if pending.run_id != run_id || pending.iteration != iteration {
            return Err(SubmitError::Mismatch {
                run_id: pending.run_id.clone(),
                iteration: pending.iteration,
            });
        }
        state.pending = None;
        state.submissions.push_back(submission);
        self.ready.notify_all();
        Ok(())
    }

    /// Publishes `pending` and blocks until a submission arrives.
    pub fn request(
        &self,
        pending: PendingFeedback,
        timeout: Duration,
    ) -> Result<FeedbackSubmission, BackendError> {
        let deadline = Instant::now() + timeout;
        let mut state = self.state.lock().expect("channel lock");
        state.pending = Some(pending);
        loop {
            if let Some(submission) = state.submissions.pop_front() {
                return Ok(submission);
            }
            let now = Instant::now();
            if now >= deadline {
                state.pending = None;
                return Err(BackendError::HumanTimeout(timeout));
            }
            state = self
                .ready
                .wait_timeout(state, deadline - now)
                .expect("channel lock")
                .0;
        }
    }
}

pub fn expert_frame_url(run_id: &str, index: usize) -> String {
    format!("/api/runs/{run_id}/expert/frames/{index}")
}

pub fn learner_frame_url(run_id: &str, iteration: usize, index: usize) -> String {
    format!("/api/runs/{run_id}/iterations/{iteration}/frames/{index}")
}

pub struct HumanBackend {
    channel: Arc<HumanChannel>,
    timeout: Duration,
}

impl HumanBackend {
    pub fn new(channel: Arc<HumanChannel>, timeout: Duration) -> Self {
        Self { channel, timeout }
    }
}

impl ChatBackend for HumanBackend {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, BackendError> {
        let meta = &request.meta;
        let prompt = request
            .turns
            .iter()
            .rev()
            .find(|t| t.role == Role::User)
            .map(|t| t.text.clone())
            .unwrap_or_default();
        let pending = PendingFeedback {
            run_id: meta.run_id.clone(),
            iteration: meta.iteration,
            kind: meta.kind,
            prompt,
            reward_text: meta.reward_text.clone(),
            stats_summary: meta.stats_summary.clone(),
            expert_frame_urls: meta
                .expert_frames
                .iter()
                .map(|&n| expert_frame_url(&meta.run_id, n))
                .collect(),
            learner_frame_urls: meta
                .learner_frames
                .iter()
                .map(|&n| learner_frame_url(&meta.run_id, meta.iteration, n))
                .collect(),
        };
        Ok(self.channel.request(pending, self.timeout)?.reply_text())
    }
}
