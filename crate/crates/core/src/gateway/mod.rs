//! Chat/vision model access.
//!
//! Three backends sit behind one [`Gateway`]: a live OpenAI-compatible
//! endpoint, a replay store keyed by call tag, and in-process scripted models.
//! Every completed call lands in the run transcript.

mod extract;
mod http;
mod transcript;

use std::collections::HashSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::render::{encode_png, FrameSequence, RenderError};

pub use extract::{extract_json, fenced_json, ExtractError};
pub use http::{HttpResponse, HttpTransport, LiveConfig, ReqwestTransport, RetryPolicy};
pub use transcript::{ReplayStore, TranscriptRecord};

pub const DEFAULT_MAX_FRAMES: usize = 12;
pub const DEFAULT_API_KEY_ENV: &str = "MODEL_API_KEY";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: usize, message: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed completion body: {0}")]
    MalformedResponse(String),
    #[error("replay transcript has no call tagged {0:?}")]
    ReplayMiss(String),
    #[error("request drift on {0:?}: request digest differs from the recorded one")]
    RequestDrift(String),
    #[error("call tag {0:?} already used in this run")]
    DuplicateTag(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("credential variable {0} is not set")]
    MissingCredential(String),
    #[error("network use is not allowed for this backend")]
    NetworkDenied,
    #[error("transcript: {0}")]
    Transcript(String),
    #[error("model: {0}")]
    Model(String),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Text(String),
    Image { media_type: String, data_b64: String },
}

impl Part {
    pub fn png(bytes: &[u8]) -> Self {
        Part::Image {
            media_type: "image/png".into(),
            data_b64: base64::engine::general_purpose::STANDARD.encode(bytes),
        }
    }

    fn wire(&self) -> Value {
        match self {
            Part::Text(text) => json!({"type": "text", "text": text}),
            Part::Image { media_type, data_b64 } => json!({
                "type": "image_url",
                "image_url": {"url": format!("data:{media_type};base64,{data_b64}")}
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub parts: Vec<Part>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        Self { role: Role::System, parts: vec![Part::Text(text.into())] }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self { role: Role::User, parts: vec![Part::Text(text.into())] }
    }

    /// Concatenated text parts.
    pub fn text(&self) -> String {
        self.parts
            .iter()
            .filter_map(|p| match p {
                Part::Text(t) => Some(t.as_str()),
                Part::Image { .. } => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn image_count(&self) -> usize {
        self.parts.iter().filter(|p| matches!(p, Part::Image { .. })).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub expect_json: bool,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("no messages".into()));
        }
        if self.messages.iter().any(|m| m.parts.is_empty()) {
            return Err(GatewayError::InvalidRequest("message without parts".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    fn wire_messages(&self) -> Value {
        Value::Array(
            self.messages
                .iter()
                .map(|m| json!({"role": m.role, "content": m.parts.iter().map(Part::wire).collect::<Vec<_>>()}))
                .collect(),
        )
    }

    /// Chat-completions request body.
    pub fn wire_body(&self) -> Value {
        json!({
            "model": self.model_id,
            "messages": self.wire_messages(),
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        })
    }

    /// SHA-256 over the canonical request, hex encoded.
    pub fn digest(&self) -> String {
        let canonical = json!({
            "model": self.model_id,
            "messages": self.wire_messages(),
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "expect_json": self.expect_json,
        });
        hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
    }

    /// Last user message, appended if the conversation does not end with one.
    pub fn last_user_mut(&mut self) -> &mut ChatMessage {
        if self.messages.last().map(|m| m.role) != Some(Role::User) {
            self.messages.push(ChatMessage { role: Role::User, parts: Vec::new() });
        }
        self.messages.last_mut().expect("non-empty")
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.last_user_mut().parts.push(Part::Text(text.into()));
        self
    }
}

/// Frame indices kept when at most `max` of `n` frames may be sent; first and
/// last always survive.
pub fn subsample_indices(n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    if max <= 1 {
        return vec![0];
    }
    (0..max).map(|i| i * (n - 1) / (max - 1)).collect()
}

/// Adds the recorded attempt as ordered still images on the last user turn.
pub fn attach_animation(
    mut req: ChatRequest,
    frames: &FrameSequence,
    max_frames: usize,
) -> Result<ChatRequest, GatewayError> {
    let keep = subsample_indices(frames.len(), max_frames);
    let msg = req.last_user_mut();
    for i in keep {
        msg.parts.push(Part::png(&encode_png(&frames.frames[i])?));
    }
    Ok(req)
}

/// In-process model, used for stubs and tests.
pub trait ScriptedModel: Send + Sync {
    fn respond(&self, tag: &str, req: &ChatRequest) -> Result<String, GatewayError>;
}

impl<F> ScriptedModel for F
where
    F: Fn(&str, &ChatRequest) -> Result<String, GatewayError> + Send + Sync,
{
    fn respond(&self, tag: &str, req: &ChatRequest) -> Result<String, GatewayError> {
        self(tag, req)
    }
}

pub enum Backend {
    Live(LiveConfig),
    Replay(ReplayStore),
    Scripted(Box<dyn ScriptedModel>),
}

/// Transport that refuses every request and counts the attempts.
#[derive(Debug, Default)]
pub struct DenyNetwork {
    attempts: AtomicUsize,
}

impl HttpTransport for DenyNetwork {
    fn post_json(&self, _url: &str, _headers: &[(String, String)], _body: &str) -> Result<HttpResponse, GatewayError> {
        self.attempts.fetch_add(1, Ordering::SeqCst);
        Err(GatewayError::NetworkDenied)
    }

    fn attempts(&self) -> usize {
        self.attempts.load(Ordering::SeqCst)
    }
}

pub struct Gateway {
    backend: Backend,
    transport: Arc<dyn HttpTransport>,
    records: Mutex<Vec<TranscriptRecord>>,
    tags: Mutex<HashSet<String>>,
    sink: Mutex<Option<File>>,
}

impl Gateway {
    /// Offline backends get a transport that fails on any use.
    pub fn new(backend: Backend) -> Self {
        let transport: Arc<dyn HttpTransport> = match &backend {
            Backend::Live(_) => Arc::new(ReqwestTransport::new()),
            _ => Arc::new(DenyNetwork::default()),
        };
        Self::with_transport(backend, transport)
    }

    pub fn with_transport(backend: Backend, transport: Arc<dyn HttpTransport>) -> Self {
        Self {
            backend,
            transport,
            records: Mutex::new(Vec::new()),
            tags: Mutex::new(HashSet::new()),
            sink: Mutex::new(None),
        }
    }

    pub fn replay(store: ReplayStore) -> Self {
        Self::new(Backend::Replay(store))
    }

    pub fn scripted(model: impl ScriptedModel + 'static) -> Self {
        Self::new(Backend::Scripted(Box::new(model)))
    }

    pub fn is_replay(&self) -> bool {
        matches!(self.backend, Backend::Replay(_))
    }

    /// Streams every subsequent record to `path` as JSON lines.
    pub fn record_to(&self, path: &Path) -> Result<(), GatewayError> {
        let mut file = File::create(path)?;
        for r in self.records.lock().expect("records lock").iter() {
            writeln!(file, "{}", r.to_line())?;
        }
        *self.sink.lock().expect("sink lock") = Some(file);
        Ok(())
    }

    pub fn network_attempts(&self) -> usize {
        self.transport.attempts()
    }

    pub fn transcript(&self) -> Vec<TranscriptRecord> {
        self.records.lock().expect("records lock").clone()
    }

    pub fn complete(&self, req: &ChatRequest, tag: &str) -> Result<String, GatewayError> {
        req.validate()?;
        if !self.tags.lock().expect("tags lock").insert(tag.to_string()) {
            return Err(GatewayError::DuplicateTag(tag.to_string()));
        }
        let digest = req.digest();
        let response = match &self.backend {
            Backend::Live(cfg) => http::complete_live(cfg, self.transport.as_ref(), req)?,
            Backend::Replay(store) => store.lookup(tag, &digest)?,
            Backend::Scripted(model) => model.respond(tag, req)?,
        };
        let record = TranscriptRecord { tag: tag.to_string(), digest, response: response.clone() };
        if let Some(file) = self.sink.lock().expect("sink lock").as_mut() {
            writeln!(file, "{}", record.to_line())?;
            file.flush()?;
        }
        self.records.lock().expect("records lock").push(record);
        Ok(response)
    }
}
