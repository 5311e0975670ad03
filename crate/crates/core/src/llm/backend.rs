//! Text-generation backends: a chat-completion HTTP client and a scripted replay mock.

use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::template::Bindings;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    /// Worth retrying: connection failures, timeouts, 408/429/5xx.
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("backend returned status {status}: {message}")]
    Status { status: u16, message: String },
    #[error("backend error: {0}")]
    Other(String),
}

/// What a backend sees for one call. `template` and `bindings` are informational.
#[derive(Debug, Clone, Copy)]
pub struct BackendCall<'a> {
    pub prompt: &'a str,
    pub temperature: f64,
    pub template: Option<&'a str>,
    pub bindings: &'a Bindings,
}

pub trait Backend: Send + Sync {
    fn id(&self) -> String;

    fn complete(&self, call: &BackendCall<'_>) -> Result<String, BackendError>;
}

/// Hex SHA-256 of the rendered prompt; the key of a replay transcript.
pub fn request_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Splits a rendered prompt into chat turns.
///
/// A prompt whose first line is `User:` is read as a conversation: each line that
/// is exactly `User:` or `Chatbot:` opens a new user or assistant turn. Anything
/// else becomes a single user message.
pub fn to_messages(prompt: &str) -> Vec<ChatMessage> {
    if prompt.lines().next() != Some("User:") {
        return vec![ChatMessage { role: "user".into(), content: prompt.to_string() }];
    }
    let mut messages: Vec<ChatMessage> = Vec::new();
    for line in prompt.lines() {
        let role = match line {
            "User:" => Some("user"),
            "Chatbot:" => Some("assistant"),
            _ => None,
        };
        match (role, messages.last_mut()) {
            (Some(r), _) => messages.push(ChatMessage { role: r.into(), content: String::new() }),
            (None, Some(m)) => {
                if !m.content.is_empty() {
                    m.content.push('\n');
                }
                m.content.push_str(line);
            }
            (None, None) => unreachable!("first line is a role marker"),
        }
    }
    messages
}

#[derive(Serialize)]
struct ChatRequestBody<'a> {
    model: &'a str,
    messages: Vec<ChatMessage>,
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponseBody {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: Option<String>,
}

/// Minimal chat-completion client: `{"model","messages","temperature"}` →
/// `{"choices":[{"message":{"content"}}]}`.
pub struct ChatCompletionBackend {
    endpoint: String,
    api_key: Option<String>,
    model: String,
    agent: ureq::Agent,
}

impl ChatCompletionBackend {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, model: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        ChatCompletionBackend { endpoint: endpoint.into(), api_key, model: model.into(), agent }
    }

    /// Reads `CEG_LLM_ENDPOINT` (required) and `CEG_LLM_API_KEY` (optional).
    pub fn from_env(model: impl Into<String>) -> Result<Self, BackendError> {
        let endpoint = std::env::var("CEG_LLM_ENDPOINT")
            .map_err(|_| BackendError::Other("CEG_LLM_ENDPOINT is not set".into()))?;
        Ok(Self::new(endpoint, std::env::var("CEG_LLM_API_KEY").ok(), model))
    }
}

impl Backend for ChatCompletionBackend {
    fn id(&self) -> String {
        format!("chat:{}@{}", self.model, self.endpoint)
    }

    fn complete(&self, call: &BackendCall<'_>) -> Result<String, BackendError> {
        let body = ChatRequestBody { model: &self.model, messages: to_messages(call.prompt), temperature: call.temperature };
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let message = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(if matches!(status, 408 | 429) || status >= 500 {
                BackendError::Transient(format!("status {status}: {message}"))
            } else {
                BackendError::Status { status, message }
            });
        }
        let parsed: ChatResponseBody =
            resp.body_mut().read_json().map_err(|e| BackendError::Other(format!("malformed completion: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Other("completion has no choices[0].message.content".into()))
    }
}

/// One scripted reply: plain text, or an injected failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptedReply {
    Text(String),
    Failure {
        fail: String,
        #[serde(default = "default_true")]
        transient: bool,
    },
}

fn default_true() -> bool {
    true
}

impl ScriptedReply {
    fn into_result(self) -> Result<String, BackendError> {
        match self {
            ScriptedReply::Text(t) => Ok(t),
            ScriptedReply::Failure { fail, transient: true } => Err(BackendError::Transient(fail)),
            ScriptedReply::Failure { fail, transient: false } => Err(BackendError::Other(fail)),
        }
    }
}

/// Replies keyed on prompt content rather than an exact hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default)]
    pub template: Option<String>,
    #[serde(default)]
    pub contains: Option<String>,
    pub response: String,
}

impl ScriptRule {
    fn matches(&self, call: &BackendCall<'_>) -> bool {
        self.template.as_deref().is_none_or(|t| call.template == Some(t))
            && self.contains.as_deref().is_none_or(|s| call.prompt.contains(s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request_hash: String,
    pub response: String,
}

/// Replay script. Lookup order per call: exact `entries` by request hash, first
/// matching `rules`, next `queue` element, then `fallback`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    #[serde(default)]
    pub entries: Vec<TranscriptEntry>,
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    #[serde(default)]
    pub queue: Vec<ScriptedReply>,
    #[serde(default)]
    pub fallback: Option<String>,
}

impl Transcript {
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Other(format!("cannot read transcript {}: {e}", path.display())))?;
        serde_json::from_str(&raw).map_err(|e| BackendError::Other(format!("bad transcript {}: {e}", path.display())))
    }
}

#[derive(Debug)]
struct ScriptState {
    queue: VecDeque<ScriptedReply>,
    calls: Vec<String>,
}

#[derive(Debug)]
pub struct ScriptedBackend {
    by_hash: HashMap<String, String>,
    rules: Vec<ScriptRule>,
    fallback: Option<String>,
    state: Mutex<ScriptState>,
}

impl ScriptedBackend {
    pub fn new(transcript: Transcript) -> Self {
        ScriptedBackend {
            by_hash: transcript.entries.into_iter().map(|e| (e.request_hash, e.response)).collect(),
            rules: transcript.rules,
            fallback: transcript.fallback,
            state: Mutex::new(ScriptState { queue: transcript.queue.into(), calls: Vec::new() }),
        }
    }

    pub fn from_queue<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(Transcript {
            queue: replies.into_iter().map(|s| ScriptedReply::Text(s.into())).collect(),
            ..Transcript::default()
        })
    }

    pub fn from_replies(replies: Vec<ScriptedReply>) -> Self {
        Self::new(Transcript { queue: replies, ..Transcript::default() })
    }

    /// Every prompt received so far, in call order.
    pub fn calls(&self) -> Vec<String> {
        self.state.lock().unwrap().calls.clone()
    }

    pub fn remaining(&self) -> usize {
        self.state.lock().unwrap().queue.len()
    }
}

impl Backend for ScriptedBackend {
    fn id(&self) -> String {
        "scripted-mock".into()
    }

    fn complete(&self, call: &BackendCall<'_>) -> Result<String, BackendError> {
        let mut state = self.state.lock().unwrap();
        state.calls.push(call.prompt.to_string());
        if let Some(reply) = self.by_hash.get(&request_hash(call.prompt)) {
            return Ok(reply.clone());
        }
        if let Some(rule) = self.rules.iter().find(|r| r.matches(call)) {
            return Ok(rule.response.clone());
        }
        if let Some(reply) = state.queue.pop_front() {
            return reply.into_result();
        }
        self.fallback.clone().ok_or_else(|| BackendError::Other("scripted transcript exhausted".into()))
    }
}
