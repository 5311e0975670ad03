use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::backend::{Backend, BackendCall, BackendError};
use super::ratelimit::TokenBucket;
use super::template::{numbered_block, Bindings, TemplateError, TemplateSet};

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend error{}: {message}", .status.map(|s| format!(" (status {s})")).unwrap_or_default())]
    Backend { status: Option<u16>, message: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PromptSource {
    Template { name: String, bindings: Bindings },
    Raw(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: PromptSource,
    /// Evidence bound into `{docs}` as a numbered block, best-ranked first.
    /// Truncation against the character budget drops from the end.
    pub docs: Vec<String>,
    pub temperature: f64,
    /// Transport attempts, including the first.
    pub max_attempts: u32,
}

impl GenerationRequest {
    pub fn template(name: &str, bindings: Bindings) -> Self {
        GenerationRequest {
            prompt: PromptSource::Template { name: name.to_string(), bindings },
            docs: Vec::new(),
            temperature: 0.0,
            max_attempts: 3,
        }
    }

    pub fn raw(prompt: impl Into<String>) -> Self {
        GenerationRequest { prompt: PromptSource::Raw(prompt.into()), docs: Vec::new(), temperature: 0.0, max_attempts: 3 }
    }

    pub fn with_docs(mut self, docs: Vec<String>) -> Self {
        self.docs = docs;
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_max_attempts(mut self, max_attempts: u32) -> Self {
        self.max_attempts = max_attempts;
        self
    }

    pub fn template_name(&self) -> Option<&str> {
        match &self.prompt {
            PromptSource::Template { name, .. } => Some(name),
            PromptSource::Raw(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub text: String,
    pub bindings: Bindings,
    /// How many of the request's docs made it into the prompt.
    pub docs_used: usize,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    pub backend_id: String,
    pub latency: Duration,
    pub attempt_count: u32,
    pub prompt: String,
    pub docs_used: usize,
    pub truncated: bool,
}

/// Renders requests and sends them to a backend with retry and rate limiting.
///
/// Shareable across threads; admission goes through one token bucket.
pub struct Gateway {
    backend: Arc<dyn Backend>,
    templates: TemplateSet,
    limiter: Option<TokenBucket>,
    char_budget: Option<usize>,
    backoff: Duration,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Gateway {
            backend,
            templates: TemplateSet::builtin(),
            limiter: None,
            char_budget: None,
            backoff: Duration::from_millis(500),
        }
    }

    pub fn with_templates(mut self, templates: TemplateSet) -> Self {
        self.templates = templates;
        self
    }

    pub fn with_rate_limit(mut self, requests_per_minute: u32) -> Self {
        self.limiter = Some(TokenBucket::new(requests_per_minute, requests_per_minute.clamp(1, 10)));
        self
    }

    pub fn with_char_budget(mut self, budget: usize) -> Self {
        self.char_budget = Some(budget);
        self
    }

    /// Base delay of the exponential backoff between transport attempts.
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn backend_id(&self) -> String {
        self.backend.id()
    }

    pub fn render(&self, request: &GenerationRequest) -> Result<RenderedPrompt, TemplateError> {
        let (name, base) = match &request.prompt {
            PromptSource::Raw(text) => {
                let needed = text.chars().count();
                if let Some(budget) = self.char_budget.filter(|&b| needed > b) {
                    return Err(TemplateError::OverBudget { template: "<raw>".into(), needed, budget });
                }
                return Ok(RenderedPrompt { text: text.clone(), bindings: Bindings::new(), docs_used: 0, truncated: false });
            }
            PromptSource::Template { name, bindings } => (name, bindings),
        };
        let template = self.templates.get(name)?;
        let uses_docs = template.required_placeholders().contains("docs");
        let mut used = if uses_docs { request.docs.len() } else { 0 };
        loop {
            let mut bindings = base.clone();
            if uses_docs && (used > 0 || !bindings.contains_key("docs")) {
                bindings.insert("docs".into(), numbered_block(&request.docs[..used]));
            }
            let text = template.render(&bindings)?;
            let needed = text.chars().count();
            match self.char_budget {
                Some(budget) if needed > budget => {
                    if used == 0 {
                        return Err(TemplateError::OverBudget { template: name.clone(), needed, budget });
                    }
                    used -= 1;
                }
                _ => {
                    let truncated = uses_docs && used < request.docs.len();
                    return Ok(RenderedPrompt { text, bindings, docs_used: used, truncated });
                }
            }
        }
    }

    pub fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        if request.temperature.is_nan() || request.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest(format!("temperature {} must be >= 0", request.temperature)));
        }
        let rendered = self.render(request)?;
        let call = BackendCall {
            prompt: &rendered.text,
            temperature: request.temperature,
            template: request.template_name(),
            bindings: &rendered.bindings,
        };
        let max_attempts = request.max_attempts.max(1);
        let started = Instant::now();
        let mut delay = self.backoff;
        for attempt in 1..=max_attempts {
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            match self.backend.complete(&call) {
                Ok(text) => {
                    return Ok(GenerationResult {
                        text,
                        backend_id: self.backend.id(),
                        latency: started.elapsed(),
                        attempt_count: attempt,
                        prompt: rendered.text,
                        docs_used: rendered.docs_used,
                        truncated: rendered.truncated,
                    })
                }
                Err(BackendError::Transient(message)) => {
                    if attempt == max_attempts {
                        return Err(GatewayError::Transport { attempts: attempt, message });
                    }
                    tracing::warn!(attempt, %message, "generation failed, backing off");
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                    delay *= 2;
                }
                Err(BackendError::Status { status, message }) => {
                    return Err(GatewayError::Backend { status: Some(status), message })
                }
                Err(BackendError::Other(message)) => return Err(GatewayError::Backend { status: None, message }),
            }
        }
        unreachable!("loop returns on the final attempt")
    }
}
