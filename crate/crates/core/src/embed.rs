//! Text embedders and the cosine similarity used for ranking.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::text::{fnv1a64, normalize_word};

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("embedding service transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String, retryable: bool },
    #[error("embedding service returned {status}: {message}")]
    Backend { status: u16, message: String },
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
}

/// Dense embedding vector. Never empty; values are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    pub fn new(values: Vec<f32>) -> Result<Self, EmbedError> {
        if values.is_empty() {
            return Err(EmbedError::InvalidInput("embedding must have dim > 0".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbedError::InvalidInput(format!("non-finite value at position {i}")));
        }
        Ok(Embedding(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f32> {
        self.0
    }

    pub fn norm(&self) -> f32 {
        norm(&self.0)
    }
}

/// Dot product with eight independent accumulators so the loop vectorizes.
///
/// Every score in the crate goes through this kernel, which keeps brute-force
/// scans and pairwise [`cosine_sim`] calls bit-identical.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for lane in 0..8 {
            acc[lane] += x[lane] * y[lane];
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[4]) + (acc[1] + acc[5]) + (acc[2] + acc[6]) + (acc[3] + acc[7]) + tail
}

#[inline]
pub fn norm(v: &[f32]) -> f32 {
    dot(v, v).sqrt()
}

/// Cosine of two vectors given their precomputed norms, clamped to [-1, 1].
#[inline]
pub fn cosine_from_parts(dot: f32, norm_a: f32, norm_b: f32) -> f64 {
    (f64::from(dot) / (f64::from(norm_a) * f64::from(norm_b))).clamp(-1.0, 1.0)
}

pub fn cosine_sim(a: &Embedding, b: &Embedding) -> Result<f64, EmbedError> {
    if a.dim() != b.dim() {
        return Err(EmbedError::DimMismatch { expected: a.dim(), actual: b.dim() });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(EmbedError::InvalidInput("cosine similarity of a zero vector".into()));
    }
    Ok(cosine_from_parts(dot(a.values(), b.values()), na, nb))
}

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbedError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }

    /// Short identifier recorded in reports.
    fn id(&self) -> String;
}

/// Offline embedder: hashed bag of words, L2-normalized.
///
/// Each normalized token adds 1.0 to bucket `fnv1a64(token) % dim`. A word that
/// normalizes to nothing (pure punctuation) is hashed in lowercased raw form so
/// that any non-blank text gets a non-zero vector.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Result<Self, EmbedError> {
        if dim == 0 {
            return Err(EmbedError::InvalidInput("dim must be > 0".into()));
        }
        Ok(HashingEmbedder { dim })
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a64(token.as_bytes()) % self.dim as u64) as usize
    }
}

impl Embedder for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::InvalidInput("cannot embed empty text".into()));
        }
        let mut v = vec![0.0f32; self.dim];
        for word in text.split_whitespace() {
            let token = normalize_word(word).unwrap_or_else(|| word.to_lowercase());
            v[self.bucket(&token)] += 1.0;
        }
        let n = norm(&v);
        v.iter_mut().for_each(|x| *x /= n);
        Embedding::new(v)
    }

    fn id(&self) -> String {
        format!("hashing-bow-{}", self.dim)
    }
}

#[derive(Serialize)]
struct EmbedRequestBody<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponseBody {
    vectors: Vec<Vec<f32>>,
}

/// Client for a remote embedding service: `POST {"texts": [...]}` → `{"vectors": [[...], ...]}`.
pub struct HttpEmbedder {
    endpoint: String,
    dim: usize,
    max_attempts: u32,
    backoff: Duration,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    pub fn new(endpoint: impl Into<String>, dim: usize) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        HttpEmbedder { endpoint: endpoint.into(), dim, max_attempts: 3, backoff: Duration::from_millis(500), agent }
    }

    /// Reads the endpoint from `CEG_EMBED_ENDPOINT`.
    pub fn from_env(dim: usize) -> Result<Self, EmbedError> {
        let endpoint = std::env::var("CEG_EMBED_ENDPOINT")
            .map_err(|_| EmbedError::InvalidInput("CEG_EMBED_ENDPOINT is not set".into()))?;
        Ok(Self::new(endpoint, dim))
    }

    pub fn with_retry(mut self, max_attempts: u32, backoff: Duration) -> Self {
        self.max_attempts = max_attempts.max(1);
        self.backoff = backoff;
        self
    }

    fn post_once(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let transport = |message: String| EmbedError::Transport { attempts: 1, message, retryable: true };
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(&EmbedRequestBody { texts })
            .map_err(|e| transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let message = resp.body_mut().read_to_string().unwrap_or_default();
            if status == 429 || status >= 500 {
                return Err(transport(format!("status {status}: {message}")));
            }
            return Err(EmbedError::Backend { status, message });
        }
        let body: EmbedResponseBody = resp
            .body_mut()
            .read_json()
            .map_err(|e| EmbedError::Backend { status, message: format!("malformed response: {e}") })?;
        Ok(body.vectors)
    }
}

impl Embedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        let mut out = self.embed_batch(&[text])?;
        Ok(out.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbedError> {
        if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(EmbedError::InvalidInput(format!("text {i} is empty")));
        }
        let mut delay = self.backoff;
        let mut attempt = 1;
        let vectors = loop {
            match self.post_once(texts) {
                Ok(v) => break v,
                Err(EmbedError::Transport { message, .. }) if attempt < self.max_attempts => {
                    tracing::warn!(attempt, %message, "embedding request failed, retrying");
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                Err(EmbedError::Transport { message, retryable, .. }) => {
                    return Err(EmbedError::Transport { attempts: attempt, message, retryable })
                }
                Err(other) => return Err(other),
            }
        };
        if vectors.len() != texts.len() {
            return Err(EmbedError::Backend {
                status: 200,
                message: format!("asked for {} vectors, received {}", texts.len(), vectors.len()),
            });
        }
        vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.dim {
                    return Err(EmbedError::DimMismatch { expected: self.dim, actual: v.len() });
                }
                Embedding::new(v)
            })
            .collect()
    }

    fn id(&self) -> String {
        format!("http:{}", self.endpoint)
    }
}
