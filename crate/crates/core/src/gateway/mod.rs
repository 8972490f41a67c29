//! The single choke-point for model calls.
//!
//! [`Gateway`] wraps a [`Backend`] (live HTTP or the scripted mock) and adds a
//! content-addressed response cache, retry with exponential backoff, and a
//! bound on concurrent in-flight requests. Every pipeline stage talks to
//! models only through this type.

mod cache;
mod http;
mod limiter;
mod mock;

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CacheError, ResponseCache};
pub use http::{HttpBackend, HttpConfig, API_KEY_ENV, BASE_URL_ENV};
pub use limiter::Limiter;
pub use mock::{MockBackend, MockErrorKind, MockRule, MockScript};

/// What a request is for. Does not participate in the cache key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestTag {
    FactExtract,
    ClaimExtract,
    CoverageJudge,
    PrecisionJudge,
    ImportanceJudge,
    Generate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_name: String,
    pub system_text: Option<String>,
    pub user_text: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub request_tag: RequestTag,
}

impl ChatRequest {
    /// A judge/extraction request: temperature 0, no system text.
    pub fn deterministic(
        model_name: impl Into<String>,
        user_text: impl Into<String>,
        request_tag: RequestTag,
    ) -> Self {
        Self {
            model_name: model_name.into(),
            system_text: None,
            user_text: user_text.into(),
            temperature: 0.0,
            max_tokens: 2048,
            request_tag,
        }
    }

    /// Same request with extra text appended to the user turn.
    pub fn with_appended(&self, suffix: &str) -> Self {
        Self {
            user_text: format!("{}{}", self.user_text, suffix),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    pub usage: Usage,
    #[serde(default)]
    pub from_cache: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub dim: usize,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        let dim = values.len();
        Self { values, dim }
    }

    pub fn cosine(&self, other: &Self) -> f64 {
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        let na: f64 = self.values.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb: f64 = other.values.iter().map(|b| b * b).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("network error: {0}")]
    Network(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("backend refused the request: {0}")]
    BackendRefused(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cache error: {0}")]
    Cache(String),
}

impl GatewayError {
    fn retryable(&self) -> bool {
        matches!(self, GatewayError::Network(_) | GatewayError::RateLimited(_))
    }
}

/// A model provider. Implementations must be callable from many threads.
pub trait Backend: Send + Sync {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError>;
    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 2,
            base_delay_ms: 500,
            max_delay_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_retries: u32) -> Self {
        Self {
            max_retries,
            base_delay_ms: 0,
            max_delay_ms: 0,
        }
    }

    fn delay(&self, attempt: u32) -> Duration {
        if self.base_delay_ms == 0 {
            return Duration::ZERO;
        }
        let exp = self
            .base_delay_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.max_delay_ms);
        // jitter in [exp/2, exp]
        let jittered = exp / 2 + rand::thread_rng().gen_range(0..=exp / 2);
        Duration::from_millis(jittered)
    }

    fn run<T>(&self, mut op: impl FnMut() -> Result<T, GatewayError>) -> Result<T, GatewayError> {
        let mut attempt = 0;
        loop {
            match op() {
                Err(e) if e.retryable() && attempt < self.max_retries => {
                    let d = self.delay(attempt);
                    tracing::debug!(attempt, delay_ms = d.as_millis() as u64, error = %e, "retrying");
                    std::thread::sleep(d);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    model_name: &'a str,
    system_text: Option<&'a str>,
    user_text: &'a str,
    temperature: f64,
    max_tokens: u32,
}

/// Stable content hash of the parts of a request that determine the reply.
/// The request tag is deliberately left out.
pub fn cache_key(req: &ChatRequest) -> String {
    let material = KeyMaterial {
        model_name: &req.model_name,
        system_text: req.system_text.as_deref(),
        user_text: &req.user_text,
        temperature: req.temperature,
        max_tokens: req.max_tokens,
    };
    let bytes = serde_json::to_vec(&material).expect("key material serializes");
    hex::encode(Sha256::digest(&bytes))
}

pub(crate) fn embedding_key(model: &str, text: &str) -> String {
    let mut h = Sha256::new();
    h.update(b"embedding\0");
    h.update(model.as_bytes());
    h.update(b"\0");
    h.update(text.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayStats {
    pub chat_calls: usize,
    pub embed_calls: usize,
    pub cache_hits: usize,
}

pub struct Gateway {
    backend: Arc<dyn Backend>,
    cache: ResponseCache,
    limiter: Limiter,
    retry: RetryPolicy,
    key_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    embedding_dim: Mutex<Option<usize>>,
    chat_calls: AtomicUsize,
    embed_calls: AtomicUsize,
    cache_hits: AtomicUsize,
}

impl Gateway {
    /// A gateway with an in-memory cache and at most 8 requests in flight.
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Self {
            backend,
            cache: ResponseCache::in_memory(),
            limiter: Limiter::new(8),
            retry: RetryPolicy::default(),
            key_locks: Mutex::new(HashMap::new()),
            embedding_dim: Mutex::new(None),
            chat_calls: AtomicUsize::new(0),
            embed_calls: AtomicUsize::new(0),
            cache_hits: AtomicUsize::new(0),
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = cache;
        self
    }

    pub fn with_max_in_flight(mut self, limit: usize) -> Self {
        self.limiter = Limiter::new(limit);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            chat_calls: self.chat_calls.load(Ordering::SeqCst),
            embed_calls: self.embed_calls.load(Ordering::SeqCst),
            cache_hits: self.cache_hits.load(Ordering::SeqCst),
        }
    }

    fn key_lock(&self, key: &str) -> Arc<Mutex<()>> {
        let mut locks = self.key_locks.lock().unwrap();
        locks.entry(key.to_string()).or_default().clone()
    }

    pub fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        if req.user_text.is_empty() {
            return Err(GatewayError::InvalidRequest("user_text is empty".into()));
        }
        if req.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be > 0".into()));
        }
        let key = cache_key(req);
        // one backend call per key even under concurrent misses
        let lock = self.key_lock(&key);
        let _held = lock.lock().unwrap();
        if let Some(mut hit) = self.cache.get_chat(&key).map_err(cache_err)? {
            self.cache_hits.fetch_add(1, Ordering::SeqCst);
            hit.from_cache = true;
            return Ok(hit);
        }
        let resp = self.retry.run(|| {
            let _permit = self.limiter.acquire();
            self.chat_calls.fetch_add(1, Ordering::SeqCst);
            self.backend.chat(req)
        })?;
        if resp.finish_reason != FinishReason::Error {
            self.cache.put_chat(&key, req, &resp).map_err(cache_err)?;
        }
        Ok(ChatResponse {
            from_cache: false,
            ..resp
        })
    }

    /// One vector per input text, in input order.
    pub fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::InvalidRequest("no texts to embed".into()));
        }
        let keys: Vec<String> = texts.iter().map(|t| embedding_key(model, t)).collect();
        let mut out: Vec<Option<Vec<f64>>> = Vec::with_capacity(texts.len());
        let mut missing: Vec<usize> = Vec::new();
        for (i, key) in keys.iter().enumerate() {
            match self.cache.get_embedding(key).map_err(cache_err)? {
                Some(v) => {
                    self.cache_hits.fetch_add(1, Ordering::SeqCst);
                    out.push(Some(v));
                }
                None => {
                    out.push(None);
                    missing.push(i);
                }
            }
        }
        if !missing.is_empty() {
            // unique texts only, first occurrence order
            let mut uniq: Vec<usize> = Vec::new();
            for &i in &missing {
                if !uniq.iter().any(|&j| texts[j] == texts[i]) {
                    uniq.push(i);
                }
            }
            let batch: Vec<String> = uniq.iter().map(|&i| texts[i].clone()).collect();
            let vectors = self.retry.run(|| {
                let _permit = self.limiter.acquire();
                self.embed_calls.fetch_add(1, Ordering::SeqCst);
                self.backend.embed(model, &batch)
            })?;
            if vectors.len() != batch.len() {
                return Err(GatewayError::BackendRefused(format!(
                    "expected {} embeddings, got {}",
                    batch.len(),
                    vectors.len()
                )));
            }
            for (&i, v) in uniq.iter().zip(vectors) {
                self.cache.put_embedding(&keys[i], &v).map_err(cache_err)?;
                for &j in &missing {
                    if texts[j] == texts[i] {
                        out[j] = Some(v.clone());
                    }
                }
            }
        }
        let vectors: Vec<EmbeddingVector> = out
            .into_iter()
            .map(|v| EmbeddingVector::new(v.expect("every slot filled")))
            .collect();
        let mut dim = self.embedding_dim.lock().unwrap();
        for v in &vectors {
            let expected = *dim.get_or_insert(v.dim);
            if v.dim != expected {
                return Err(GatewayError::DimensionMismatch {
                    expected,
                    got: v.dim,
                });
            }
        }
        Ok(vectors)
    }
}

fn cache_err(e: CacheError) -> GatewayError {
    GatewayError::Cache(e.to_string())
}
