//! Deterministic scripted backend.
//!
//! A script is a JSON document:
//!
//! ```json
//! {
//!   "rules": [
//!     {"tag": "fact_extract", "contains": ["Adam Brody"], "reply": "Facts:\n- ..."},
//!     {"key": "<cache key>", "reply": "4.5"},
//!     {"tag": "precision_judge", "contains": ["p2"], "error": "network"}
//!   ],
//!   "defaults": {"claim_extract": "No verifiable claim."},
//!   "embeddings": {"some text": [0.1, 0.2]},
//!   "embedding_dim": 64
//! }
//! ```
//!
//! Rules are tried in order; the first whose every condition holds wins. A
//! rule matches on the exact cache key, the request tag, the model name, and
//! substrings that must all occur in the user text. `fail_times` makes a rule
//! return its `error` for that many matching calls and its `reply` afterwards.
//! Texts without a scripted embedding get a pseudo-random unit vector seeded
//! from a hash of the text.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU32, AtomicUsize, Ordering};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{cache_key, Backend, ChatRequest, ChatResponse, FinishReason, GatewayError, RequestTag, Usage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockErrorKind {
    Network,
    RateLimited,
    Refused,
}

impl MockErrorKind {
    fn to_error(self, what: &str) -> GatewayError {
        match self {
            MockErrorKind::Network => GatewayError::Network(format!("scripted failure: {what}")),
            MockErrorKind::RateLimited => GatewayError::RateLimited(format!("scripted 429: {what}")),
            MockErrorKind::Refused => GatewayError::BackendRefused(format!("scripted refusal: {what}")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<RequestTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contains: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<MockErrorKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_times: Option<u32>,
}

impl MockRule {
    pub fn reply(tag: RequestTag, contains: &[&str], reply: impl Into<String>) -> Self {
        Self {
            tag: Some(tag),
            contains: contains.iter().map(|s| s.to_string()).collect(),
            reply: Some(reply.into()),
            ..Self::default()
        }
    }

    pub fn error(tag: RequestTag, contains: &[&str], error: MockErrorKind) -> Self {
        Self {
            tag: Some(tag),
            contains: contains.iter().map(|s| s.to_string()).collect(),
            error: Some(error),
            ..Self::default()
        }
    }

    fn matches(&self, req: &ChatRequest, key: &str) -> bool {
        self.key.as_deref().is_none_or(|k| k == key)
            && self.tag.is_none_or(|t| t == req.request_tag)
            && self.model.as_deref().is_none_or(|m| m == req.model_name)
            && self.contains.iter().all(|s| req.user_text.contains(s.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default)]
    pub defaults: HashMap<RequestTag, String>,
    #[serde(default)]
    pub embeddings: HashMap<String, Vec<f64>>,
    #[serde(default = "default_dim")]
    pub embedding_dim: usize,
    /// Makes every embedding call fail with this error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_error: Option<MockErrorKind>,
}

fn default_dim() -> usize {
    64
}

impl Default for MockScript {
    fn default() -> Self {
        Self {
            rules: Vec::new(),
            defaults: HashMap::new(),
            embeddings: HashMap::new(),
            embedding_dim: default_dim(),
            embedding_error: None,
        }
    }
}

pub struct MockBackend {
    script: MockScript,
    fired: Vec<AtomicU32>,
    latency: Duration,
    chat_calls: AtomicUsize,
    embed_calls: AtomicUsize,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        let fired = script.rules.iter().map(|_| AtomicU32::new(0)).collect();
        Self {
            script,
            fired,
            latency: Duration::ZERO,
            chat_calls: AtomicUsize::new(0),
            embed_calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(text)?))
    }

    pub fn from_path(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Sleeps this long inside every call, to make overlap observable.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn chat_calls(&self) -> usize {
        self.chat_calls.load(Ordering::SeqCst)
    }

    pub fn embed_calls(&self) -> usize {
        self.embed_calls.load(Ordering::SeqCst)
    }

    pub fn total_calls(&self) -> usize {
        self.chat_calls() + self.embed_calls()
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    fn enter(&self) -> InFlight<'_> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        InFlight(&self.in_flight)
    }

    fn pseudo_random_unit(&self, text: &str) -> Vec<f64> {
        let digest = Sha256::digest(text.as_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        let mut v: Vec<f64> = (0..self.script.embedding_dim)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

struct InFlight<'a>(&'a AtomicUsize);

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

fn word_count(s: &str) -> u64 {
    s.split_whitespace().count() as u64
}

impl Backend for MockBackend {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.chat_calls.fetch_add(1, Ordering::SeqCst);
        let _guard = self.enter();
        let key = cache_key(req);
        let rule = self
            .script
            .rules
            .iter()
            .enumerate()
            .find(|(_, r)| r.matches(req, &key));
        let text = match rule {
            Some((i, rule)) => {
                if let Some(kind) = rule.error {
                    let fired = self.fired[i].fetch_add(1, Ordering::SeqCst);
                    let always = rule.fail_times.is_none() || rule.reply.is_none();
                    if always || fired < rule.fail_times.unwrap_or(0) {
                        return Err(kind.to_error(&format!("rule {i}")));
                    }
                }
                rule.reply.clone().unwrap_or_default()
            }
            None => match self.script.defaults.get(&req.request_tag) {
                Some(text) => text.clone(),
                None => {
                    return Err(GatewayError::BackendRefused(format!(
                        "no scripted reply for {:?} request {key}",
                        req.request_tag
                    )))
                }
            },
        };
        Ok(ChatResponse {
            usage: Usage {
                prompt_tokens: word_count(&req.user_text),
                completion_tokens: word_count(&text),
            },
            text,
            finish_reason: FinishReason::Stop,
            from_cache: false,
        })
    }

    fn embed(&self, _model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        self.embed_calls.fetch_add(1, Ordering::SeqCst);
        let _guard = self.enter();
        if let Some(kind) = self.script.embedding_error {
            return Err(kind.to_error("embedding"));
        }
        Ok(texts
            .iter()
            .map(|t| {
                self.script
                    .embeddings
                    .get(t)
                    .cloned()
                    .unwrap_or_else(|| self.pseudo_random_unit(t))
            })
            .collect())
    }
}
