//! OpenAI-compatible `/chat/completions` and `/embeddings` client.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Backend, ChatRequest, ChatResponse, FinishReason, GatewayError, Usage};

pub const API_KEY_ENV: &str = "FACTSCOPE_API_KEY";
pub const BASE_URL_ENV: &str = "FACTSCOPE_BASE_URL";
const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub base_url: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub timeout_secs: u64,
}

impl HttpConfig {
    /// Reads `FACTSCOPE_API_KEY` / `FACTSCOPE_BASE_URL`, falling back to the
    /// `OPENAI_` equivalents.
    pub fn from_env() -> Self {
        let var = |a: &str, b: &str| {
            std::env::var(a)
                .ok()
                .or_else(|| std::env::var(b).ok())
                .filter(|v| !v.is_empty())
        };
        Self {
            base_url: var(BASE_URL_ENV, "OPENAI_BASE_URL").unwrap_or_else(|| DEFAULT_BASE_URL.into()),
            api_key: var(API_KEY_ENV, "OPENAI_API_KEY"),
            timeout_secs: 120,
        }
    }
}

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: Option<String>,
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<UsageBody>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct UsageBody {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

#[derive(Deserialize)]
struct EmbeddingBody {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    #[serde(default)]
    index: usize,
    embedding: Vec<f64>,
}

impl HttpBackend {
    pub fn new(config: &HttpConfig) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| GatewayError::Network(e.to_string()))?;
        Ok(Self {
            client,
            base_url: config.base_url.trim_end_matches('/').to_string(),
            api_key: config.api_key.clone(),
        })
    }

    fn post(&self, path: &str, body: &serde_json::Value) -> Result<String, GatewayError> {
        let url = format!("{}{}", self.base_url, path);
        let mut req = self.client.post(&url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| GatewayError::Network(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| GatewayError::Network(e.to_string()))?;
        if status.as_u16() == 429 {
            return Err(GatewayError::RateLimited(format!("{url}: {text}")));
        }
        if status.is_server_error() {
            return Err(GatewayError::Network(format!("{url}: HTTP {status}: {text}")));
        }
        if !status.is_success() {
            return Err(GatewayError::BackendRefused(format!("{url}: HTTP {status}: {text}")));
        }
        Ok(text)
    }
}

impl Backend for HttpBackend {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let mut messages = Vec::new();
        if let Some(system) = &req.system_text {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": req.user_text}));
        let body = json!({
            "model": req.model_name,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let raw = self.post("/chat/completions", &body)?;
        let parsed: CompletionBody = serde_json::from_str(&raw)
            .map_err(|e| GatewayError::BackendRefused(format!("unexpected completion body: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| GatewayError::BackendRefused("completion has no choices".into()))?;
        let finish_reason = match choice.finish_reason.as_deref() {
            Some("stop") | None => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            Some(_) => FinishReason::Error,
        };
        let usage = parsed.usage.map_or(Usage::default(), |u| Usage {
            prompt_tokens: u.prompt_tokens,
            completion_tokens: u.completion_tokens,
        });
        Ok(ChatResponse {
            text: choice.message.content.unwrap_or_default(),
            finish_reason,
            usage,
            from_cache: false,
        })
    }

    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        let raw = self.post("/embeddings", &json!({"model": model, "input": texts}))?;
        let mut parsed: EmbeddingBody = serde_json::from_str(&raw)
            .map_err(|e| GatewayError::BackendRefused(format!("unexpected embedding body: {e}")))?;
        parsed.data.sort_by_key(|d| d.index);
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Gateway, RequestTag, RetryPolicy};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Serves `responses` in order (the last one repeats), one per connection.
    fn serve(responses: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                let n = counter.fetch_add(1, Ordering::SeqCst);
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap() == 0 || line == "\r\n" {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                let (status, payload) = &responses[n.min(responses.len() - 1)];
                let reply = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
                    payload.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
        });
        (format!("http://{addr}"), hits)
    }

    fn backend(base_url: String) -> HttpBackend {
        HttpBackend::new(&HttpConfig {
            base_url,
            api_key: Some("test".into()),
            timeout_secs: 5,
        })
        .unwrap()
    }

    #[test]
    fn rate_limited_after_retry_budget() {
        let (url, hits) = serve(vec![(429, "{}".into())]);
        let gw = Gateway::new(Arc::new(backend(url))).with_retry(RetryPolicy::no_delay(2));
        let err = gw
            .chat(&ChatRequest::deterministic("m", "hi", RequestTag::Generate))
            .unwrap_err();
        assert!(matches!(err, GatewayError::RateLimited(_)));
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn parses_completion_and_recovers_from_429() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"hello"},"finish_reason":"stop"}],"usage":{"prompt_tokens":3,"completion_tokens":1}}"#;
        let (url, hits) = serve(vec![(429, "{}".into()), (200, ok.into())]);
        let gw = Gateway::new(Arc::new(backend(url))).with_retry(RetryPolicy::no_delay(2));
        let resp = gw
            .chat(&ChatRequest::deterministic("m", "hi", RequestTag::Generate))
            .unwrap();
        assert_eq!(resp.text, "hello");
        assert_eq!(resp.usage.completion_tokens, 1);
        assert_eq!(hits.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn client_errors_are_refusals() {
        let (url, _) = serve(vec![(400, r#"{"error":"bad"}"#.into())]);
        let err = backend(url)
            .chat(&ChatRequest::deterministic("m", "hi", RequestTag::Generate))
            .unwrap_err();
        assert!(matches!(err, GatewayError::BackendRefused(_)));
    }

    #[test]
    fn embeddings_follow_index_order() {
        let body = r#"{"data":[{"index":1,"embedding":[0.0,1.0]},{"index":0,"embedding":[1.0,0.0]}]}"#;
        let (url, _) = serve(vec![(200, body.into())]);
        let v = backend(url)
            .embed("e", &["a".into(), "b".into()])
            .unwrap();
        assert_eq!(v, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }
}
