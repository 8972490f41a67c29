//! Evidence retrieval from a pluggable knowledge source.
//!
//! Three kinds of source are supported: a local JSONL corpus searched with
//! BM25, a file of evidence fetched ahead of time (one record per prompt),
//! and a search service reached over HTTP.

mod bm25;
mod chunk;

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::model::{EvalPrompt, EvidenceDoc, EvidenceSet};

pub use bm25::{build_local_index, tokenize, Bm25Index, CorpusDoc, B as BM25_B, K1 as BM25_K1};
pub use chunk::{chunk_documents, chunk_spans, Chunk};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error("knowledge source unavailable: {0}")]
    SourceUnavailable(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("malformed corpus record at line {line}: {reason}")]
    MalformedCorpusRecord { line: usize, reason: String },
    #[error("malformed evidence record: {0}")]
    MalformedEvidence(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    LocalCorpus,
    PrecomputedEvidence,
    SearchAdapter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeSourceConfig {
    pub kind: SourceKind,
    /// Corpus path, evidence file path, or search endpoint URL.
    pub location: String,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_chunk_chars")]
    pub chunk_chars: usize,
    /// Label stored on every retrieved document.
    #[serde(default)]
    pub source_name: Option<String>,
}

fn default_top_k() -> usize {
    5
}

fn default_chunk_chars() -> usize {
    3000
}

impl KnowledgeSourceConfig {
    pub fn local(path: impl Into<String>) -> Self {
        Self {
            kind: SourceKind::LocalCorpus,
            location: path.into(),
            top_k: default_top_k(),
            chunk_chars: default_chunk_chars(),
            source_name: None,
        }
    }

    fn label(&self) -> String {
        self.source_name.clone().unwrap_or_else(|| match self.kind {
            SourceKind::LocalCorpus => "local_corpus".into(),
            SourceKind::PrecomputedEvidence => "precomputed".into(),
            SourceKind::SearchAdapter => "search".into(),
        })
    }
}

#[derive(Debug, Deserialize)]
struct PrecomputedRecord {
    prompt_id: String,
    docs: Vec<PrecomputedDoc>,
}

#[derive(Debug, Deserialize)]
struct PrecomputedDoc {
    doc_id: String,
    #[serde(default)]
    source_name: Option<String>,
    text: String,
    rank: u32,
    #[serde(default)]
    score: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct SearchReply {
    docs: Vec<SearchDoc>,
}

#[derive(Debug, Deserialize)]
struct SearchDoc {
    doc_id: String,
    #[serde(default)]
    source_name: Option<String>,
    text: String,
    #[serde(default)]
    score: Option<f64>,
}

/// An initialized knowledge source. Read-only once opened.
pub enum Retriever {
    Local(Bm25Index),
    /// A local corpus that turned out to be empty: every query gets no evidence.
    Empty,
    Precomputed(HashMap<String, Vec<EvidenceDoc>>),
    Search {
        client: reqwest::blocking::Client,
        endpoint: String,
        source_name: String,
    },
}

impl Retriever {
    pub fn open(cfg: &KnowledgeSourceConfig) -> Result<Self, RetrievalError> {
        if cfg.top_k == 0 {
            return Err(RetrievalError::SourceUnavailable("top_k must be >= 1".into()));
        }
        match cfg.kind {
            SourceKind::LocalCorpus => match build_local_index(Path::new(&cfg.location), &cfg.label()) {
                Ok(idx) => Ok(Retriever::Local(idx)),
                Err(RetrievalError::EmptyCorpus) => {
                    tracing::warn!(corpus = %cfg.location, "corpus is empty; every prompt gets empty evidence");
                    Ok(Retriever::Empty)
                }
                Err(e) => Err(e),
            },
            SourceKind::PrecomputedEvidence => load_precomputed(Path::new(&cfg.location), &cfg.label()).map(Retriever::Precomputed),
            SourceKind::SearchAdapter => {
                let client = reqwest::blocking::Client::builder()
                    .timeout(Duration::from_secs(60))
                    .build()
                    .map_err(|e| RetrievalError::SourceUnavailable(e.to_string()))?;
                Ok(Retriever::Search {
                    client,
                    endpoint: cfg.location.clone(),
                    source_name: cfg.label(),
                })
            }
        }
    }

    /// At most `top_k` documents, ranked 1..n.
    pub fn retrieve(&self, prompt: &EvalPrompt, top_k: usize) -> Result<EvidenceSet, RetrievalError> {
        let docs = match self {
            Retriever::Local(idx) => idx.search(&prompt.query, top_k),
            Retriever::Empty => Vec::new(),
            Retriever::Precomputed(map) => match map.get(&prompt.prompt_id) {
                Some(docs) => docs.iter().take(top_k).cloned().collect(),
                None => {
                    tracing::warn!(prompt = %prompt.prompt_id, "no precomputed evidence");
                    Vec::new()
                }
            },
            Retriever::Search {
                client,
                endpoint,
                source_name,
            } => search(client, endpoint, source_name, &prompt.query, top_k)?,
        };
        Ok(EvidenceSet {
            prompt_id: prompt.prompt_id.clone(),
            docs,
        })
    }
}

fn load_precomputed(path: &Path, default_source: &str) -> Result<HashMap<String, Vec<EvidenceDoc>>, RetrievalError> {
    let records: Vec<PrecomputedRecord> = crate::jsonl::read(path).map_err(|e| match e {
        crate::jsonl::JsonlError::Io { .. } => RetrievalError::SourceUnavailable(e.to_string()),
        other => RetrievalError::MalformedEvidence(other.to_string()),
    })?;
    let mut map = HashMap::new();
    for rec in records {
        let mut docs = rec.docs;
        docs.sort_by_key(|d| d.rank);
        if docs.windows(2).any(|w| w[0].rank == w[1].rank) {
            return Err(RetrievalError::MalformedEvidence(format!(
                "prompt `{}` has repeated ranks",
                rec.prompt_id
            )));
        }
        if docs.iter().any(|d| d.text.trim().is_empty()) {
            return Err(RetrievalError::MalformedEvidence(format!(
                "prompt `{}` has a document with empty text",
                rec.prompt_id
            )));
        }
        // renumber so ranks are 1..n without gaps
        let docs = docs
            .into_iter()
            .enumerate()
            .map(|(i, d)| EvidenceDoc {
                doc_id: d.doc_id,
                source_name: d.source_name.unwrap_or_else(|| default_source.to_string()),
                text: d.text,
                rank: i as u32 + 1,
                score: d.score,
            })
            .collect();
        if map.insert(rec.prompt_id.clone(), docs).is_some() {
            return Err(RetrievalError::MalformedEvidence(format!(
                "duplicate evidence record for prompt `{}`",
                rec.prompt_id
            )));
        }
    }
    Ok(map)
}

/// `POST {endpoint}` with `{"query", "top_k"}`; expects `{"docs": [...]}` in
/// rank order.
fn search(
    client: &reqwest::blocking::Client,
    endpoint: &str,
    source_name: &str,
    query: &str,
    top_k: usize,
) -> Result<Vec<EvidenceDoc>, RetrievalError> {
    let unavailable = |e: String| RetrievalError::SourceUnavailable(format!("{endpoint}: {e}"));
    let resp = client
        .post(endpoint)
        .json(&json!({"query": query, "top_k": top_k}))
        .send()
        .map_err(|e| unavailable(e.to_string()))?;
    if !resp.status().is_success() {
        return Err(unavailable(format!("HTTP {}", resp.status())));
    }
    let reply: SearchReply = resp.json().map_err(|e| unavailable(e.to_string()))?;
    Ok(reply
        .docs
        .into_iter()
        .filter(|d| !d.text.trim().is_empty())
        .take(top_k)
        .enumerate()
        .map(|(i, d)| EvidenceDoc {
            doc_id: d.doc_id,
            source_name: d.source_name.unwrap_or_else(|| source_name.to_string()),
            text: d.text,
            rank: i as u32 + 1,
            score: d.score,
        })
        .collect())
}
