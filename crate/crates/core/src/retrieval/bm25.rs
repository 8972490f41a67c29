//! Okapi BM25 over an in-memory corpus.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RetrievalError;
use crate::model::EvidenceDoc;

pub const K1: f64 = 1.2;
pub const B: f64 = 0.75;

/// One record of a corpus JSONL file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDoc {
    pub doc_id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
}

/// Lowercased runs of alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug)]
pub struct Bm25Index {
    docs: Vec<CorpusDoc>,
    doc_len: Vec<usize>,
    avg_len: f64,
    postings: HashMap<String, Vec<(usize, u32)>>,
    source_name: String,
}

impl Bm25Index {
    pub fn build(docs: Vec<CorpusDoc>, source_name: impl Into<String>) -> Result<Self, RetrievalError> {
        if docs.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let mut seen = HashSet::new();
        for (i, d) in docs.iter().enumerate() {
            if !seen.insert(d.doc_id.as_str()) {
                return Err(RetrievalError::MalformedCorpusRecord {
                    line: i + 1,
                    reason: format!("duplicate doc_id `{}`", d.doc_id),
                });
            }
        }
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        let mut doc_len = Vec::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            let tokens = tokenize(&format!("{} {}", d.title, d.text));
            doc_len.push(tokens.len());
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, n) in tf {
                postings.entry(term).or_default().push((i, n));
            }
        }
        let avg_len = doc_len.iter().sum::<usize>() as f64 / docs.len() as f64;
        Ok(Self {
            docs,
            doc_len,
            avg_len,
            postings,
            source_name: source_name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.docs.len() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Scores every document sharing at least one (distinct) query term.
    /// Sorted by descending score, ties by ascending doc id.
    pub fn scores(&self, query: &str) -> Vec<(usize, f64)> {
        let terms: HashSet<String> = tokenize(query).into_iter().collect();
        let mut acc: HashMap<usize, f64> = HashMap::new();
        for term in &terms {
            let Some(list) = self.postings.get(term) else { continue };
            let idf = self.idf(list.len());
            for &(doc, tf) in list {
                let tf = f64::from(tf);
                let norm = K1 * (1.0 - B + B * self.doc_len[doc] as f64 / self.avg_len);
                *acc.entry(doc).or_default() += idf * tf * (K1 + 1.0) / (tf + norm);
            }
        }
        let mut ranked: Vec<(usize, f64)> = acc.into_iter().collect();
        ranked.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.docs[a.0].doc_id.cmp(&self.docs[b.0].doc_id))
        });
        ranked
    }

    pub fn search(&self, query: &str, top_k: usize) -> Vec<EvidenceDoc> {
        self.scores(query)
            .into_iter()
            .take(top_k)
            .enumerate()
            .map(|(i, (doc, score))| {
                let d = &self.docs[doc];
                EvidenceDoc {
                    doc_id: d.doc_id.clone(),
                    source_name: self.source_name.clone(),
                    text: d.text.clone(),
                    rank: i as u32 + 1,
                    score: Some(score),
                }
            })
            .collect()
    }
}

/// Reads a corpus JSONL file and indexes it.
pub fn build_local_index(path: &Path, source_name: &str) -> Result<Bm25Index, RetrievalError> {
    let text = std::fs::read_to_string(path).map_err(|e| RetrievalError::SourceUnavailable(format!("{}: {e}", path.display())))?;
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| RetrievalError::MalformedCorpusRecord { line: i + 1, reason };
        let doc: CorpusDoc = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if doc.doc_id.is_empty() {
            return Err(bad("empty doc_id".into()));
        }
        if doc.text.trim().is_empty() {
            return Err(bad(format!("doc `{}` has empty text", doc.doc_id)));
        }
        if docs.iter().any(|d: &CorpusDoc| d.doc_id == doc.doc_id) {
            return Err(bad(format!("duplicate doc_id `{}`", doc.doc_id)));
        }
        docs.push(doc);
    }
    Bm25Index::build(docs, source_name)
}
