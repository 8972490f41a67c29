//! Splitting evidence documents into extraction-sized passages.
//!
//! Paragraphs (runs of non-blank lines) are packed greedily into chunks of at
//! most `chunk_chars` characters. A paragraph that alone exceeds the limit is
//! cut into consecutive pieces, preferring to cut after whitespace. Every
//! chunk is an exact substring of its document starting at `start`.

use serde::{Deserialize, Serialize};

use crate::model::EvidenceSet;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub ordinal: usize,
    /// Byte offset of `text` in the source document.
    pub start: usize,
    pub text: String,
}

/// Byte spans of paragraphs: maximal runs of lines containing non-whitespace.
fn paragraphs(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let content = line.trim_end_matches(['\n', '\r']);
        let line_end = offset + content.len();
        if content.trim().is_empty() {
            if let Some(span) = current.take() {
                spans.push(span);
            }
        } else {
            current = Some(match current {
                Some((s, _)) => (s, line_end),
                None => (offset, line_end),
            });
        }
        offset += line.len();
    }
    if let Some(span) = current {
        spans.push(span);
    }
    spans
}

fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Cuts `text[start..end]` into pieces of at most `limit` characters.
fn hard_split(text: &str, start: usize, end: usize, limit: usize) -> Vec<(usize, usize)> {
    let mut pieces = Vec::new();
    let mut s = start;
    while s < end {
        let rest = &text[s..end];
        if char_len(rest) <= limit {
            pieces.push((s, end));
            break;
        }
        // byte index just past the `limit`-th char
        let hard = rest.char_indices().nth(limit).map(|(i, _)| i).expect("rest longer than limit");
        let window = &rest[..hard];
        let cut = window
            .char_indices()
            .filter(|(_, c)| c.is_whitespace())
            .map(|(i, c)| i + c.len_utf8())
            .rfind(|&i| i > hard / 2)
            .unwrap_or(hard);
        pieces.push((s, s + cut));
        s += cut;
    }
    pieces
}

/// Chunk spans `(start, end)` for one document.
pub fn chunk_spans(text: &str, chunk_chars: usize) -> Vec<(usize, usize)> {
    assert!(chunk_chars > 0, "chunk_chars must be positive");
    let mut out = Vec::new();
    let mut group: Option<(usize, usize)> = None;
    for (ps, pe) in paragraphs(text) {
        if char_len(&text[ps..pe]) > chunk_chars {
            if let Some(g) = group.take() {
                out.push(g);
            }
            out.extend(hard_split(text, ps, pe, chunk_chars));
            continue;
        }
        group = Some(match group {
            Some((gs, _)) if char_len(&text[gs..pe]) <= chunk_chars => (gs, pe),
            Some(g) => {
                out.push(g);
                (ps, pe)
            }
            None => (ps, pe),
        });
    }
    if let Some(g) = group {
        out.push(g);
    }
    out
}

/// Chunks every document of an evidence set, in rank order.
pub fn chunk_documents(evidence: &EvidenceSet, chunk_chars: usize) -> Vec<Chunk> {
    evidence
        .docs
        .iter()
        .flat_map(|doc| {
            chunk_spans(&doc.text, chunk_chars)
                .into_iter()
                .enumerate()
                .map(|(ordinal, (s, e))| Chunk {
                    doc_id: doc.doc_id.clone(),
                    ordinal,
                    start: s,
                    text: doc.text[s..e].to_string(),
                })
        })
        .collect()
}
