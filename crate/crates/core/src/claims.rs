//! Decomposition of a response into atomic claims.
//!
//! The response is split into sentences. Each sentence is sent to the
//! extractor with a window of neighbouring sentences as context, the target
//! wrapped in `<SOS>`/`<EOS>`. Claims from all windows are concatenated in
//! document order, exact duplicates are dropped (first occurrence wins) and
//! the survivors are numbered from 1.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatRequest, Gateway, GatewayError, RequestTag};
use crate::model::{derived_id, AtomicClaim};
use crate::parse::{parse_bullets, BulletReply};
use crate::prompts::{render, BULLET_REASK, CLAIM_EXTRACTION};

const CLAIMS_HEADER: &str = "Claims:";
const NO_CLAIM: &str = "No verifiable claim";

#[derive(Debug, Error)]
pub enum ClaimError {
    #[error("response for prompt `{0}` is empty")]
    EmptyResponse(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Sentences of context on each side of the target sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub before: usize,
    pub after: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { before: 1, after: 1 }
    }
}

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "vs", "etc", "e.g", "i.e", "inc", "ltd", "co", "corp",
    "no", "vol", "fig", "approx", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec",
    "u.s", "u.k", "d.c",
];

fn is_abbreviation(word: &str) -> bool {
    let w = word.trim_start_matches(|c: char| !c.is_alphanumeric()).trim_end_matches('.');
    let lower = w.to_lowercase();
    // single initials such as "J." in "Michael J. Fox"
    (w.chars().count() == 1 && w.chars().all(char::is_uppercase)) || ABBREVIATIONS.contains(&lower.as_str())
}

fn split_line(line: &str, out: &mut Vec<String>) {
    let chars: Vec<(usize, char)> = line.char_indices().collect();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let (_, c) = chars[i];
        if matches!(c, '.' | '!' | '?') {
            // absorb closing punctuation and quotes
            let mut j = i + 1;
            while j < chars.len() && matches!(chars[j].1, '.' | '!' | '?' | '"' | '\'' | ')' | '”' | '’') {
                j += 1;
            }
            let at_end = j == chars.len();
            let next_is_space = !at_end && chars[j].1.is_whitespace();
            let mut k = j;
            while k < chars.len() && chars[k].1.is_whitespace() {
                k += 1;
            }
            let next_starts = k < chars.len()
                && (chars[k].1.is_uppercase() || chars[k].1.is_ascii_digit() || matches!(chars[k].1, '"' | '“' | '('));
            if at_end || (next_is_space && next_starts) {
                let end = if at_end { line.len() } else { chars[j].0 };
                let candidate = &line[start..end];
                let last_word = candidate.split_whitespace().last().unwrap_or("");
                if c != '.' || at_end || !is_abbreviation(last_word) {
                    let s = candidate.trim();
                    if !s.is_empty() {
                        out.push(s.to_string());
                    }
                    start = if at_end { line.len() } else { chars[k.min(chars.len() - 1)].0 };
                }
            }
            i = j;
        } else {
            i += 1;
        }
    }
    let rest = line[start.min(line.len())..].trim();
    if !rest.is_empty() {
        out.push(rest.to_string());
    }
}

/// Splits text into sentences. Line breaks always end a sentence.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if !line.is_empty() {
            split_line(line, &mut out);
        }
    }
    out
}

/// One snippet per sentence with the target marked.
pub fn sentence_windows(sentences: &[String], window: WindowConfig) -> Vec<String> {
    (0..sentences.len())
        .map(|i| {
            let lo = i.saturating_sub(window.before);
            let hi = (i + window.after + 1).min(sentences.len());
            let mut parts: Vec<String> = sentences[lo..i].to_vec();
            parts.push(format!("<SOS>{}<EOS>", sentences[i]));
            parts.extend(sentences[i + 1..hi].iter().cloned());
            parts.join(" ")
        })
        .collect()
}

fn extract_window(snippet: &str, gateway: &Gateway, model: &str) -> Result<Option<Vec<String>>, GatewayError> {
    let req = ChatRequest::deterministic(
        model,
        render(CLAIM_EXTRACTION, &[("snippet", snippet)]),
        RequestTag::ClaimExtract,
    );
    let parse = |text: &str| parse_bullets(text, CLAIMS_HEADER, Some(NO_CLAIM));
    let mut reply = parse(&gateway.chat(&req)?.text);
    if reply == BulletReply::Unparseable {
        reply = parse(&gateway.chat(&req.with_appended(BULLET_REASK))?.text);
    }
    Ok(match reply {
        BulletReply::Items(items) => Some(items),
        BulletReply::Empty => Some(Vec::new()),
        BulletReply::Unparseable => None,
    })
}

/// Extracts the ordered, de-duplicated claim list of a response.
pub fn extract_claims(
    prompt_id: &str,
    response: &str,
    gateway: &Gateway,
    model: &str,
    window: WindowConfig,
) -> Result<Vec<AtomicClaim>, ClaimError> {
    if response.trim().is_empty() {
        return Err(ClaimError::EmptyResponse(prompt_id.to_string()));
    }
    let windows = sentence_windows(&split_sentences(response), window);
    let per_window: Vec<Result<Option<Vec<String>>, GatewayError>> =
        windows.par_iter().map(|w| extract_window(w, gateway, model)).collect();
    let mut seen = HashSet::new();
    let mut claims = Vec::new();
    for (i, result) in per_window.into_iter().enumerate() {
        let Some(items) = result? else {
            tracing::warn!(prompt = prompt_id, window = i + 1, "skipping window with unparseable claim list");
            continue;
        };
        for text in items {
            if seen.insert(text.clone()) {
                let index = claims.len() + 1;
                claims.push(AtomicClaim {
                    claim_id: derived_id(prompt_id, "claim", index),
                    index: index as u32,
                    text,
                });
            }
        }
    }
    Ok(claims)
}
