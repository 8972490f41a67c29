//! Relevance and salience ratings for candidate facts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ReferenceError;
use crate::gateway::{ChatRequest, Gateway, RequestTag};
use crate::model::{AtomicFact, ExtractedFact, ImportanceConfig};
use crate::parse::strict_json;
use crate::prompts::{numbered_block, render, JSON_REASK, RELEVANCE_SALIENCE};

pub const DEFAULT_BATCH_SIZE: usize = 40;

/// Neutral rating used when the judge reply cannot be used.
const DEFAULT_RATING: u8 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImportanceOptions {
    pub weights: ImportanceConfig,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_batch() -> usize {
    DEFAULT_BATCH_SIZE
}

impl Default for ImportanceOptions {
    fn default() -> Self {
        Self {
            weights: ImportanceConfig::default(),
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }
}

#[derive(Debug, Deserialize)]
struct Row {
    id: i64,
    relevance: f64,
    salience: f64,
}

fn parse_rows(reply: &str) -> Option<Vec<Row>> {
    serde_json::from_str(strict_json(reply)?).ok()
}

fn clamp_rating(value: f64, what: &str, fact_id: &str) -> u8 {
    let rounded = value.round();
    if rounded != value || !(1.0..=5.0).contains(&rounded) {
        tracing::warn!(fact = fact_id, value, what, "rating outside 1..=5 integers; clamped");
    }
    rounded.clamp(1.0, 5.0) as u8
}

fn score_batch(
    batch: &[ExtractedFact],
    query: &str,
    weights: &ImportanceConfig,
    gateway: &Gateway,
    model: &str,
) -> Result<Vec<AtomicFact>, ReferenceError> {
    let texts: Vec<&str> = batch.iter().map(|f| f.text.as_str()).collect();
    let req = ChatRequest::deterministic(
        model,
        render(
            RELEVANCE_SALIENCE,
            &[("query", query), ("sentence_list", &numbered_block(&texts))],
        ),
        RequestTag::ImportanceJudge,
    );
    let mut rows = parse_rows(&gateway.chat(&req)?.text);
    if rows.is_none() {
        rows = parse_rows(&gateway.chat(&req.with_appended(JSON_REASK))?.text);
    }
    let rows = rows.unwrap_or_else(|| {
        tracing::warn!(first = %batch[0].fact_id, n = batch.len(), "importance reply invalid after retry; using defaults");
        Vec::new()
    });

    let mut ratings: Vec<Option<(u8, u8)>> = vec![None; batch.len()];
    for row in rows {
        let slot = usize::try_from(row.id).ok().filter(|&i| (1..=batch.len()).contains(&i));
        let Some(i) = slot else {
            tracing::warn!(id = row.id, "importance reply refers to an unknown sentence id");
            continue;
        };
        if ratings[i - 1].is_some() {
            continue;
        }
        let id = &batch[i - 1].fact_id;
        ratings[i - 1] = Some((
            clamp_rating(row.relevance, "relevance", id),
            clamp_rating(row.salience, "salience", id),
        ));
    }
    Ok(batch
        .iter()
        .zip(ratings)
        .map(|(fact, rating)| {
            let (r, s, defaulted) = match rating {
                Some((r, s)) => (r, s, false),
                None => (DEFAULT_RATING, DEFAULT_RATING, true),
            };
            AtomicFact::scored(fact.clone(), r, s, weights, defaulted)
        })
        .collect())
}

/// Rates every fact for relevance and salience in batches of at most
/// `batch_size` facts per call and computes the weighted importance.
///
/// A batch whose reply is not a JSON array of rating objects is re-asked once;
/// if it still fails, or a fact is missing from the reply, that fact gets the
/// neutral ratings (3, 3) and `defaulted = true`.
pub fn score_importance(
    facts: &[ExtractedFact],
    query: &str,
    opts: &ImportanceOptions,
    gateway: &Gateway,
    model: &str,
) -> Result<Vec<AtomicFact>, ReferenceError> {
    opts.weights
        .validate()
        .map_err(|e| ReferenceError::InvalidConfig(e.to_string()))?;
    if opts.batch_size == 0 {
        return Err(ReferenceError::InvalidConfig("importance batch_size must be >= 1".into()));
    }
    let batches: Vec<Result<Vec<AtomicFact>, ReferenceError>> = facts
        .par_chunks(opts.batch_size)
        .map(|b| score_batch(b, query, &opts.weights, gateway, model))
        .collect();
    let mut out = Vec::with_capacity(facts.len());
    for b in batches {
        out.extend(b?);
    }
    Ok(out)
}
