use std::cmp::Ordering;

use super::ReferenceError;
use crate::model::{AtomicFact, ReferenceSet, SelectionRule};

/// Importance as compared for ranking: rounded to single precision, so that
/// values differing only by floating-point noise (e.g. the same weights
/// rescaled by a constant) tie and fall through to the fact-id tie-break.
fn rank_key(importance: f64) -> f32 {
    importance as f32
}

fn rank_order(a: &AtomicFact, b: &AtomicFact) -> Ordering {
    rank_key(b.importance)
        .total_cmp(&rank_key(a.importance))
        .then_with(|| a.fact_id.cmp(&b.fact_id))
}

/// Sorts by importance descending, ties by ascending fact id.
pub fn rank_facts(mut facts: Vec<AtomicFact>) -> Vec<AtomicFact> {
    facts.sort_by(rank_order);
    facts
}

/// Ranks and then applies the selection rule.
pub fn select_ranked(facts: Vec<AtomicFact>, rule: &SelectionRule) -> Vec<AtomicFact> {
    let mut ranked = rank_facts(facts);
    match *rule {
        SelectionRule::TopK { k_star } => ranked.truncate(k_star),
        SelectionRule::Threshold { min_importance } => ranked.retain(|f| f.importance >= min_importance),
        SelectionRule::All => {}
    }
    ranked
}

/// The should-include set for one prompt. Fails with
/// [`ReferenceError::EmptyReferenceSet`] when nothing survives the rule.
pub fn form_reference_set(
    prompt_id: &str,
    facts: Vec<AtomicFact>,
    rule: &SelectionRule,
) -> Result<ReferenceSet, ReferenceError> {
    rule.validate()
        .map_err(|e| ReferenceError::InvalidConfig(e.to_string()))?;
    let selected = select_ranked(facts, rule);
    if selected.is_empty() {
        return Err(ReferenceError::EmptyReferenceSet(prompt_id.to_string()));
    }
    Ok(ReferenceSet {
        prompt_id: prompt_id.to_string(),
        facts: selected,
        budget: *rule,
    })
}
