//! Model-as-judge labeling: claim verification against evidence and fact
//! coverage by a claim list.
//!
//! Both judges expect a strict JSON reply. An invalid reply is re-asked once;
//! if the second reply is also invalid the item gets the conservative label
//! (not supported / not covered) with `judge_failed` set. Gateway errors are
//! returned to the caller.

use serde::Deserialize;

use crate::gateway::{ChatRequest, Gateway, GatewayError, RequestTag};
use crate::model::{ClaimLabel, ClaimVerdict, CoverageLabel, EvidenceSet, FactCoverage};
use crate::parse::strict_json;
use crate::prompts::{numbered_block, render, CLAIM_VERIFICATION, FACT_COVERAGE, JSON_REASK};

pub const DEFAULT_EVIDENCE_CHARS: usize = 24_000;

/// Asks once, re-asks once on a reply `parse` rejects.
fn ask_json<T>(
    gateway: &Gateway,
    req: &ChatRequest,
    mut parse: impl FnMut(&str) -> Option<T>,
) -> Result<Option<T>, GatewayError> {
    if let Some(v) = parse(&gateway.chat(req)?.text) {
        return Ok(Some(v));
    }
    Ok(parse(&gateway.chat(&req.with_appended(JSON_REASK))?.text))
}

/// Evidence documents in rank order, whole documents only while they fit in
/// `budget` characters. A first document longer than the budget is cut.
pub fn evidence_block(evidence: &EvidenceSet, budget: usize) -> (String, usize) {
    let mut parts = Vec::new();
    let mut used = 0;
    let mut dropped = 0;
    for doc in &evidence.docs {
        let len = doc.text.chars().count();
        if used + len <= budget {
            parts.push(format!("[{}] {}", doc.rank, doc.text));
            used += len;
        } else if parts.is_empty() {
            let cut: String = doc.text.chars().take(budget).collect();
            parts.push(format!("[{}] {}", doc.rank, cut));
            used = budget;
        } else {
            dropped += 1;
        }
    }
    (parts.join("\n\n"), dropped)
}

#[derive(Deserialize)]
struct VerificationReply {
    label: String,
    #[serde(default)]
    rationale: Option<String>,
}

fn parse_verification(reply: &str) -> Option<(ClaimLabel, Option<String>)> {
    let r: VerificationReply = serde_json::from_str(strict_json(reply)?).ok()?;
    let label = match r.label.trim() {
        "SUPPORTED" => ClaimLabel::Supported,
        "CONTRADICTED" => ClaimLabel::Contradicted,
        "NOT_SUPPORTED" => ClaimLabel::NotSupported,
        _ => return None,
    };
    Some((label, r.rationale))
}

/// Three-way verification of one claim. Empty evidence gives
/// [`ClaimLabel::NotSupported`] without a model call.
pub fn verify_claim(
    claim_id: &str,
    claim_text: &str,
    evidence: &EvidenceSet,
    gateway: &Gateway,
    model: &str,
    evidence_chars: usize,
) -> Result<ClaimVerdict, GatewayError> {
    if evidence.is_empty() {
        return Ok(ClaimVerdict {
            claim_id: claim_id.to_string(),
            label: ClaimLabel::NotSupported,
            rationale: Some("no evidence retrieved".into()),
            judge_failed: false,
        });
    }
    let (block, dropped) = evidence_block(evidence, evidence_chars);
    if dropped > 0 {
        tracing::warn!(claim = claim_id, dropped, "evidence truncated to the character budget");
    }
    let req = ChatRequest::deterministic(
        model,
        render(CLAIM_VERIFICATION, &[("claim", claim_text), ("evidence_block", &block)]),
        RequestTag::PrecisionJudge,
    );
    Ok(match ask_json(gateway, &req, parse_verification)? {
        Some((label, rationale)) => ClaimVerdict {
            claim_id: claim_id.to_string(),
            label,
            rationale,
            judge_failed: false,
        },
        None => {
            tracing::warn!(claim = claim_id, "verification reply invalid after retry");
            ClaimVerdict {
                claim_id: claim_id.to_string(),
                label: ClaimLabel::NotSupported,
                rationale: None,
                judge_failed: true,
            }
        }
    })
}

/// The coverage reply schema. Both fields are required and nothing else is
/// accepted.
#[derive(Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CoverageReply {
    pub label: String,
    pub evidence_claim_ids: Vec<i64>,
}

/// Validates a coverage reply against a claim list of length `n_claims`.
///
/// `NOT_COVERED` with ids is coerced to an empty list; out-of-range ids are
/// dropped; ids are de-duplicated and sorted. `COVERED` with no valid id is
/// rejected.
pub fn parse_coverage(reply: &str, n_claims: usize) -> Option<(CoverageLabel, Vec<u32>)> {
    let r: CoverageReply = serde_json::from_str(strict_json(reply)?).ok()?;
    match r.label.as_str() {
        "NOT_COVERED" => {
            if !r.evidence_claim_ids.is_empty() {
                tracing::warn!(ids = ?r.evidence_claim_ids, "NOT_COVERED reply listed claim ids; ignoring them");
            }
            Some((CoverageLabel::NotCovered, Vec::new()))
        }
        "COVERED" => {
            let mut ids: Vec<u32> = Vec::new();
            for id in r.evidence_claim_ids {
                match u32::try_from(id) {
                    Ok(i) if i >= 1 && (i as usize) <= n_claims => ids.push(i),
                    _ => tracing::warn!(id, n_claims, "coverage evidence id out of range; dropped"),
                }
            }
            ids.sort_unstable();
            ids.dedup();
            (!ids.is_empty()).then_some((CoverageLabel::Covered, ids))
        }
        _ => None,
    }
}

/// Binary coverage of one fact by the numbered claim sentences `claims`
/// (index `i` is claim `i + 1`). An empty claim list gives
/// [`CoverageLabel::NotCovered`] without a model call.
pub fn check_coverage(
    fact_id: &str,
    fact_text: &str,
    claims: &[String],
    gateway: &Gateway,
    model: &str,
) -> Result<FactCoverage, GatewayError> {
    if claims.is_empty() {
        return Ok(FactCoverage::not_covered(fact_id));
    }
    let req = ChatRequest::deterministic(
        model,
        render(FACT_COVERAGE, &[("fact", fact_text), ("claims_block", &numbered_block(claims))]),
        RequestTag::CoverageJudge,
    );
    Ok(match ask_json(gateway, &req, |r| parse_coverage(r, claims.len()))? {
        Some((label, ids)) => FactCoverage {
            fact_id: fact_id.to_string(),
            label,
            evidence_claim_indices: ids,
            judge_failed: false,
        },
        None => {
            tracing::warn!(fact = fact_id, "coverage reply invalid after retry");
            FactCoverage {
                judge_failed: true,
                ..FactCoverage::not_covered(fact_id)
            }
        }
    })
}
