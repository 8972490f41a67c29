//! Shared domain types: prompts, evidence, reference facts, claims, labels and
//! the per-prompt / per-run metric records.
//!
//! Everything here is plain data with serde derives. All artifacts written by
//! the runner are JSON Lines of these types with snake_case field names.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::metrics::BudgetTable;

/// Builds a deterministic identifier of the form `{prompt_id}:{kind}:{ordinal}`.
///
/// Ordinals are zero-padded to four digits so that lexicographic order on ids
/// matches numeric order for any realistic per-prompt count.
pub fn derived_id(prompt_id: &str, kind: &str, ordinal: usize) -> String {
    format!("{prompt_id}:{kind}:{ordinal:04}")
}

/// A query together with the (possibly not yet generated) response under test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPrompt {
    pub prompt_id: String,
    pub query: String,
    #[serde(default)]
    pub response: Option<String>,
    #[serde(default)]
    pub domain_tag: Option<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ValidationError {
    #[error("missing required field `{0}`")]
    MissingField(&'static str),
    #[error("field `{field}` is invalid: {reason}")]
    InvalidField { field: &'static str, reason: String },
    #[error("prompt `{0}` has an empty query")]
    EmptyQuery(String),
    #[error("duplicate prompt id `{0}`")]
    DuplicatePromptId(String),
}

fn string_field(
    record: &serde_json::Map<String, Value>,
    names: &[&'static str],
) -> Result<Option<String>, ValidationError> {
    for name in names {
        match record.get(*name) {
            None | Some(Value::Null) => continue,
            Some(Value::String(s)) => return Ok(Some(s.clone())),
            Some(other) => {
                return Err(ValidationError::InvalidField {
                    field: name,
                    reason: format!("expected a string, found {other}"),
                })
            }
        }
    }
    Ok(None)
}

/// Validates one raw input record. Accepts `prompt_id` or its short alias `id`.
pub fn validate_prompt_record(record: &Value) -> Result<EvalPrompt, ValidationError> {
    let Value::Object(map) = record else {
        return Err(ValidationError::InvalidField {
            field: "record",
            reason: "expected a JSON object".into(),
        });
    };
    let prompt_id = string_field(map, &["prompt_id", "id"])?
        .ok_or(ValidationError::MissingField("prompt_id"))?;
    if prompt_id.trim().is_empty() {
        return Err(ValidationError::InvalidField {
            field: "prompt_id",
            reason: "must be non-empty".into(),
        });
    }
    let query = string_field(map, &["query"])?.ok_or(ValidationError::MissingField("query"))?;
    if query.trim().is_empty() {
        return Err(ValidationError::EmptyQuery(prompt_id));
    }
    let response = string_field(map, &["response"])?;
    let domain_tag = string_field(map, &["domain_tag"])?;
    Ok(EvalPrompt {
        prompt_id,
        query,
        response,
        domain_tag,
    })
}

/// Validates a stream of records, rejecting repeated prompt ids.
#[derive(Debug, Default)]
pub struct PromptValidator {
    seen: HashSet<String>,
}

impl PromptValidator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn validate(&mut self, record: &Value) -> Result<EvalPrompt, ValidationError> {
        let prompt = validate_prompt_record(record)?;
        if !self.seen.insert(prompt.prompt_id.clone()) {
            return Err(ValidationError::DuplicatePromptId(prompt.prompt_id));
        }
        Ok(prompt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceDoc {
    pub doc_id: String,
    pub source_name: String,
    pub text: String,
    /// 1-based retrieval rank.
    pub rank: u32,
    #[serde(default)]
    pub score: Option<f64>,
}

/// The retrieved documents for one prompt, sorted by rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSet {
    pub prompt_id: String,
    pub docs: Vec<EvidenceDoc>,
}

impl EvidenceSet {
    pub fn empty(prompt_id: impl Into<String>) -> Self {
        Self {
            prompt_id: prompt_id.into(),
            docs: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// True when ranks are exactly `1..=n` in order.
    pub fn ranks_contiguous(&self) -> bool {
        self.docs
            .iter()
            .enumerate()
            .all(|(i, d)| d.rank as usize == i + 1)
    }
}

/// A fact produced by extraction (and possibly merged by dedup) that has not
/// been scored yet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedFact {
    pub fact_id: String,
    pub text: String,
    pub source_doc_ids: Vec<String>,
    #[serde(default)]
    pub cluster_id: Option<u32>,
}

/// Maps a 1..=5 rating onto the unit interval.
pub fn normalize_rating(raw: u8) -> f64 {
    (f64::from(raw) - 1.0) / 4.0
}

/// Trade-off between relevance and salience in the composite importance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImportanceConfig {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

impl ImportanceConfig {
    pub const COMBINED: Self = Self {
        alpha: 1.0,
        beta: 1.0,
    };
    pub const RELEVANCE_ONLY: Self = Self {
        alpha: 1.0,
        beta: 0.0,
    };
    pub const SALIENCE_ONLY: Self = Self {
        alpha: 0.0,
        beta: 1.0,
    };

    pub fn new(alpha: f64, beta: f64) -> Result<Self, ValidationError> {
        let cfg = Self { alpha, beta };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let ok = self.alpha.is_finite()
            && self.beta.is_finite()
            && self.alpha >= 0.0
            && self.beta >= 0.0
            && self.alpha + self.beta > 0.0;
        if ok {
            Ok(())
        } else {
            Err(ValidationError::InvalidField {
                field: "importance",
                reason: format!(
                    "alpha and beta must be >= 0 with a positive sum (got {}, {})",
                    self.alpha, self.beta
                ),
            })
        }
    }

    /// `alpha * r~ + beta * s~` for raw ratings in 1..=5.
    pub fn importance(&self, relevance_raw: u8, salience_raw: u8) -> f64 {
        self.alpha * normalize_rating(relevance_raw) + self.beta * normalize_rating(salience_raw)
    }
}

/// A scored reference fact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicFact {
    pub fact_id: String,
    pub text: String,
    pub source_doc_ids: Vec<String>,
    pub relevance_raw: u8,
    pub salience_raw: u8,
    pub relevance_norm: f64,
    pub salience_norm: f64,
    pub importance: f64,
    #[serde(default)]
    pub cluster_id: Option<u32>,
    /// Set when the judge reply could not be used and neutral ratings were
    /// substituted.
    #[serde(default)]
    pub defaulted: bool,
}

impl AtomicFact {
    pub fn scored(
        fact: ExtractedFact,
        relevance_raw: u8,
        salience_raw: u8,
        cfg: &ImportanceConfig,
        defaulted: bool,
    ) -> Self {
        Self {
            fact_id: fact.fact_id,
            text: fact.text,
            source_doc_ids: fact.source_doc_ids,
            relevance_raw,
            salience_raw,
            relevance_norm: normalize_rating(relevance_raw),
            salience_norm: normalize_rating(salience_raw),
            importance: cfg.importance(relevance_raw, salience_raw),
            cluster_id: fact.cluster_id,
            defaulted,
        }
    }

    /// Same fact with importance recomputed under another weighting.
    pub fn reweighted(&self, cfg: &ImportanceConfig) -> Self {
        Self {
            importance: cfg.importance(self.relevance_raw, self.salience_raw),
            ..self.clone()
        }
    }
}

/// How many ranked facts make it into the should-include set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
#[derive(Default)]
pub enum SelectionRule {
    TopK { k_star: usize },
    Threshold { min_importance: f64 },
    #[default]
    All,
}

impl SelectionRule {
    pub fn validate(&self) -> Result<(), ValidationError> {
        match *self {
            SelectionRule::TopK { k_star: 0 } => Err(ValidationError::InvalidField {
                field: "selection.k_star",
                reason: "must be >= 1".into(),
            }),
            SelectionRule::Threshold { min_importance } if !min_importance.is_finite() => {
                Err(ValidationError::InvalidField {
                    field: "selection.min_importance",
                    reason: "must be finite".into(),
                })
            }
            _ => Ok(()),
        }
    }

    /// Short label used in tables: `1`, `5`, `all`, `>=0.50`.
    pub fn label(&self) -> String {
        match self {
            SelectionRule::TopK { k_star } => k_star.to_string(),
            SelectionRule::Threshold { min_importance } => format!(">={min_importance:.2}"),
            SelectionRule::All => "all".to_string(),
        }
    }
}

impl fmt::Display for SelectionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionRule::TopK { k_star } => write!(f, "top-k:{k_star}"),
            SelectionRule::Threshold { min_importance } => write!(f, "threshold:{min_importance}"),
            SelectionRule::All => f.write_str("all"),
        }
    }
}

impl std::str::FromStr for SelectionRule {
    type Err = ValidationError;

    /// Parses `all`, `top-k:N` or `threshold:X`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |reason: &str| ValidationError::InvalidField {
            field: "selection",
            reason: format!("{reason}: `{s}`"),
        };
        let rule = match s.split_once(':') {
            None if s == "all" => SelectionRule::All,
            Some(("top-k", n)) => SelectionRule::TopK {
                k_star: n.parse().map_err(|_| bad("bad integer"))?,
            },
            Some(("threshold", x)) => SelectionRule::Threshold {
                min_importance: x.parse().map_err(|_| bad("bad number"))?,
            },
            _ => return Err(bad("expected all, top-k:N or threshold:X")),
        };
        rule.validate()?;
        Ok(rule)
    }
}

/// The ranked should-include facts for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSet {
    pub prompt_id: String,
    pub facts: Vec<AtomicFact>,
    pub budget: SelectionRule,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicClaim {
    pub claim_id: String,
    /// 1-based position within the prompt's claim list.
    pub index: u32,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimLabel {
    Supported,
    Contradicted,
    NotSupported,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimVerdict {
    pub claim_id: String,
    pub label: ClaimLabel,
    #[serde(default)]
    pub rationale: Option<String>,
    #[serde(default)]
    pub judge_failed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageLabel {
    Covered,
    NotCovered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactCoverage {
    pub fact_id: String,
    pub label: CoverageLabel,
    pub evidence_claim_indices: Vec<u32>,
    #[serde(default)]
    pub judge_failed: bool,
}

impl FactCoverage {
    pub fn not_covered(fact_id: impl Into<String>) -> Self {
        Self {
            fact_id: fact_id.into(),
            label: CoverageLabel::NotCovered,
            evidence_claim_indices: Vec::new(),
            judge_failed: false,
        }
    }

    pub fn is_covered(&self) -> bool {
        self.label == CoverageLabel::Covered
    }
}

/// Per-prompt metrics. `None` marks an undefined value (empty claim set or
/// empty reference set), which is excluded from macro averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptMetrics {
    pub prompt_id: String,
    pub n_claims: usize,
    pub n_facts: usize,
    pub n_supported: usize,
    pub n_contradicted: usize,
    pub n_not_supported: usize,
    pub n_covered: usize,
    pub prec: Option<f64>,
    pub rec: Option<f64>,
    pub rec_weighted: Option<f64>,
    pub f1: Option<f64>,
    pub c_rate: Option<f64>,
    pub ns_rate: Option<f64>,
}

impl PromptMetrics {
    pub fn label_counts_consistent(&self) -> bool {
        self.n_supported + self.n_contradicted + self.n_not_supported == self.n_claims
    }
}

/// Number of prompts left out of each macro average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedCounts {
    pub prec: usize,
    pub rec: usize,
    pub rec_weighted: usize,
    pub f1: usize,
    pub c_rate: usize,
    pub ns_rate: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedPrompt {
    pub prompt_id: String,
    pub stage: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    /// Row label in comparison tables (usually the generator model).
    pub model_label: String,
    /// Column-group label in comparison tables (usually the dataset).
    pub domain_label: String,
    pub n_prompts: usize,
    pub n_scored: usize,
    pub failed: Vec<FailedPrompt>,
    pub per_prompt: Vec<PromptMetrics>,
    pub macro_prec: Option<f64>,
    pub macro_rec: Option<f64>,
    pub macro_rec_weighted: Option<f64>,
    pub macro_f1: Option<f64>,
    pub macro_c_rate: Option<f64>,
    pub macro_ns_rate: Option<f64>,
    /// Counts undefined per-prompt values and failed prompts.
    pub excluded: ExcludedCounts,
    pub avg_claims: f64,
    pub avg_facts: f64,
    pub rho: Option<f64>,
    #[serde(default)]
    pub recall_budgets: Option<BudgetTable>,
    #[serde(default)]
    pub config_snapshot: Value,
}

impl RunReport {
    /// 0 when every prompt was scored, 2 when some failed.
    pub fn exit_code(&self) -> i32 {
        if self.failed.is_empty() {
            0
        } else {
            2
        }
    }
}
