//! Building the ranked reference fact set for a prompt: fact extraction from
//! evidence chunks, near-duplicate clustering, relevance/salience scoring and
//! budgeted selection.

mod dedup;
mod extract;
mod importance;
mod select;

use thiserror::Error;

use crate::gateway::GatewayError;

pub use dedup::{
    cluster_average_linkage, dedup_facts, jaccard_3gram, specificity, CanonicalRule, DedupConfig, SimilarityKind,
};
pub use extract::{extract_facts, extract_prompt_facts};
pub use importance::{score_importance, ImportanceOptions, DEFAULT_BATCH_SIZE};
pub use select::{form_reference_set, rank_facts, select_ranked};

#[derive(Debug, Error)]
pub enum ReferenceError {
    #[error("unparseable reply for {0}")]
    UnparseableReply(String),
    #[error("selection rule left no facts for prompt `{0}`")]
    EmptyReferenceSet(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}
