use std::collections::HashMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::*;
use crate::model::{AtomicClaim, AtomicFact, ClaimVerdict, EvidenceSet, FactCoverage, FailedPrompt, ReferenceSet};

/// A generated response, kept apart from the input prompt file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub prompt_id: String,
    pub model: String,
    pub response: String,
}

/// Every candidate fact of a prompt after dedup, with its ratings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactsRecord {
    pub prompt_id: String,
    /// Facts extracted before dedup.
    pub n_extracted: usize,
    pub facts: Vec<AtomicFact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimsRecord {
    pub prompt_id: String,
    pub claims: Vec<AtomicClaim>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictsRecord {
    pub prompt_id: String,
    pub judge_model: String,
    pub template_version: String,
    pub verdicts: Vec<ClaimVerdict>,
}

/// Coverage labels for every candidate fact, not only the reference set, so
/// that recall can be recomputed under other budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRecord {
    pub prompt_id: String,
    pub judge_model: String,
    pub template_version: String,
    pub mode: CoverageMode,
    pub coverage: Vec<FactCoverage>,
}

trait Keyed {
    fn key(&self) -> &str;
}

macro_rules! keyed {
    ($($t:ty),*) => {$(
        impl Keyed for $t {
            fn key(&self) -> &str {
                &self.prompt_id
            }
        }
    )*};
}

keyed!(ResponseRecord, EvidenceSet, FactsRecord, ReferenceSet, ClaimsRecord, VerdictsRecord, CoverageRecord, FailedPrompt);

/// The stage records found in a run directory, keyed by prompt id.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub responses: HashMap<String, ResponseRecord>,
    pub evidence: HashMap<String, EvidenceSet>,
    pub facts: HashMap<String, FactsRecord>,
    pub references: HashMap<String, ReferenceSet>,
    pub claims: HashMap<String, ClaimsRecord>,
    pub verdicts: HashMap<String, VerdictsRecord>,
    pub coverage: HashMap<String, CoverageRecord>,
    pub failures: HashMap<String, FailedPrompt>,
}

/// Missing file = no records. A line that does not parse, or a second record
/// for the same prompt, is corruption.
fn load<T: DeserializeOwned + Keyed>(path: &Path) -> Result<HashMap<String, T>, RunError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(HashMap::new()),
        Err(e) => return Err(RunError::io(path, e)),
    };
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |message: String| RunError::CorruptArtifact {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let record: T = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
        let key = record.key().to_string();
        if out.insert(key.clone(), record).is_some() {
            return Err(corrupt(format!("second record for prompt `{key}`")));
        }
    }
    Ok(out)
}

impl Artifacts {
    pub fn load(dir: &Path) -> Result<Self, RunError> {
        Ok(Self {
            responses: load(&dir.join(RESPONSES_FILE))?,
            evidence: load(&dir.join(EVIDENCE_FILE))?,
            facts: load(&dir.join(FACTS_FILE))?,
            references: load(&dir.join(REFERENCES_FILE))?,
            claims: load(&dir.join(CLAIMS_FILE))?,
            verdicts: load(&dir.join(VERDICTS_FILE))?,
            coverage: load(&dir.join(COVERAGE_FILE))?,
            failures: load(&dir.join(FAILURES_FILE))?,
        })
    }
}
