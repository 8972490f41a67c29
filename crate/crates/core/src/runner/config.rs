use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::claims::WindowConfig;
use crate::gateway::{HttpConfig, RetryPolicy};
use crate::judge::DEFAULT_EVIDENCE_CHARS;
use crate::metrics::default_budgets;
use crate::model::SelectionRule;
use crate::reference::{DedupConfig, ImportanceOptions};
use crate::retrieval::KnowledgeSourceConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Writes responses for prompts that have none.
    pub generator: String,
    /// Fact and claim extraction.
    pub extractor: String,
    /// Verification, coverage and importance judging.
    pub judge: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            generator: "gpt-4o-mini".into(),
            extractor: "gpt-4o-mini".into(),
            judge: "gpt-4o-mini".into(),
        }
    }
}

/// What the coverage judge reads as "claim sentences".
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageMode {
    /// The extracted claim list (evidence ids are claim indices).
    #[default]
    Claims,
    /// The response split into sentences (evidence ids are sentence numbers).
    RawResponse,
}

/// Sampling for response generation only; judges always use temperature 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            max_tokens: 2048,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub run_id: String,
    /// Row label in comparison tables; defaults to the generator model.
    pub model_label: Option<String>,
    /// Column label in comparison tables; defaults to the run id.
    pub domain_label: Option<String>,
    /// JSONL of `{prompt_id|id, query, response?, domain_tag?}`.
    pub prompts_path: PathBuf,
    pub output_dir: PathBuf,
    pub knowledge: KnowledgeSourceConfig,
    pub importance: ImportanceOptions,
    pub selection: SelectionRule,
    pub dedup: DedupConfig,
    pub models: ModelConfig,
    pub generation: GenerationConfig,
    pub claim_window: WindowConfig,
    pub evidence_chars: usize,
    pub coverage_mode: CoverageMode,
    /// Budgets of the recall-by-budget table.
    pub budgets: Vec<SelectionRule>,
    /// Scripted backend; when absent the HTTP backend is used.
    pub mock_script: Option<PathBuf>,
    pub http: Option<HttpConfig>,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
    /// Defaults to `{output_dir}/cache`.
    pub cache_dir: Option<PathBuf>,
    pub cache_namespace: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            run_id: "run".into(),
            model_label: None,
            domain_label: None,
            prompts_path: PathBuf::from("prompts.jsonl"),
            output_dir: PathBuf::from("out"),
            knowledge: KnowledgeSourceConfig::local("corpus.jsonl"),
            importance: ImportanceOptions::default(),
            selection: SelectionRule::All,
            dedup: DedupConfig::default(),
            models: ModelConfig::default(),
            generation: GenerationConfig::default(),
            claim_window: WindowConfig::default(),
            evidence_chars: DEFAULT_EVIDENCE_CHARS,
            coverage_mode: CoverageMode::Claims,
            budgets: default_budgets(),
            mock_script: None,
            http: None,
            max_in_flight: 8,
            retry: RetryPolicy::default(),
            cache_dir: None,
            cache_namespace: "default".into(),
        }
    }
}

fn bad(msg: impl Into<String>) -> RunError {
    RunError::Config(msg.into())
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
    }

    /// The snapshot a run writes to `config.json` in its output directory.
    pub fn from_run_dir(dir: &Path) -> Result<Self, RunError> {
        Self::from_path(&dir.join(super::CONFIG_FILE))
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.output_dir.join("cache"))
    }

    pub fn model_label(&self) -> String {
        self.model_label.clone().unwrap_or_else(|| self.models.generator.clone())
    }

    pub fn domain_label(&self) -> String {
        self.domain_label.clone().unwrap_or_else(|| self.run_id.clone())
    }

    /// Checks everything that can be checked before any model call.
    pub fn validate(&self) -> Result<(), RunError> {
        let safe = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
        if !safe(&self.run_id) || self.run_id.starts_with('.') {
            return Err(bad(format!("run_id `{}` must be non-empty and use only [A-Za-z0-9._-]", self.run_id)));
        }
        if !safe(&self.cache_namespace) {
            return Err(bad(format!("cache_namespace `{}` must use only [A-Za-z0-9._-]", self.cache_namespace)));
        }
        if !self.prompts_path.is_file() {
            return Err(bad(format!("prompts file {} does not exist", self.prompts_path.display())));
        }
        if let Some(script) = &self.mock_script {
            if !script.is_file() {
                return Err(bad(format!("mock script {} does not exist", script.display())));
            }
        }
        if self.knowledge.top_k == 0 {
            return Err(bad("knowledge.top_k must be >= 1"));
        }
        if self.knowledge.chunk_chars == 0 {
            return Err(bad("knowledge.chunk_chars must be >= 1"));
        }
        if self.evidence_chars == 0 {
            return Err(bad("evidence_chars must be >= 1"));
        }
        if self.max_in_flight == 0 {
            return Err(bad("max_in_flight must be >= 1"));
        }
        if self.importance.batch_size == 0 {
            return Err(bad("importance.batch_size must be >= 1"));
        }
        self.importance.weights.validate().map_err(|e| bad(e.to_string()))?;
        self.selection.validate().map_err(|e| bad(e.to_string()))?;
        for b in &self.budgets {
            b.validate().map_err(|e| bad(e.to_string()))?;
        }
        self.dedup.validate().map_err(|e| bad(e.to_string()))?;
        Ok(())
    }
}
