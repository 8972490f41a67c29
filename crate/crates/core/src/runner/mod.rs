//! End-to-end orchestration with on-disk stage artifacts.
//!
//! A run directory holds one JSONL file per stage, keyed by prompt id, plus
//! `config.json`, `failures.jsonl` and the rendered report. Stages run in
//! order over all prompts (prompts fan out in parallel inside a stage) and
//! each stage only processes prompts that have no record yet, so an
//! interrupted run can be resumed. Stage files are only ever appended to.
//!
//! A prompt that fails at any stage is recorded in `failures.jsonl` and
//! skipped from then on; the rest of the run continues.

mod artifacts;
mod config;

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::claims::{extract_claims, split_sentences};
use crate::gateway::{Backend, ChatRequest, Gateway, HttpBackend, HttpConfig, MockBackend, RequestTag, ResponseCache};
use crate::jsonl;
use crate::judge::{check_coverage, verify_claim};
use crate::metrics::{macro_aggregate, prompt_metrics, recall_at_budgets, BudgetInput, MetricsError};
use crate::model::{
    AtomicClaim, AtomicFact, ClaimVerdict, EvalPrompt, EvidenceSet, ExcludedCounts, FactCoverage, FailedPrompt,
    PromptMetrics, PromptValidator, ReferenceSet, RunReport,
};
use crate::prompts::{template_version, CLAIM_VERIFICATION, FACT_COVERAGE};
use crate::reference::{dedup_facts, extract_prompt_facts, form_reference_set, score_importance, ReferenceError};
use crate::report::{write_report_files, ReportError};
use crate::retrieval::{chunk_documents, RetrievalError, Retriever};

pub use artifacts::{Artifacts, ClaimsRecord, CoverageRecord, FactsRecord, ResponseRecord, VerdictsRecord};
pub use config::{CoverageMode, GenerationConfig, ModelConfig, RunConfig};

pub const CONFIG_FILE: &str = "config.json";
pub const RESPONSES_FILE: &str = "responses.jsonl";
pub const EVIDENCE_FILE: &str = "evidence.jsonl";
pub const FACTS_FILE: &str = "facts.jsonl";
pub const REFERENCES_FILE: &str = "references.jsonl";
pub const CLAIMS_FILE: &str = "claims.jsonl";
pub const VERDICTS_FILE: &str = "verdicts.jsonl";
pub const COVERAGE_FILE: &str = "coverage.jsonl";
pub const FAILURES_FILE: &str = "failures.jsonl";

const STAGE_FILES: &[&str] = &[
    RESPONSES_FILE,
    EVIDENCE_FILE,
    FACTS_FILE,
    REFERENCES_FILE,
    CLAIMS_FILE,
    VERDICTS_FILE,
    COVERAGE_FILE,
    FAILURES_FILE,
];
const REPORT_FILES: &[&str] = &["report.json", "report.md", "breakdown.csv", "recall_budgets.csv", "metrics.csv"];

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}:{line}: invalid prompt record: {message}")]
    Input { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt artifact {path}:{line}: {message}")]
    CorruptArtifact { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("backend setup failed: {0}")]
    Backend(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

impl RunError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        RunError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<jsonl::JsonlError> for RunError {
    fn from(e: jsonl::JsonlError) -> Self {
        match e {
            jsonl::JsonlError::Io { path, source } => RunError::Io { path, source },
            jsonl::JsonlError::Malformed { path, line, message } => RunError::CorruptArtifact { path, line, message },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Generate,
    Retrieve,
    Facts,
    Claims,
    Judge,
    Score,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Generate,
        Stage::Retrieve,
        Stage::Facts,
        Stage::Claims,
        Stage::Judge,
        Stage::Score,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Retrieve => "retrieve",
            Stage::Facts => "facts",
            Stage::Claims => "claims",
            Stage::Judge => "judge",
            Stage::Score => "score",
        }
    }
}

/// How far a prompt has progressed, as recorded on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStage {
    Pending,
    Retrieved,
    FactsBuilt,
    ClaimsBuilt,
    Judged,
    Scored,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptState {
    pub prompt_id: String,
    pub stage: PromptStage,
    pub failure_reason: Option<String>,
}

/// Reads and validates the prompt file. Any bad record is fatal.
pub fn load_prompts(path: &Path) -> Result<Vec<EvalPrompt>, RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
    let mut validator = PromptValidator::new();
    let mut prompts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| RunError::Input {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        prompts.push(validator.validate(&value).map_err(|e| bad(e.to_string()))?);
    }
    Ok(prompts)
}

/// Fills in a missing response from the generator model. A prompt that
/// already has a response is returned unchanged without a call.
pub fn generate_response(
    prompt: &EvalPrompt,
    gateway: &Gateway,
    model: &str,
    generation: &GenerationConfig,
) -> Result<EvalPrompt, crate::gateway::GatewayError> {
    if prompt.response.is_some() {
        return Ok(prompt.clone());
    }
    let req = ChatRequest {
        temperature: generation.temperature,
        max_tokens: generation.max_tokens,
        ..ChatRequest::deterministic(model, prompt.query.clone(), RequestTag::Generate)
    };
    let reply = gateway.chat(&req)?;
    Ok(EvalPrompt {
        response: Some(reply.text),
        ..prompt.clone()
    })
}

/// Builds the backend a config asks for: the scripted mock when
/// `mock_script` is set, otherwise HTTP (config section or environment).
pub fn backend_for(config: &RunConfig) -> Result<Arc<dyn Backend>, RunError> {
    if let Some(script) = &config.mock_script {
        let mock = MockBackend::from_path(script).map_err(RunError::Backend)?;
        return Ok(Arc::new(mock));
    }
    let mut http = config.http.clone().unwrap_or_else(HttpConfig::from_env);
    if http.api_key.is_none() {
        http.api_key = HttpConfig::from_env().api_key;
    }
    let backend = HttpBackend::new(&http).map_err(|e| RunError::Backend(e.to_string()))?;
    Ok(Arc::new(backend))
}

pub struct Runner {
    config: RunConfig,
    gateway: Gateway,
}

type Outcome<T> = (String, Result<T, String>);

impl Runner {
    /// Validates the config and wires the gateway (disk cache, concurrency
    /// limit, retry policy) around `backend`.
    pub fn new(config: RunConfig, backend: Arc<dyn Backend>) -> Result<Self, RunError> {
        config.validate()?;
        let cache = ResponseCache::on_disk(&config.cache_dir(), &config.cache_namespace)
            .map_err(|e| RunError::Config(format!("cache: {e}")))?;
        let gateway = Gateway::new(backend)
            .with_cache(cache)
            .with_max_in_flight(config.max_in_flight)
            .with_retry(config.retry);
        Ok(Self { config, gateway })
    }

    pub fn from_config(config: RunConfig) -> Result<Self, RunError> {
        let backend = backend_for(&config)?;
        Self::new(config, backend)
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    fn dir(&self) -> &Path {
        &self.config.output_dir
    }

    /// A fresh run: previous stage artifacts and reports in the output
    /// directory are removed (the response cache is kept), then every stage
    /// runs.
    pub fn run(&self) -> Result<RunReport, RunError> {
        std::fs::create_dir_all(self.dir()).map_err(|e| RunError::io(self.dir(), e))?;
        for name in STAGE_FILES.iter().chain(REPORT_FILES) {
            let path = self.dir().join(name);
            if path.exists() {
                std::fs::remove_file(&path).map_err(|e| RunError::io(&path, e))?;
            }
        }
        self.resume()
    }

    /// Runs every stage, reusing whatever artifacts are already on disk.
    pub fn resume(&self) -> Result<RunReport, RunError> {
        Ok(self.run_through(Stage::Score)?.expect("the score stage always yields a report"))
    }

    /// Runs stages up to and including `last`, skipping work already
    /// recorded. Returns the report when `last` is [`Stage::Score`].
    pub fn run_through(&self, last: Stage) -> Result<Option<RunReport>, RunError> {
        std::fs::create_dir_all(self.dir()).map_err(|e| RunError::io(self.dir(), e))?;
        self.write_config_snapshot()?;
        let prompts = load_prompts(&self.config.prompts_path)?;
        let mut art = Artifacts::load(self.dir())?;
        tracing::info!(run = %self.config.run_id, prompts = prompts.len(), "starting");

        for stage in Stage::ALL.into_iter().take_while(|s| *s <= last) {
            if stage == Stage::Score {
                return self.score(&prompts, &art).map(Some);
            }
            let before = self.gateway.stats();
            match stage {
                Stage::Generate => self.stage_generate(&prompts, &mut art)?,
                Stage::Retrieve => self.stage_retrieve(&prompts, &mut art)?,
                Stage::Facts => self.stage_facts(&prompts, &mut art)?,
                Stage::Claims => self.stage_claims(&prompts, &mut art)?,
                Stage::Judge => self.stage_judge(&prompts, &mut art)?,
                Stage::Score => unreachable!(),
            }
            let after = self.gateway.stats();
            tracing::info!(
                stage = stage.as_str(),
                calls = after.chat_calls + after.embed_calls - before.chat_calls - before.embed_calls,
                cache_hits = after.cache_hits - before.cache_hits,
                failed = art.failures.len(),
                "stage done"
            );
        }
        Ok(None)
    }

    /// Where each prompt stands according to the artifacts on disk.
    pub fn prompt_states(&self) -> Result<Vec<PromptState>, RunError> {
        let prompts = load_prompts(&self.config.prompts_path)?;
        let art = Artifacts::load(self.dir())?;
        let scored: HashSet<String> = std::fs::read_to_string(self.dir().join("report.json"))
            .ok()
            .and_then(|t| serde_json::from_str::<RunReport>(&t).ok())
            .map(|r| r.per_prompt.into_iter().map(|m| m.prompt_id).collect())
            .unwrap_or_default();
        Ok(prompts
            .iter()
            .map(|p| {
                let id = p.prompt_id.as_str();
                let (stage, failure_reason) = if let Some(f) = art.failures.get(id) {
                    (PromptStage::Failed, Some(format!("{}: {}", f.stage, f.reason)))
                } else if scored.contains(id) {
                    (PromptStage::Scored, None)
                } else if art.verdicts.contains_key(id) && art.coverage.contains_key(id) {
                    (PromptStage::Judged, None)
                } else if art.claims.contains_key(id) && art.references.contains_key(id) {
                    (PromptStage::ClaimsBuilt, None)
                } else if art.references.contains_key(id) {
                    (PromptStage::FactsBuilt, None)
                } else if art.evidence.contains_key(id) {
                    (PromptStage::Retrieved, None)
                } else {
                    (PromptStage::Pending, None)
                };
                PromptState {
                    prompt_id: p.prompt_id.clone(),
                    stage,
                    failure_reason,
                }
            })
            .collect())
    }

    fn write_config_snapshot(&self) -> Result<(), RunError> {
        let path = self.dir().join(CONFIG_FILE);
        let json = serde_json::to_string_pretty(&self.config).expect("configs always serialize");
        std::fs::write(&path, format!("{json}\n")).map_err(|e| RunError::io(&path, e))
    }

    /// Prompts that still need `done` and have not failed.
    fn pending<'a>(
        &self,
        prompts: &'a [EvalPrompt],
        art: &Artifacts,
        done: impl Fn(&str) -> bool,
    ) -> Vec<&'a EvalPrompt> {
        prompts
            .iter()
            .filter(|p| !art.failures.contains_key(&p.prompt_id) && !done(&p.prompt_id))
            .collect()
    }

    /// Runs `work` over `pending` in parallel and splits the outcomes, in
    /// prompt order, into successes and failure records.
    fn fan_out<T: Send>(
        &self,
        stage: Stage,
        pending: &[&EvalPrompt],
        work: impl Fn(&EvalPrompt) -> Result<T, String> + Sync,
    ) -> (Vec<T>, Vec<FailedPrompt>) {
        let outcomes: Vec<Outcome<T>> = pending.par_iter().map(|p| (p.prompt_id.clone(), work(p))).collect();
        let mut ok = Vec::new();
        let mut failed = Vec::new();
        for (prompt_id, outcome) in outcomes {
            match outcome {
                Ok(v) => ok.push(v),
                Err(reason) => {
                    tracing::warn!(prompt = %prompt_id, stage = stage.as_str(), %reason, "prompt failed");
                    failed.push(FailedPrompt {
                        prompt_id,
                        stage: stage.as_str().to_string(),
                        reason,
                    });
                }
            }
        }
        (ok, failed)
    }

    fn record_failures(&self, art: &mut Artifacts, failed: Vec<FailedPrompt>) -> Result<(), RunError> {
        jsonl::append(&self.dir().join(FAILURES_FILE), &failed)?;
        for f in failed {
            art.failures.insert(f.prompt_id.clone(), f);
        }
        Ok(())
    }

    fn stage_generate(&self, prompts: &[EvalPrompt], art: &mut Artifacts) -> Result<(), RunError> {
        let pending = self.pending(prompts, art, |id| art.responses.contains_key(id));
        let pending: Vec<&EvalPrompt> = pending.into_iter().filter(|p| p.response.is_none()).collect();
        let model = &self.config.models.generator;
        let (records, failed) = self.fan_out(Stage::Generate, &pending, |p| {
            let filled = generate_response(p, &self.gateway, model, &self.config.generation).map_err(|e| e.to_string())?;
            Ok(ResponseRecord {
                prompt_id: p.prompt_id.clone(),
                model: model.clone(),
                response: filled.response.unwrap_or_default(),
            })
        });
        jsonl::append(&self.dir().join(RESPONSES_FILE), &records)?;
        for r in records {
            art.responses.insert(r.prompt_id.clone(), r);
        }
        self.record_failures(art, failed)
    }

    fn stage_retrieve(&self, prompts: &[EvalPrompt], art: &mut Artifacts) -> Result<(), RunError> {
        let pending = self.pending(prompts, art, |id| art.evidence.contains_key(id));
        if pending.is_empty() {
            return Ok(());
        }
        let retriever = Retriever::open(&self.config.knowledge)?;
        let top_k = self.config.knowledge.top_k;
        let (records, failed) = self.fan_out(Stage::Retrieve, &pending, |p| {
            retriever.retrieve(p, top_k).map_err(|e| e.to_string())
        });
        jsonl::append(&self.dir().join(EVIDENCE_FILE), &records)?;
        for r in records {
            art.evidence.insert(r.prompt_id.clone(), r);
        }
        self.record_failures(art, failed)
    }

    fn build_reference(&self, p: &EvalPrompt, evidence: &EvidenceSet) -> Result<(FactsRecord, ReferenceSet), ReferenceError> {
        let cfg = &self.config;
        let id = p.prompt_id.as_str();
        let chunks = chunk_documents(evidence, cfg.knowledge.chunk_chars);
        let extracted = extract_prompt_facts(id, &chunks, &self.gateway, &cfg.models.extractor)?;
        let n_extracted = extracted.len();
        let unique = dedup_facts(extracted, &cfg.dedup, Some(&self.gateway))?;
        let scored = score_importance(&unique, &p.query, &cfg.importance, &self.gateway, &cfg.models.judge)?;
        let reference = match form_reference_set(id, scored.clone(), &cfg.selection) {
            Ok(r) => r,
            Err(ReferenceError::EmptyReferenceSet(_)) => {
                tracing::warn!(prompt = id, "empty reference set; recall is undefined for this prompt");
                ReferenceSet {
                    prompt_id: id.to_string(),
                    facts: Vec::new(),
                    budget: cfg.selection,
                }
            }
            Err(e) => return Err(e),
        };
        let record = FactsRecord {
            prompt_id: id.to_string(),
            n_extracted,
            facts: scored,
        };
        Ok((record, reference))
    }

    fn stage_facts(&self, prompts: &[EvalPrompt], art: &mut Artifacts) -> Result<(), RunError> {
        // a prompt whose facts were written but not its reference set is redone
        // from scratch only for the missing file
        let pending = self.pending(prompts, art, |id| {
            art.facts.contains_key(id) && art.references.contains_key(id)
        });
        let (built, failed) = self.fan_out(Stage::Facts, &pending, |p| {
            let evidence = art
                .evidence
                .get(&p.prompt_id)
                .ok_or_else(|| "no evidence record".to_string())?;
            if let Some(facts) = art.facts.get(&p.prompt_id) {
                let reference = match form_reference_set(&p.prompt_id, facts.facts.clone(), &self.config.selection) {
                    Ok(r) => r,
                    Err(ReferenceError::EmptyReferenceSet(_)) => ReferenceSet {
                        prompt_id: p.prompt_id.clone(),
                        facts: Vec::new(),
                        budget: self.config.selection,
                    },
                    Err(e) => return Err(e.to_string()),
                };
                return Ok((None, reference));
            }
            let (facts, reference) = self.build_reference(p, evidence).map_err(|e| e.to_string())?;
            Ok((Some(facts), reference))
        });
        let (facts, references): (Vec<Option<FactsRecord>>, Vec<ReferenceSet>) = built.into_iter().unzip();
        let facts: Vec<FactsRecord> = facts.into_iter().flatten().collect();
        jsonl::append(&self.dir().join(FACTS_FILE), &facts)?;
        jsonl::append(&self.dir().join(REFERENCES_FILE), &references)?;
        for f in facts {
            art.facts.insert(f.prompt_id.clone(), f);
        }
        for r in references {
            art.references.insert(r.prompt_id.clone(), r);
        }
        self.record_failures(art, failed)
    }

    fn response_of<'a>(&self, p: &'a EvalPrompt, art: &'a Artifacts) -> Option<&'a str> {
        p.response
            .as_deref()
            .or_else(|| art.responses.get(&p.prompt_id).map(|r| r.response.as_str()))
    }

    fn stage_claims(&self, prompts: &[EvalPrompt], art: &mut Artifacts) -> Result<(), RunError> {
        let pending = self.pending(prompts, art, |id| art.claims.contains_key(id));
        let (records, failed) = self.fan_out(Stage::Claims, &pending, |p| {
            let response = self.response_of(p, art).ok_or_else(|| "no response".to_string())?;
            let claims = extract_claims(
                &p.prompt_id,
                response,
                &self.gateway,
                &self.config.models.extractor,
                self.config.claim_window,
            )
            .map_err(|e| e.to_string())?;
            Ok(ClaimsRecord {
                prompt_id: p.prompt_id.clone(),
                claims,
            })
        });
        jsonl::append(&self.dir().join(CLAIMS_FILE), &records)?;
        for r in records {
            art.claims.insert(r.prompt_id.clone(), r);
        }
        self.record_failures(art, failed)
    }

    fn verdicts_for(&self, claims: &[AtomicClaim], evidence: &EvidenceSet) -> Result<Vec<ClaimVerdict>, String> {
        let judge = &self.config.models.judge;
        claims
            .par_iter()
            .map(|c| verify_claim(&c.claim_id, &c.text, evidence, &self.gateway, judge, self.config.evidence_chars))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| format!("claim verification: {e}"))
    }

    fn coverage_for(&self, facts: &[AtomicFact], sentences: &[String]) -> Result<Vec<FactCoverage>, String> {
        let judge = &self.config.models.judge;
        facts
            .par_iter()
            .map(|f| check_coverage(&f.fact_id, &f.text, sentences, &self.gateway, judge))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| format!("coverage: {e}"))
    }

    fn stage_judge(&self, prompts: &[EvalPrompt], art: &mut Artifacts) -> Result<(), RunError> {
        let pending = self.pending(prompts, art, |id| {
            art.verdicts.contains_key(id) && art.coverage.contains_key(id)
        });
        let judge = self.config.models.judge.clone();
        let mode = self.config.coverage_mode;
        let (records, failed) = self.fan_out(Stage::Judge, &pending, |p| {
            let id = &p.prompt_id;
            let missing = |what: &str| format!("no {what} record");
            let verdicts = match art.verdicts.get(id) {
                Some(_) => None,
                None => {
                    let claims = art.claims.get(id).ok_or_else(|| missing("claims"))?;
                    let evidence = art.evidence.get(id).ok_or_else(|| missing("evidence"))?;
                    Some(VerdictsRecord {
                        prompt_id: id.clone(),
                        judge_model: judge.clone(),
                        template_version: template_version(CLAIM_VERIFICATION),
                        verdicts: self.verdicts_for(&claims.claims, evidence)?,
                    })
                }
            };
            let coverage = match art.coverage.get(id) {
                Some(_) => None,
                None => {
                    let facts = art.facts.get(id).ok_or_else(|| missing("facts"))?;
                    let sentences: Vec<String> = match mode {
                        CoverageMode::Claims => {
                            let claims = art.claims.get(id).ok_or_else(|| missing("claims"))?;
                            claims.claims.iter().map(|c| c.text.clone()).collect()
                        }
                        CoverageMode::RawResponse => {
                            split_sentences(self.response_of(p, art).ok_or_else(|| missing("response"))?)
                        }
                    };
                    Some(CoverageRecord {
                        prompt_id: id.clone(),
                        judge_model: judge.clone(),
                        template_version: template_version(FACT_COVERAGE),
                        mode,
                        coverage: self.coverage_for(&facts.facts, &sentences)?,
                    })
                }
            };
            Ok((verdicts, coverage))
        });
        let (verdicts, coverage): (Vec<_>, Vec<_>) = records.into_iter().unzip();
        let verdicts: Vec<VerdictsRecord> = verdicts.into_iter().flatten().collect();
        let coverage: Vec<CoverageRecord> = coverage.into_iter().flatten().collect();
        jsonl::append(&self.dir().join(VERDICTS_FILE), &verdicts)?;
        jsonl::append(&self.dir().join(COVERAGE_FILE), &coverage)?;
        for v in verdicts {
            art.verdicts.insert(v.prompt_id.clone(), v);
        }
        for c in coverage {
            art.coverage.insert(c.prompt_id.clone(), c);
        }
        self.record_failures(art, failed)
    }

    /// Pure recomputation from the stage artifacts.
    fn score(&self, prompts: &[EvalPrompt], art: &Artifacts) -> Result<RunReport, RunError> {
        let mut per_prompt = Vec::new();
        let mut budget_inputs = Vec::new();
        for p in prompts {
            let id = p.prompt_id.as_str();
            if art.failures.contains_key(id) {
                continue;
            }
            let (Some(verdicts), Some(reference), Some(coverage), Some(facts)) = (
                art.verdicts.get(id),
                art.references.get(id),
                art.coverage.get(id),
                art.facts.get(id),
            ) else {
                return Err(RunError::Config(format!("prompt `{id}` has not been judged yet")));
            };
            per_prompt.push(prompt_metrics(id, &verdicts.verdicts, &reference.facts, &coverage.coverage)?);
            budget_inputs.push(BudgetInput {
                prompt_id: id.to_string(),
                facts: facts.facts.clone(),
                coverage: coverage.coverage.clone(),
            });
        }
        let mut report = aggregate(&self.config.run_id, &per_prompt);
        let failed: Vec<FailedPrompt> = prompts
            .iter()
            .filter_map(|p| art.failures.get(&p.prompt_id).cloned())
            .collect();
        let n_failed = failed.len();
        let ex = &mut report.excluded;
        for count in [&mut ex.prec, &mut ex.rec, &mut ex.rec_weighted, &mut ex.f1, &mut ex.c_rate, &mut ex.ns_rate] {
            *count += n_failed;
        }
        report.model_label = self.config.model_label();
        report.domain_label = self.config.domain_label();
        report.n_prompts = prompts.len();
        report.failed = failed;
        report.recall_budgets = Some(recall_at_budgets(&budget_inputs, &self.config.budgets)?);
        report.config_snapshot = serde_json::to_value(&self.config).expect("configs always serialize");
        write_report_files(self.dir(), &report)?;
        tracing::info!(
            scored = report.n_scored,
            failed = n_failed,
            prec = ?report.macro_prec,
            rec = ?report.macro_rec,
            "report written"
        );
        Ok(report)
    }
}

/// Macro aggregation that degrades to an all-undefined report instead of
/// failing when no prompt has a defined metric.
fn aggregate(run_id: &str, per_prompt: &[PromptMetrics]) -> RunReport {
    match macro_aggregate(run_id, per_prompt) {
        Ok(r) => r,
        Err(_) => {
            tracing::warn!(run = run_id, "no prompt has a defined metric");
            let n = per_prompt.len();
            let mean = |f: fn(&PromptMetrics) -> usize| {
                if n == 0 {
                    0.0
                } else {
                    per_prompt.iter().map(f).sum::<usize>() as f64 / n as f64
                }
            };
            let avg_claims = mean(|m| m.n_claims);
            let avg_facts = mean(|m| m.n_facts);
            RunReport {
                run_id: run_id.to_string(),
                model_label: run_id.to_string(),
                domain_label: run_id.to_string(),
                n_prompts: n,
                n_scored: n,
                failed: Vec::new(),
                per_prompt: per_prompt.to_vec(),
                macro_prec: None,
                macro_rec: None,
                macro_rec_weighted: None,
                macro_f1: None,
                macro_c_rate: None,
                macro_ns_rate: None,
                excluded: ExcludedCounts {
                    prec: n,
                    rec: n,
                    rec_weighted: n,
                    f1: n,
                    c_rate: n,
                    ns_rate: n,
                },
                avg_claims,
                avg_facts,
                rho: (avg_facts > 0.0).then(|| avg_claims / avg_facts),
                recall_budgets: None,
                config_snapshot: serde_json::Value::Null,
            }
        }
    }
}

/// Resumes the run in `dir` from its `config.json`, building the backend the
/// config names.
pub fn resume(dir: &Path) -> Result<RunReport, RunError> {
    let mut config = RunConfig::from_run_dir(dir)?;
    config.output_dir = dir.to_path_buf();
    Runner::from_config(config)?.resume()
}

/// Per-prompt metrics of a finished run keyed by prompt id.
pub fn metrics_by_prompt(report: &RunReport) -> HashMap<&str, &PromptMetrics> {
    report.per_prompt.iter().map(|m| (m.prompt_id.as_str(), m)).collect()
}
