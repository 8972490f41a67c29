//! Recall under alternative importance weightings and fact budgets.
//!
//! For every budget and every weighting (combined, relevance-only,
//! salience-only) the reference set is re-ranked from the raw ratings and
//! recall is recomputed against the same coverage labels.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{prompt_recall, MetricsError};
use crate::model::{AtomicFact, FactCoverage, ImportanceConfig, SelectionRule};
use crate::reference::select_ranked;

/// Scored candidate facts and their coverage labels for one prompt.
#[derive(Debug, Clone)]
pub struct BudgetInput {
    pub prompt_id: String,
    pub facts: Vec<AtomicFact>,
    pub coverage: Vec<FactCoverage>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Combined,
    RelevanceOnly,
    SalienceOnly,
}

impl Weighting {
    pub const ALL: [Weighting; 3] = [Weighting::Combined, Weighting::RelevanceOnly, Weighting::SalienceOnly];

    pub fn config(self) -> ImportanceConfig {
        match self {
            Weighting::Combined => ImportanceConfig::COMBINED,
            Weighting::RelevanceOnly => ImportanceConfig::RELEVANCE_ONLY,
            Weighting::SalienceOnly => ImportanceConfig::SALIENCE_ONLY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBudgetRecall {
    pub prompt_id: String,
    pub budget: String,
    pub co: Option<f64>,
    pub rel: Option<f64>,
    pub sal: Option<f64>,
}

/// Macro-averaged recall for one budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub budget: SelectionRule,
    pub label: String,
    pub co: Option<f64>,
    pub rel: Option<f64>,
    pub sal: Option<f64>,
    pub delta_co_sal: Option<f64>,
    pub delta_co_rel: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetTable {
    pub rows: Vec<BudgetRow>,
    pub per_prompt: Vec<PromptBudgetRecall>,
}

fn recall_for(input: &BudgetInput, weighting: Weighting, budget: &SelectionRule) -> Result<Option<f64>, MetricsError> {
    let cfg = weighting.config();
    let rescored: Vec<AtomicFact> = input.facts.iter().map(|f| f.reweighted(&cfg)).collect();
    let selected = select_ranked(rescored, budget);
    let labels: HashMap<&str, &FactCoverage> = input.coverage.iter().map(|c| (c.fact_id.as_str(), c)).collect();
    let coverage: Vec<FactCoverage> = selected
        .iter()
        .map(|f| {
            labels
                .get(f.fact_id.as_str())
                .map(|c| (*c).clone())
                .ok_or_else(|| {
                    MetricsError::MisalignedInputs(format!("{}: no coverage for `{}`", input.prompt_id, f.fact_id))
                })
        })
        .collect::<Result<_, _>>()?;
    Ok(prompt_recall(&coverage))
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

pub fn recall_at_budgets(inputs: &[BudgetInput], budgets: &[SelectionRule]) -> Result<BudgetTable, MetricsError> {
    let mut rows = Vec::with_capacity(budgets.len());
    let mut per_prompt = Vec::new();
    for budget in budgets {
        let mut block = Vec::with_capacity(inputs.len());
        for input in inputs {
            block.push(PromptBudgetRecall {
                prompt_id: input.prompt_id.clone(),
                budget: budget.label(),
                co: recall_for(input, Weighting::Combined, budget)?,
                rel: recall_for(input, Weighting::RelevanceOnly, budget)?,
                sal: recall_for(input, Weighting::SalienceOnly, budget)?,
            });
        }
        let co = mean(block.iter().map(|r| r.co));
        let rel = mean(block.iter().map(|r| r.rel));
        let sal = mean(block.iter().map(|r| r.sal));
        let diff = |a: Option<f64>, b: Option<f64>| Some(a? - b?);
        rows.push(BudgetRow {
            budget: *budget,
            label: budget.label(),
            co,
            rel,
            sal,
            delta_co_sal: diff(co, sal),
            delta_co_rel: diff(co, rel),
        });
        per_prompt.extend(block);
    }
    Ok(BudgetTable { rows, per_prompt })
}

/// The default budgets: the single top fact, the top five, and every fact.
pub fn default_budgets() -> Vec<SelectionRule> {
    vec![
        SelectionRule::TopK { k_star: 1 },
        SelectionRule::TopK { k_star: 5 },
        SelectionRule::All,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoverageLabel, ExtractedFact};

    fn fact(id: &str, r: u8, s: u8) -> AtomicFact {
        AtomicFact::scored(
            ExtractedFact {
                fact_id: id.into(),
                text: id.into(),
                source_doc_ids: vec![],
                cluster_id: None,
            },
            r,
            s,
            &ImportanceConfig::COMBINED,
            false,
        )
    }

    fn cov(id: &str, covered: bool) -> FactCoverage {
        FactCoverage {
            fact_id: id.into(),
            label: if covered { CoverageLabel::Covered } else { CoverageLabel::NotCovered },
            evidence_claim_indices: if covered { vec![1] } else { vec![] },
            judge_failed: false,
        }
    }

    #[test]
    fn full_budget_has_zero_deltas() {
        let input = BudgetInput {
            prompt_id: "p".into(),
            facts: vec![fact("a", 5, 1), fact("b", 1, 5), fact("c", 3, 3)],
            coverage: vec![cov("a", true), cov("b", false), cov("c", true)],
        };
        let t = recall_at_budgets(&[input], &[SelectionRule::All]).unwrap();
        assert_eq!(t.rows[0].delta_co_rel, Some(0.0));
        assert_eq!(t.rows[0].delta_co_sal, Some(0.0));
    }

    #[test]
    fn top1_recall_is_binary() {
        let input = BudgetInput {
            prompt_id: "p".into(),
            facts: vec![fact("a", 5, 1), fact("b", 1, 5)],
            coverage: vec![cov("a", true), cov("b", false)],
        };
        let t = recall_at_budgets(&[input], &[SelectionRule::TopK { k_star: 1 }]).unwrap();
        let row = &t.per_prompt[0];
        // combined tie (1.0 vs 1.0) breaks on fact id -> a
        assert_eq!(row.co, Some(1.0));
        assert_eq!(row.rel, Some(1.0));
        assert_eq!(row.sal, Some(0.0));
    }

    #[test]
    fn missing_coverage_is_misaligned() {
        let input = BudgetInput {
            prompt_id: "p".into(),
            facts: vec![fact("a", 5, 1)],
            coverage: vec![],
        };
        assert!(recall_at_budgets(&[input], &default_budgets()).is_err());
    }
}
