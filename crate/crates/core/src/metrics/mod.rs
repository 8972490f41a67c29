//! Factuality metrics computed from judge labels. No model calls happen here.
//!
//! Undefined values are `None`: precision and the claim rates are undefined
//! for a prompt with no claims, recall for a prompt with an empty reference
//! set. Undefined values are excluded from macro averages rather than counted
//! as zero.

mod budgets;

use std::collections::HashMap;

use serde_json::Value;
use thiserror::Error;

use crate::model::{
    AtomicFact, ClaimLabel, ClaimVerdict, ExcludedCounts, FactCoverage, PromptMetrics, RunReport,
};

pub use budgets::{default_budgets, recall_at_budgets, BudgetInput, BudgetRow, BudgetTable, PromptBudgetRecall, Weighting};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("coverage labels and reference facts do not align: {0}")]
    MisalignedInputs(String),
    #[error("no prompt has a defined metric")]
    AllUndefined,
}

fn count(verdicts: &[ClaimVerdict], label: ClaimLabel) -> usize {
    verdicts.iter().filter(|v| v.label == label).count()
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Fraction of claims labeled supported.
pub fn prompt_precision(verdicts: &[ClaimVerdict]) -> Option<f64> {
    ratio(count(verdicts, ClaimLabel::Supported), verdicts.len())
}

/// `(contradicted rate, not-supported rate)`.
pub fn prompt_rates(verdicts: &[ClaimVerdict]) -> Option<(f64, f64)> {
    let n = verdicts.len();
    Some((
        ratio(count(verdicts, ClaimLabel::Contradicted), n)?,
        ratio(count(verdicts, ClaimLabel::NotSupported), n)?,
    ))
}

/// Fraction of reference facts labeled covered.
pub fn prompt_recall(coverage: &[FactCoverage]) -> Option<f64> {
    ratio(coverage.iter().filter(|c| c.is_covered()).count(), coverage.len())
}

/// Importance-weighted recall. `facts` and `coverage` must describe the same
/// fact ids. Undefined when the set is empty or the total importance is zero.
pub fn prompt_recall_weighted(
    coverage: &[FactCoverage],
    facts: &[AtomicFact],
) -> Result<Option<f64>, MetricsError> {
    if coverage.len() != facts.len() {
        return Err(MetricsError::MisalignedInputs(format!(
            "{} coverage labels for {} facts",
            coverage.len(),
            facts.len()
        )));
    }
    let importance: HashMap<&str, f64> = facts.iter().map(|f| (f.fact_id.as_str(), f.importance)).collect();
    if importance.len() != facts.len() {
        return Err(MetricsError::MisalignedInputs("duplicate fact ids".into()));
    }
    let mut covered = 0.0;
    let mut total = 0.0;
    for c in coverage {
        let imp = importance
            .get(c.fact_id.as_str())
            .ok_or_else(|| MetricsError::MisalignedInputs(format!("no fact `{}`", c.fact_id)))?;
        total += imp;
        if c.is_covered() {
            covered += imp;
        }
    }
    Ok((total > 0.0).then(|| covered / total))
}

/// Harmonic mean; 0 when both inputs are 0.
pub fn prompt_f1(prec: Option<f64>, rec: Option<f64>) -> Option<f64> {
    let (p, r) = (prec?, rec?);
    if p + r == 0.0 {
        Some(0.0)
    } else {
        Some(2.0 * p * r / (p + r))
    }
}

/// All per-prompt metrics for one prompt. `coverage` may contain labels for
/// facts outside the reference set; only reference facts are counted.
pub fn prompt_metrics(
    prompt_id: &str,
    verdicts: &[ClaimVerdict],
    reference: &[AtomicFact],
    coverage: &[FactCoverage],
) -> Result<PromptMetrics, MetricsError> {
    let by_id: HashMap<&str, &FactCoverage> = coverage.iter().map(|c| (c.fact_id.as_str(), c)).collect();
    let selected: Vec<FactCoverage> = reference
        .iter()
        .map(|f| {
            by_id
                .get(f.fact_id.as_str())
                .map(|c| (*c).clone())
                .ok_or_else(|| MetricsError::MisalignedInputs(format!("no coverage label for `{}`", f.fact_id)))
        })
        .collect::<Result<_, _>>()?;
    let prec = prompt_precision(verdicts);
    let rec = prompt_recall(&selected);
    let rates = prompt_rates(verdicts);
    Ok(PromptMetrics {
        prompt_id: prompt_id.to_string(),
        n_claims: verdicts.len(),
        n_facts: reference.len(),
        n_supported: count(verdicts, ClaimLabel::Supported),
        n_contradicted: count(verdicts, ClaimLabel::Contradicted),
        n_not_supported: count(verdicts, ClaimLabel::NotSupported),
        n_covered: selected.iter().filter(|c| c.is_covered()).count(),
        prec,
        rec,
        rec_weighted: prompt_recall_weighted(&selected, reference)?,
        f1: prompt_f1(prec, rec),
        c_rate: rates.map(|r| r.0),
        ns_rate: rates.map(|r| r.1),
    })
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut excluded = 0usize;
    for v in values {
        match v {
            Some(x) => {
                sum += x;
                n += 1;
            }
            None => excluded += 1,
        }
    }
    ((n > 0).then(|| sum / n as f64), excluded)
}

/// Macro-averages per-prompt metrics into a report skeleton. Failed prompts,
/// budget tables and the config snapshot are filled in by the caller.
///
/// `macro_f1` is the mean of per-prompt F1 values, not the harmonic mean of
/// the macro precision and recall.
pub fn macro_aggregate(run_id: &str, per_prompt: &[PromptMetrics]) -> Result<RunReport, MetricsError> {
    let (macro_prec, ex_prec) = mean_defined(per_prompt.iter().map(|m| m.prec));
    let (macro_rec, ex_rec) = mean_defined(per_prompt.iter().map(|m| m.rec));
    let (macro_rec_weighted, ex_rw) = mean_defined(per_prompt.iter().map(|m| m.rec_weighted));
    let (macro_f1, ex_f1) = mean_defined(per_prompt.iter().map(|m| m.f1));
    let (macro_c_rate, ex_c) = mean_defined(per_prompt.iter().map(|m| m.c_rate));
    let (macro_ns_rate, ex_ns) = mean_defined(per_prompt.iter().map(|m| m.ns_rate));
    if [macro_prec, macro_rec, macro_rec_weighted, macro_f1, macro_c_rate, macro_ns_rate]
        .iter()
        .all(Option::is_none)
    {
        return Err(MetricsError::AllUndefined);
    }
    let n = per_prompt.len() as f64;
    let avg_claims = per_prompt.iter().map(|m| m.n_claims as f64).sum::<f64>() / n;
    let avg_facts = per_prompt.iter().map(|m| m.n_facts as f64).sum::<f64>() / n;
    Ok(RunReport {
        run_id: run_id.to_string(),
        model_label: run_id.to_string(),
        domain_label: run_id.to_string(),
        n_prompts: per_prompt.len(),
        n_scored: per_prompt.len(),
        failed: Vec::new(),
        per_prompt: per_prompt.to_vec(),
        macro_prec,
        macro_rec,
        macro_rec_weighted,
        macro_f1,
        macro_c_rate,
        macro_ns_rate,
        excluded: ExcludedCounts {
            prec: ex_prec,
            rec: ex_rec,
            rec_weighted: ex_rw,
            f1: ex_f1,
            c_rate: ex_c,
            ns_rate: ex_ns,
        },
        avg_claims,
        avg_facts,
        rho: (avg_facts > 0.0).then(|| avg_claims / avg_facts),
        recall_budgets: None,
        config_snapshot: Value::Null,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CoverageLabel;

    fn verdicts(labels: &[ClaimLabel]) -> Vec<ClaimVerdict> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &label)| ClaimVerdict {
                claim_id: format!("c{i}"),
                label,
                rationale: None,
                judge_failed: false,
            })
            .collect()
    }

    fn coverage(covered: &[bool]) -> Vec<FactCoverage> {
        covered
            .iter()
            .enumerate()
            .map(|(i, &c)| FactCoverage {
                fact_id: format!("f{i}"),
                label: if c { CoverageLabel::Covered } else { CoverageLabel::NotCovered },
                evidence_claim_indices: if c { vec![1] } else { vec![] },
                judge_failed: false,
            })
            .collect()
    }

    fn facts(importances: &[f64]) -> Vec<AtomicFact> {
        importances
            .iter()
            .enumerate()
            .map(|(i, &imp)| AtomicFact {
                fact_id: format!("f{i}"),
                text: format!("fact {i}"),
                source_doc_ids: vec![],
                relevance_raw: 3,
                salience_raw: 3,
                relevance_norm: 0.5,
                salience_norm: 0.5,
                importance: imp,
                cluster_id: None,
                defaulted: false,
            })
            .collect()
    }

    use ClaimLabel::{Contradicted as C, NotSupported as NS, Supported as S};

    #[test]
    fn precision_examples() {
        assert_eq!(prompt_precision(&verdicts(&[S, S, S, NS])), Some(0.75));
        assert_eq!(prompt_precision(&[]), None);
        assert_eq!(prompt_precision(&verdicts(&[C, NS])), Some(0.0));
    }

    #[test]
    fn rates_examples() {
        assert_eq!(prompt_rates(&verdicts(&[S, C, NS, NS])), Some((0.25, 0.5)));
        assert_eq!(prompt_rates(&verdicts(&[S, S])), Some((0.0, 0.0)));
        assert_eq!(prompt_rates(&[]), None);
    }

    #[test]
    fn recall_examples() {
        assert_eq!(prompt_recall(&coverage(&[true, false])), Some(0.5));
        assert_eq!(prompt_recall(&coverage(&[true, true])), Some(1.0));
        assert_eq!(prompt_recall(&[]), None);
    }

    #[test]
    fn weighted_recall_examples() {
        let got = prompt_recall_weighted(&coverage(&[true, false]), &facts(&[1.0, 0.5]))
            .unwrap()
            .unwrap();
        assert!((got - 1.0 / 1.5).abs() < 1e-12);
        let cov = coverage(&[true, false, true]);
        let w = prompt_recall_weighted(&cov, &facts(&[0.7, 0.7, 0.7])).unwrap().unwrap();
        assert!((w - prompt_recall(&cov).unwrap()).abs() < 1e-12);
        assert_eq!(
            prompt_recall_weighted(&coverage(&[true, true]), &facts(&[2.0, 0.25])).unwrap(),
            Some(1.0)
        );
        assert_eq!(
            prompt_recall_weighted(&coverage(&[true]), &facts(&[0.0])).unwrap(),
            None
        );
    }

    #[test]
    fn weighted_recall_rejects_misaligned() {
        let mut f = facts(&[1.0, 1.0]);
        f[1].fact_id = "other".into();
        assert!(matches!(
            prompt_recall_weighted(&coverage(&[true, false]), &f),
            Err(MetricsError::MisalignedInputs(_))
        ));
        assert!(prompt_recall_weighted(&coverage(&[true]), &facts(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn f1_examples() {
        assert_eq!(prompt_f1(Some(0.5), Some(0.5)), Some(0.5));
        assert_eq!(prompt_f1(Some(1.0), Some(0.0)), Some(0.0));
        assert_eq!(prompt_f1(Some(0.0), Some(0.0)), Some(0.0));
        let f = prompt_f1(Some(0.8), Some(0.5)).unwrap();
        assert!((f - 0.6153846153846154).abs() < 1e-12);
        assert_eq!(prompt_f1(None, Some(0.5)), None);
    }

    fn pm(id: &str, prec: Option<f64>, rec: Option<f64>, n_claims: usize, n_facts: usize) -> PromptMetrics {
        PromptMetrics {
            prompt_id: id.into(),
            n_claims,
            n_facts,
            n_supported: 0,
            n_contradicted: 0,
            n_not_supported: n_claims,
            n_covered: 0,
            prec,
            rec,
            rec_weighted: rec,
            f1: prompt_f1(prec, rec),
            c_rate: prec.map(|_| 0.0),
            ns_rate: prec.map(|p| 1.0 - p),
        }
    }

    #[test]
    fn macro_mean_and_exclusion() {
        let r = macro_aggregate("r", &[pm("a", Some(0.2), Some(0.5), 5, 2), pm("b", Some(0.4), Some(0.5), 5, 2)]).unwrap();
        assert!((r.macro_prec.unwrap() - 0.3).abs() < 1e-12);

        let r = macro_aggregate("r", &[pm("a", None, Some(1.0), 0, 2), pm("b", Some(0.5), Some(0.0), 4, 2)]).unwrap();
        assert_eq!(r.macro_prec, Some(0.5));
        assert_eq!(r.macro_rec, Some(0.5));
        assert_eq!(r.excluded.prec, 1);
        assert_eq!(r.excluded.rec, 0);
    }

    #[test]
    fn rho_is_ratio_of_averages() {
        // 59.94 claims over 7.4 facts
        let r = macro_aggregate("r", &[pm("a", Some(0.3), Some(0.4), 5994, 740)]).unwrap();
        assert!((r.rho.unwrap() - 8.1).abs() < 1e-12);
        let r = macro_aggregate("r", &[pm("a", Some(0.3), None, 3, 0)]).unwrap();
        assert_eq!(r.rho, None);
    }

    #[test]
    fn macro_f1_is_not_harmonic_of_macros() {
        let r = macro_aggregate("r", &[pm("a", Some(1.0), Some(0.0), 1, 1), pm("b", Some(0.0), Some(1.0), 1, 1)]).unwrap();
        assert_eq!(r.macro_f1, Some(0.0));
        assert_eq!(r.macro_prec, Some(0.5));
        assert_eq!(r.macro_rec, Some(0.5));
    }

    #[test]
    fn all_undefined_is_an_error() {
        assert_eq!(macro_aggregate("r", &[]), Err(MetricsError::AllUndefined));
        let mut m = pm("a", None, None, 0, 0);
        m.rec_weighted = None;
        assert_eq!(macro_aggregate("r", &[m]), Err(MetricsError::AllUndefined));
    }

    #[test]
    fn prompt_metrics_only_counts_reference_facts() {
        let reference = facts(&[1.0]);
        let cov = coverage(&[false, true]);
        let m = prompt_metrics("p", &verdicts(&[S, C, NS, NS]), &reference, &cov).unwrap();
        assert_eq!(m.n_facts, 1);
        assert_eq!(m.rec, Some(0.0));
        assert_eq!(m.prec, Some(0.25));
        assert!(m.label_counts_consistent());
        let sum = m.prec.unwrap() + m.c_rate.unwrap() + m.ns_rate.unwrap();
        assert!((sum - 1.0).abs() < 1e-12);
    }
}
