//! Rendering of run reports as Markdown tables and CSV files.
//!
//! Emitters only format fields of [`RunReport`]; nothing is recomputed.
//! Rates appear as percentages with one decimal, ratios with one decimal, and
//! raw metric summaries with three decimals. Undefined values render as `—`
//! in Markdown and as an empty cell in CSV.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::metrics::BudgetTable;
use crate::model::RunReport;

pub const UNDEFINED_CELL: &str = "—";
const FOOTNOTE: &str = "— : undefined, no prompt in the run had a defined value.";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no reports to render")]
    NoReports,
    #[error("report `{0}` has no scored prompts")]
    EmptyReport(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// `{:.prec$}` without a negative sign on values that round to zero.
fn fixed(x: f64, prec: usize) -> String {
    let s = format!("{x:.prec$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Percentage with one decimal: `0.08` -> `8.0`.
pub fn pct(x: f64) -> String {
    fixed(x * 100.0, 1)
}

fn pct_cell(x: Option<f64>) -> String {
    x.map_or_else(|| UNDEFINED_CELL.to_string(), pct)
}

fn pct_csv(x: Option<f64>) -> String {
    x.map(pct).unwrap_or_default()
}

fn dec3_csv(x: Option<f64>) -> String {
    x.map(|v| fixed(v, 3)).unwrap_or_default()
}

/// Distinct values in first-seen order.
fn ordered<'a>(values: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for v in values {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

fn table(header: &[String], align_left: usize, rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let rule: Vec<&str> = (0..header.len()).map(|i| if i < align_left { "---" } else { "---:" }).collect();
    let _ = writeln!(out, "| {} |", rule.join(" | "));
    for row in rows {
        let _ = writeln!(out, "| {} |", row.join(" | "));
    }
    out
}

/// Prec / Rec / F1 percentages: one row per model label, one column group per
/// domain label.
pub fn emit_table1(reports: &[RunReport]) -> Result<String, ReportError> {
    if reports.is_empty() {
        return Err(ReportError::NoReports);
    }
    let models = ordered(reports.iter().map(|r| r.model_label.as_str()));
    let domains = ordered(reports.iter().map(|r| r.domain_label.as_str()));
    let mut header = vec!["Model".to_string()];
    for d in &domains {
        for m in ["Prec", "Rec", "F1"] {
            header.push(format!("{d} {m}"));
        }
    }
    let mut undefined = false;
    let rows: Vec<Vec<String>> = models
        .iter()
        .map(|m| {
            let mut row = vec![m.to_string()];
            for d in &domains {
                let r = reports.iter().find(|r| r.model_label == *m && r.domain_label == *d);
                for v in [r.and_then(|r| r.macro_prec), r.and_then(|r| r.macro_rec), r.and_then(|r| r.macro_f1)] {
                    undefined |= v.is_none();
                    row.push(pct_cell(v));
                }
            }
            row
        })
        .collect();
    let mut out = table(&header, 1, &rows);
    if undefined {
        out.push('\n');
        out.push_str(FOOTNOTE);
        out.push('\n');
    }
    Ok(out)
}

/// Prec / Rec percentages and the claim-to-fact ratio, with each domain's
/// average reference-set size in its header: `Bio (11.4) ρ`.
pub fn emit_tradeoff(reports: &[RunReport]) -> Result<String, ReportError> {
    if reports.is_empty() {
        return Err(ReportError::NoReports);
    }
    if let Some(r) = reports.iter().find(|r| r.per_prompt.is_empty()) {
        return Err(ReportError::EmptyReport(r.run_id.clone()));
    }
    let models = ordered(reports.iter().map(|r| r.model_label.as_str()));
    let domains = ordered(reports.iter().map(|r| r.domain_label.as_str()));
    let mut header = vec!["Model".to_string()];
    for d in &domains {
        let avg_facts = reports
            .iter()
            .find(|r| r.domain_label == *d)
            .map(|r| r.avg_facts)
            .unwrap_or_default();
        let label = format!("{d} ({})", fixed(avg_facts, 1));
        header.push(format!("{label} Prec"));
        header.push(format!("{label} Rec"));
        header.push(format!("{label} ρ"));
    }
    let mut undefined = false;
    let rows: Vec<Vec<String>> = models
        .iter()
        .map(|m| {
            let mut row = vec![m.to_string()];
            for d in &domains {
                let r = reports.iter().find(|r| r.model_label == *m && r.domain_label == *d);
                let prec = r.and_then(|r| r.macro_prec);
                let rec = r.and_then(|r| r.macro_rec);
                let rho = r.and_then(|r| r.rho);
                undefined |= prec.is_none() || rec.is_none() || rho.is_none();
                row.push(pct_cell(prec));
                row.push(pct_cell(rec));
                row.push(rho.map_or_else(|| UNDEFINED_CELL.to_string(), |v| fixed(v, 1)));
            }
            row
        })
        .collect();
    let mut out = table(&header, 1, &rows);
    if undefined {
        out.push('\n');
        out.push_str(FOOTNOTE);
        out.push('\n');
    }
    Ok(out)
}

/// `run,supported_pct,not_supported_pct,contradicted_pct`, one row per report.
pub fn emit_label_breakdown(reports: &[RunReport]) -> String {
    let mut out = String::from("run,supported_pct,not_supported_pct,contradicted_pct\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.run_id,
            pct_csv(r.macro_prec),
            pct_csv(r.macro_ns_rate),
            pct_csv(r.macro_c_rate)
        );
    }
    out
}

/// `run,budget,co,delta_co_sal,delta_co_rel` as percentages.
pub fn emit_recall_budgets(run_id: &str, budgets: &BudgetTable) -> String {
    let mut out = String::from("run,budget,co,delta_co_sal,delta_co_rel\n");
    for row in &budgets.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            run_id,
            row.label,
            pct_csv(row.co),
            pct_csv(row.delta_co_sal),
            pct_csv(row.delta_co_rel)
        );
    }
    out
}

/// One row per scored prompt and a final `macro` row, three decimals.
pub fn emit_metrics_csv(report: &RunReport) -> String {
    let mut out = String::from(
        "prompt_id,n_claims,n_facts,n_supported,n_contradicted,n_not_supported,n_covered,prec,rec,rec_weighted,f1,c_rate,ns_rate\n",
    );
    for m in &report.per_prompt {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            m.prompt_id,
            m.n_claims,
            m.n_facts,
            m.n_supported,
            m.n_contradicted,
            m.n_not_supported,
            m.n_covered,
            dec3_csv(m.prec),
            dec3_csv(m.rec),
            dec3_csv(m.rec_weighted),
            dec3_csv(m.f1),
            dec3_csv(m.c_rate),
            dec3_csv(m.ns_rate)
        );
    }
    let _ = writeln!(
        out,
        "macro,{},{},,,,,{},{},{},{},{},{}",
        fixed(report.avg_claims, 3),
        fixed(report.avg_facts, 3),
        dec3_csv(report.macro_prec),
        dec3_csv(report.macro_rec),
        dec3_csv(report.macro_rec_weighted),
        dec3_csv(report.macro_f1),
        dec3_csv(report.macro_c_rate),
        dec3_csv(report.macro_ns_rate)
    );
    out
}

fn dec3_cell(x: Option<f64>) -> String {
    x.map_or_else(|| UNDEFINED_CELL.to_string(), |v| fixed(v, 3))
}

/// The Markdown report for a single run.
pub fn emit_markdown(report: &RunReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Run `{}`\n", report.run_id);
    let _ = writeln!(out, "Scored {} of {} prompts.", report.n_scored, report.n_prompts);
    if !report.failed.is_empty() {
        let _ = writeln!(out, "\nFailed prompts:\n");
        for f in &report.failed {
            let _ = writeln!(out, "- `{}` at {}: {}", f.prompt_id, f.stage, f.reason);
        }
    }
    let one = std::slice::from_ref(report);
    if let Ok(t) = emit_table1(one) {
        let _ = write!(out, "\n## Precision, recall, F1 (%)\n\n{t}");
    }
    if let Ok(t) = emit_tradeoff(one) {
        let _ = write!(out, "\n## Trade-off\n\n{t}");
    }
    let _ = write!(
        out,
        "\n## Claim labels (%)\n\n{}",
        table(
            &["Supported".into(), "Not supported".into(), "Contradicted".into()],
            0,
            &[vec![
                pct_cell(report.macro_prec),
                pct_cell(report.macro_ns_rate),
                pct_cell(report.macro_c_rate)
            ]],
        )
    );
    if let Some(b) = &report.recall_budgets {
        let rows: Vec<Vec<String>> = b
            .rows
            .iter()
            .map(|r| vec![r.label.clone(), pct_cell(r.co), pct_cell(r.delta_co_sal), pct_cell(r.delta_co_rel)])
            .collect();
        let _ = write!(
            out,
            "\n## Recall by budget (%)\n\n{}",
            table(&["K".into(), "Co".into(), "Δ(Co−Sal)".into(), "Δ(Co−Rel)".into()], 1, &rows)
        );
    }
    let e = &report.excluded;
    let rows = vec![
        vec!["prec".into(), dec3_cell(report.macro_prec), e.prec.to_string()],
        vec!["rec".into(), dec3_cell(report.macro_rec), e.rec.to_string()],
        vec!["rec_weighted".into(), dec3_cell(report.macro_rec_weighted), e.rec_weighted.to_string()],
        vec!["f1".into(), dec3_cell(report.macro_f1), e.f1.to_string()],
        vec!["c_rate".into(), dec3_cell(report.macro_c_rate), e.c_rate.to_string()],
        vec!["ns_rate".into(), dec3_cell(report.macro_ns_rate), e.ns_rate.to_string()],
        vec!["avg_claims".into(), fixed(report.avg_claims, 3), String::new()],
        vec!["avg_facts".into(), fixed(report.avg_facts, 3), String::new()],
        vec!["rho".into(), dec3_cell(report.rho), String::new()],
    ];
    let _ = write!(
        out,
        "\n## Macro averages\n\n{}",
        table(&["Metric".into(), "Value".into(), "Excluded".into()], 1, &rows)
    );
    out
}

fn write_file(path: &Path, text: &str) -> Result<(), ReportError> {
    std::fs::write(path, text).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `report.json`, `report.md`, `breakdown.csv`, `recall_budgets.csv`
/// and `metrics.csv` into `dir`.
pub fn write_report_files(dir: &Path, report: &RunReport) -> Result<(), ReportError> {
    let json = serde_json::to_string_pretty(report).expect("reports always serialize");
    write_file(&dir.join("report.json"), &format!("{json}\n"))?;
    write_file(&dir.join("report.md"), &emit_markdown(report))?;
    write_file(&dir.join("breakdown.csv"), &emit_label_breakdown(std::slice::from_ref(report)))?;
    let budgets = report
        .recall_budgets
        .as_ref()
        .map(|b| emit_recall_budgets(&report.run_id, b))
        .unwrap_or_else(|| emit_recall_budgets(&report.run_id, &BudgetTable { rows: vec![], per_prompt: vec![] }));
    write_file(&dir.join("recall_budgets.csv"), &budgets)?;
    write_file(&dir.join("metrics.csv"), &emit_metrics_csv(report))?;
    Ok(())
}
