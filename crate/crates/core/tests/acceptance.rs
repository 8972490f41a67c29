//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails. Built with `harness = false`, so the lines
//! show up in plain `cargo test` output.
//!
//! Every expected value here comes from an oracle written in this file or
//! from the hand-computed fixture in `tests/fixtures/golden`.

mod common;

use std::collections::{HashMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use factscope::gateway::{Gateway, MockBackend, MockErrorKind, MockRule, MockScript, RequestTag, RetryPolicy};
use factscope::judge::{check_coverage, parse_coverage};
use factscope::metrics::{
    macro_aggregate, prompt_f1, prompt_precision, prompt_rates, prompt_recall, prompt_recall_weighted,
    recall_at_budgets, BudgetInput,
};
use factscope::model::{
    normalize_rating, AtomicFact, ClaimLabel, ClaimVerdict, CoverageLabel, ExtractedFact, FactCoverage,
    ImportanceConfig, PromptMetrics, RunReport, SelectionRule,
};
use factscope::prompts::{FACT_COVERAGE, FACT_GENERATION, FACT_GENERATION_INSTRUCTIONS_LEN, RELEVANCE_SALIENCE};
use factscope::reference::{cluster_average_linkage, dedup_facts, select_ranked, CanonicalRule, DedupConfig, SimilarityKind};
use factscope::report::emit_recall_budgets;
use factscope::runner::Runner;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-12;

type Check = Result<String, String>;
type Criterion<'a> = Box<dyn Fn() -> Check + 'a>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($fmt)+));
        }
    };
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= TOL,
        _ => false,
    }
}

fn fact(id: String, r: u8, s: u8, cfg: &ImportanceConfig) -> AtomicFact {
    AtomicFact::scored(
        ExtractedFact {
            text: format!("text of {id}"),
            fact_id: id,
            source_doc_ids: vec![],
            cluster_id: None,
        },
        r,
        s,
        cfg,
        false,
    )
}

// ---------------------------------------------------------------- 1

struct Synthetic {
    labels: Vec<ClaimLabel>,
    importance: Vec<f64>,
    covered: Vec<bool>,
}

fn oracle_metrics(p: &Synthetic) -> [Option<f64>; 6] {
    let n = p.labels.len();
    let (mut sup, mut con, mut ns) = (0.0, 0.0, 0.0);
    for l in &p.labels {
        match l {
            ClaimLabel::Supported => sup += 1.0,
            ClaimLabel::Contradicted => con += 1.0,
            ClaimLabel::NotSupported => ns += 1.0,
        }
    }
    let div = |a: f64, b: f64| if b == 0.0 { None } else { Some(a / b) };
    let prec = div(sup, n as f64);
    let c_rate = div(con, n as f64);
    let ns_rate = div(ns, n as f64);
    let covered = p.covered.iter().filter(|c| **c).count() as f64;
    let rec = div(covered, p.covered.len() as f64);
    let mut wc = 0.0;
    let mut wt = 0.0;
    for (imp, cov) in p.importance.iter().zip(&p.covered) {
        wt += imp;
        if *cov {
            wc += imp;
        }
    }
    let rec_w = div(wc, wt);
    let f1 = match (prec, rec) {
        (Some(a), Some(b)) if a + b > 0.0 => Some(2.0 * a * b / (a + b)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    [prec, rec, rec_w, f1, c_rate, ns_rate]
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = ImportanceConfig::default();
    let mut per_prompt = Vec::new();
    let mut oracle_rows = Vec::new();
    for i in 0..1000 {
        let n_c = rng.gen_range(0..=60);
        let n_f = rng.gen_range(0..=20);
        let p = Synthetic {
            labels: (0..n_c)
                .map(|_| match rng.gen_range(0..3) {
                    0 => ClaimLabel::Supported,
                    1 => ClaimLabel::Contradicted,
                    _ => ClaimLabel::NotSupported,
                })
                .collect(),
            importance: (0..n_f).map(|_| rng.gen_range(0.0..=2.0)).collect(),
            covered: (0..n_f).map(|_| rng.gen_bool(0.5)).collect(),
        };
        let pid = format!("q{i}");
        let verdicts: Vec<ClaimVerdict> = p
            .labels
            .iter()
            .enumerate()
            .map(|(j, l)| ClaimVerdict {
                claim_id: format!("{pid}:claim:{j}"),
                label: *l,
                rationale: None,
                judge_failed: false,
            })
            .collect();
        let facts: Vec<AtomicFact> = p
            .importance
            .iter()
            .enumerate()
            .map(|(j, imp)| AtomicFact {
                importance: *imp,
                ..fact(format!("{pid}:fact:{j}"), 3, 3, &cfg)
            })
            .collect();
        let coverage: Vec<FactCoverage> = p
            .covered
            .iter()
            .enumerate()
            .map(|(j, c)| FactCoverage {
                fact_id: format!("{pid}:fact:{j}"),
                label: if *c { CoverageLabel::Covered } else { CoverageLabel::NotCovered },
                evidence_claim_indices: if *c { vec![1] } else { vec![] },
                judge_failed: false,
            })
            .collect();
        let o = oracle_metrics(&p);
        let prec = prompt_precision(&verdicts);
        let rec = prompt_recall(&coverage);
        let rates = prompt_rates(&verdicts);
        let rec_w = prompt_recall_weighted(&coverage, &facts).map_err(|e| e.to_string())?;
        let f1 = prompt_f1(prec, rec);
        let got = [prec, rec, rec_w, f1, rates.map(|r| r.0), rates.map(|r| r.1)];
        for (k, (g, w)) in got.iter().zip(&o).enumerate() {
            ensure!(close(*g, *w), "prompt {i} metric {k}: got {g:?}, oracle {w:?}");
        }
        per_prompt.push(
            factscope::metrics::prompt_metrics(&pid, &verdicts, &facts, &coverage).map_err(|e| e.to_string())?,
        );
        oracle_rows.push((o, n_c, n_f));
    }
    let report = macro_aggregate("r", &per_prompt).map_err(|e| e.to_string())?;
    let got = [
        report.macro_prec,
        report.macro_rec,
        report.macro_rec_weighted,
        report.macro_f1,
        report.macro_c_rate,
        report.macro_ns_rate,
    ];
    let excluded = [
        report.excluded.prec,
        report.excluded.rec,
        report.excluded.rec_weighted,
        report.excluded.f1,
        report.excluded.c_rate,
        report.excluded.ns_rate,
    ];
    for k in 0..6 {
        let defined: Vec<f64> = oracle_rows.iter().filter_map(|(o, _, _)| o[k]).collect();
        let mean = defined.iter().sum::<f64>() / defined.len() as f64;
        ensure!(close(got[k], Some(mean)), "macro {k}: got {:?}, oracle {mean}", got[k]);
        ensure!(excluded[k] == 1000 - defined.len(), "excluded {k}: {} vs {}", excluded[k], 1000 - defined.len());
    }
    let avg_c = oracle_rows.iter().map(|r| r.1 as f64).sum::<f64>() / 1000.0;
    let avg_f = oracle_rows.iter().map(|r| r.2 as f64).sum::<f64>() / 1000.0;
    ensure!((report.avg_claims - avg_c).abs() <= TOL, "avg_claims");
    ensure!((report.avg_facts - avg_f).abs() <= TOL, "avg_facts");
    ensure!(close(report.rho, Some(avg_c / avg_f)), "rho");
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(5), "took {took:?}");
    Ok(format!("1000 prompts match the oracle in {:.2}s", took.as_secs_f64()))
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Check {
    let norm: Vec<f64> = (1..=5).map(normalize_rating).collect();
    ensure!(norm == [0.0, 0.25, 0.5, 0.75, 1.0], "normalization {norm:?}");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let cfg = ImportanceConfig::new(rng.gen_range(0.0..10.0), rng.gen_range(0.01..10.0)).unwrap();
        ensure!(cfg.importance(1, 1) == 0.0, "imp(1,1) != 0 for {cfg:?}");
    }
    for _ in 0..100 {
        let n = rng.gen_range(1..20);
        let w = rng.gen_range(0.01..2.0);
        let cfg = ImportanceConfig::default();
        let facts: Vec<AtomicFact> = (0..n)
            .map(|j| AtomicFact {
                importance: w,
                ..fact(format!("f{j}"), 3, 3, &cfg)
            })
            .collect();
        let cov: Vec<FactCoverage> = (0..n)
            .map(|j| FactCoverage {
                label: if rng.gen_bool(0.5) { CoverageLabel::Covered } else { CoverageLabel::NotCovered },
                ..FactCoverage::not_covered(format!("f{j}"))
            })
            .collect();
        let weighted = prompt_recall_weighted(&cov, &facts).unwrap();
        ensure!(close(weighted, prompt_recall(&cov)), "weighted {weighted:?} vs unweighted");
    }
    ensure!(prompt_f1(Some(1.0), Some(0.0)) == Some(0.0), "F1(1,0)");
    ensure!(prompt_f1(Some(0.0), Some(0.0)) == Some(0.0), "F1(0,0)");
    for _ in 0..100 {
        let n = rng.gen_range(1..40);
        let v: Vec<ClaimVerdict> = (0..n)
            .map(|j| ClaimVerdict {
                claim_id: format!("c{j}"),
                label: [ClaimLabel::Supported, ClaimLabel::Contradicted, ClaimLabel::NotSupported][rng.gen_range(0..3)],
                rationale: None,
                judge_failed: false,
            })
            .collect();
        let (c, ns) = prompt_rates(&v).unwrap();
        let p = prompt_precision(&v).unwrap();
        ensure!((p + c + ns - 1.0).abs() <= TOL, "rates sum to {}", p + c + ns);
    }
    Ok("normalization, imp(1,1), equal weights, F1 and rate partition hold".into())
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..200 {
        let n = rng.gen_range(1..30);
        let ratings: Vec<(u8, u8)> = (0..n).map(|_| (rng.gen_range(1..=5), rng.gen_range(1..=5))).collect();
        let (a, b) = (rng.gen_range(0.0..3.0), rng.gen_range(0.05..3.0));
        let c = 10f64.powf(rng.gen_range(-3.0..3.0));
        let k = rng.gen_range(1..=n + 2);
        let build = |cfg: ImportanceConfig| -> HashSet<String> {
            let facts: Vec<AtomicFact> = ratings
                .iter()
                .enumerate()
                .map(|(j, (r, s))| fact(format!("p:fact:{:04}", j + 1), *r, *s, &cfg))
                .collect();
            select_ranked(facts, &SelectionRule::TopK { k_star: k })
                .into_iter()
                .map(|f| f.fact_id)
                .collect()
        };
        let base = build(ImportanceConfig::new(a, b).unwrap());
        let scaled = build(ImportanceConfig::new(a * c, b * c).unwrap());
        ensure!(base == scaled, "trial {trial}: alpha={a} beta={b} c={c} k={k} sets differ");
    }
    Ok("200 random trials keep identical top-K sets".into())
}

// ---------------------------------------------------------------- 4

fn extracted(id: usize, text: &str) -> ExtractedFact {
    ExtractedFact {
        fact_id: format!("p:fact:{id:04}"),
        text: text.to_string(),
        source_doc_ids: vec![format!("d{id}")],
        cluster_id: None,
    }
}

#[allow(clippy::needless_range_loop)]
fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let words = ["ada", "lovelace", "born", "london", "1815", "wrote", "notes", "engine", "babbage", "poet"];
    for trial in 0..100 {
        let n = rng.gen_range(1..12);
        let facts: Vec<ExtractedFact> = (0..n)
            .map(|j| {
                let len = rng.gen_range(2..6);
                let text: Vec<&str> = (0..len).map(|_| words[rng.gen_range(0..words.len())]).collect();
                extracted(j + 1, &text.join(" "))
            })
            .collect();
        let cfg = DedupConfig {
            similarity: SimilarityKind::Jaccard,
            tau: rng.gen_range(0.2..0.95),
            ..DedupConfig::default()
        };
        let once = dedup_facts(facts.clone(), &cfg, None).map_err(|e| e.to_string())?;
        let twice = dedup_facts(once.clone(), &cfg, None).map_err(|e| e.to_string())?;
        let texts = |v: &[ExtractedFact]| v.iter().map(|f| f.text.clone()).collect::<Vec<_>>();
        ensure!(texts(&once) == texts(&twice), "trial {trial}: not idempotent");
        let inputs: HashSet<String> = facts.iter().map(|f| f.text.clone()).collect();
        ensure!(once.iter().all(|f| inputs.contains(&f.text)), "trial {trial}: invented text");
        let distinct: HashSet<&str> = once.iter().map(|f| f.text.as_str()).collect();
        ensure!(distinct.len() == once.len(), "trial {trial}: exact duplicates survived");
    }

    for trial in 0..200 {
        let n = rng.gen_range(1..9);
        let mut sim = vec![vec![1.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let v = rng.gen_range(0.0..1.0);
                (sim[i][j], sim[j][i]) = (v, v);
            }
        }
        let tau = rng.gen_range(0.3..0.9);
        let got = cluster_average_linkage(&sim, tau);
        let want = common::naive_average_linkage(&sim, tau);
        ensure!(got == want, "trial {trial}: {got:?} vs oracle {want:?}");
    }

    // pairwise fixture: AB .9, AC .1, BC .1
    let sim = vec![vec![1.0, 0.9, 0.1], vec![0.9, 1.0, 0.1], vec![0.1, 0.1, 1.0]];
    let want = common::naive_average_linkage(&sim, 0.85);
    ensure!(want == vec![vec![0, 1], vec![2]], "oracle gave {want:?}");
    ensure!(cluster_average_linkage(&sim, 0.85) == want, "matrix clustering differs");

    let (ta, tb, tc) = (
        "Ada Lovelace was born in 1815.",
        "Ada Lovelace was born in London in 1815.",
        "Charles Babbage designed the Analytical Engine.",
    );
    let y = 0.01 / 0.19f64.sqrt();
    let mut embeddings = HashMap::new();
    embeddings.insert(ta.to_string(), vec![1.0, 0.0, 0.0]);
    embeddings.insert(tb.to_string(), vec![0.9, 0.19f64.sqrt(), 0.0]);
    embeddings.insert(tc.to_string(), vec![0.1, y, (1.0 - 0.01 - y * y).sqrt()]);
    let gw = Gateway::new(Arc::new(MockBackend::new(MockScript {
        embeddings,
        embedding_dim: 3,
        ..MockScript::default()
    })));
    let cfg = DedupConfig {
        similarity: SimilarityKind::Embedding,
        tau: 0.85,
        canonical_rule: CanonicalRule::LongestText,
        ..DedupConfig::default()
    };
    let out = dedup_facts(vec![extracted(1, ta), extracted(2, tb), extracted(3, tc)], &cfg, Some(&gw))
        .map_err(|e| e.to_string())?;
    let got: Vec<(&str, &[String])> = out.iter().map(|f| (f.text.as_str(), f.source_doc_ids.as_slice())).collect();
    ensure!(
        got == vec![(tb, &["d1".to_string(), "d2".to_string()][..]), (tc, &["d3".to_string()][..])],
        "fixture gave {got:?}"
    );
    Ok("idempotent, subset, duplicates collapse; fixture clusters {A,B},{C} with B canonical".into())
}

// ---------------------------------------------------------------- 5, 6

fn run_golden(root: &Path, backend: Arc<MockBackend>) -> Result<(RunReport, Vec<u8>), String> {
    std::env::set_current_dir(root).map_err(|e| e.to_string())?;
    let cfg = common::golden_config(Path::new("out"));
    let runner = Runner::new(cfg, backend).map_err(|e| e.to_string())?;
    let report = runner.run().map_err(|e| e.to_string())?;
    let bytes = std::fs::read(root.join("out/report.json")).map_err(|e| e.to_string())?;
    Ok((report, bytes))
}

fn check_against_oracle(report: &RunReport) -> Result<(), String> {
    let e = common::golden_expected();
    let num = |v: &serde_json::Value| v.as_f64();
    ensure!(report.n_prompts == 2 && report.n_scored == 2 && report.failed.is_empty(), "prompt counts");
    ensure!(report.model_label == "scripted" && report.domain_label == "Bios", "labels");
    for (m, want) in report.per_prompt.iter().zip(e["per_prompt"].as_array().unwrap()) {
        ensure!(m.prompt_id == want["prompt_id"].as_str().unwrap(), "prompt order");
        let counts = [
            (m.n_claims, "n_claims"),
            (m.n_facts, "n_facts"),
            (m.n_supported, "n_supported"),
            (m.n_contradicted, "n_contradicted"),
            (m.n_not_supported, "n_not_supported"),
            (m.n_covered, "n_covered"),
        ];
        for (got, key) in counts {
            ensure!(got as u64 == want[key].as_u64().unwrap(), "{} {key}: {got}", m.prompt_id);
        }
        let values = [
            (m.prec, "prec"),
            (m.rec, "rec"),
            (m.rec_weighted, "rec_weighted"),
            (m.f1, "f1"),
            (m.c_rate, "c_rate"),
            (m.ns_rate, "ns_rate"),
        ];
        for (got, key) in values {
            ensure!(close(got, num(&want[key])), "{} {key}: {got:?} vs {}", m.prompt_id, want[key]);
        }
    }
    let macros = [
        (report.macro_prec, "prec"),
        (report.macro_rec, "rec"),
        (report.macro_rec_weighted, "rec_weighted"),
        (report.macro_f1, "f1"),
        (report.macro_c_rate, "c_rate"),
        (report.macro_ns_rate, "ns_rate"),
    ];
    for (got, key) in macros {
        ensure!(close(got, num(&e["macro"][key])), "macro {key}: {got:?}");
    }
    ensure!(report.excluded == Default::default(), "excluded {:?}", report.excluded);
    ensure!(close(Some(report.avg_claims), num(&e["avg_claims"])), "avg_claims");
    ensure!(close(Some(report.avg_facts), num(&e["avg_facts"])), "avg_facts");
    ensure!(close(report.rho, num(&e["rho"])), "rho");
    let budgets = report.recall_budgets.as_ref().ok_or("no budget table")?;
    for (row, want) in budgets.rows.iter().zip(e["budgets"].as_array().unwrap()) {
        ensure!(row.label == want["label"].as_str().unwrap(), "budget label {}", row.label);
        for (got, key) in [
            (row.co, "co"),
            (row.rel, "rel"),
            (row.sal, "sal"),
            (row.delta_co_sal, "delta_co_sal"),
            (row.delta_co_rel, "delta_co_rel"),
        ] {
            ensure!(close(got, num(&want[key])), "budget {} {key}: {got:?}", row.label);
        }
    }
    ensure!(budgets.rows.len() == 3, "budget rows");
    let refs: Vec<serde_json::Value> = std::fs::read_to_string("out/references.jsonl")
        .map_err(|e| e.to_string())?
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    for r in &refs {
        let pid = r["prompt_id"].as_str().unwrap();
        let ids: Vec<&str> = r["facts"].as_array().unwrap().iter().map(|f| f["fact_id"].as_str().unwrap()).collect();
        let want: Vec<&str> = e["reference_ids"][pid].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
        ensure!(ids == want, "{pid} reference ids {ids:?}");
    }
    Ok(())
}

fn criterion_5(tmp: &Path) -> Check {
    let start = Instant::now();
    let (a, b) = (tmp.join("a"), tmp.join("b"));
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();
    let (report, first) = run_golden(&a, Arc::new(MockBackend::new(common::golden_script())))?;
    check_against_oracle(&report)?;
    let (_, second) = run_golden(&b, Arc::new(MockBackend::new(common::golden_script())))?;
    ensure!(first == second, "independent runs differ");
    let (_, third) = run_golden(&a, Arc::new(MockBackend::new(common::golden_script())))?;
    ensure!(first == third, "consecutive runs differ");
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(10), "took {took:?}");
    Ok(format!("report matches the hand oracle; 3 runs byte-identical in {:.2}s", took.as_secs_f64()))
}

fn criterion_6(tmp: &Path) -> Check {
    let dir = tmp.join("replay");
    std::fs::create_dir_all(&dir).unwrap();
    let (_, first) = run_golden(&dir, Arc::new(MockBackend::new(common::golden_script())))?;
    for entry in std::fs::read_dir(dir.join("out")).unwrap() {
        let path = entry.unwrap().path();
        if path.is_file() {
            std::fs::remove_file(path).unwrap();
        }
    }
    let counting = Arc::new(MockBackend::new(common::golden_script()));
    let (report, again) = run_golden(&dir, counting.clone())?;
    ensure!(counting.total_calls() == 0, "{} backend calls", counting.total_calls());
    ensure!(first == again, "replayed report differs");
    check_against_oracle(&report)?;
    Ok("outputs deleted, cache kept: identical report with 0 backend calls".into())
}

// ---------------------------------------------------------------- 7

/// Plain text of a LaTeX template block: markup removed, escapes undone,
/// verbatim blocks kept as they are.
fn detex(tex: &str) -> String {
    let mut out = String::new();
    let mut verbatim = false;
    for line in tex.lines().skip(1) {
        let t = line.trim();
        if t == "\\begin{verbatim}" || t == "\\end{verbatim}" {
            verbatim = t.starts_with("\\begin");
            continue;
        }
        if verbatim {
            out.push_str(line);
            out.push('\n');
            continue;
        }
        let mut l = line
            .replace("\\hspace*{1em}", "")
            .replace("\\medskip", "")
            .replace("\\begin{itemize}", "")
            .replace("\\end{itemize}", "")
            .replace("\\item ", "- ")
            .replace("\\textit", "")
            .replace("\\textbf", "")
            .replace("\\texttt", "")
            .replace("\\\\", "");
        l = l.replace("\\{", "\u{1}").replace("\\}", "\u{2}").replace(['{', '}'], "");
        l = l
            .replace('\u{1}', "{")
            .replace('\u{2}', "}")
            .replace("\\_", "_")
            .replace("``", "\"")
            .replace("''", "\"")
            .replace("--", "\u{2013}");
        out.push_str(&l);
        out.push('\n');
    }
    out
}

fn words(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn criterion_7() -> Check {
    let ok = |r: &str| parse_coverage(r, 3);
    ensure!(
        ok(r#"{"label": "COVERED", "evidence_claim_ids": [2, 1]}"#) == Some((CoverageLabel::Covered, vec![1, 2])),
        "valid COVERED reply"
    );
    ensure!(
        ok(r#"{"label": "NOT_COVERED", "evidence_claim_ids": []}"#) == Some((CoverageLabel::NotCovered, vec![])),
        "valid NOT_COVERED reply"
    );
    ensure!(
        ok(r#"{"label": "NOT_COVERED", "evidence_claim_ids": [1]}"#) == Some((CoverageLabel::NotCovered, vec![])),
        "NOT_COVERED with ids is not coerced"
    );
    for bad in [
        r#"{"label": "COVERED"}"#,
        r#"{"evidence_claim_ids": [1]}"#,
        r#"{"label": "COVERED", "evidence_claim_ids": [1], "confidence": 0.9}"#,
        r#"{"label": "covered", "evidence_claim_ids": [1]}"#,
        r#"The fact is covered: {"label": "COVERED", "evidence_claim_ids": [1]}"#,
    ] {
        ensure!(ok(bad).is_none(), "accepted {bad}");
    }

    let mock = Arc::new(MockBackend::new(MockScript {
        rules: vec![
            MockRule::reply(
                RequestTag::CoverageJudge,
                &["could not be parsed"],
                r#"{"label": "COVERED", "evidence_claim_ids": [1]}"#,
            ),
            MockRule::reply(RequestTag::CoverageJudge, &[], "Sure! The fact is COVERED by claim 1."),
        ],
        ..MockScript::default()
    }));
    let gw = Gateway::new(mock.clone());
    let c = check_coverage("f", "Ada was born in 1815.", &["Ada was born in 1815.".to_string()], &gw, "judge")
        .map_err(|e| e.to_string())?;
    ensure!(c.is_covered() && !c.judge_failed && mock.chat_calls() == 2, "retry did not recover: {c:?}");

    let dir = common::fixture_dir("templates");
    let read = |name: &str| std::fs::read_to_string(dir.join(name)).unwrap();
    let generation_instructions = &FACT_GENERATION[..FACT_GENERATION_INSTRUCTIONS_LEN];
    for (name, constant, source_part) in [
        ("fact_generation", FACT_GENERATION, generation_instructions),
        ("fact_coverage", FACT_COVERAGE, FACT_COVERAGE),
        ("relevance_salience", RELEVANCE_SALIENCE, RELEVANCE_SALIENCE),
    ] {
        ensure!(constant == read(&format!("{name}.txt")), "{name}: template bytes drifted from snapshot");
        let plain = detex(&read(&format!("{name}.tex")));
        ensure!(words(&plain) == words(source_part), "{name}: template text differs from the LaTeX source");
    }
    Ok("schema accepted exactly, coercion and retry work, 3 templates pinned".into())
}

// ---------------------------------------------------------------- 8

/// Recall at `k` facts (None = all) ranking by the given weights, computed
/// without the library's ranking code.
fn exhaustive_recall(ratings: &[(u8, u8)], covered: &[bool], alpha: f64, beta: f64, k: Option<usize>) -> f64 {
    let mut order: Vec<usize> = (0..ratings.len()).collect();
    let imp = |i: usize| alpha * (ratings[i].0 as f64 - 1.0) / 4.0 + beta * (ratings[i].1 as f64 - 1.0) / 4.0;
    order.sort_by(|&a, &b| imp(b).partial_cmp(&imp(a)).unwrap().then(a.cmp(&b)));
    let take = k.unwrap_or(order.len()).min(order.len());
    order[..take].iter().filter(|&&i| covered[i]).count() as f64 / take as f64
}

fn budget_case(ratings: &[(u8, u8)], covered: &[bool]) -> Result<factscope::metrics::BudgetTable, String> {
    let cfg = ImportanceConfig::default();
    let facts: Vec<AtomicFact> = ratings
        .iter()
        .enumerate()
        .map(|(i, (r, s))| fact(format!("p:fact:{:04}", i + 1), *r, *s, &cfg))
        .collect();
    let coverage = facts
        .iter()
        .zip(covered)
        .map(|(f, c)| FactCoverage {
            label: if *c { CoverageLabel::Covered } else { CoverageLabel::NotCovered },
            evidence_claim_indices: if *c { vec![1] } else { vec![] },
            ..FactCoverage::not_covered(f.fact_id.clone())
        })
        .collect();
    let budgets = [SelectionRule::TopK { k_star: 1 }, SelectionRule::TopK { k_star: 5 }, SelectionRule::All];
    recall_at_budgets(
        &[BudgetInput {
            prompt_id: "p".into(),
            facts,
            coverage,
        }],
        &budgets,
    )
    .map_err(|e| e.to_string())
}

fn criterion_8() -> Check {
    // combined: f2 f1 f3 f4 f6 f5 / relevance: f1 f4 f2 ... / salience: f3 f2 f6 ...
    let ratings = [(5, 2), (4, 4), (1, 5), (5, 1), (1, 1), (2, 4)];
    let covered = [true, false, false, false, true, true];
    let table = budget_case(&ratings, &covered)?;
    for (row, k) in table.rows.iter().zip([Some(1), Some(5), None]) {
        let co = exhaustive_recall(&ratings, &covered, 1.0, 1.0, k);
        let rel = exhaustive_recall(&ratings, &covered, 1.0, 0.0, k);
        let sal = exhaustive_recall(&ratings, &covered, 0.0, 1.0, k);
        ensure!(
            row.co == Some(co) && row.rel == Some(rel) && row.sal == Some(sal),
            "K={}: got {:?}/{:?}/{:?}, oracle {co}/{rel}/{sal}",
            row.label,
            row.co,
            row.rel,
            row.sal
        );
        ensure!(row.delta_co_sal == Some(co - sal) && row.delta_co_rel == Some(co - rel), "K={} deltas", row.label);
    }
    let top1 = |a: f64, b: f64| exhaustive_recall(&ratings, &covered, a, b, Some(1));
    ensure!(top1(1.0, 0.0) != top1(0.0, 1.0), "instance does not separate the weightings");

    // r == s for every fact: all three rankings coincide
    let same = [(5, 5), (4, 4), (4, 4), (2, 2), (3, 3), (1, 1)];
    let table = budget_case(&same, &covered)?;
    let csv = emit_recall_budgets("same", &table);
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        ensure!(cols[3] == "0.0" && cols[4] == "0.0", "non-zero delta in `{line}`");
    }
    Ok("recall@{1,5,all} equals exhaustive recomputation; coinciding rankings give zero deltas".into())
}

// ---------------------------------------------------------------- 9

fn criterion_9(tmp: &Path) -> Check {
    let dir = tmp.join("isolation");
    std::fs::create_dir_all(&dir).unwrap();
    std::env::set_current_dir(&dir).unwrap();
    let mut script = common::golden_script();
    script.rules.insert(
        0,
        MockRule::error(
            RequestTag::PrecisionJudge,
            &["Charles Babbage invented the telephone."],
            MockErrorKind::Network,
        ),
    );
    let mut cfg = common::golden_config(Path::new("out"));
    cfg.retry = RetryPolicy::no_delay(2);
    let report = Runner::new(cfg.clone(), Arc::new(MockBackend::new(script)))
        .and_then(|r| r.run())
        .map_err(|e| e.to_string())?;
    ensure!(report.exit_code() == 2, "exit code {}", report.exit_code());
    ensure!(report.failed.len() == 1 && report.failed[0].prompt_id == "p2", "failed {:?}", report.failed);
    let ex = report.excluded;
    for (n, name) in [(ex.prec, "prec"), (ex.rec, "rec"), (ex.f1, "f1"), (ex.c_rate, "c_rate")] {
        ensure!(n == 1, "excluded {name} = {n}");
    }

    // the surviving prompt alone
    let single = dir.join("p1.jsonl");
    let line = std::fs::read_to_string(&cfg.prompts_path).unwrap().lines().next().unwrap().to_string();
    std::fs::write(&single, format!("{line}\n")).unwrap();
    let solo_cfg = factscope::runner::RunConfig {
        prompts_path: single,
        output_dir: dir.join("solo"),
        ..cfg
    };
    let solo = Runner::new(solo_cfg, Arc::new(MockBackend::new(common::golden_script())))
        .and_then(|r| r.run())
        .map_err(|e| e.to_string())?;
    let survivors: Vec<&PromptMetrics> = report.per_prompt.iter().collect();
    ensure!(survivors.len() == 1 && *survivors[0] == solo.per_prompt[0], "p1 metrics differ from its solo run");
    Ok("exit code 2, excluded 1, surviving prompt equals its single-prompt run".into())
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let cwd = std::env::current_dir().expect("cwd");
    let criteria: Vec<(&str, Criterion)> = vec![
        ("metric oracle equivalence", Box::new(criterion_1)),
        ("edge cases", Box::new(criterion_2)),
        ("ranking scale invariance", Box::new(criterion_3)),
        ("dedup properties", Box::new(criterion_4)),
        ("end-to-end golden run", Box::new(|| criterion_5(tmp.path()))),
        ("cache replay", Box::new(|| criterion_6(tmp.path()))),
        ("coverage schema and templates", Box::new(criterion_7)),
        ("recall by budget", Box::new(criterion_8)),
        ("failure isolation", Box::new(|| criterion_9(tmp.path()))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        std::env::set_current_dir(&cwd).expect("restore cwd");
        match outcome {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}. {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
