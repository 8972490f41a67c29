use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use factscope::model::{ImportanceConfig, RunReport, SelectionRule};
use factscope::reference::SimilarityKind;
use factscope::report::{emit_label_breakdown, emit_recall_budgets, emit_table1, emit_tradeoff};
use factscope::retrieval::SourceKind;
use factscope::runner::{Artifacts, CoverageMode, RunConfig, Runner, Stage};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "factscope", version, about = "Precision and recall scoring for long-form LLM answers")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate responses for prompts that have none.
    Generate(RunArgs),
    /// Retrieve evidence and build reference fact sets.
    BuildRefs(RunArgs),
    /// Decompose responses into atomic claims.
    ExtractClaims(RunArgs),
    /// Verify claims and check fact coverage.
    Judge(RunArgs),
    /// Compute metrics and write the report, running any missing stage first.
    Score(RunArgs),
    /// Fresh run of every stage (keeps the response cache).
    Run(RunArgs),
    /// Continue an interrupted run from its output directory.
    Resume {
        dir: PathBuf,
        /// Use a scripted backend instead of the one in the saved config.
        #[arg(long)]
        mock_script: Option<PathBuf>,
    },
    /// Render comparison tables from one or more report.json files.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Table::Overview)]
        table: Table,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Table {
    /// Precision, recall and F1 per model and domain.
    Overview,
    /// Precision, recall and claim-to-fact ratio.
    Tradeoff,
    /// Claim label shares (CSV).
    Breakdown,
    /// Recall by budget and weighting (CSV, one run at a time).
    Budgets,
}

#[derive(Clone, Copy, ValueEnum)]
enum Similarity {
    Embedding,
    Jaccard,
}

#[derive(Clone, Copy, ValueEnum)]
enum Coverage {
    Claims,
    RawResponse,
}

/// Flags override the values from `--config`.
#[derive(Args, Default)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    run_id: Option<String>,
    /// Prompt JSONL (`prompt_id`/`id`, `query`, optional `response`).
    #[arg(long)]
    prompts: Option<PathBuf>,
    /// Output directory for artifacts and the report.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Local corpus JSONL searched with BM25.
    #[arg(long, conflicts_with_all = ["evidence", "search_url"])]
    corpus: Option<String>,
    /// Precomputed evidence JSONL.
    #[arg(long, conflicts_with = "search_url")]
    evidence: Option<String>,
    /// Search adapter endpoint.
    #[arg(long)]
    search_url: Option<String>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    chunk_chars: Option<usize>,
    /// `all`, `top-k:<k>` or `threshold:<min importance>`.
    #[arg(long)]
    selection: Option<SelectionRule>,
    /// Relevance weight.
    #[arg(long)]
    alpha: Option<f64>,
    /// Salience weight.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_enum)]
    similarity: Option<Similarity>,
    /// Dedup merge threshold.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_enum)]
    coverage_mode: Option<Coverage>,
    #[arg(long)]
    generator: Option<String>,
    #[arg(long)]
    extractor: Option<String>,
    #[arg(long)]
    judge: Option<String>,
    #[arg(long)]
    embedding_model: Option<String>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    cache_namespace: Option<String>,
    /// Scripted backend instead of HTTP.
    #[arg(long)]
    mock_script: Option<PathBuf>,
    #[arg(long)]
    model_label: Option<String>,
    #[arg(long)]
    domain_label: Option<String>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_path(path)?,
            None => RunConfig::default(),
        };
        set(&mut cfg.run_id, self.run_id);
        set(&mut cfg.prompts_path, self.prompts);
        set(&mut cfg.output_dir, self.out);
        for (kind, location) in [
            (SourceKind::LocalCorpus, self.corpus),
            (SourceKind::PrecomputedEvidence, self.evidence),
            (SourceKind::SearchAdapter, self.search_url),
        ] {
            if let Some(location) = location {
                cfg.knowledge.kind = kind;
                cfg.knowledge.location = location;
            }
        }
        set(&mut cfg.knowledge.top_k, self.top_k);
        set(&mut cfg.knowledge.chunk_chars, self.chunk_chars);
        set(&mut cfg.selection, self.selection);
        if self.alpha.is_some() || self.beta.is_some() {
            let w = cfg.importance.weights;
            cfg.importance.weights = ImportanceConfig::new(self.alpha.unwrap_or(w.alpha), self.beta.unwrap_or(w.beta))?;
        }
        if let Some(s) = self.similarity {
            cfg.dedup.similarity = match s {
                Similarity::Embedding => SimilarityKind::Embedding,
                Similarity::Jaccard => SimilarityKind::Jaccard,
            };
        }
        set(&mut cfg.dedup.tau, self.tau);
        if let Some(m) = self.coverage_mode {
            cfg.coverage_mode = match m {
                Coverage::Claims => CoverageMode::Claims,
                Coverage::RawResponse => CoverageMode::RawResponse,
            };
        }
        set(&mut cfg.models.generator, self.generator);
        set(&mut cfg.models.extractor, self.extractor);
        set(&mut cfg.models.judge, self.judge);
        set(&mut cfg.dedup.embedding_model, self.embedding_model);
        set(&mut cfg.max_in_flight, self.max_in_flight);
        set(&mut cfg.cache_namespace, self.cache_namespace);
        if self.cache_dir.is_some() {
            cfg.cache_dir = self.cache_dir;
        }
        if self.mock_script.is_some() {
            cfg.mock_script = self.mock_script;
        }
        if self.model_label.is_some() {
            cfg.model_label = self.model_label;
        }
        if self.domain_label.is_some() {
            cfg.domain_label = self.domain_label;
        }
        Ok(cfg)
    }
}

fn init_logging(verbose: u8, quiet: bool) {
    let default = match (quiet, verbose) {
        (true, _) => "error",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
}

fn summarize(report: &RunReport) -> u8 {
    let show = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{:.1}", 100.0 * x));
    println!(
        "{}: {}/{} prompts scored  prec {}  rec {}  f1 {}",
        report.run_id,
        report.n_scored,
        report.n_prompts,
        show(report.macro_prec),
        show(report.macro_rec),
        show(report.macro_f1),
    );
    for f in &report.failed {
        println!("  failed {} at {}: {}", f.prompt_id, f.stage, f.reason);
    }
    report.exit_code() as u8
}

fn stage(args: RunArgs, last: Stage) -> Result<u8> {
    let runner = Runner::from_config(args.into_config()?)?;
    if let Some(report) = runner.run_through(last)? {
        return Ok(summarize(&report));
    }
    let failures = Artifacts::load(&runner.config().output_dir)?.failures;
    if failures.is_empty() {
        Ok(0)
    } else {
        eprintln!("{} prompt(s) failed; see failures.jsonl", failures.len());
        Ok(2)
    }
}

fn read_report(path: &Path) -> Result<RunReport> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn report(paths: &[PathBuf], table: Table, out: Option<&Path>) -> Result<u8> {
    let reports = paths.iter().map(|p| read_report(p)).collect::<Result<Vec<_>>>()?;
    let text = match table {
        Table::Overview => emit_table1(&reports)?,
        Table::Tradeoff => emit_tradeoff(&reports)?,
        Table::Breakdown => emit_label_breakdown(&reports),
        Table::Budgets => {
            let mut text = String::new();
            for r in &reports {
                let Some(budgets) = &r.recall_budgets else {
                    bail!("report {} has no budget table", r.run_id);
                };
                let csv = emit_recall_budgets(&r.run_id, budgets);
                // keep one header across runs
                let skip = usize::from(!text.is_empty());
                for line in csv.lines().skip(skip) {
                    text.push_str(line);
                    text.push('\n');
                }
            }
            text
        }
    };
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn dispatch(command: Command) -> Result<u8> {
    match command {
        Command::Generate(a) => stage(a, Stage::Generate),
        Command::BuildRefs(a) => stage(a, Stage::Facts),
        Command::ExtractClaims(a) => stage(a, Stage::Claims),
        Command::Judge(a) => stage(a, Stage::Judge),
        Command::Score(a) => stage(a, Stage::Score),
        Command::Run(a) => {
            let runner = Runner::from_config(a.into_config()?)?;
            Ok(summarize(&runner.run()?))
        }
        Command::Resume { dir, mock_script } => {
            let mut cfg = RunConfig::from_run_dir(&dir)?;
            cfg.output_dir = dir;
            if mock_script.is_some() {
                cfg.mock_script = mock_script;
            }
            Ok(summarize(&Runner::from_config(cfg)?.resume()?))
        }
        Command::Report { reports, table, out } => report(&reports, table, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose, cli.quiet);
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
