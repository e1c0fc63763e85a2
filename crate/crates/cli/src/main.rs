//! `pic`: corpus preparation, experiment runs, reports and the annotation
//! server behind one binary.
//!
//! Usage errors exit with 2 (clap), runtime failures with 1.

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pic_annotation::http::HttpOptions;
use pic_annotation::{AnnotationService, ServiceConfig};
use pic_core::corpus::{
    build_pairs, corpus_stats, evaluation_corpus, ingest_raw, load_annotated, load_pairs,
    write_pairs, FilterConfig, KeywordConfig, RawItem,
};
use pic_core::jsonl::{self, FileHeader};
use pic_core::metrics::{
    ablation_curve, delta_table, qualitative_diff, render_report, EvalReport, ReportFormat,
};
use pic_core::promptkit::PromptMethod;
use pic_core::records::{read_run_records, RunRecord};
use pic_gateway::{Clock, ProviderKind, ResponseCache, SystemClock, VirtualClock};
use pic_runner::{summarize, Experiment, ExperimentConfig, RunSummary};

const RAW_ITEMS_SCHEMA: &str = "pic.raw-items";

#[derive(Parser)]
#[command(name = "pic", version, about = "Implicit-toxicity prompting harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a raw crawl dump and keep well-formed items.
    Ingest(IngestArgs),
    /// Drop nonverbal, explicit and duplicate comments; emit pairs.
    Filter(FilterArgs),
    /// Label distribution of an annotated corpus.
    Stats(StatsArgs),
    /// Run the annotation server.
    Serve(ServeArgs),
    /// Run an experiment grid.
    Run(RunArgs),
    /// Run the cumulative step ablation.
    Ablate(AblateArgs),
    /// Accuracy tables from run records.
    Report(ReportArgs),
    /// Side-by-side reasoning of one pair across methods.
    Diff(DiffArgs),
    /// Inspect or purge the response cache.
    Cache(CacheArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Keyword list, one per line; defaults to the bundled list.
    #[arg(long)]
    keywords: Option<PathBuf>,
}

#[derive(Args)]
struct FilterArgs {
    /// Items written by `ingest`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Explicit-term blocklist; defaults to the bundled list.
    #[arg(long)]
    blocklist: Option<PathBuf>,
    #[arg(long)]
    keep_nonverbal: bool,
    /// Write the filter report as JSON here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    /// Annotated pairs; disagreements count towards the labelled total.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ServeArgs {
    /// Pairs to annotate, as written by `filter`.
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long, env = "PIC_DATA_DIR")]
    data_dir: PathBuf,
    #[arg(long, env = "PIC_ADDR", default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Built UI bundle to serve at `/`.
    #[arg(long)]
    ui: Option<PathBuf>,
    /// Name of the env var holding the shared bearer token.
    #[arg(long, default_value = "PIC_TOKEN")]
    token_env: String,
    /// Comma-separated annotator ids; empty accepts anyone.
    #[arg(long, value_delimiter = ',')]
    annotators: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    reviewers: Vec<String>,
    #[arg(long, default_value_t = 2)]
    required_annotators: usize,
    #[arg(long, default_value_t = 30)]
    lease_minutes: i64,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment TOML.
    #[arg(long)]
    config: PathBuf,
    /// `mock` replaces every model's provider with the deterministic mock.
    #[arg(long)]
    provider: Option<ProviderOverride>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ProviderOverride {
    Mock,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Step range, e.g. `1..=6` or `3`.
    #[arg(long, default_value = "1..=6")]
    steps: String,
    /// Write the accuracy curve as TSV here.
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(required = true)]
    records: Vec<PathBuf>,
    #[arg(long, default_value = "markdown")]
    format: String,
    /// Baselines for delta tables.
    #[arg(long, default_values_t = ["zero_shot".to_string(), "cot".to_string()])]
    baseline: Vec<String>,
    /// Accept record files produced by different configs.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiffArgs {
    records: PathBuf,
    #[arg(long)]
    pair: String,
    /// Restrict to one model.
    #[arg(long)]
    model: Option<String>,
}

#[derive(Args)]
struct CacheArgs {
    #[arg(long)]
    dir: PathBuf,
    #[command(subcommand)]
    action: CacheAction,
}

#[derive(Subcommand)]
enum CacheAction {
    /// Entry counts per model.
    Stats,
    /// One line per entry: hash, model, prompt hash.
    List,
    /// Delete entries, optionally only one model's.
    Purge {
        #[arg(long)]
        model: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Filter(a) => filter(a),
        Command::Stats(a) => stats(a),
        Command::Serve(a) => runtime()?.block_on(serve(a)),
        Command::Run(a) => runtime()?.block_on(run(a)),
        Command::Ablate(a) => runtime()?.block_on(ablate(a)),
        Command::Report(a) => report(a),
        Command::Diff(a) => diff(a),
        Command::Cache(a) => cache(a),
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Runtime::new()?)
}

fn ingest(a: IngestArgs) -> Result<()> {
    let keywords = match &a.keywords {
        Some(p) => KeywordConfig::load(p)?,
        None => KeywordConfig::bundled(),
    };
    let (items, report) = ingest_raw(&a.input, &keywords)?;
    jsonl::write_records(&a.out, Some(&FileHeader::new(RAW_ITEMS_SCHEMA)), &items)?;
    println!("accepted\t{}", report.accepted);
    println!("rejected\t{}", report.rejected.len());
    for d in &report.rejected {
        println!("  line {}: {}", d.line, d.message);
    }
    Ok(())
}

fn filter(a: FilterArgs) -> Result<()> {
    let (_, items) = jsonl::read_records::<RawItem>(&a.input)?;
    let cfg = match &a.blocklist {
        Some(p) => FilterConfig::with_blocklist_file(p, !a.keep_nonverbal)?,
        None => FilterConfig {
            drop_nonverbal: !a.keep_nonverbal,
            ..FilterConfig::default()
        },
    };
    let (pairs, report) = build_pairs(&items, &cfg);
    write_pairs(&a.out, &pairs)?;
    if let Some(path) = &a.report {
        let json = serde_json::to_string_pretty(&report)?;
        std::fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    println!("input\t{}", report.input);
    println!("nonverbal\t{}", report.nonverbal_count);
    println!("explicit\t{}", report.explicit_count);
    println!("duplicate\t{}", report.dedup_count);
    println!("output\t{}", report.output);
    Ok(())
}

fn stats(a: StatsArgs) -> Result<()> {
    let all = load_annotated(&a.corpus)?;
    let labeled = all.len();
    let corpus = evaluation_corpus(all);
    let stats = corpus_stats(&corpus, Some(labeled))?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&stats)?);
    } else {
        println!("labeled\t{labeled}");
        println!("{stats}");
    }
    Ok(())
}

async fn serve(a: ServeArgs) -> Result<()> {
    let pairs = load_pairs(&a.pairs)?;
    let cfg = ServiceConfig {
        required_annotators: a.required_annotators,
        lease_minutes: a.lease_minutes,
        annotators: a.annotators,
        reviewers: a.reviewers,
        ..ServiceConfig::default()
    };
    let svc = AnnotationService::open(&a.data_dir, pairs, cfg, Arc::new(pic_annotation::SystemClock))?;
    let token = std::env::var(&a.token_env).ok().filter(|t| !t.is_empty());
    if token.is_none() {
        tracing::warn!(var = %a.token_env, "no token set, the API is open");
    }
    let opts = HttpOptions {
        token,
        static_dir: a.ui,
    };
    println!("serving {} pairs on http://{}", svc.pairs().len(), a.addr);
    pic_annotation::http::serve(a.addr, Arc::new(svc), opts).await?;
    Ok(())
}

fn experiment_config(a: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&a.config)
        .with_context(|| format!("loading {}", a.config.display()))?;
    if let Some(ProviderOverride::Mock) = a.provider {
        for m in &mut cfg.models {
            m.provider = ProviderKind::Mock;
            m.endpoint = None;
            m.endpoint_env = None;
            m.api_key_env = None;
        }
    }
    if let Some(out) = &a.output {
        cfg.output = out.clone();
    }
    if let Some(c) = a.concurrency {
        cfg.concurrency = c;
    }
    if let Some(seed) = a.seed {
        cfg = cfg.with_seed(seed);
    }
    Ok(cfg)
}

/// Mock-only runs get a virtual clock so timestamps and latencies are
/// reproducible.
fn clock_for(exp: &Experiment) -> Arc<dyn Clock> {
    if exp.all_mock() {
        Arc::new(VirtualClock::default())
    } else {
        Arc::new(SystemClock::default())
    }
}

async fn execute(exp: &Experiment, kind: &str) -> Result<(Vec<RunRecord>, RunSummary)> {
    let gateway = exp.gateway(clock_for(exp))?;
    let records = exp.run(&gateway).await?;
    exp.write(&exp.config.output, &records, kind)?;
    let summary = summarize(&records, gateway.provider_calls());
    println!("records\t{}", summary.total);
    println!("errored\t{}", summary.errored);
    println!("unparsed\t{}", summary.unparsed);
    println!("provider_calls\t{}", summary.provider_calls);
    println!("config_hash\t{}", exp.config_hash);
    println!("output\t{}", exp.config.output.display());
    if !summary.within_budget(exp.config.error_budget) {
        bail!(
            "{} errored or unparsed records exceed the error budget of {}",
            summary.errored + summary.unparsed,
            exp.config.error_budget
        );
    }
    Ok((records, summary))
}

async fn run(a: RunArgs) -> Result<()> {
    let exp = Experiment::load(experiment_config(&a.exp)?)?;
    execute(&exp, "experiment").await?;
    Ok(())
}

fn parse_steps(s: &str) -> Result<std::ops::RangeInclusive<usize>> {
    let s = s.trim();
    let (lo, hi) = match s.split_once("..=") {
        Some((lo, hi)) => (lo, hi),
        None => match s.split_once('-') {
            Some((lo, hi)) => (lo, hi),
            None => (s, s),
        },
    };
    let lo: usize = lo.trim().parse().with_context(|| format!("bad step range {s:?}"))?;
    let hi: usize = hi.trim().parse().with_context(|| format!("bad step range {s:?}"))?;
    Ok(lo..=hi)
}

async fn ablate(a: AblateArgs) -> Result<()> {
    let steps = parse_steps(&a.steps)?;
    let exp = Experiment::load_ablation(experiment_config(&a.exp)?, steps)?;
    // Status lines are printed even when the run exceeds its error budget.
    let (records, _) = execute(&exp, "ablation").await?;
    let curve = ablation_curve(&records)?;
    let tsv = curve.to_tsv();
    match &a.curve {
        Some(path) => std::fs::write(path, &tsv).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{tsv}"),
    }
    Ok(())
}

/// Read several record files, refusing mixed config hashes unless forced.
fn read_all(paths: &[PathBuf], force: bool) -> Result<(Vec<RunRecord>, BTreeSet<String>)> {
    let mut records = Vec::new();
    let mut hashes = BTreeSet::new();
    for p in paths {
        let (header, mut recs) =
            read_run_records(p).with_context(|| format!("reading {}", p.display()))?;
        let hash = header
            .as_ref()
            .and_then(|h| h.get_str("config_hash"))
            .unwrap_or("unknown")
            .to_string();
        hashes.insert(hash);
        records.append(&mut recs);
    }
    if hashes.len() > 1 && !force {
        bail!(
            "record files come from {} different configs ({}); pass --force to combine them",
            hashes.len(),
            hashes.iter().cloned().collect::<Vec<_>>().join(", ")
        );
    }
    Ok((records, hashes))
}

fn report(a: ReportArgs) -> Result<()> {
    let format: ReportFormat = a.format.parse().map_err(anyhow::Error::msg)?;
    let (records, hashes) = read_all(&a.records, a.force)?;
    let main: Vec<RunRecord> = records
        .iter()
        .filter(|r| !matches!(r.method, PromptMethod::AblationCumulative(_)))
        .cloned()
        .collect();
    let mut out = String::new();
    let stamp = hashes.iter().cloned().collect::<Vec<_>>().join(",");
    match format {
        ReportFormat::Markdown => out.push_str(&format!(
            "<!-- config_hash={stamp} code_version={} -->\n",
            pic_runner::CODE_VERSION
        )),
        ReportFormat::Csv => out.push_str(&format!("# config_hash={stamp}\n")),
    }
    if !main.is_empty() {
        let eval = EvalReport::from_records(&main)?;
        let mut deltas = Vec::new();
        for b in &a.baseline {
            let method: PromptMethod = b.parse()?;
            if eval.methods().contains(&method) {
                deltas.push(delta_table(&eval, method)?);
            }
        }
        out.push_str(&render_report(&eval, &deltas, format));
    }
    let has_ablation = records
        .iter()
        .any(|r| matches!(r.method, PromptMethod::AblationCumulative(_)));
    if has_ablation {
        let curve = ablation_curve(&records)?;
        match format {
            ReportFormat::Markdown => {
                out.push_str("\n## Step ablation (%)\n\n```\n");
                out.push_str(&curve.to_tsv());
                out.push_str("```\n");
            }
            ReportFormat::Csv => {
                for ((model, k), acc) in &curve.points {
                    out.push_str(&format!("ablation,{model},{k},,{acc}\n"));
                }
            }
        }
    }
    match &a.out {
        Some(p) => std::fs::write(p, out).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{out}"),
    }
    Ok(())
}

fn diff(a: DiffArgs) -> Result<()> {
    let (_, records) = read_run_records(&a.records)?;
    let records: Vec<RunRecord> = records
        .into_iter()
        .filter(|r| a.model.as_deref().is_none_or(|m| r.model_name == m))
        .collect();
    print!("{}", qualitative_diff(&a.pair, &records)?);
    Ok(())
}

fn cache(a: CacheArgs) -> Result<()> {
    let cache = ResponseCache::new(&a.dir);
    let entries = cache.entries()?;
    let model_of = |hash: &str| cache.get(hash).map(|r| (r.model_name, r.prompt_hash));
    match a.action {
        CacheAction::Stats => {
            let mut per_model = std::collections::BTreeMap::<String, usize>::new();
            let mut unreadable = 0;
            for h in &entries {
                match model_of(h) {
                    Some((m, _)) => *per_model.entry(m).or_default() += 1,
                    None => unreadable += 1,
                }
            }
            println!("entries\t{}", entries.len());
            for (m, n) in per_model {
                println!("model\t{m}\t{n}");
            }
            if unreadable > 0 {
                println!("unreadable\t{unreadable}");
            }
        }
        CacheAction::List => {
            for h in &entries {
                let (m, p) = model_of(h).unwrap_or_else(|| ("?".into(), "?".into()));
                println!("{h}\t{m}\t{p}");
            }
        }
        CacheAction::Purge { model } => {
            let mut removed = 0;
            for h in &entries {
                let matches = match &model {
                    None => true,
                    Some(want) => model_of(h).is_some_and(|(m, _)| &m == want),
                };
                if matches && cache.remove(h)? {
                    removed += 1;
                }
            }
            println!("removed\t{removed}");
        }
    }
    Ok(())
}
