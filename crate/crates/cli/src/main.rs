mod config;

use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ontorag_core::eval::{self, EvalMode, ReportFormat, SweepConfig};
use ontorag_core::ingest::{ingest, SourceManifest};
use ontorag_core::llm::{ChatProvider, ProviderConfig};
use ontorag_core::nl2sparql::ExampleBank;
use ontorag_core::pipeline::{self, PipelineConfig, PipelineError, QueryOutcome};
use ontorag_core::reasoner::{self, PairInput, StrategyConfig, StrategyKind};
use ontorag_core::review::ReviewModel;
use ontorag_core::Store;
use ontorag_service::ServiceContext;
use serde::Serialize;
use serde_json::json;

use crate::config::CliConfig;

/// Invalid input detected after argument parsing; exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Parser)]
#[command(
    name = "ontorag",
    version,
    about = "Ontology-grounded code mapping with LLM reasoning"
)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "ONTORAG_CONFIG")]
    config: Option<PathBuf>,
    /// Output format for stdout.
    #[arg(long, global = true, value_enum, env = "ONTORAG_FORMAT")]
    format: Option<Format>,
    /// Replay responses from a scripted mock instead of calling a provider.
    #[arg(long, global = true, env = "ONTORAG_MOCK_SCRIPT")]
    mock_script: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct StoreArg {
    /// N-Quads file holding the knowledge graph.
    #[arg(long, env = "ONTORAG_STORE")]
    store: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct ReviewArgs {
    /// Append-only decision log (JSON lines).
    #[arg(long, env = "ONTORAG_DECISION_LOG")]
    decision_log: Option<PathBuf>,
    /// Assessment cache (JSON lines).
    #[arg(long, env = "ONTORAG_ASSESSMENT_CACHE")]
    assessment_cache: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the sources listed in a manifest into the store.
    Ingest {
        #[arg(long, env = "ONTORAG_MANIFEST")]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        store: StoreArg,
        /// Fail when crosswalk rows point at unknown concepts.
        #[arg(long)]
        strict: bool,
    },
    /// Answer a question over the store.
    Query {
        #[arg(long)]
        nlq: String,
        #[command(flatten)]
        store: StoreArg,
        /// Print every generation attempt.
        #[arg(long)]
        show_trace: bool,
        #[command(flatten)]
        strategy: StrategyArgs,
    },
    /// Grade label pairs (TSV: label, label[, gold level]) into mapping levels.
    Assess {
        #[arg(long)]
        pairs: PathBuf,
        #[command(flatten)]
        strategy: StrategyArgs,
    },
    /// Run an evaluation sweep and write JSON, CSV and markdown reports.
    Eval {
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        dataset: PathBuf,
        /// TOML sweep definition (strategies, temperatures, repeats, workers).
        #[arg(long)]
        sweep: Option<PathBuf>,
        /// Overrides the sweep's repeat count.
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long, default_value = "eval-report")]
        out: PathBuf,
    },
    /// Run the review service until interrupted.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[command(flatten)]
        store: StoreArg,
        #[command(flatten)]
        review: ReviewArgs,
        /// Where POST /v1/export writes refined mappings.
        #[arg(long, env = "ONTORAG_EXPORT_PATH")]
        export_path: Option<PathBuf>,
        /// Grade unassessed candidates on the first listing.
        #[arg(long)]
        assess_on_list: bool,
        #[command(flatten)]
        strategy: StrategyArgs,
    },
    /// Write accepted mappings as N-Quads into the refined graph.
    Export {
        #[command(flatten)]
        store: StoreArg,
        #[command(flatten)]
        review: ReviewArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone, Default)]
struct StrategyArgs {
    #[arg(long, env = "ONTORAG_STRATEGY")]
    strategy: Option<StrategyKind>,
    #[arg(long, env = "ONTORAG_TEMPERATURE")]
    temperature: Option<f64>,
    #[arg(long, env = "ONTORAG_WORKERS")]
    workers: Option<usize>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Direct,
    Levels,
}

struct Ctx {
    config: CliConfig,
    format: Format,
    mock_script: Option<PathBuf>,
}

impl Ctx {
    fn store_path(&self, arg: &StoreArg) -> Result<PathBuf> {
        arg.store
            .clone()
            .or_else(|| self.config.store.clone())
            .ok_or_else(|| usage("no store given (use --store, ONTORAG_STORE or the config file)"))
    }

    fn existing_store(&self, arg: &StoreArg) -> Result<Store> {
        let path = self.store_path(arg)?;
        if !path.exists() {
            bail!("store {} does not exist; run `ontorag ingest` first", path.display());
        }
        Ok(Store::open(&path)?)
    }

    fn strategy(&self, args: &StrategyArgs) -> Result<(StrategyConfig, usize)> {
        let d = &self.config.strategy;
        let kind = args.strategy.or(d.kind).unwrap_or(StrategyKind::ZeroShot);
        let temperature = args
            .temperature
            .or(d.temperature)
            .unwrap_or(ontorag_core::llm::DEFAULT_TEMPERATURE);
        if !(0.0..=2.0).contains(&temperature) {
            return Err(usage(format!("temperature {temperature} is outside [0, 2]")));
        }
        let workers = args.workers.or(d.workers).unwrap_or(1).max(1);
        Ok((StrategyConfig::new(kind, temperature), workers))
    }

    fn provider(&self) -> Result<Arc<dyn ChatProvider>> {
        let mut config = self.config.provider.clone().unwrap_or_default();
        config.apply_env();
        if let Some(script) = &self.mock_script {
            config = ProviderConfig::mock(script);
        }
        Ok(config.build()?)
    }

    fn review(&self, store: &Store, args: &ReviewArgs) -> Result<ReviewModel> {
        let log = args
            .decision_log
            .clone()
            .or_else(|| self.config.decision_log.clone())
            .ok_or_else(|| usage("no decision log given (use --decision-log or the config file)"))?;
        let cache = args
            .assessment_cache
            .clone()
            .or_else(|| self.config.assessment_cache.clone());
        Ok(ReviewModel::open(store, &log, cache.as_deref())?)
    }

    fn emit<T: Serialize>(&self, value: &T, text: impl FnOnce() -> String) -> Result<()> {
        let mut out = std::io::stdout().lock();
        match self.format {
            Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(value)?)?,
            Format::Text => write!(out, "{}", text())?,
        }
        Ok(())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let config = match &cli.config {
        Some(path) => CliConfig::load(path).map_err(|e| usage(format!("{e:#}")))?,
        None => CliConfig::default(),
    };
    let format = match (cli.format, config.format.as_deref()) {
        (Some(f), _) => f,
        (None, None | Some("json")) => Format::Json,
        (None, Some("text")) => Format::Text,
        (None, Some(other)) => return Err(usage(format!("unknown format {other:?} in config"))),
    };
    let ctx = Ctx {
        config,
        format,
        mock_script: cli.mock_script,
    };
    match cli.command {
        Command::Ingest {
            manifest,
            store,
            strict,
        } => cmd_ingest(&ctx, manifest, &store, strict),
        Command::Query {
            nlq,
            store,
            show_trace,
            strategy,
        } => cmd_query(&ctx, &nlq, &store, show_trace, &strategy),
        Command::Assess { pairs, strategy } => cmd_assess(&ctx, &pairs, &strategy),
        Command::Eval {
            mode,
            dataset,
            sweep,
            repeats,
            out,
        } => cmd_eval(&ctx, mode, &dataset, sweep.as_deref(), repeats, &out),
        Command::Serve {
            port,
            host,
            store,
            review,
            export_path,
            assess_on_list,
            strategy,
        } => cmd_serve(
            &ctx,
            &host,
            port,
            &store,
            &review,
            export_path,
            assess_on_list,
            &strategy,
        ),
        Command::Export { store, review, out } => {
            let store = ctx.existing_store(&store)?;
            let model = ctx.review(&store, &review)?;
            let statements = model.export_refined(&out)?;
            ctx.emit(&json!({ "statements": statements, "path": out }), || {
                format!("wrote {statements} statements to {}\n", out.display())
            })?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn cmd_ingest(ctx: &Ctx, manifest: Option<PathBuf>, store_arg: &StoreArg, strict: bool) -> Result<ExitCode> {
    let manifest_path = manifest
        .or_else(|| ctx.config.manifest.clone())
        .ok_or_else(|| usage("no manifest given (use --manifest or the config file)"))?;
    let store_path = ctx.store_path(store_arg)?;
    let manifest = SourceManifest::load(&manifest_path)?;
    let store = Store::open(&store_path)?;
    let report = ingest(&manifest, &store)?;
    store.save(&store_path)?;
    ctx.emit(&report, || {
        let mut s = format!(
            "parsed {} records, emitted {} quads into {}\n",
            report.records_parsed,
            report.quads_emitted,
            store_path.display()
        );
        for d in &report.dangling_refs {
            s.push_str(&format!("dangling {:?} {} in {}\n", d.role, d.code, d.graph));
        }
        s
    })?;
    if strict && !report.dangling_refs.is_empty() {
        eprintln!("error: {} dangling references", report.dangling_refs.len());
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn render_outcome(outcome: &QueryOutcome, show_trace: bool) -> String {
    let mut s = String::new();
    if show_trace {
        for (i, a) in outcome.trace.attempts.iter().enumerate() {
            s.push_str(&format!("attempt {}: {:?}\n", i + 1, a.parse_outcome));
            if let Some(q) = &a.extracted_sparql {
                s.push_str(&format!("{q}\n"));
            }
            for issue in &a.validation_issues {
                s.push_str(&format!("  issue: {issue}\n"));
            }
        }
    }
    let table = &outcome.result;
    match table.boolean {
        Some(b) => s.push_str(&format!("{b}\n")),
        None => {
            s.push_str(&table.columns.join("\t"));
            s.push('\n');
            for row in &table.rows {
                let cells: Vec<&str> = row
                    .iter()
                    .map(|c| c.as_ref().map_or("", |t| t.string_value()))
                    .collect();
                s.push_str(&cells.join("\t"));
                s.push('\n');
            }
        }
    }
    for a in &outcome.assessments {
        s.push_str(&format!(
            "\n{} -> {}: level {}\n  {}\n",
            a.queried_code.as_deref().unwrap_or(&a.queried_label),
            a.retrieved_code.as_deref().unwrap_or(&a.retrieved_label),
            a.level,
            a.reasoning
        ));
    }
    if let Some(summary) = &outcome.summary {
        s.push_str(&format!("\nSummary:\n{summary}\n"));
    }
    s
}

fn cmd_query(ctx: &Ctx, nlq: &str, store: &StoreArg, show_trace: bool, strategy: &StrategyArgs) -> Result<ExitCode> {
    if nlq.trim().is_empty() {
        return Err(usage("--nlq must not be empty"));
    }
    let (strategy, workers) = ctx.strategy(strategy)?;
    let store = ctx.existing_store(store)?;
    let provider = ctx.provider()?;
    let config = PipelineConfig {
        strategy,
        workers,
        ..PipelineConfig::default()
    };
    match pipeline::run_query(nlq, &store, provider.as_ref(), &ExampleBank::default(), &config) {
        Ok(outcome) => {
            ctx.emit(&outcome, || render_outcome(&outcome, show_trace))?;
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            if let Some(trace) = e.trace() {
                eprintln!("{}", serde_json::to_string_pretty(trace)?);
            }
            Err(anyhow!(describe_pipeline_error(&e)))
        }
    }
}

fn describe_pipeline_error(e: &PipelineError) -> String {
    match e.trace() {
        Some(t) => format!("{e} (attempts: {})", t.attempts.len()),
        None => e.to_string(),
    }
}

fn read_pairs(path: &Path) -> Result<Vec<PairInput>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !(2..=3).contains(&fields.len()) || fields[0].trim().is_empty() || fields[1].trim().is_empty() {
            return Err(usage(format!(
                "{}:{}: expected two or three tab-separated fields",
                path.display(),
                i + 1
            )));
        }
        pairs.push(PairInput::labels(fields[0].trim(), fields[1].trim()));
    }
    if pairs.is_empty() {
        return Err(usage(format!("{} holds no pairs", path.display())));
    }
    Ok(pairs)
}

fn cmd_assess(ctx: &Ctx, path: &Path, strategy: &StrategyArgs) -> Result<ExitCode> {
    let pairs = read_pairs(path)?;
    let (strategy, workers) = ctx.strategy(strategy)?;
    let provider = ctx.provider()?;
    let outcome = reasoner::assess_pairs(&pairs, &strategy, provider.as_ref(), workers)?;
    let assessments: Vec<_> = outcome.assessments.iter().map(|(_, a)| a).collect();
    let failures = outcome.failures();
    ctx.emit(&json!({ "assessments": assessments, "failures": failures }), || {
        let mut s = String::new();
        for a in &assessments {
            s.push_str(&format!("{}\t{}\t{}\n", a.queried_label, a.retrieved_label, a.level));
        }
        for f in &failures {
            s.push_str(&format!("pair {} failed: {}\n", f.index + 1, f.error));
        }
        s
    })?;
    Ok(if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_eval(
    ctx: &Ctx,
    mode: ModeArg,
    dataset: &Path,
    sweep: Option<&Path>,
    repeats: Option<usize>,
    out: &Path,
) -> Result<ExitCode> {
    let mut sweep_config = match sweep {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            toml::from_str::<SweepConfig>(&text).map_err(|e| usage(format!("invalid sweep {}: {e}", path.display())))?
        }
        None => SweepConfig::default(),
    };
    if let Some(r) = repeats {
        sweep_config.repeats = r;
    }
    if sweep_config.strategies.is_empty() || sweep_config.temperatures.is_empty() || sweep_config.repeats == 0 {
        return Err(usage(
            "sweep needs at least one strategy, one temperature and one repeat",
        ));
    }
    let text = std::fs::read_to_string(dataset).with_context(|| format!("cannot read {}", dataset.display()))?;
    let (mode, direct, pairs) = match mode {
        ModeArg::Direct => (
            EvalMode::Direct,
            eval::parse_direct_dataset(&text).map_err(|e| usage(e.to_string()))?,
            Vec::new(),
        ),
        ModeArg::Levels => (
            EvalMode::Levels,
            Vec::new(),
            eval::parse_pair_dataset(&text).map_err(|e| usage(e.to_string()))?,
        ),
    };
    if direct.is_empty() && pairs.is_empty() {
        return Err(usage(format!("{} holds no records", dataset.display())));
    }
    let provider = ctx.provider()?;
    let report = eval::run_sweep(mode, &direct, &pairs, &sweep_config, provider.as_ref())?;
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut files = Vec::new();
    for (name, format) in [
        ("report.json", ReportFormat::Json),
        ("report.csv", ReportFormat::Csv),
        ("report.md", ReportFormat::Markdown),
    ] {
        let path = out.join(name);
        std::fs::write(&path, eval::render_report(&report, format))
            .with_context(|| format!("cannot write {}", path.display()))?;
        files.push(path);
    }
    let cells: Vec<_> = report
        .reports
        .iter()
        .map(|r| {
            json!({
                "strategy": r.strategy,
                "temperature": r.temperature,
                "mean_accuracy": r.mean_accuracy,
                "std_accuracy": r.std_accuracy,
                "errors": r.errors,
            })
        })
        .collect();
    ctx.emit(&json!({ "cells": cells, "files": files }), || {
        eval::render_report(&report, ReportFormat::Markdown)
    })?;
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_serve(
    ctx: &Ctx,
    host: &str,
    port: u16,
    store: &StoreArg,
    review: &ReviewArgs,
    export_path: Option<PathBuf>,
    assess_on_list: bool,
    strategy: &StrategyArgs,
) -> Result<ExitCode> {
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .map_err(|_| usage(format!("invalid listen address {host}:{port}")))?;
    let (strategy, workers) = ctx.strategy(strategy)?;
    let store = ctx.existing_store(store)?;
    let model = ctx.review(&store, review)?;
    let provider = ctx.provider()?;
    let service = ServiceContext {
        store: Arc::new(store),
        review: Arc::new(model),
        provider,
        bank: ExampleBank::default(),
        pipeline: PipelineConfig {
            strategy,
            workers,
            ..PipelineConfig::default()
        },
        assess_on_list,
        export_path: export_path.or_else(|| ctx.config.export_path.clone()),
    };
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("cannot listen on {addr}"))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        ontorag_service::serve(listener, service, ontorag_service::shutdown_signal()).await?;
        eprintln!("stopped");
        Ok(ExitCode::SUCCESS)
    })
}
