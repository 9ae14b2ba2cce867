use std::io::{self, BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use ad_agent_core::benchmark::{model_selection_eval, run_benchmark, BenchmarkOptions, MetricTable};
use ad_agent_core::codegen::sandbox::{Interpreter, DEFAULT_INTERPRETER};
use ad_agent_core::codegen::{DEFAULT_MAX_ITERS, DEFAULT_OUT_DIR, DEFAULT_RESULTS_DIR};
use ad_agent_core::eval::DEFAULT_OPTIMIZER_BUDGET;
use ad_agent_core::info_miner::refresh_cache;
use ad_agent_core::llm::{Backend, LiveBackend, LiveConfig, LlmGateway, PriceTable, RecordingBackend, ReplayBackend, TokenLedger};
use ad_agent_core::memory::{LongTermCache, DEFAULT_CACHE_PATH, DEFAULT_TTL_DAYS};
use ad_agent_core::processor::DEFAULT_DATA_ROOT;
use ad_agent_core::registry::{LibraryId, ModelName, Registry};
use ad_agent_core::selector::DEFAULT_N_QUERIES;
use ad_agent_core::session::{run_session, SessionOptions, COMMAND_PROMPT};
use ad_agent_core::simulated::{stub_env, FaultPlan, SimulatedLlm};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "ad-agent", version, about = "Turn a plain-language request into a validated anomaly-detection script")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one session. The instruction is read from stdin when omitted.
    Run {
        instruction: Vec<String>,
        #[command(flatten)]
        pipeline: Pipeline,
        /// Where validated scripts are saved.
        #[arg(long, default_value = DEFAULT_OUT_DIR)]
        out_dir: PathBuf,
        /// Where evaluation reports and trial logs are written.
        #[arg(long, default_value = DEFAULT_RESULTS_DIR)]
        results_dir: PathBuf,
    },
    /// Run a dataset-by-model grid, one session per pair.
    Bench {
        #[arg(long)]
        library: LibraryId,
        /// Comma-separated dataset names; defaults to the library's list.
        #[arg(long, value_delimiter = ',')]
        datasets: Vec<String>,
        /// Comma-separated model names; defaults to the full roster.
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        /// Sessions run at once.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[command(flatten)]
        pipeline: Pipeline,
        /// Reports, scripts, results and per-pair logs go here.
        #[arg(long, default_value = "./benchmark")]
        out_dir: PathBuf,
    },
    /// Score repeated model recommendations against a metric table.
    SelectEval {
        #[arg(long)]
        library: LibraryId,
        /// CSV with dataset, model and metric columns; a benchmark CSV works.
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long, value_delimiter = ',')]
        datasets: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_N_QUERIES)]
        n_queries: usize,
        /// The scores are also written here as JSON.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Re-fetch stale documentation in the long-term cache.
    RefreshCache {
        /// Re-fetch every entry, fresh or not.
        #[arg(long)]
        all: bool,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Live,
    Replay,
    Record,
    /// Offline stand-in that answers from the bundled model catalog.
    Simulated,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RecordSource {
    Live,
    Simulated,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Faults {
    None,
    Typical,
}

#[derive(Args)]
struct Common {
    #[arg(long, value_enum, global = true, default_value = "live")]
    llm_backend: BackendKind,
    /// JSONL transcript read by replay and appended to by record.
    #[arg(long, global = true)]
    transcript: Option<PathBuf>,
    /// Backend whose answers record mode captures.
    #[arg(long, value_enum, global = true, default_value = "live")]
    record_source: RecordSource,
    /// Scripted generation faults of the simulated backend.
    #[arg(long, value_enum, global = true, default_value = "typical")]
    simulated_faults: Faults,
    #[arg(long, global = true, default_value = DEFAULT_CACHE_PATH)]
    cache_path: PathBuf,
    #[arg(long, global = true, default_value_t = DEFAULT_TTL_DAYS)]
    cache_ttl_days: i64,
    #[arg(long, global = true, default_value = DEFAULT_DATA_ROOT)]
    data_root: PathBuf,
    /// Registry JSON replacing the bundled library rosters.
    #[arg(long, global = true)]
    registry: Option<PathBuf>,
    /// Price table JSON replacing the bundled one.
    #[arg(long, global = true)]
    prices: Option<PathBuf>,
}

#[derive(Args)]
struct Pipeline {
    /// Score validated scripts on the evaluation data.
    #[arg(long)]
    evaluate: bool,
    /// Tune hyperparameters before the final evaluation; implies --evaluate.
    #[arg(long)]
    optimize: bool,
    /// Python command used for dry runs and evaluation.
    #[arg(long, default_value = DEFAULT_INTERPRETER)]
    interpreter: String,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    max_iters: u32,
    /// Seconds.
    #[arg(long, default_value_t = 300)]
    dry_run_timeout: u64,
    #[arg(long, default_value_t = DEFAULT_OPTIMIZER_BUDGET)]
    optimizer_budget: u32,
    /// Put the bundled offline detector stubs on the script PYTHONPATH.
    /// Implied by the simulated backend.
    #[arg(long)]
    python_stubs: bool,
}

impl Pipeline {
    fn session(&self, common: &Common, out_dir: PathBuf, results_dir: PathBuf) -> Result<SessionOptions> {
        let interpreter = Interpreter::parse(&self.interpreter).with_context(|| format!("bad --interpreter `{}`", self.interpreter))?;
        let stubs = self.python_stubs || common.llm_backend == BackendKind::Simulated;
        Ok(SessionOptions {
            evaluate: self.evaluate,
            optimize: self.optimize,
            out_dir,
            results_dir,
            data_root: common.data_root.clone(),
            interpreter,
            sandbox_env: if stubs { stub_env() } else { Vec::new() },
            max_iters: self.max_iters,
            dry_run_timeout: Duration::from_secs(self.dry_run_timeout),
            optimizer_budget: self.optimizer_budget,
            ..SessionOptions::default()
        })
    }
}

fn backend(common: &Common) -> Result<Arc<dyn Backend>> {
    let transcript = || common.transcript.as_deref().context("--transcript is required with the replay and record backends");
    let simulated = || -> Arc<dyn Backend> {
        let plan = match common.simulated_faults {
            Faults::None => FaultPlan::none(),
            Faults::Typical => FaultPlan::typical(),
        };
        Arc::new(SimulatedLlm::new(plan))
    };
    let live = || -> Result<Arc<dyn Backend>> { Ok(Arc::new(LiveBackend::new(LiveConfig::from_env()?))) };
    Ok(match common.llm_backend {
        BackendKind::Live => live()?,
        BackendKind::Simulated => simulated(),
        BackendKind::Replay => {
            let path = transcript()?;
            Arc::new(ReplayBackend::open(path).with_context(|| format!("cannot open {}", path.display()))?)
        }
        BackendKind::Record => {
            let inner = match common.record_source {
                RecordSource::Live => live()?,
                RecordSource::Simulated => simulated(),
            };
            Arc::new(RecordingBackend::new(inner, transcript()?)?)
        }
    })
}

fn gateway(common: &Common) -> Result<LlmGateway> {
    let prices = match &common.prices {
        Some(p) => PriceTable::from_path(p)?,
        None => PriceTable::default(),
    };
    Ok(LlmGateway::new(backend(common)?, prices))
}

fn registry(common: &Common) -> Result<Registry> {
    Ok(match &common.registry {
        Some(p) => Registry::from_path(p)?,
        None => Registry::bundled(),
    })
}

fn cache(common: &Common) -> Result<LongTermCache> {
    if common.cache_ttl_days < 0 {
        bail!("--cache-ttl-days must not be negative");
    }
    LongTermCache::open(&common.cache_path, chrono::Duration::days(common.cache_ttl_days))
        .with_context(|| format!("cannot open cache {}", common.cache_path.display()))
}

fn read_instruction(words: &[String]) -> Result<String> {
    if !words.is_empty() {
        return Ok(words.join(" "));
    }
    let stdin = io::stdin();
    if stdin.is_terminal() {
        eprintln!("{COMMAND_PROMPT}");
    }
    let mut line = String::new();
    stdin.lock().read_line(&mut line)?;
    if line.trim().is_empty() {
        bail!("no instruction given");
    }
    Ok(line)
}

fn pick_datasets(given: &[String], registry: &Registry, library: LibraryId) -> Vec<String> {
    if given.is_empty() {
        registry.library(library).datasets.clone()
    } else {
        given.to_vec()
    }
}

fn write_json(dir: &Path, name: &str, value: &impl serde::Serialize) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(path)
}

fn execute(cli: Cli) -> Result<u8> {
    let common = &cli.common;
    let registry = registry(common)?;
    let mut stdout = io::stdout().lock();
    match &cli.command {
        Command::Run { instruction, pipeline, out_dir, results_dir } => {
            let options = pipeline.session(common, out_dir.clone(), results_dir.clone())?;
            let (gateway, cache) = (gateway(common)?, cache(common)?);
            let instruction = read_instruction(instruction)?;
            let outcome = run_session(&gateway, &registry, &cache, &options, &instruction, &mut stdout);
            Ok(u8::try_from(outcome.exit_code()).unwrap_or(1))
        }
        Command::Bench { library, datasets, models, parallel, pipeline, out_dir } => {
            let session = pipeline.session(common, out_dir.join("generated_scripts"), out_dir.join("results"))?;
            let options = BenchmarkOptions { session, parallel: *parallel, log_dir: Some(out_dir.join("logs")) };
            let datasets = pick_datasets(datasets, &registry, *library);
            let models: Vec<ModelName> = if models.is_empty() {
                registry.library(*library).roster().cloned().collect()
            } else {
                models
                    .iter()
                    .map(|m| registry.resolve_model(m).map(|(_, name)| name).with_context(|| format!("unknown model `{m}`")))
                    .collect::<Result<_>>()?
            };
            let (gateway, cache) = (gateway(common)?, cache(common)?);
            let report = run_benchmark(&gateway, &registry, &cache, *library, &datasets, &models, &options)?;
            for r in &report.per_pair {
                let status = match (&r.failed_stage, &r.cause) {
                    (Some(stage), Some(cause)) => format!("failed in {}: {cause}", stage.banner_name()),
                    _ if r.success => "ok".to_string(),
                    _ => "failed".to_string(),
                };
                writeln!(
                    stdout,
                    "{:<12} {:<14} {:>7.1}s {:>6}/{:<5} ${:.5}  {status}",
                    r.dataset, r.model, r.generation_time, r.input_tokens, r.output_tokens, r.token_cost
                )?;
            }
            writeln!(stdout, "{}", report.summary())?;
            let (csv, json) = report.write(out_dir)?;
            writeln!(stdout, "Wrote {} and {}", csv.display(), json.display())?;
            Ok(0)
        }
        Command::SelectEval { library, metrics, datasets, n_queries, out_dir } => {
            let table = MetricTable::read_csv(metrics)?;
            let datasets = if datasets.is_empty() { table.datasets().map(str::to_string).collect() } else { datasets.clone() };
            let gateway = gateway(common)?;
            let mut ledger = TokenLedger::new("select-eval");
            let scores =
                model_selection_eval(&gateway, &mut ledger, &registry, *library, &common.data_root, &datasets, &table, *n_queries)?;
            writeln!(stdout, "{:<12} {:>9} {:>9} {:>9}  votes (best model)", "dataset", "votes", "best", "average")?;
            for s in &scores {
                let votes: Vec<&str> = s.votes.iter().map(ModelName::as_str).collect();
                writeln!(
                    stdout,
                    "{:<12} {:>9.4} {:>9.4} {:>9.4}  {} ({})",
                    s.dataset,
                    s.vote_mean,
                    s.best,
                    s.average_baseline,
                    votes.join(", "),
                    s.best_model
                )?;
            }
            let path = write_json(out_dir, &format!("selection_{library}.json"), &scores)?;
            writeln!(stdout, "Wrote {}", path.display())?;
            Ok(0)
        }
        Command::RefreshCache { all } => {
            let (gateway, cache) = (gateway(common)?, cache(common)?);
            let mut ledger = TokenLedger::new("refresh-cache");
            let done = refresh_cache(&gateway, &mut ledger, &cache, chrono::Utc::now(), *all);
            let mut failed = 0;
            for r in &done {
                match &r.result {
                    Ok(_) => writeln!(stdout, "Refreshed {}/{}", r.library, r.model)?,
                    Err(e) => {
                        failed += 1;
                        writeln!(stdout, "Kept old {}/{}: {e}", r.library, r.model)?;
                    }
                }
            }
            let totals = ledger.totals();
            writeln!(
                stdout,
                "{} of {} entries refreshed, {} web searches, ${:.6}",
                done.len() - failed,
                done.len(),
                totals.web_search_calls,
                totals.cost
            )?;
            Ok(u8::from(failed > 0))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).target(env_logger::Target::Stderr).init();
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
