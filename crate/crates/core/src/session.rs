//! One instruction in, validated pipelines out.
//!
//! Runs Processor, Selector, Info Miner and the Generator/Reviewer loop in
//! order, then the optional Evaluator and Optimizer, printing stage banners
//! to the given writer. Everything written there is a function of the
//! instruction, the data and the model replies; wall-clock timings go to the
//! log instead so replayed transcripts are byte-identical.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chrono::Utc;
use serde::{Deserialize, Serialize};

use crate::codegen::{
    self, make_synthetic_sample, CodegenError, CodegenInput, DataBinding, GeneratedScript, Interpreter, SandboxConfig, Validated,
};
use crate::eval::{
    self, optimize, stage_validation_split, threshold_for, EvaluationReport, LlmProposer, OptimizationOutcome, ScriptTrialRunner,
};
use crate::info_miner::{get_model_info, CacheStatus, ModelDocSummary};
use crate::llm::{LlmGateway, TokenLedger};
use crate::memory::{LongTermCache, SessionWorkspace};
use crate::processor::{
    infer_modality, load_dataset, parse_instruction, prevalence, profile_datasets, DataContent, Dataset, DatasetProfile, ProcessorError,
};
use crate::registry::{ModelName, Registry};
use crate::selector::{recommend_model, resolve_user_models, select_library, DEFAULT_N_QUERIES};

pub const COMMAND_PROMPT: &str = "Enter command (e.g., 'Run IForest on glass_train.mat and glass_test.mat'):";
pub const SEPARATOR: &str = "--------------------------------------------------------------------------------";
pub const DEFAULT_EVAL_TIMEOUT: Duration = Duration::from_secs(3600);

#[derive(Debug, Clone)]
pub struct SessionOptions {
    pub evaluate: bool,
    pub optimize: bool,
    pub out_dir: PathBuf,
    pub results_dir: PathBuf,
    pub data_root: PathBuf,
    pub interpreter: Interpreter,
    /// Extra environment for every sandboxed run.
    pub sandbox_env: Vec<(String, String)>,
    pub max_iters: u32,
    pub dry_run_timeout: Duration,
    pub eval_timeout: Duration,
    pub optimizer_budget: u32,
    pub n_queries: usize,
    pub sample_seed: u64,
    pub split_seed: u64,
}

impl Default for SessionOptions {
    fn default() -> Self {
        SessionOptions {
            evaluate: false,
            optimize: false,
            out_dir: codegen::DEFAULT_OUT_DIR.into(),
            results_dir: codegen::DEFAULT_RESULTS_DIR.into(),
            data_root: crate::processor::DEFAULT_DATA_ROOT.into(),
            interpreter: Interpreter::default(),
            sandbox_env: Vec::new(),
            max_iters: codegen::DEFAULT_MAX_ITERS,
            dry_run_timeout: codegen::sandbox::DEFAULT_DRY_RUN_TIMEOUT,
            eval_timeout: DEFAULT_EVAL_TIMEOUT,
            optimizer_budget: eval::DEFAULT_OPTIMIZER_BUDGET,
            n_queries: DEFAULT_N_QUERIES,
            sample_seed: 0,
            split_seed: eval::DEFAULT_SPLIT_SEED,
        }
    }
}

impl SessionOptions {
    fn sandbox(&self, timeout: Duration) -> SandboxConfig {
        SandboxConfig { interpreter: self.interpreter.clone(), timeout, env: self.sandbox_env.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Processor,
    Selector,
    InfoMiner,
    CodeGenerator,
    CodeReviewer,
    Evaluator,
    Optimizer,
}

impl Stage {
    /// Name used inside `=== [..] ===` banners.
    pub fn banner_name(self) -> &'static str {
        match self {
            Stage::Processor => "Processor",
            Stage::Selector => "Selector",
            Stage::InfoMiner => "Info Miner",
            Stage::CodeGenerator => "Code Generator",
            Stage::CodeReviewer => "Code Reviewer",
            Stage::Evaluator => "Evaluator",
            Stage::Optimizer => "Optimizer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: Stage,
    /// `None` for failures before any model was chosen.
    pub model: Option<ModelName>,
    pub cause: String,
}

#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub workspace: SessionWorkspace,
    pub failures: Vec<StageFailure>,
    /// Saved scripts, one per validated model.
    pub saved: Vec<(ModelName, PathBuf)>,
    /// Seconds from instruction receipt to the last script saved, with model
    /// latency taken from the ledger.
    pub generation_time: Option<f64>,
    /// Seconds spent in evaluation and optimization, measured the same way.
    pub evaluation_time: Option<f64>,
    /// Ledger entries recorded before evaluation started.
    pub generation_calls: usize,
    evaluate: bool,
}

impl SessionOutcome {
    /// A review-passing script exists and, when evaluation was requested, one
    /// such script also has an evaluation report.
    pub fn succeeded(&self) -> bool {
        self.saved.iter().any(|(m, _)| !self.evaluate || self.workspace.evaluation(m).is_some())
    }

    pub fn exit_code(&self) -> i32 {
        if self.succeeded() {
            0
        } else {
            1
        }
    }

    pub fn ledger(&self) -> &TokenLedger {
        &self.workspace.ledger
    }
}

/// Stdout is best effort: a closed pipe must not abort the session.
macro_rules! say {
    ($out:expr, $($arg:tt)*) => {{
        let _ = writeln!($out, $($arg)*);
    }};
}

fn banner(out: &mut dyn Write, stage: Stage, text: &str) {
    say!(out, "=== [{}] {} ===", stage.banner_name(), text);
}

/// Model time as recorded, plus local work as measured.
struct Clock {
    started: Instant,
    wall_before: f64,
    latency_before: f64,
}

impl Clock {
    fn start(ledger: &TokenLedger) -> Self {
        Clock { started: Instant::now(), wall_before: ledger.backend_wall(), latency_before: ledger.totals().latency }
    }

    fn elapsed(&self, ledger: &TokenLedger) -> f64 {
        let local = self.started.elapsed().as_secs_f64() - (ledger.backend_wall() - self.wall_before);
        local.max(0.0) + (ledger.totals().latency - self.latency_before)
    }
}

struct Loaded {
    train: Dataset,
    test: Option<Dataset>,
    profile: DatasetProfile,
}

impl Loaded {
    fn eval_set(&self) -> &Dataset {
        self.test.as_ref().unwrap_or(&self.train)
    }
}

fn process(
    gateway: &LlmGateway,
    ws: &mut SessionWorkspace,
    options: &SessionOptions,
    instruction: &str,
    out: &mut dyn Write,
) -> Result<Loaded, ProcessorError> {
    let parsed = parse_instruction(gateway, &mut ws.ledger, instruction, &options.data_root)?;
    if parsed.used_fallback {
        log::warn!("instruction parsed by the rule-based fallback");
    }
    let mut config = parsed.config;
    config.evaluate |= options.evaluate;
    config.optimize |= options.optimize;
    say!(out, "{}", config.describe());
    let train = load_dataset(&config.train_path)?;
    let test = config.test_path.as_deref().map(load_dataset).transpose()?;
    let decision = infer_modality(gateway, &mut ws.ledger, &train, config.modality_hint)?;
    let profile = profile_datasets(&train, test.as_ref(), decision.modality)?;
    ws.set_config(config).expect("fresh workspace");
    ws.set_dataset_profile(profile.clone()).expect("config is set");
    Ok(Loaded { train, test, profile })
}

/// Runs one session and reports what it produced.
pub fn run_session(
    gateway: &LlmGateway,
    registry: &Registry,
    cache: &LongTermCache,
    options: &SessionOptions,
    instruction: &str,
    out: &mut dyn Write,
) -> SessionOutcome {
    let session_id = format!("session-{}", Utc::now().format("%Y%m%dT%H%M%S%.3fZ"));
    let mut ws = SessionWorkspace::new(session_id, instruction.trim());
    let clock = Clock::start(&ws.ledger);
    let mut outcome = SessionOutcome {
        workspace: ws.clone(),
        failures: Vec::new(),
        saved: Vec::new(),
        generation_time: None,
        evaluation_time: None,
        generation_calls: 0,
        evaluate: options.evaluate || options.optimize,
    };
    let fail = |outcome: &mut SessionOutcome, out: &mut dyn Write, stage: Stage, model: Option<&ModelName>, cause: String| {
        banner(out, stage, &format!("Failed: {cause}"));
        outcome.failures.push(StageFailure { stage, model: model.cloned(), cause });
    };

    say!(out, "=== [Main] Starting full pipeline ===");
    banner(out, Stage::Processor, "Processing user input");
    say!(out, "{COMMAND_PROMPT}");
    say!(out, "User: {}", instruction.trim());
    let loaded = match process(gateway, &mut ws, options, instruction, out) {
        Ok(l) => l,
        Err(e) => {
            fail(&mut outcome, out, Stage::Processor, None, e.to_string());
            outcome.generation_time = Some(clock.elapsed(&ws.ledger));
            outcome.generation_calls = ws.ledger.entries().len();
            return close(outcome, ws, 0, out);
        }
    };
    let config = ws.config().expect("processed").clone();
    outcome.evaluate = config.evaluate || config.optimize;
    say!(out, "=== [Processor] User input processing complete");
    say!(out, "{SEPARATOR}");

    banner(out, Stage::Selector, "Processing user input");
    banner(out, Stage::Selector, "Selecting package & algorithm");
    let library = select_library(registry, &loaded.profile);
    say!(out, "Package name: {library}");
    ws.set_selected_library(library).expect("profile is set");
    let selection = if config.algorithms.is_empty() {
        recommend_model(gateway, &mut ws.ledger, registry, library, &loaded.profile, options.n_queries)
            .map(|s| (s.pipeline_models(), s.votes))
    } else {
        resolve_user_models(registry, library, &config.algorithms).map(|m| (m, None))
    };
    let (models, votes) = match selection {
        Ok(s) => s,
        Err(e) => {
            fail(&mut outcome, out, Stage::Selector, None, e.to_string());
            outcome.generation_time = Some(clock.elapsed(&ws.ledger));
            outcome.generation_calls = ws.ledger.entries().len();
            return close(outcome, ws, 0, out);
        }
    };
    if let Some(votes) = &votes {
        let answers: Vec<&str> = votes.iter().map(|v| v.resolved.as_ref().map_or("-", |m| m.as_str())).collect();
        say!(out, "Recommendations: {}", answers.join(", "));
    }
    let names: Vec<&str> = models.iter().map(ModelName::as_str).collect();
    say!(out, "Algorithm: {}", names.join(", "));
    ws.set_selected_models(models.clone(), votes).expect("library is set");
    banner(out, Stage::Selector, "Selection complete");
    say!(out, "{SEPARATOR}");

    let sandbox = options.sandbox(options.dry_run_timeout);
    let sample = make_synthetic_sample(&loaded.profile, options.sample_seed);
    let mut validated: Vec<Validated> = Vec::new();
    for model in &models {
        let doc = match fetch_doc(gateway, &mut ws, cache, library, model, out) {
            Ok(doc) => doc,
            Err(cause) => {
                fail(&mut outcome, out, Stage::InfoMiner, Some(model), cause);
                say!(out, "{SEPARATOR}");
                continue;
            }
        };
        say!(out, "{SEPARATOR}");
        banner(out, Stage::CodeGenerator, &format!("Generating code for {model}"));
        let input = CodegenInput {
            config: &config,
            profile: &loaded.profile,
            library,
            doc: &doc,
            out_dir: &options.out_dir,
            results_dir: &options.results_dir,
        };
        let result = codegen::generate_validated(gateway, &mut ws.ledger, &input, &sandbox, &sample, options.max_iters);
        let (revisions, reviews) = match &result {
            Ok(v) => (v.revisions.clone(), v.reviews.clone()),
            Err(CodegenError::PipelineFailure(f)) => (f.revisions.clone(), f.reviews.clone()),
            Err(_) => (Vec::new(), Vec::new()),
        };
        for (i, review) in reviews.iter().enumerate() {
            banner(out, Stage::CodeReviewer, &format!("Validating for {model}"));
            if !review.passed() {
                say!(
                    out,
                    "Revision {} failed: {} ({})",
                    review.revision,
                    review.error_category.as_str(),
                    crate::codegen::last_exception(&review.stderr_excerpt)
                        .map_or_else(|| "no exception text".into(), |(kind, msg)| format!("{kind}: {msg}"))
                );
                if !review.fix_hint.is_empty() {
                    say!(out, "Reviewer: {}", review.fix_hint);
                }
                if i + 1 < revisions.len() {
                    banner(out, Stage::CodeGenerator, &format!("Revising code for {model}"));
                }
            }
        }
        for script in revisions {
            ws.push_script(script).expect("doc is stored");
        }
        for review in reviews {
            ws.push_review(model, review).expect("scripts are stored");
        }
        match result {
            Ok(v) => {
                banner(out, Stage::CodeReviewer, &format!("Validation completed for {model}"));
                if let Err(e) = v.script.save() {
                    fail(
                        &mut outcome,
                        out,
                        Stage::CodeGenerator,
                        Some(model),
                        format!("cannot save {}: {e}", v.script.output_path.display()),
                    );
                    continue;
                }
                banner(out, Stage::CodeGenerator, &format!("Saved code to {}", v.script.output_path.display()));
                outcome.saved.push((model.clone(), v.script.output_path.clone()));
                validated.push(v);
            }
            Err(CodegenError::PipelineFailure(f)) => {
                let stage = if f.aborted.is_some() { Stage::CodeGenerator } else { Stage::CodeReviewer };
                fail(&mut outcome, out, stage, Some(model), f.to_string());
            }
            Err(e) => fail(&mut outcome, out, Stage::CodeGenerator, Some(model), e.to_string()),
        }
    }
    outcome.generation_time = Some(clock.elapsed(&ws.ledger));
    outcome.generation_calls = ws.ledger.entries().len();
    log::info!("generation time {:.2}s", outcome.generation_time.unwrap_or_default());

    if outcome.evaluate && !validated.is_empty() {
        say!(out, "{SEPARATOR}");
        let eval_clock = Clock::start(&ws.ledger);
        for v in &validated {
            if let Err((stage, cause)) = evaluate_model(gateway, &mut ws, registry, options, &config, &loaded, &v.script, out) {
                fail(&mut outcome, out, stage, Some(&v.script.model), cause);
            }
        }
        outcome.evaluation_time = Some(eval_clock.elapsed(&ws.ledger));
        log::info!("evaluation time {:.2}s", outcome.evaluation_time.unwrap_or_default());
    }

    let n_models = models.len();
    close(outcome, ws, n_models, out)
}

/// Prints the usage summary and the final banner.
fn close(mut outcome: SessionOutcome, ws: SessionWorkspace, n_models: usize, out: &mut dyn Write) -> SessionOutcome {
    say!(out, "{SEPARATOR}");
    let totals = ws.ledger.totals();
    say!(
        out,
        "LLM usage: {} calls, {} input tokens, {} output tokens, {} web searches, ${:.6}",
        totals.calls,
        totals.input_tokens,
        totals.output_tokens,
        totals.web_search_calls,
        totals.cost
    );
    outcome.workspace = ws;
    say!(
        out,
        "=== [Main] Pipeline {}: {} of {} model(s) validated ===",
        if outcome.succeeded() { "complete" } else { "failed" },
        outcome.saved.len(),
        n_models
    );
    outcome
}

fn fetch_doc(
    gateway: &LlmGateway,
    ws: &mut SessionWorkspace,
    cache: &LongTermCache,
    library: crate::registry::LibraryId,
    model: &ModelName,
    out: &mut dyn Write,
) -> Result<ModelDocSummary, String> {
    let info = get_model_info(gateway, &mut ws.ledger, cache, library, model, Utc::now()).map_err(|e| e.to_string())?;
    match info.cache_status {
        CacheStatus::Hit => banner(out, Stage::InfoMiner, &format!("Using cached documentation for {model}")),
        CacheStatus::Miss(_) => {
            banner(out, Stage::InfoMiner, &format!("Querying documentation for {model}"));
            say!(out, "{}", info.raw_summary.as_deref().unwrap_or_default().trim_end());
            say!(out, "[Cache Updated] Stored new documentation for {model}");
        }
    }
    for w in &info.warnings {
        log::warn!("{model}: {w}");
    }
    banner(out, Stage::InfoMiner, &format!("Documentation retrieved for {model}"));
    ws.put_model_doc(info.doc.clone()).expect("model is selected");
    Ok(info.doc)
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

fn print_report(out: &mut dyn Write, report: &EvaluationReport) {
    say!(
        out,
        "AUROC: {}  AUPRC: {}  F1: {}  (n_test = {})",
        fmt_metric(report.auroc),
        fmt_metric(report.auprc),
        fmt_metric(report.f1),
        report.n_test
    );
    for w in &report.warnings {
        say!(out, "Warning: {w}");
    }
}

/// Evaluates one validated script on the real data, tuning it first when
/// requested.
#[allow(clippy::too_many_arguments)]
fn evaluate_model(
    gateway: &LlmGateway,
    ws: &mut SessionWorkspace,
    registry: &Registry,
    options: &SessionOptions,
    config: &crate::processor::ExperimentConfig,
    loaded: &Loaded,
    script: &GeneratedScript,
    out: &mut dyn Write,
) -> Result<(), (Stage, String)> {
    let model = &script.model;
    let stem = config.dataset_stem();
    let sandbox = options.sandbox(options.eval_timeout);
    let eval_set = loaded.eval_set();
    let labels = eval_set.eval_labels();
    let rule = threshold_for(loaded.train.train_labels().map(prevalence));
    let data = DataBinding::Real { train: config.train_path.clone(), test: config.test_path.clone() };
    let mut params = script.params_used.clone();

    if config.optimize {
        let metric = registry.library(script.library).primary_metric;
        banner(out, Stage::Optimizer, &format!("Tuning {model} (budget {})", options.optimizer_budget));
        let doc = ws.model_doc(model).expect("doc stored").clone();
        let staging = tempfile::tempdir().map_err(|e| (Stage::Optimizer, e.to_string()))?;
        let split = match (&loaded.train.content, loaded.train.train_labels(), labels) {
            (DataContent::Tabular { x, .. }, Some(y), Some(_)) => {
                stage_validation_split(x, y, options.split_seed, staging.path()).map_err(|e| (Stage::Optimizer, e.to_string()))?
            }
            _ => None,
        };
        let (trial_data, trial_labels) = match &split {
            Some(s) => (DataBinding::Real { train: s.train_path.clone(), test: Some(s.val_path.clone()) }, s.val_labels.clone()),
            None => {
                let Some(labels) = labels else {
                    return Err((Stage::Optimizer, "tuning needs labeled evaluation data".into()));
                };
                say!(out, "Warning: no labeled training split; trials are scored on the evaluation data and may overfit it");
                (data.clone(), labels.to_vec())
            }
        };
        let mut runner =
            ScriptTrialRunner { sandbox: &sandbox, script, data: trial_data, dataset: stem.clone(), labels: trial_labels, rule };
        let mut proposer = LlmProposer { gateway, doc: &doc, library: script.library };
        let outcome: OptimizationOutcome = optimize(&mut runner, &mut proposer, &mut ws.ledger, &params, options.optimizer_budget, metric)
            .map_err(|e| (Stage::Optimizer, e.to_string()))?;
        for (t, best) in outcome.trials.iter().zip(outcome.best_so_far()) {
            say!(
                out,
                "Trial {}: {} = {} (best so far {}) params {}",
                t.index,
                match metric {
                    crate::registry::PrimaryMetric::Auroc => "AUROC",
                    crate::registry::PrimaryMetric::F1 => "F1",
                },
                fmt_metric(t.report.metric(metric)),
                fmt_metric(best),
                crate::info_miner::params_to_python(&t.params)
            );
        }
        for s in &outcome.skipped {
            say!(out, "Skipped {s}");
        }
        params = outcome.best_params().clone();
        say!(out, "Best parameters: {}", crate::info_miner::params_to_python(&params));
        eval::write_trials(&options.results_dir, model, &stem, &outcome.trials).map_err(|e| (Stage::Optimizer, e.to_string()))?;
        ws.set_optimization(model, outcome.trials).map_err(|e| (Stage::Optimizer, e.to_string()))?;
        banner(out, Stage::Optimizer, &format!("Tuning complete for {model}"));
    }

    banner(out, Stage::Evaluator, &format!("Evaluating {model} on {stem}"));
    let report = eval::evaluate(&sandbox, script, &data, &stem, &params, labels, eval_set.n_eval(), rule)
        .map_err(|e| (Stage::Evaluator, e.to_string()))?;
    print_report(out, &report);
    let path = eval::write_report(&options.results_dir, &report).map_err(|e| (Stage::Evaluator, e.to_string()))?;
    say!(out, "Report: {}", path.display());
    ws.set_evaluation(report).map_err(|e| (Stage::Evaluator, e.to_string()))?;
    banner(out, Stage::Evaluator, &format!("Evaluation complete for {model}"));
    Ok(())
}

/// Resolves `data_root`-relative dataset names the way instructions do.
pub fn dataset_reference(data_root: &Path, name: &str) -> Option<PathBuf> {
    let dir = data_root.join(name);
    if dir.is_dir() {
        return Some(dir);
    }
    ["mat", "npz", "csv", "json"].iter().map(|ext| data_root.join(format!("{name}.{ext}"))).find(|p| p.is_file())
}
