//! Real-data runs, detection metrics and hyperparameter optimization.

mod metrics;
mod optimize;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use metrics::{auprc, auroc, binarize, f1, f1_from_predictions, quantile, MetricError, ThresholdRule, DEFAULT_ANOMALY_RATE};
pub use optimize::{
    optimize, stage_validation_split, validate_proposal, FixedProposer, LlmProposer, OptimizationOutcome, OptimizationTrial, ParamProposer,
    ProposedBy, ScriptTrialRunner, TrialRunner, ValidationSplit, DEFAULT_OPTIMIZER_BUDGET, DEFAULT_SPLIT_SEED,
};

use crate::codegen::sandbox::{self, DataBinding, ExitKind, SandboxConfig, SandboxFailure, ScriptResult};
use crate::codegen::{classify_stderr, excerpt, ErrorCategory, GeneratedScript};
use crate::info_miner::{params_to_json, ParamMap};
use crate::registry::{ModelName, PrimaryMetric};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: ModelName,
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auroc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auprc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    pub n_test: usize,
    pub params: ParamMap,
    pub wall_time: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl EvaluationReport {
    pub fn metric(&self, metric: PrimaryMetric) -> Option<f64> {
        match metric {
            PrimaryMetric::Auroc => self.auroc,
            PrimaryMetric::F1 => self.f1,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{model} failed on real data ({}): {reason}", category.as_str())]
    RuntimeFailure { model: ModelName, category: ErrorCategory, reason: String, stderr_excerpt: String },
    #[error(transparent)]
    Sandbox(#[from] SandboxFailure),
    #[error("unusable parameter proposal: {0}")]
    ProposerFailure(String),
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Raw output of one real-data run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub result: ScriptResult,
    pub wall_time: f64,
}

/// Executes `script` against `data` (no sample substitution) and parses the
/// result file.
pub fn run_pipeline(
    sandbox: &SandboxConfig,
    script: &GeneratedScript,
    data: &DataBinding,
    params: Option<&ParamMap>,
    expected_len: Option<usize>,
) -> Result<PipelineRun, EvalError> {
    let params = params.map(params_to_json);
    let exec = sandbox::execute(sandbox, &script.source_text, data, params.as_ref(), expected_len)?;
    let failure = |category: ErrorCategory, reason: String| EvalError::RuntimeFailure {
        model: script.model.clone(),
        category,
        reason,
        stderr_excerpt: excerpt(&exec.stderr),
    };
    match (exec.exit, &exec.result) {
        (ExitKind::Code(0), Ok(result)) => Ok(PipelineRun { result: result.clone(), wall_time: exec.duration }),
        (ExitKind::Code(0), Err(reason)) => Err(failure(ErrorCategory::RuntimeError, format!("malformed_output: {reason}"))),
        (ExitKind::TimedOut, _) => Err(failure(ErrorCategory::Timeout, "time limit exceeded".into())),
        (ExitKind::Code(code), _) => Err(failure(classify_stderr(&exec.stderr), format!("exit status {code}"))),
        (ExitKind::Signal, _) => Err(failure(classify_stderr(&exec.stderr), "killed by a signal".into())),
    }
}

/// Metrics of one score vector; absent metrics come with a warning.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricSet {
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
    pub f1: Option<f64>,
    pub warnings: Vec<String>,
}

/// The F1 cut: flag the training prevalence when known, else the default
/// rate.
pub fn threshold_for(train_prevalence: Option<f64>) -> ThresholdRule {
    match train_prevalence {
        Some(p) if p > 0.0 && p < 1.0 => ThresholdRule::AnomalyRate(p),
        _ => ThresholdRule::AnomalyRate(DEFAULT_ANOMALY_RATE),
    }
}

pub fn score_metrics(scores: &[f64], labels: Option<&[u8]>, rule: ThresholdRule) -> MetricSet {
    let Some(labels) = labels else {
        return MetricSet::default();
    };
    let mut set = MetricSet::default();
    let mut warnings = Vec::new();
    match auroc(scores, labels) {
        Ok(v) => {
            if v < 0.5 {
                warnings.push(format!("AUROC {v:.4} is below chance; lower scores may mark anomalies in this pipeline"));
            }
            set.auroc = Some(v);
        }
        Err(e) => warnings.push(format!("AUROC unavailable: {e}")),
    }
    match auprc(scores, labels) {
        Ok(v) => set.auprc = Some(v),
        Err(e) => warnings.push(format!("AUPRC unavailable: {e}")),
    }
    match f1(scores, labels, rule) {
        Ok(v) => set.f1 = Some(v),
        Err(e) => warnings.push(format!("F1 unavailable: {e}")),
    }
    warnings.dedup();
    set.warnings = warnings;
    set
}

/// Runs the pipeline on real data and scores it against `labels`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    sandbox: &SandboxConfig,
    script: &GeneratedScript,
    data: &DataBinding,
    dataset: &str,
    params: &ParamMap,
    labels: Option<&[u8]>,
    expected_len: usize,
    rule: ThresholdRule,
) -> Result<EvaluationReport, EvalError> {
    let run = run_pipeline(sandbox, script, data, Some(params), Some(expected_len))?;
    let metrics = score_metrics(&run.result.scores, labels, rule);
    Ok(EvaluationReport {
        model: script.model.clone(),
        dataset: dataset.to_string(),
        auroc: metrics.auroc,
        auprc: metrics.auprc,
        f1: metrics.f1,
        n_test: run.result.scores.len(),
        params: params.clone(),
        wall_time: run.wall_time,
        warnings: metrics.warnings,
    })
}

pub fn report_path(results_dir: &Path, model: &ModelName, dataset: &str) -> PathBuf {
    results_dir.join(format!("{model}_{dataset}_report.json"))
}

pub fn trials_path(results_dir: &Path, model: &ModelName, dataset: &str) -> PathBuf {
    results_dir.join(format!("{model}_{dataset}_trials.json"))
}

fn write_json<T: Serialize>(path: PathBuf, value: &T) -> Result<PathBuf, EvalError> {
    let io = |source| EvalError::Io { path: path.clone(), source };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    std::fs::write(&path, text + "\n").map_err(io)?;
    Ok(path)
}

pub fn write_report(results_dir: &Path, report: &EvaluationReport) -> Result<PathBuf, EvalError> {
    write_json(report_path(results_dir, &report.model, &report.dataset), report)
}

pub fn write_trials(results_dir: &Path, model: &ModelName, dataset: &str, trials: &[OptimizationTrial]) -> Result<PathBuf, EvalError> {
    write_json(trials_path(results_dir, model, dataset), &trials)
}
