//! Feedback-driven hyperparameter search over a validated pipeline.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{evaluate, EvalError, EvaluationReport, ThresholdRule};
use crate::codegen::sandbox::{DataBinding, SandboxConfig};
use crate::codegen::GeneratedScript;
use crate::info_miner::{params_to_json, ModelDocSummary, ParamMap, ParamValue};
use crate::llm::{extract_json, AgentName, LlmGateway, LlmRequest, Message, TokenLedger};
use crate::registry::{LibraryId, PrimaryMetric};

pub const DEFAULT_OPTIMIZER_BUDGET: u32 = 5;
pub const DEFAULT_SPLIT_SEED: u64 = 0;
const VALIDATION_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProposedBy {
    Initial,
    Llm,
    Stub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrial {
    pub index: usize,
    pub params: ParamMap,
    pub report: EvaluationReport,
    pub proposed_by: ProposedBy,
}

/// Evaluates one parameter set on the assessment data.
pub trait TrialRunner {
    fn run(&mut self, params: &ParamMap) -> Result<EvaluationReport, EvalError>;
}

/// Suggests the next parameter set from the trials so far.
pub trait ParamProposer {
    fn kind(&self) -> ProposedBy;

    fn propose(&mut self, ledger: &mut TokenLedger, history: &[OptimizationTrial], metric: PrimaryMetric) -> Result<ParamMap, EvalError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationOutcome {
    pub metric: PrimaryMetric,
    /// Dense from 0; trial 0 holds the starting parameters.
    pub trials: Vec<OptimizationTrial>,
    pub best_index: usize,
    /// Proposal or run failures, one per consumed budget slot.
    pub skipped: Vec<String>,
}

impl OptimizationOutcome {
    pub fn best(&self) -> &OptimizationTrial {
        &self.trials[self.best_index]
    }

    pub fn best_params(&self) -> &ParamMap {
        &self.best().params
    }

    /// Best metric among trials `0..=k`, per trial.
    pub fn best_so_far(&self) -> Vec<Option<f64>> {
        let mut best: Option<f64> = None;
        self.trials
            .iter()
            .map(|t| {
                let v = t.report.metric(self.metric);
                if improves(v, best) {
                    best = v;
                }
                best
            })
            .collect()
    }
}

fn improves(candidate: Option<f64>, incumbent: Option<f64>) -> bool {
    match (candidate, incumbent) {
        (Some(c), Some(i)) => c > i,
        (Some(_), None) => true,
        _ => false,
    }
}

/// Index of the best trial; ties keep the lower index.
fn argmax(trials: &[OptimizationTrial], metric: PrimaryMetric) -> usize {
    let mut best = 0;
    for (i, t) in trials.iter().enumerate().skip(1) {
        if improves(t.report.metric(metric), trials[best].report.metric(metric)) {
            best = i;
        }
    }
    best
}

/// Trial 0 runs `initial`; each of the `budget` further slots asks the
/// proposer once. Returns trial 0's parameters unless a later trial is
/// strictly better.
pub fn optimize(
    runner: &mut dyn TrialRunner,
    proposer: &mut dyn ParamProposer,
    ledger: &mut TokenLedger,
    initial: &ParamMap,
    budget: u32,
    metric: PrimaryMetric,
) -> Result<OptimizationOutcome, EvalError> {
    let report = runner.run(initial)?;
    let mut trials = vec![OptimizationTrial { index: 0, params: initial.clone(), report, proposed_by: ProposedBy::Initial }];
    let mut skipped = Vec::new();
    for slot in 1..=budget {
        let params = match proposer.propose(ledger, &trials, metric) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("optimizer slot {slot}: {e}");
                skipped.push(format!("slot {slot}: {e}"));
                continue;
            }
        };
        match runner.run(&params) {
            Ok(report) => trials.push(OptimizationTrial { index: trials.len(), params, report, proposed_by: proposer.kind() }),
            Err(e) => {
                log::warn!("optimizer slot {slot}: {e}");
                skipped.push(format!("slot {slot}: {e}"));
            }
        }
    }
    let best_index = argmax(&trials, metric);
    Ok(OptimizationOutcome { metric, trials, best_index, skipped })
}

/// Checks a proposed JSON object against the documented parameters and
/// merges it over `base`. Integers are accepted where floats are expected.
pub fn validate_proposal(proposal: &serde_json::Value, doc: &ModelDocSummary, base: &ParamMap) -> Result<ParamMap, String> {
    let object = proposal.as_object().ok_or_else(|| "the proposal is not a JSON object".to_string())?;
    let mut merged = base.clone();
    for (name, raw) in object {
        let spec = doc.param(name);
        let reference = base.get(name).or_else(|| spec.and_then(|s| s.default_value.as_ref()));
        if spec.is_none() && !base.contains_key(name) {
            return Err(format!("`{name}` is not a documented parameter"));
        }
        let value: ParamValue = serde_json::from_value(raw.clone()).map_err(|_| format!("`{name}` has an unsupported value {raw}"))?;
        let value = match (reference, value) {
            (None | Some(ParamValue::None), v) => v,
            (Some(ParamValue::Float(_)), ParamValue::Int(i)) => ParamValue::Float(i as f64),
            (Some(ParamValue::Int(_)), ParamValue::Float(f)) if f.fract() == 0.0 && f.abs() < 9.0e15 => ParamValue::Int(f as i64),
            (_, ParamValue::None) => ParamValue::None,
            (Some(r), v) if r.kind() == v.kind() => v,
            (Some(r), v) => {
                return Err(format!("`{name}` expects {} but got {}", r.kind(), v.kind()));
            }
        };
        merged.insert(name.clone(), value);
    }
    Ok(merged)
}

const OPTIMIZER_SYSTEM: &str = "You are the Optimizer of an anomaly detection assistant. \
Given the documented constructor parameters and the results of earlier trials, propose the next \
parameter setting most likely to improve the target metric. Reply with one JSON object that maps \
parameter names to values.";

/// Asks the optimizer model for proposals, with one re-ask on an unusable
/// reply.
pub struct LlmProposer<'a> {
    pub gateway: &'a LlmGateway,
    pub doc: &'a ModelDocSummary,
    pub library: LibraryId,
}

impl ParamProposer for LlmProposer<'_> {
    fn kind(&self) -> ProposedBy {
        ProposedBy::Llm
    }

    fn propose(&mut self, ledger: &mut TokenLedger, history: &[OptimizationTrial], metric: PrimaryMetric) -> Result<ParamMap, EvalError> {
        let best = &history[argmax(history, metric)];
        let trials: Vec<_> = history
            .iter()
            .map(|t| json!({"index": t.index, "params": params_to_json(&t.params), "metric": t.report.metric(metric)}))
            .collect();
        let specs: Vec<_> = self
            .doc
            .init_params
            .iter()
            .map(|p| json!({"name": p.name, "type": p.type_text, "default": p.default_value.as_ref().map(|v| v.to_json())}))
            .collect();
        let metric_name = match metric {
            PrimaryMetric::Auroc => "auroc",
            PrimaryMetric::F1 => "f1",
        };
        let context = json!({
            "task": "propose_params",
            "model": self.doc.model.as_str(),
            "library": self.library.as_str(),
            "metric": metric_name,
            "init_params": specs,
            "trials": trials,
        });
        let mut messages = vec![Message::system(OPTIMIZER_SYSTEM), Message::user(format!("```json\n{context}\n```"))];
        let mut last_problem = String::new();
        for attempt in 0..2 {
            let request = LlmRequest::new(AgentName::Optimizer, self.gateway.models().chat.clone(), messages.clone());
            let reply = self.gateway.complete(&request, ledger).map_err(|e| EvalError::ProposerFailure(e.to_string()))?.content;
            let parsed = extract_json(&reply)
                .ok_or_else(|| "no JSON object in the reply".to_string())
                .and_then(|v| validate_proposal(&v, self.doc, &best.params));
            match parsed {
                Ok(params) => return Ok(params),
                Err(problem) if attempt == 0 => {
                    let names: Vec<&str> = self.doc.init_params.iter().map(|p| p.name.as_str()).collect();
                    messages.push(Message::assistant(reply));
                    messages.push(Message::user(format!(
                        "That reply was unusable: {problem}. Reply with only one JSON object whose keys are among: {}.",
                        names.join(", ")
                    )));
                    last_problem = problem;
                }
                Err(problem) => last_problem = problem,
            }
        }
        Err(EvalError::ProposerFailure(last_problem))
    }
}

/// Replays a fixed list of proposals, repeating the last one.
#[derive(Debug, Clone)]
pub struct FixedProposer {
    proposals: Vec<ParamMap>,
    next: usize,
}

impl FixedProposer {
    pub fn new(proposals: Vec<ParamMap>) -> Self {
        FixedProposer { proposals, next: 0 }
    }
}

impl ParamProposer for FixedProposer {
    fn kind(&self) -> ProposedBy {
        ProposedBy::Stub
    }

    fn propose(
        &mut self,
        _ledger: &mut TokenLedger,
        _history: &[OptimizationTrial],
        _metric: PrimaryMetric,
    ) -> Result<ParamMap, EvalError> {
        let Some(last) = self.proposals.len().checked_sub(1) else {
            return Err(EvalError::ProposerFailure("no proposals configured".into()));
        };
        let p = self.proposals[self.next.min(last)].clone();
        self.next += 1;
        Ok(p)
    }
}

/// Runs the generated script with overridden parameters.
pub struct ScriptTrialRunner<'a> {
    pub sandbox: &'a SandboxConfig,
    pub script: &'a GeneratedScript,
    pub data: DataBinding,
    pub dataset: String,
    pub labels: Vec<u8>,
    pub rule: ThresholdRule,
}

impl TrialRunner for ScriptTrialRunner<'_> {
    fn run(&mut self, params: &ParamMap) -> Result<EvaluationReport, EvalError> {
        evaluate(self.sandbox, self.script, &self.data, &self.dataset, params, Some(&self.labels), self.labels.len(), self.rule)
    }
}

/// Train/validation files carved from labeled training data.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSplit {
    pub train_path: PathBuf,
    pub val_path: PathBuf,
    pub val_labels: Vec<u8>,
    pub n_train: usize,
}

/// Stratified, seeded 80/20 split written as CSV under `dir`. `None` when
/// either class has fewer than two rows.
pub fn stage_validation_split(x: &Array2<f64>, y: &[u8], seed: u64, dir: &Path) -> std::io::Result<Option<ValidationSplit>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        if idx.len() < 2 {
            return Ok(None);
        }
        idx.shuffle(&mut rng);
        let n_val = ((idx.len() as f64 * VALIDATION_FRACTION).round() as usize).clamp(1, idx.len() - 1);
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    let write = |rows: &[usize], name: &str| -> std::io::Result<PathBuf> {
        let mut out: String = (0..x.ncols()).map(|j| format!("f{j},")).collect();
        out.push_str("label\n");
        for &r in rows {
            for v in x.row(r) {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{}", y[r]);
        }
        let path = dir.join(name);
        std::fs::write(&path, out)?;
        Ok(path)
    };
    Ok(Some(ValidationSplit {
        train_path: write(&train, "train_split.csv")?,
        val_path: write(&val, "val_split.csv")?,
        val_labels: val.iter().map(|&i| y[i]).collect(),
        n_train: train.len(),
    }))
}
