//! Script generation, sandboxed dry runs and the repair loop.

pub mod preamble;
mod review;
mod sample;
pub mod sandbox;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

pub use review::{classify_stderr, excerpt, last_exception, review_execution, ErrorCategory, ReviewResult, Verdict};
pub use sample::{make_synthetic_sample, SampleContent, SyntheticSample};
pub use sandbox::{DataBinding, Execution, ExitKind, Interpreter, SandboxConfig, SandboxFailure, ScriptResult};

use crate::info_miner::{ModelDocSummary, ParamMap};
use crate::llm::{fenced_block, AgentName, GatewayError, LlmGateway, LlmRequest, Message, TokenLedger};
use crate::processor::{DatasetProfile, ExperimentConfig};
use crate::registry::{LibraryId, ModelName};
use preamble::{render_preamble, split_script, PreambleSpec, PREAMBLE_API};

pub const DEFAULT_OUT_DIR: &str = "./generated_scripts";
pub const DEFAULT_RESULTS_DIR: &str = "./results";
pub const DEFAULT_MAX_ITERS: u32 = 3;

/// `<out_dir>/<MODEL>_<stem>.py`
pub fn script_path(out_dir: &Path, model: &ModelName, stem: &str) -> PathBuf {
    out_dir.join(format!("{model}_{stem}.py"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedScript {
    pub model: ModelName,
    pub library: LibraryId,
    /// Preamble plus body.
    pub source_text: String,
    pub output_path: PathBuf,
    pub revision: u32,
    pub params_used: ParamMap,
}

impl GeneratedScript {
    /// The model-written part below the preamble.
    pub fn body(&self) -> &str {
        split_script(&self.source_text).1
    }

    pub fn save(&self) -> std::io::Result<()> {
        if let Some(parent) = self.output_path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&self.output_path, &self.source_text)
    }
}

/// Everything the generator reads from the session workspace.
#[derive(Debug, Clone, Copy)]
pub struct CodegenInput<'a> {
    pub config: &'a ExperimentConfig,
    pub profile: &'a DatasetProfile,
    pub library: LibraryId,
    pub doc: &'a ModelDocSummary,
    pub out_dir: &'a Path,
    pub results_dir: &'a Path,
}

impl CodegenInput<'_> {
    /// Documented defaults overridden by user parameters.
    pub fn params(&self) -> ParamMap {
        let mut params = self.doc.defaults();
        params.extend(self.config.user_params.iter().map(|(k, v)| (k.clone(), v.clone())));
        params
    }

    fn stem(&self) -> String {
        self.config.dataset_stem()
    }

    fn dataset_context(&self) -> serde_json::Value {
        let p = self.profile;
        json!({
            "stem": self.stem(),
            "format": p.format.as_str(),
            "modality": p.modality.as_str(),
            "n_samples": p.n_samples,
            "n_features": p.n_features,
            "n_edges": p.n_edges,
            "has_labels": p.has_labels,
            "eval_has_labels": p.eval_has_labels(),
            "n_eval": p.n_eval(),
        })
    }

    fn param_specs(&self) -> serde_json::Value {
        let specs: Vec<_> = self
            .doc
            .init_params
            .iter()
            .map(|p| {
                json!({
                    "name": p.name,
                    "type": p.type_text,
                    "default": p.default_value.as_ref().map(|v| v.to_json()),
                    "required": p.required,
                    "description": p.description,
                })
            })
            .collect();
        json!(specs)
    }

    fn assemble(&self, body: &str, revision: u32) -> GeneratedScript {
        let params = self.params();
        let model = &self.doc.model;
        let stem = self.stem();
        let result_path = self.results_dir.join(format!("{model}_{stem}_result.json"));
        let preamble = render_preamble(&PreambleSpec {
            model: model.as_str(),
            library: self.library,
            modality: self.profile.modality,
            train_path: &self.config.train_path,
            test_path: self.config.test_path.as_deref(),
            default_result_path: &result_path,
            params: &params,
            evaluate: self.config.evaluate || self.config.optimize,
        });
        let body = body.trim_matches('\n');
        GeneratedScript {
            model: model.clone(),
            library: self.library,
            source_text: format!("{preamble}{body}\n"),
            output_path: script_path(self.out_dir, model, &stem),
            revision,
            params_used: params,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CodegenError {
    /// The model call failed for good; the name follows the error taxonomy.
    #[error("model request failed: {0}")]
    PromptBudgetExceeded(#[from] GatewayError),
    #[error(transparent)]
    PipelineFailure(Box<PipelineFailure>),
    #[error("could not stage the synthetic sample: {0}")]
    Staging(#[source] std::io::Error),
}

/// A model whose script never passed its dry run.
#[derive(Debug, Clone, thiserror::Error)]
#[error("{model}: no executable pipeline after {} dry run(s){}", reviews.len(), aborted.as_ref().map(|a| format!("; aborted: {a}")).unwrap_or_default())]
pub struct PipelineFailure {
    pub model: ModelName,
    pub revisions: Vec<GeneratedScript>,
    pub reviews: Vec<ReviewResult>,
    /// Set when a sandbox failure stopped the loop early.
    pub aborted: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Validated {
    pub script: GeneratedScript,
    /// Every revision in order; the last one is `script`.
    pub revisions: Vec<GeneratedScript>,
    /// One per dry run; only the last one passed.
    pub reviews: Vec<ReviewResult>,
}

const GENERATOR_SYSTEM: &str = "You are the Code Generator of an anomaly detection assistant. \
Write the body of a Python script that trains and applies the requested detector. \
Reply with a single ```python block containing only the body.";

const REVIEWER_SYSTEM: &str = "You are the Code Reviewer of an anomaly detection assistant. \
A generated pipeline failed its dry run on synthetic data. Explain in one or two sentences \
what the Generator must change to fix it. Reply with the instruction only.";

fn body_from_reply(reply: &str) -> String {
    let code = fenced_block(reply, "python").unwrap_or(reply);
    split_script(code).1.trim_matches('\n').to_string()
}

fn ask_generator(
    gateway: &LlmGateway,
    ledger: &mut TokenLedger,
    instructions: &str,
    context: serde_json::Value,
) -> Result<String, GatewayError> {
    let prompt = format!("{instructions}\n\n{PREAMBLE_API}\n\n```json\n{context}\n```");
    let request = LlmRequest::new(
        AgentName::Generator,
        gateway.models().chat.clone(),
        vec![Message::system(GENERATOR_SYSTEM), Message::user(prompt)],
    );
    Ok(body_from_reply(&gateway.complete(&request, ledger)?.content))
}

/// First revision of the script for `input.doc.model`.
pub fn generate_script(gateway: &LlmGateway, ledger: &mut TokenLedger, input: &CodegenInput<'_>) -> Result<GeneratedScript, CodegenError> {
    let doc = input.doc;
    let context = json!({
        "task": "generate_script",
        "model": doc.model.as_str(),
        "library": input.library.as_str(),
        "dataset": input.dataset_context(),
        "params": crate::info_miner::params_to_json(&input.params()),
        "init_params": input.param_specs(),
        "usage_notes": doc.usage_notes,
        "evaluate": input.config.evaluate,
    });
    let instructions = format!(
        "Write the pipeline for {} from {} on the dataset described below. Construct the model with `**PARAMS` \
plus any required argument that has no default, fit it on the training data, score the test data and call \
`write_result` once.",
        doc.model,
        crate::info_miner::library_display_name(input.library)
    );
    let body = ask_generator(gateway, ledger, &instructions, context)?;
    Ok(input.assemble(&body, 0))
}

/// Asks the reviewer model for a repair instruction.
pub fn review_hint(
    gateway: &LlmGateway,
    ledger: &mut TokenLedger,
    script: &GeneratedScript,
    review: &ReviewResult,
) -> Result<String, GatewayError> {
    let context = json!({
        "task": "review_failure",
        "model": script.model.as_str(),
        "library": script.library.as_str(),
        "revision": script.revision,
        "error_category": review.error_category.as_str(),
        "stderr_excerpt": review.stderr_excerpt,
        "source": script.body(),
    });
    let request = LlmRequest::new(
        AgentName::Reviewer,
        gateway.models().chat.clone(),
        vec![Message::system(REVIEWER_SYSTEM), Message::user(format!("```json\n{context}\n```"))],
    );
    Ok(gateway.complete(&request, ledger)?.content.trim().to_string())
}

/// Next revision, prompted with the failing source, the stderr excerpt and
/// the documented parameters.
pub fn repair(
    gateway: &LlmGateway,
    ledger: &mut TokenLedger,
    input: &CodegenInput<'_>,
    script: &GeneratedScript,
    review: &ReviewResult,
) -> Result<GeneratedScript, CodegenError> {
    let context = json!({
        "task": "repair_script",
        "model": script.model.as_str(),
        "library": script.library.as_str(),
        "revision": script.revision,
        "error_category": review.error_category.as_str(),
        "stderr_excerpt": review.stderr_excerpt,
        "fix_hint": review.fix_hint,
        "source": script.body(),
        "dataset": input.dataset_context(),
        "params": crate::info_miner::params_to_json(&script.params_used),
        "init_params": input.param_specs(),
        "usage_notes": input.doc.usage_notes,
    });
    let instructions = format!(
        "The script body below failed its dry run with {}. Rewrite the whole body so it runs, \
following the reviewer's hint and the documented constructor signature.",
        review.error_category.as_str()
    );
    let body = ask_generator(gateway, ledger, &instructions, context)?;
    Ok(input.assemble(&body, script.revision + 1))
}

/// Runs `script` against the staged sample and classifies the outcome.
pub fn dry_run(
    sandbox: &SandboxConfig,
    script: &GeneratedScript,
    sample_path: &Path,
    expected_len: usize,
) -> Result<ReviewResult, SandboxFailure> {
    let exec = sandbox::execute(sandbox, &script.source_text, &DataBinding::Override(sample_path.to_path_buf()), None, Some(expected_len))?;
    Ok(review_execution(&exec, script.revision))
}

/// Generate, dry-run and repair until a revision passes or `max_iters` dry
/// runs have failed. One staged sample serves every iteration.
pub fn generate_validated(
    gateway: &LlmGateway,
    ledger: &mut TokenLedger,
    input: &CodegenInput<'_>,
    sandbox: &SandboxConfig,
    sample: &SyntheticSample,
    max_iters: u32,
) -> Result<Validated, CodegenError> {
    let staging = tempfile::Builder::new().prefix("ad-agent-sample-").tempdir().map_err(CodegenError::Staging)?;
    let sample_path = sample.write_to(staging.path()).map_err(CodegenError::Staging)?;

    let mut script = generate_script(gateway, ledger, input)?;
    let mut revisions = vec![script.clone()];
    let mut reviews: Vec<ReviewResult> = Vec::new();
    let failure = |revisions: Vec<GeneratedScript>, reviews: Vec<ReviewResult>, aborted: Option<String>| {
        CodegenError::PipelineFailure(Box::new(PipelineFailure { model: input.doc.model.clone(), revisions, reviews, aborted }))
    };
    for iteration in 0..max_iters.max(1) {
        let mut review = match dry_run(sandbox, &script, &sample_path, sample.n_eval()) {
            Ok(r) => r,
            Err(e) => return Err(failure(revisions, reviews, Some(e.to_string()))),
        };
        if review.passed() {
            reviews.push(review);
            return Ok(Validated { script, revisions, reviews });
        }
        review.fix_hint = review_hint(gateway, ledger, &script, &review)?;
        log::info!("{} revision {} failed with {}", script.model, script.revision, review.error_category.as_str());
        let repairable = iteration + 1 < max_iters;
        reviews.push(review);
        if repairable {
            script = repair(gateway, ledger, input, &script, reviews.last().expect("just pushed"))?;
            revisions.push(script.clone());
        }
    }
    Err(failure(revisions, reviews, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info_miner::{DocSource, ParamSpec, ParamValue};
    use crate::processor::{DataFormat, Supervision};
    use crate::registry::Modality;

    fn doc() -> ModelDocSummary {
        ModelDocSummary {
            model: ModelName::new("VAE"),
            library: LibraryId::Pyod,
            description: String::new(),
            init_params: vec![
                ParamSpec::new("contamination", "float", Some(ParamValue::Float(0.1))),
                ParamSpec::new("epoch_num", "int", Some(ParamValue::Int(30))),
            ],
            attributes: vec![],
            usage_notes: "from pyod.models.vae import VAE".into(),
            source: DocSource::Web,
            retrieved_at: "2025-06-10T00:00:00Z".parse().unwrap(),
        }
    }

    fn profile() -> DatasetProfile {
        DatasetProfile {
            modality: Modality::Multivariate,
            format: DataFormat::Mat,
            n_samples: 200,
            n_features: 21,
            n_edges: None,
            has_labels: true,
            label_prevalence: Some(0.1),
            time_column: None,
            test: None,
            supervision: Supervision::SupervisedCapable,
        }
    }

    #[test]
    fn assembled_script_uses_naming_and_overrides() {
        let mut config = ExperimentConfig {
            algorithms: vec!["VAE".into()],
            train_path: "./data/cardio.mat".into(),
            test_path: None,
            user_params: ParamMap::new(),
            evaluate: false,
            optimize: false,
            modality_hint: None,
        };
        config.user_params.insert("contamination".into(), ParamValue::Float(0.2));
        let d = doc();
        let p = profile();
        let input = CodegenInput {
            config: &config,
            profile: &p,
            library: LibraryId::Pyod,
            doc: &d,
            out_dir: Path::new("./generated_scripts"),
            results_dir: Path::new("./results"),
        };
        let s = input.assemble("\nprint('hi')\n\n", 0);
        assert_eq!(s.output_path, Path::new("./generated_scripts/VAE_cardio.py"));
        assert_eq!(s.params_used["contamination"], ParamValue::Float(0.2));
        assert_eq!(s.params_used["epoch_num"], ParamValue::Int(30));
        assert!(s.source_text.contains("PARAMS = {'contamination': 0.2, 'epoch_num': 30}\n"));
        assert_eq!(s.body(), "print('hi')\n");
    }

    #[test]
    fn reply_body_extraction() {
        assert_eq!(body_from_reply("Sure:\n```python\nx = 1\n```\n"), "x = 1");
        assert_eq!(body_from_reply("x = 2\n"), "x = 2");
        let with_preamble = format!("```python\nimport os\n{}\ny = 3\n```", preamble::BODY_MARKER);
        assert_eq!(body_from_reply(&with_preamble), "y = 3");
    }
}
