//! Instruction parsing, dataset ingestion and modality inference.

mod dataset;
pub mod mat;

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use dataset::{
    load_dataset, prevalence, profile_datasets, DataContent, DataFormat, Dataset, DatasetError, DatasetProfile, SplitSummary, Supervision,
};

use crate::info_miner::{ParamMap, ParamValue};
use crate::llm::{extract_json, AgentName, LlmGateway, LlmRequest, Message, TokenLedger};
use crate::registry::Modality;

pub const DEFAULT_DATA_ROOT: &str = "./data/";

/// Structured intent extracted from one instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Requested model names as written; empty means the selector chooses.
    pub algorithms: Vec<String>,
    pub train_path: PathBuf,
    #[serde(default)]
    pub test_path: Option<PathBuf>,
    #[serde(default)]
    pub user_params: ParamMap,
    #[serde(default)]
    pub evaluate: bool,
    #[serde(default)]
    pub optimize: bool,
    #[serde(default)]
    pub modality_hint: Option<Modality>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ProcessorError> {
        if self.train_path.as_os_str().is_empty() {
            return Err(ProcessorError::InvalidConfig("training dataset path is empty".into()));
        }
        if self.test_path.as_ref() == Some(&self.train_path) {
            return Err(ProcessorError::InvalidConfig("test dataset must differ from the training dataset".into()));
        }
        if let Some(bad) = self.user_params.keys().find(|k| !is_identifier(k)) {
            return Err(ProcessorError::InvalidConfig(format!("`{bad}` is not a parameter name")));
        }
        Ok(())
    }

    /// Stem of the training dataset, used in output file names.
    pub fn dataset_stem(&self) -> String {
        dataset_stem(&self.train_path)
    }

    /// The configuration block printed after parsing.
    pub fn describe(&self) -> String {
        let algos: Vec<String> = self.algorithms.iter().map(|a| ParamValue::Str(a.clone()).to_python()).collect();
        format!(
            "Experiment Configuration:\n  Algorithm: [{}]\n  Training Dataset: {}\n  Testing Dataset: {}\n  Parameters: {}",
            algos.join(", "),
            self.train_path.display(),
            self.test_path.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            crate::info_miner::params_to_python(&self.user_params),
        )
    }
}

pub fn dataset_stem(path: &Path) -> String {
    path.file_stem().or_else(|| path.file_name()).map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into())
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_') && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, thiserror::Error)]
pub enum ProcessorError {
    #[error("could not recover a dataset path from the instruction: {0}")]
    UnparseableInstruction(String),
    #[error("dataset not found: {}", .0.display())]
    MissingDataset(PathBuf),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("cannot decide modality for {file}: the file layout suggests {rule} but the model answered {llm:?}; add a hint such as \"time series\" to the instruction")]
    AmbiguousModality { file: String, rule: Modality, llm: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Intent as returned by the model before path resolution.
#[derive(Debug, Default, Deserialize)]
struct RawIntent {
    #[serde(default, alias = "algorithm")]
    algorithms: Vec<String>,
    #[serde(default)]
    train_path: Option<String>,
    #[serde(default)]
    test_path: Option<String>,
    #[serde(default, alias = "params")]
    parameters: serde_json::Map<String, serde_json::Value>,
    #[serde(default)]
    evaluate: bool,
    #[serde(default)]
    optimize: bool,
    #[serde(default)]
    modality_hint: Option<String>,
}

const PARSE_SYSTEM_PROMPT: &str = "You are the Processor of an anomaly detection assistant. \
Extract the experiment configuration from the user's command. Reply with one JSON object and nothing else, \
with keys: \"algorithms\" (list of model names exactly as written, empty if none), \"train_path\" (string), \
\"test_path\" (string or null), \"parameters\" (object of hyperparameter name to value), \"evaluate\" (bool, \
true only if the user asks for evaluation), \"optimize\" (bool, true only if the user asks for tuning or \
optimization), \"modality_hint\" (one of \"multivariate\", \"graph\", \"time_series\", or null). \
Keep file names exactly as written.";

fn regexes() -> &'static (Regex, Regex, Regex) {
    static RE: OnceLock<(Regex, Regex, Regex)> = OnceLock::new();
    RE.get_or_init(|| {
        (
            Regex::new(r"(?i)\brun\s+(?P<models>.*?)\s*\bon\s+(?P<train>[^\s,]+)(?:\s+and\s+(?P<test>[^\s,]+))?").unwrap(),
            Regex::new(r"(?i)[\w./~-]+\.(?:mat|csv|npz|json)\b|[\w./~-]*/[\w.-]+/?").unwrap(),
            Regex::new(r#"(?P<k>[A-Za-z_]\w*)\s*=\s*(?P<v>\[[^\]]*\]|'[^']*'|"[^"]*"|[^\s,;]+)"#).unwrap(),
        )
    })
}

/// Plain lowercase words after "and" are verbs ("and evaluate"), not data.
fn looks_like_path(token: &str) -> bool {
    token.contains(['.', '/', '\\', '_']) || token.chars().any(|c| c.is_ascii_uppercase() || c.is_ascii_digit())
}

fn trim_path_token(s: &str) -> String {
    s.trim_start_matches(['\'', '"', '`', '(']).trim_end_matches(['.', ',', ';', '\'', '"', '`', ')']).to_string()
}

fn keyword_flags(text: &str) -> (bool, bool, Option<Modality>) {
    let lower = text.to_ascii_lowercase();
    let evaluate = lower.contains("evaluat");
    let optimize = ["optimiz", "optimis", "tune", "tuning"].iter().any(|k| lower.contains(k));
    let hint = if lower.contains("time series") || lower.contains("time-series") || lower.contains("timeseries") {
        Some(Modality::TimeSeries)
    } else if lower.contains("graph") {
        Some(Modality::Graph)
    } else if lower.contains("tabular") || lower.contains("multivariate") {
        Some(Modality::Multivariate)
    } else {
        None
    };
    (evaluate, optimize, hint)
}

fn literal_param(raw: &str) -> ParamValue {
    let cleaned = raw.trim();
    match cleaned.parse::<py_literal::Value>() {
        Ok(v) => ParamValue::from_literal(&v),
        Err(_) => match cleaned.to_ascii_lowercase().as_str() {
            "true" => ParamValue::Bool(true),
            "false" => ParamValue::Bool(false),
            "null" | "none" => ParamValue::None,
            _ => ParamValue::Str(cleaned.trim_matches(['\'', '"']).to_string()),
        },
    }
}

fn json_param(value: &serde_json::Value) -> ParamValue {
    serde_json::from_value::<ParamValue>(value.clone()).unwrap_or_else(|_| ParamValue::Str(value.to_string()))
}

/// Deterministic parser for the canonical command shapes, e.g.
/// `Run VAE on cardio.mat` or `Run AE on a_train.mat and a_test.mat with epoch_num=5`.
pub fn parse_instruction_rules(text: &str) -> Option<RuleParse> {
    let (run_re, file_re, param_re) = regexes();
    let text = text.trim();
    if text.is_empty() {
        return None;
    }
    let (mut algorithms, mut train, mut test) = (Vec::new(), None, None);
    let mut tail = text;
    if let Some(c) = run_re.captures(text) {
        let models = c.name("models").map_or("", |m| m.as_str());
        algorithms = models
            .split([',', '/', '+'])
            .flat_map(|s| s.split(" and "))
            .map(|s| s.trim())
            .filter(|s| !s.is_empty() && !s.eq_ignore_ascii_case("a model") && !s.eq_ignore_ascii_case("anomaly detection"))
            .map(str::to_string)
            .collect();
        train = c.name("train").map(|m| trim_path_token(m.as_str()));
        test = c.name("test").map(|m| trim_path_token(m.as_str()));
        tail = &text[c.get(0).unwrap().end()..];
    }
    if train.is_none() {
        let mut files = file_re.find_iter(text).map(|m| trim_path_token(m.as_str()));
        train = files.next();
        test = files.next();
    }
    let train = train.filter(|t| !t.is_empty())?;
    let test = test.filter(|t| !t.is_empty() && *t != train && !t.contains('=') && looks_like_path(t));
    let mut user_params = ParamMap::new();
    for c in param_re.captures_iter(tail) {
        user_params.insert(c["k"].to_string(), literal_param(&c["v"]));
    }
    let (evaluate, optimize, modality_hint) = keyword_flags(text);
    Some(RuleParse { algorithms, train, test, user_params, evaluate, optimize, modality_hint })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleParse {
    pub algorithms: Vec<String>,
    pub train: String,
    pub test: Option<String>,
    pub user_params: ParamMap,
    pub evaluate: bool,
    pub optimize: bool,
    pub modality_hint: Option<Modality>,
}

/// Resolves a dataset reference: bare file names live under `data_root`,
/// anything with a directory component is taken as written.
pub fn resolve_data_path(raw: &str, data_root: &Path) -> PathBuf {
    let p = Path::new(raw.trim());
    let bare = p.parent().map_or(true, |d| d.as_os_str().is_empty());
    if bare && !p.is_absolute() {
        data_root.join(p)
    } else {
        p.to_path_buf()
    }
}

/// Outcome of instruction parsing, noting whether the rule fallback ran.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedInstruction {
    pub config: ExperimentConfig,
    pub used_fallback: bool,
}

/// Parses the instruction with the chat model, falling back to the rule
/// parser if the gateway fails or the reply is unusable. Referenced files
/// must exist.
pub fn parse_instruction(
    gateway: &LlmGateway,
    ledger: &mut TokenLedger,
    text: &str,
    data_root: &Path,
) -> Result<ParsedInstruction, ProcessorError> {
    if text.trim().is_empty() {
        return Err(ProcessorError::UnparseableInstruction("empty instruction".into()));
    }
    let request = LlmRequest::new(
        AgentName::Processor,
        gateway.models().chat.clone(),
        vec![Message::system(PARSE_SYSTEM_PROMPT), Message::user(text.trim())],
    );
    let from_llm = match gateway.complete(&request, ledger) {
        Ok(response) => extract_json(&response.content)
            .and_then(|v| serde_json::from_value::<RawIntent>(v).ok())
            .filter(|i| i.train_path.as_deref().is_some_and(|p| !p.trim().is_empty())),
        Err(e) => {
            log::warn!("processor model call failed ({e}); using rule-based parsing");
            None
        }
    };
    let used_fallback = from_llm.is_none();
    let (evaluate_kw, optimize_kw, hint_kw) = keyword_flags(text);
    let config = match from_llm {
        Some(intent) => ExperimentConfig {
            algorithms: intent.algorithms.into_iter().filter(|a| !a.trim().is_empty()).collect(),
            train_path: resolve_data_path(intent.train_path.as_deref().unwrap_or_default(), data_root),
            test_path: intent.test_path.filter(|t| !t.trim().is_empty()).map(|t| resolve_data_path(&t, data_root)),
            user_params: intent.parameters.iter().map(|(k, v)| (k.clone(), json_param(v))).collect(),
            evaluate: intent.evaluate || evaluate_kw,
            optimize: intent.optimize || optimize_kw,
            modality_hint: intent.modality_hint.and_then(|h| h.parse::<Modality>().ok()).or(hint_kw),
        },
        None => {
            let rule = parse_instruction_rules(text).ok_or_else(|| ProcessorError::UnparseableInstruction(text.trim().to_string()))?;
            ExperimentConfig {
                algorithms: rule.algorithms,
                train_path: resolve_data_path(&rule.train, data_root),
                test_path: rule.test.map(|t| resolve_data_path(&t, data_root)),
                user_params: rule.user_params,
                evaluate: rule.evaluate,
                optimize: rule.optimize,
                modality_hint: rule.modality_hint,
            }
        }
    };
    config.validate()?;
    for path in std::iter::once(&config.train_path).chain(config.test_path.as_ref()) {
        if !path.exists() {
            return Err(ProcessorError::MissingDataset(path.clone()));
        }
    }
    Ok(ParsedInstruction { config, used_fallback })
}

/// How the modality was decided.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityDecision {
    pub modality: Modality,
    /// Raw model answer when the layout alone was not decisive.
    #[serde(default)]
    pub llm_answer: Option<String>,
    #[serde(default)]
    pub from_hint: bool,
}

const MODALITY_SYSTEM_PROMPT: &str = "You are the Processor of an anomaly detection assistant. \
Decide whether a CSV file holds independent multivariate records or a time series. \
Reply with exactly one word: multivariate or time_series.";

/// Format rule first; tabular CSVs with a time-like first column are put to
/// the chat model, and a disagreement with the layout guess needs a user hint.
pub fn infer_modality(
    gateway: &LlmGateway,
    ledger: &mut TokenLedger,
    dataset: &Dataset,
    hint: Option<Modality>,
) -> Result<ModalityDecision, ProcessorError> {
    if let Some(forced) = dataset.format.forced_modality() {
        if let Some(h) = hint.filter(|h| *h != forced) {
            log::warn!("ignoring {h} hint: {} files always hold {forced} data", dataset.format.as_str());
        }
        return Ok(ModalityDecision { modality: forced, llm_answer: None, from_hint: false });
    }
    let Some(time_column) = &dataset.time_column else {
        return Ok(ModalityDecision {
            modality: hint.filter(|h| *h != Modality::Graph).unwrap_or(Modality::Multivariate),
            llm_answer: None,
            from_hint: hint.is_some_and(|h| h != Modality::Graph),
        });
    };
    let rule_guess = Modality::TimeSeries;
    let x = match &dataset.content {
        DataContent::Tabular { x, .. } => x,
        _ => unreachable!("csv files load as tables"),
    };
    let head: Vec<Vec<f64>> = x.rows().into_iter().take(5).map(|r| r.to_vec()).collect();
    let context = json!({
        "task": "infer_modality",
        "file": dataset.path.file_name().map(|f| f.to_string_lossy().into_owned()),
        "time_column": time_column,
        "n_rows": x.nrows(),
        "n_columns": x.ncols(),
        "head": head,
    });
    let request = LlmRequest::new(
        AgentName::Processor,
        gateway.models().chat.clone(),
        vec![
            Message::system(MODALITY_SYSTEM_PROMPT),
            Message::user(format!("```json\n{}\n```", serde_json::to_string_pretty(&context).unwrap())),
        ],
    );
    let answer = match gateway.complete(&request, ledger) {
        Ok(r) => r.content.trim().to_string(),
        Err(e) => {
            log::warn!("modality query failed ({e}); relying on the file layout");
            String::new()
        }
    };
    let parsed = answer
        .split_whitespace()
        .next()
        .map(|w| w.trim_matches(|c: char| !c.is_ascii_alphanumeric() && c != '_'))
        .and_then(|w| w.parse::<Modality>().ok());
    match (parsed, hint) {
        (Some(m), _) if m == rule_guess => Ok(ModalityDecision { modality: m, llm_answer: Some(answer), from_hint: false }),
        (_, Some(h)) if h != Modality::Graph => Ok(ModalityDecision { modality: h, llm_answer: Some(answer), from_hint: true }),
        _ => Err(ProcessorError::AmbiguousModality { file: dataset.path.display().to_string(), rule: rule_guess, llm: answer }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_parse_the_canonical_commands() {
        let r = parse_instruction_rules("Run VAE on cardio.mat").unwrap();
        assert_eq!(r.algorithms, ["VAE"]);
        assert_eq!(r.train, "cardio.mat");
        assert_eq!(r.test, None);
        assert!(r.user_params.is_empty());
        assert!(!r.evaluate && !r.optimize);

        let r = parse_instruction_rules("Run IForest on glass_train.mat and glass_test.mat").unwrap();
        assert_eq!(r.algorithms, ["IForest"]);
        assert_eq!(r.train, "glass_train.mat");
        assert_eq!(r.test.as_deref(), Some("glass_test.mat"));
    }

    #[test]
    fn rules_pick_up_params_and_flags() {
        let r =
            parse_instruction_rules("Run AE on cardio.mat with contamination=0.2, hidden=[64, 32] and evaluate then optimize it").unwrap();
        assert_eq!(r.user_params["contamination"], ParamValue::Float(0.2));
        assert_eq!(r.user_params["hidden"], ParamValue::List(vec![ParamValue::Int(64), ParamValue::Int(32)]));
        assert!(r.evaluate && r.optimize);

        let r = parse_instruction_rules("Detect anomalies in ./data/MSL/ as a time series").unwrap();
        assert!(r.algorithms.is_empty());
        assert_eq!(r.train, "./data/MSL/");
        assert_eq!(r.modality_hint, Some(Modality::TimeSeries));

        let r = parse_instruction_rules("Run GAAN on weibo.json and evaluate it").unwrap();
        assert_eq!(r.train, "weibo.json");
        assert_eq!(r.test, None);
        assert!(r.evaluate);
    }

    #[test]
    fn rules_reject_inputs_without_a_dataset() {
        assert!(parse_instruction_rules("").is_none());
        assert!(parse_instruction_rules("please help").is_none());
    }

    #[test]
    fn multiple_models() {
        let r = parse_instruction_rules("Run VAE, AE and DeepSVDD on cardio.mat").unwrap();
        assert_eq!(r.algorithms, ["VAE", "AE", "DeepSVDD"]);
    }

    #[test]
    fn data_root_resolution() {
        let root = Path::new("./data/");
        assert_eq!(resolve_data_path("cardio.mat", root), PathBuf::from("./data/cardio.mat"));
        assert_eq!(resolve_data_path("other/cardio.mat", root), PathBuf::from("other/cardio.mat"));
        assert_eq!(resolve_data_path("/abs/cardio.mat", root), PathBuf::from("/abs/cardio.mat"));
    }

    #[test]
    fn config_description_matches_the_session_layout() {
        let config = ExperimentConfig {
            algorithms: vec!["VAE".into()],
            train_path: "./data/cardio.mat".into(),
            test_path: None,
            user_params: ParamMap::new(),
            evaluate: false,
            optimize: false,
            modality_hint: None,
        };
        assert_eq!(
            config.describe(),
            "Experiment Configuration:\n  Algorithm: ['VAE']\n  Training Dataset: ./data/cardio.mat\n  Testing Dataset: \n  Parameters: {}"
        );
        assert_eq!(config.dataset_stem(), "cardio");
    }

    #[test]
    fn config_validation() {
        let mut config = ExperimentConfig {
            algorithms: vec![],
            train_path: "a.mat".into(),
            test_path: Some("a.mat".into()),
            user_params: ParamMap::new(),
            evaluate: false,
            optimize: false,
            modality_hint: None,
        };
        assert!(config.validate().is_err());
        config.test_path = None;
        config.user_params.insert("bad key".into(), ParamValue::Int(1));
        assert!(config.validate().is_err());
    }
}
