//! Library choice by modality and roster-constrained model recommendation.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::llm::{AgentName, GatewayError, LlmGateway, LlmRequest, Message, TokenLedger};
use crate::processor::DatasetProfile;
use crate::registry::{LibraryId, ModelName, Registry};

pub const DEFAULT_N_QUERIES: usize = 3;

/// One recommendation query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub raw: String,
    /// Answer to the constrained re-ask, when one was needed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reask: Option<String>,
    pub resolved: Option<ModelName>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub library: LibraryId,
    /// The user's resolved list, or every resolved vote in query order.
    pub models: Vec<ModelName>,
    /// Present only when the models were recommended.
    pub votes: Option<Vec<Vote>>,
}

impl SelectionOutcome {
    /// Models the pipeline runs: the user's list, or the plurality winner.
    pub fn pipeline_models(&self) -> Vec<ModelName> {
        match &self.votes {
            Some(votes) => plurality(votes).into_iter().collect(),
            None => self.models.clone(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SelectorError {
    #[error("no recommendation resolved to a {library} model; answers: {raw_answers:?}")]
    NoResolvableVote { library: LibraryId, raw_answers: Vec<String> },
    #[error("`{0}` is not a known model")]
    UnknownModel(String),
    #[error("{model} belongs to {actual}, but the data calls for {expected}")]
    LibraryMismatch { model: ModelName, expected: LibraryId, actual: LibraryId },
    #[error("{name} is excluded from {library}: {reason}")]
    ExcludedModel { name: String, library: LibraryId, reason: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

pub fn select_library(registry: &Registry, profile: &DatasetProfile) -> LibraryId {
    registry.library_for_modality(profile.modality)
}

/// Resolves user-named algorithms against `library`'s roster.
pub fn resolve_user_models(registry: &Registry, library: LibraryId, names: &[String]) -> Result<Vec<ModelName>, SelectorError> {
    names
        .iter()
        .map(|name| {
            if let Some((lib, reason)) = registry.exclusion_reason(name) {
                return Err(SelectorError::ExcludedModel { name: name.clone(), library: lib, reason: reason.to_string() });
            }
            match registry.resolve_model(name) {
                Some((lib, model)) if lib == library => Ok(model),
                Some((lib, model)) => Err(SelectorError::LibraryMismatch { model, expected: library, actual: lib }),
                None => Err(SelectorError::UnknownModel(name.clone())),
            }
        })
        .collect()
}

fn token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[A-Za-z][A-Za-z0-9_-]*[A-Za-z0-9]|[A-Za-z]").unwrap())
}

/// Finds a roster model in a free-form answer: the whole answer first, then
/// the first word that names one.
pub fn resolve_answer(registry: &Registry, library: LibraryId, answer: &str) -> Option<ModelName> {
    let in_library = |text: &str| match registry.resolve_model(text) {
        Some((lib, model)) if lib == library => Some(model),
        _ => None,
    };
    let trimmed = answer.trim().trim_matches(|c: char| "`'\"*.,;:!".contains(c) || c.is_whitespace());
    in_library(trimmed).or_else(|| token_re().find_iter(answer).find_map(|m| in_library(m.as_str())))
}

/// Most frequent resolved vote; ties go to the earliest query.
pub fn plurality(votes: &[Vote]) -> Option<ModelName> {
    let resolved: Vec<&ModelName> = votes.iter().filter_map(|v| v.resolved.as_ref()).collect();
    let count = |m: &ModelName| resolved.iter().filter(|&&r| r == m).count();
    let top = resolved.iter().map(|m| count(m)).max()?;
    resolved.iter().find(|m| count(m) == top).map(|m| (*m).clone())
}

const SELECTOR_SYSTEM: &str = "You are the Selector of an anomaly detection assistant. \
Recommend the single detector from the given roster that best fits the dataset. \
Answer with the model name only.";

fn roster(registry: &Registry, library: LibraryId) -> Vec<String> {
    registry.library(library).roster().map(|m| m.as_str().to_string()).collect()
}

/// Asks the reasoning model `n_queries` times, with one constrained re-ask
/// per unresolvable answer.
pub fn recommend_model(
    gateway: &LlmGateway,
    ledger: &mut TokenLedger,
    registry: &Registry,
    library: LibraryId,
    profile: &DatasetProfile,
    n_queries: usize,
) -> Result<SelectionOutcome, SelectorError> {
    let names = roster(registry, library);
    let context = json!({
        "task": "recommend_model",
        "library": library.as_str(),
        "modality": profile.modality.as_str(),
        "n_samples": profile.n_samples,
        "n_features": profile.n_features,
        "has_labels": profile.has_labels || profile.eval_has_labels(),
        "label_prevalence": profile.label_prevalence.or(profile.test.as_ref().and_then(|t| t.label_prevalence)),
        "roster": names,
    });
    let base = vec![
        Message::system(SELECTOR_SYSTEM),
        Message::user(format!(
            "Which {} model should be used for this dataset?\n```json\n{context}\n```",
            crate::info_miner::library_display_name(library)
        )),
    ];
    let model_id = gateway.models().reasoning.clone();
    let ask = |messages: Vec<Message>, ledger: &mut TokenLedger| -> Result<String, GatewayError> {
        let request = LlmRequest::new(AgentName::Selector, model_id.clone(), messages).with_temperature(None);
        Ok(gateway.complete(&request, ledger)?.content)
    };

    let mut votes = Vec::with_capacity(n_queries);
    for _ in 0..n_queries {
        let raw = ask(base.clone(), ledger)?;
        let mut vote = Vote { resolved: resolve_answer(registry, library, &raw), raw, reask: None };
        if vote.resolved.is_none() {
            let mut messages = base.clone();
            messages.push(Message::assistant(vote.raw.clone()));
            messages.push(Message::user(format!("Answer with exactly one name from this list: {}", names.join(", "))));
            let again = ask(messages, ledger)?;
            vote.resolved = resolve_answer(registry, library, &again);
            vote.reask = Some(again);
        }
        votes.push(vote);
    }
    let models: Vec<ModelName> = votes.iter().filter_map(|v| v.resolved.clone()).collect();
    if models.is_empty() {
        return Err(SelectorError::NoResolvableVote {
            library,
            raw_answers: votes.into_iter().flat_map(|v| std::iter::once(v.raw).chain(v.reask)).collect(),
        });
    }
    Ok(SelectionOutcome { library, models, votes: Some(votes) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{Backend, BackendError, LlmResponse, PriceTable};
    use crate::processor::{DataFormat, Supervision};
    use crate::registry::Modality;
    use std::sync::{Arc, Mutex};

    struct Answers(Mutex<Vec<&'static str>>, Mutex<Vec<LlmRequest>>);

    impl Backend for Answers {
        fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, BackendError> {
            self.1.lock().unwrap().push(request.clone());
            let mut a = self.0.lock().unwrap();
            if a.is_empty() {
                return Err(BackendError::Unavailable("exhausted".into()));
            }
            Ok(LlmResponse::text(a.remove(0)))
        }

        fn name(&self) -> &'static str {
            "answers"
        }
    }

    fn run(answers: Vec<&'static str>) -> (Result<SelectionOutcome, SelectorError>, Vec<LlmRequest>) {
        let backend = Arc::new(Answers(Mutex::new(answers), Mutex::new(Vec::new())));
        let gw = LlmGateway::new(backend.clone(), PriceTable::default());
        let mut ledger = TokenLedger::new("t");
        let out = recommend_model(&gw, &mut ledger, &Registry::bundled(), LibraryId::Pyod, &profile(), 3);
        let requests = backend.1.lock().unwrap().clone();
        (out, requests)
    }

    fn profile() -> DatasetProfile {
        DatasetProfile {
            modality: Modality::Multivariate,
            format: DataFormat::Mat,
            n_samples: 1831,
            n_features: 21,
            n_edges: None,
            has_labels: true,
            label_prevalence: Some(0.096),
            time_column: None,
            test: None,
            supervision: Supervision::SupervisedCapable,
        }
    }

    #[test]
    fn library_follows_modality() {
        let reg = Registry::bundled();
        let mut p = profile();
        assert_eq!(select_library(&reg, &p), LibraryId::Pyod);
        p.modality = Modality::Graph;
        assert_eq!(select_library(&reg, &p), LibraryId::Pygod);
        p.modality = Modality::TimeSeries;
        assert_eq!(select_library(&reg, &p), LibraryId::Tslib);
    }

    #[test]
    fn plurality_with_earliest_tie_break() {
        let (out, requests) = run(vec!["VAE", "**VAE**", "AE1SVM"]);
        let out = out.unwrap();
        assert_eq!(out.pipeline_models(), [ModelName::new("VAE")]);
        assert_eq!(out.models.len(), 3);
        assert!(requests.iter().all(|r| r.model_id == "o4-mini" && r.temperature.is_none()));

        let (out, _) = run(vec!["LUNAR", "I would pick DeepSVDD.", "AE"]);
        assert_eq!(out.unwrap().pipeline_models(), [ModelName::new("LUNAR")]);
    }

    #[test]
    fn one_constrained_reask_per_unresolved_vote() {
        let (out, requests) = run(vec!["IsolationForest", "VAE", "LUNAR", "LUNAR"]);
        let out = out.unwrap();
        let votes = out.votes.unwrap();
        assert_eq!(votes[0].reask.as_deref(), Some("VAE"));
        assert_eq!(votes[0].resolved, Some(ModelName::new("VAE")));
        assert_eq!(requests.len(), 4);
        assert!(requests[1].messages.last().unwrap().content.contains("exactly one name"));
    }

    #[test]
    fn no_resolvable_vote_surfaces_raw_answers() {
        let (out, _) = run(vec!["IForest", "IForest", "KNN", "KNN", "LOF", "LOF"]);
        match out.unwrap_err() {
            SelectorError::NoResolvableVote { raw_answers, .. } => assert_eq!(raw_answers.len(), 6),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn user_models_are_checked() {
        let reg = Registry::bundled();
        assert_eq!(resolve_user_models(&reg, LibraryId::Pyod, &["vae".into()]).unwrap(), [ModelName::new("VAE")]);
        assert!(matches!(resolve_user_models(&reg, LibraryId::Pyod, &["GAAN".into()]), Err(SelectorError::LibraryMismatch { .. })));
        assert!(matches!(resolve_user_models(&reg, LibraryId::Pygod, &["DOMINANT".into()]), Err(SelectorError::ExcludedModel { .. })));
        assert!(matches!(resolve_user_models(&reg, LibraryId::Pyod, &["IForest".into()]), Err(SelectorError::UnknownModel(_))));
    }
}
