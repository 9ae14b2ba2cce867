//! Per-session short-term memory shared by the agents.
//!
//! Fields are filled stage by stage; setters reject out-of-order writes and
//! never overwrite an earlier stage's entry. Script revisions and reviews
//! append.

use std::collections::BTreeMap;

use crate::codegen::{GeneratedScript, ReviewResult};
use crate::eval::{EvaluationReport, OptimizationTrial};
use crate::info_miner::ModelDocSummary;
use crate::llm::TokenLedger;
use crate::processor::{DatasetProfile, ExperimentConfig};
use crate::registry::{LibraryId, ModelName};
use crate::selector::Vote;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WorkspaceError {
    #[error("cannot set {field} before {requires}")]
    StageOrderViolation { field: &'static str, requires: &'static str },
    #[error("{field} is already set{}", model.as_ref().map(|m| format!(" for {m}")).unwrap_or_default())]
    AlreadySet { field: &'static str, model: Option<ModelName> },
    #[error("{model} is not a selected model")]
    UnselectedModel { model: ModelName },
    #[error("{model}: expected script revision {expected}, got {got}")]
    RevisionOutOfOrder { model: ModelName, expected: u32, got: u32 },
}

#[derive(Debug, Clone)]
pub struct SessionWorkspace {
    session_id: String,
    raw_instruction: String,
    config: Option<ExperimentConfig>,
    dataset_profile: Option<DatasetProfile>,
    selected_library: Option<LibraryId>,
    selected_models: Vec<ModelName>,
    recommendation_votes: Option<Vec<Vote>>,
    model_docs: BTreeMap<ModelName, ModelDocSummary>,
    scripts: BTreeMap<ModelName, Vec<GeneratedScript>>,
    reviews: BTreeMap<ModelName, Vec<ReviewResult>>,
    evaluation: BTreeMap<ModelName, EvaluationReport>,
    optimization: BTreeMap<ModelName, Vec<OptimizationTrial>>,
    pub ledger: TokenLedger,
}

fn require<T>(slot: &Option<T>, field: &'static str, requires: &'static str) -> Result<(), WorkspaceError> {
    match slot {
        Some(_) => Ok(()),
        None => Err(WorkspaceError::StageOrderViolation { field, requires }),
    }
}

fn once<T>(slot: &Option<T>, field: &'static str) -> Result<(), WorkspaceError> {
    match slot {
        Some(_) => Err(WorkspaceError::AlreadySet { field, model: None }),
        None => Ok(()),
    }
}

impl SessionWorkspace {
    pub fn new(session_id: impl Into<String>, raw_instruction: impl Into<String>) -> Self {
        let session_id = session_id.into();
        SessionWorkspace {
            ledger: TokenLedger::new(session_id.clone()),
            session_id,
            raw_instruction: raw_instruction.into(),
            config: None,
            dataset_profile: None,
            selected_library: None,
            selected_models: Vec::new(),
            recommendation_votes: None,
            model_docs: BTreeMap::new(),
            scripts: BTreeMap::new(),
            reviews: BTreeMap::new(),
            evaluation: BTreeMap::new(),
            optimization: BTreeMap::new(),
        }
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn raw_instruction(&self) -> &str {
        &self.raw_instruction
    }

    pub fn config(&self) -> Option<&ExperimentConfig> {
        self.config.as_ref()
    }

    pub fn dataset_profile(&self) -> Option<&DatasetProfile> {
        self.dataset_profile.as_ref()
    }

    pub fn selected_library(&self) -> Option<LibraryId> {
        self.selected_library
    }

    pub fn selected_models(&self) -> &[ModelName] {
        &self.selected_models
    }

    pub fn recommendation_votes(&self) -> Option<&[Vote]> {
        self.recommendation_votes.as_deref()
    }

    pub fn model_doc(&self, model: &ModelName) -> Option<&ModelDocSummary> {
        self.model_docs.get(model)
    }

    /// Every revision in order.
    pub fn scripts(&self, model: &ModelName) -> &[GeneratedScript] {
        self.scripts.get(model).map_or(&[], Vec::as_slice)
    }

    pub fn latest_script(&self, model: &ModelName) -> Option<&GeneratedScript> {
        self.scripts(model).last()
    }

    pub fn reviews(&self, model: &ModelName) -> &[ReviewResult] {
        self.reviews.get(model).map_or(&[], Vec::as_slice)
    }

    pub fn evaluation(&self, model: &ModelName) -> Option<&EvaluationReport> {
        self.evaluation.get(model)
    }

    pub fn optimization(&self, model: &ModelName) -> Option<&[OptimizationTrial]> {
        self.optimization.get(model).map(Vec::as_slice)
    }

    pub fn set_config(&mut self, config: ExperimentConfig) -> Result<(), WorkspaceError> {
        once(&self.config, "config")?;
        self.config = Some(config);
        Ok(())
    }

    pub fn set_dataset_profile(&mut self, profile: DatasetProfile) -> Result<(), WorkspaceError> {
        require(&self.config, "dataset_profile", "config")?;
        once(&self.dataset_profile, "dataset_profile")?;
        self.dataset_profile = Some(profile);
        Ok(())
    }

    pub fn set_selected_library(&mut self, library: LibraryId) -> Result<(), WorkspaceError> {
        require(&self.dataset_profile, "selected_library", "dataset_profile")?;
        once(&self.selected_library, "selected_library")?;
        self.selected_library = Some(library);
        Ok(())
    }

    /// `votes` is present only when the models were recommended.
    pub fn set_selected_models(&mut self, models: Vec<ModelName>, votes: Option<Vec<Vote>>) -> Result<(), WorkspaceError> {
        require(&self.selected_library, "selected_models", "selected_library")?;
        if !self.selected_models.is_empty() {
            return Err(WorkspaceError::AlreadySet { field: "selected_models", model: None });
        }
        self.selected_models = models;
        self.recommendation_votes = votes;
        Ok(())
    }

    fn check_selected(&self, model: &ModelName) -> Result<(), WorkspaceError> {
        if self.selected_models.contains(model) {
            Ok(())
        } else {
            Err(WorkspaceError::UnselectedModel { model: model.clone() })
        }
    }

    pub fn put_model_doc(&mut self, doc: ModelDocSummary) -> Result<(), WorkspaceError> {
        self.check_selected(&doc.model)?;
        if self.model_docs.contains_key(&doc.model) {
            return Err(WorkspaceError::AlreadySet { field: "model_docs", model: Some(doc.model) });
        }
        self.model_docs.insert(doc.model.clone(), doc);
        Ok(())
    }

    /// Appends the next revision; revisions must arrive as 0, 1, 2, ...
    pub fn push_script(&mut self, script: GeneratedScript) -> Result<(), WorkspaceError> {
        self.check_selected(&script.model)?;
        if !self.model_docs.contains_key(&script.model) {
            return Err(WorkspaceError::StageOrderViolation { field: "scripts", requires: "model_docs" });
        }
        let revisions = self.scripts.entry(script.model.clone()).or_default();
        let expected = revisions.len() as u32;
        if script.revision != expected {
            return Err(WorkspaceError::RevisionOutOfOrder { model: script.model, expected, got: script.revision });
        }
        revisions.push(script);
        Ok(())
    }

    pub fn push_review(&mut self, model: &ModelName, review: ReviewResult) -> Result<(), WorkspaceError> {
        self.check_selected(model)?;
        if !self.scripts.contains_key(model) {
            return Err(WorkspaceError::StageOrderViolation { field: "reviews", requires: "scripts" });
        }
        self.reviews.entry(model.clone()).or_default().push(review);
        Ok(())
    }

    pub fn set_evaluation(&mut self, report: EvaluationReport) -> Result<(), WorkspaceError> {
        self.check_selected(&report.model)?;
        if !self.scripts.contains_key(&report.model) {
            return Err(WorkspaceError::StageOrderViolation { field: "evaluation", requires: "scripts" });
        }
        if self.evaluation.contains_key(&report.model) {
            return Err(WorkspaceError::AlreadySet { field: "evaluation", model: Some(report.model) });
        }
        self.evaluation.insert(report.model.clone(), report);
        Ok(())
    }

    pub fn set_optimization(&mut self, model: &ModelName, trials: Vec<OptimizationTrial>) -> Result<(), WorkspaceError> {
        self.check_selected(model)?;
        if !self.scripts.contains_key(model) {
            return Err(WorkspaceError::StageOrderViolation { field: "optimization", requires: "scripts" });
        }
        if self.optimization.contains_key(model) {
            return Err(WorkspaceError::AlreadySet { field: "optimization", model: Some(model.clone()) });
        }
        self.optimization.insert(model.clone(), trials);
        Ok(())
    }

    /// Names of populated fields; only grows during a session.
    pub fn populated(&self) -> Vec<&'static str> {
        let mut out = vec!["session_id", "raw_instruction"];
        let checks: [(&'static str, bool); 10] = [
            ("config", self.config.is_some()),
            ("dataset_profile", self.dataset_profile.is_some()),
            ("selected_library", self.selected_library.is_some()),
            ("selected_models", !self.selected_models.is_empty()),
            ("recommendation_votes", self.recommendation_votes.is_some()),
            ("model_docs", !self.model_docs.is_empty()),
            ("scripts", !self.scripts.is_empty()),
            ("reviews", !self.reviews.is_empty()),
            ("evaluation", !self.evaluation.is_empty()),
            ("optimization", !self.optimization.is_empty()),
        ];
        out.extend(checks.iter().filter(|(_, set)| *set).map(|(name, _)| *name));
        out
    }
}
