//! Uniform access to language-model completions and web search.
//!
//! Every agent talks to the model through [`LlmGateway`], which forwards the
//! request to a [`Backend`] (live HTTP, replay, record, or the offline
//! simulator) and appends exactly one [`TokenLedger`] entry per successful
//! call. No other module performs network activity.

mod ledger;
mod live;
mod pricing;
mod replay;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ledger::{LedgerEntry, LedgerTotals, TokenLedger};
pub use live::{LiveBackend, LiveConfig, API_BASE_ENV, API_KEY_ENV, DEFAULT_API_BASE};
pub use pricing::{ModelRates, PriceTable};
pub use replay::{request_key, RecordingBackend, ReplayBackend, TranscriptRecord};

pub const DEFAULT_CHAT_MODEL: &str = "gpt-4o";
pub const DEFAULT_REASONING_MODEL: &str = "o4-mini";
pub const DEFAULT_SEARCH_MODEL: &str = "gpt-4o-search-preview";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentName {
    Processor,
    Selector,
    InfoMiner,
    Generator,
    Reviewer,
    Evaluator,
    Optimizer,
}

impl AgentName {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentName::Processor => "processor",
            AgentName::Selector => "selector",
            AgentName::InfoMiner => "info_miner",
            AgentName::Generator => "generator",
            AgentName::Reviewer => "reviewer",
            AgentName::Evaluator => "evaluator",
            AgentName::Optimizer => "optimizer",
        }
    }

    /// Sampling temperature used when the caller does not override it.
    /// `None` leaves the provider default in place.
    pub fn default_temperature(self) -> Option<f64> {
        match self {
            AgentName::Processor | AgentName::Selector | AgentName::Generator | AgentName::Reviewer => Some(0.0),
            AgentName::InfoMiner | AgentName::Evaluator | AgentName::Optimizer => None,
        }
    }
}

impl fmt::Display for AgentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tool {
    WebSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    #[serde(rename = "agent_name")]
    pub agent: AgentName,
    pub model_id: String,
    pub messages: Vec<Message>,
    #[serde(default, rename = "tools_enabled")]
    pub tools: BTreeSet<Tool>,
    #[serde(default)]
    pub temperature: Option<f64>,
}

impl LlmRequest {
    pub fn new(agent: AgentName, model_id: impl Into<String>, messages: Vec<Message>) -> Self {
        LlmRequest { agent, model_id: model_id.into(), messages, tools: BTreeSet::new(), temperature: agent.default_temperature() }
    }

    pub fn with_tool(mut self, tool: Tool) -> Self {
        self.tools.insert(tool);
        self
    }

    pub fn with_temperature(mut self, temperature: Option<f64>) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let first = self.messages.first().ok_or_else(|| GatewayError::InvalidRequest("messages must not be empty".into()))?;
        if first.role == Role::Assistant {
            return Err(GatewayError::InvalidRequest("first message must come from the system or the user".into()));
        }
        if self.model_id.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("model id must not be empty".into()));
        }
        if let Some(t) = self.temperature {
            if !(t.is_finite() && t >= 0.0) {
                return Err(GatewayError::InvalidRequest(format!("temperature must be a finite non-negative number, got {t}")));
            }
        }
        Ok(())
    }

    /// Content of the last user message, which carries the task payload.
    pub fn last_user_content(&self) -> Option<&str> {
        self.messages.iter().rev().find(|m| m.role == Role::User).map(|m| m.content.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub content: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Seconds.
    pub latency: f64,
    #[serde(default)]
    pub web_search_calls: u32,
}

impl LlmResponse {
    pub fn text(content: impl Into<String>) -> Self {
        LlmResponse { content: content.into(), input_tokens: 0, output_tokens: 0, latency: 0.0, web_search_calls: 0 }
    }
}

/// Failures reported by a backend. Only `Transient` is retried.
#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transient transport failure: {0}")]
    Transient(String),
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("no recorded response for request {key} ({agent})")]
    ReplayMiss { key: String, agent: AgentName },
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("language model backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("replay transcript has no response for request {key} ({agent})")]
    ReplayMiss { key: String, agent: AgentName },
    #[error("web search unavailable: {0}")]
    SearchUnavailable(String),
    #[error("web search returned no usable documentation")]
    EmptyResult,
    #[error("corrupt transcript at line {line}: {reason}")]
    CorruptTranscript { line: usize, reason: String },
    #[error("transcript i/o error: {0}")]
    TranscriptIo(#[from] std::io::Error),
}

pub trait Backend: Send + Sync {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, BackendError>;

    fn name(&self) -> &'static str;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, BackendError> {
        (**self).complete(request)
    }

    fn name(&self) -> &'static str {
        (**self).name()
    }
}

/// Model ids used for each role in a session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelChoice {
    pub chat: String,
    pub reasoning: String,
    pub search: String,
}

impl Default for ModelChoice {
    fn default() -> Self {
        ModelChoice { chat: DEFAULT_CHAT_MODEL.into(), reasoning: DEFAULT_REASONING_MODEL.into(), search: DEFAULT_SEARCH_MODEL.into() }
    }
}

/// Cheap to clone; sessions share the backend and the read-only price table.
#[derive(Clone)]
pub struct LlmGateway {
    backend: Arc<dyn Backend>,
    prices: Arc<PriceTable>,
    models: ModelChoice,
}

impl fmt::Debug for LlmGateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmGateway").field("backend", &self.backend.name()).field("models", &self.models).finish()
    }
}

impl LlmGateway {
    pub fn new(backend: Arc<dyn Backend>, prices: PriceTable) -> Self {
        LlmGateway { backend, prices: Arc::new(prices), models: ModelChoice::default() }
    }

    pub fn with_models(mut self, models: ModelChoice) -> Self {
        self.models = models;
        self
    }

    pub fn models(&self) -> &ModelChoice {
        &self.models
    }

    pub fn prices(&self) -> &PriceTable {
        &self.prices
    }

    pub fn backend_name(&self) -> &'static str {
        self.backend.name()
    }

    /// Sends one request and bills it to `ledger`.
    pub fn complete(&self, request: &LlmRequest, ledger: &mut TokenLedger) -> Result<LlmResponse, GatewayError> {
        request.validate()?;
        let started = Instant::now();
        let result = match self.backend.complete(request) {
            Err(BackendError::Transient(first)) => {
                log::warn!("{} call failed transiently ({first}); retrying once", request.agent);
                self.backend.complete(request)
            }
            other => other,
        };
        ledger.add_backend_wall(started.elapsed().as_secs_f64());
        let mut response = match result {
            Ok(r) => r,
            Err(BackendError::Transient(msg)) | Err(BackendError::Unavailable(msg)) => return Err(GatewayError::BackendUnavailable(msg)),
            Err(BackendError::ReplayMiss { key, agent }) => return Err(GatewayError::ReplayMiss { key, agent }),
        };
        if !response.latency.is_finite() || response.latency < 0.0 {
            response.latency = 0.0;
        }
        if request.tools.contains(&Tool::WebSearch) && response.web_search_calls == 0 {
            // Search-enabled calls always bill at least one search.
            response.web_search_calls = 1;
        }
        let cost = self.prices.cost(&request.model_id, response.input_tokens, response.output_tokens, response.web_search_calls);
        ledger.record(LedgerEntry {
            agent: request.agent,
            model_id: request.model_id.clone(),
            input_tokens: response.input_tokens,
            output_tokens: response.output_tokens,
            web_search_calls: response.web_search_calls,
            latency: response.latency,
            cost,
        });
        Ok(response)
    }

    /// Runs a search-enabled summarization request on the search model.
    /// Returns the summary text and the call's latency in seconds.
    pub fn web_search_summarize(&self, instructions: &str, query: &str, ledger: &mut TokenLedger) -> Result<(String, f64), GatewayError> {
        let request =
            LlmRequest::new(AgentName::InfoMiner, self.models.search.clone(), vec![Message::system(instructions), Message::user(query)])
                .with_tool(Tool::WebSearch);
        let response = self.complete(&request, ledger).map_err(|e| match e {
            GatewayError::BackendUnavailable(msg) => GatewayError::SearchUnavailable(msg),
            other => other,
        })?;
        if response.content.trim().is_empty() {
            return Err(GatewayError::EmptyResult);
        }
        Ok((response.content, response.latency))
    }
}

/// Extracts the first fenced code block tagged with `lang` (or any fence when
/// `lang` is empty). Falls back to `None` when no fence is present.
pub fn fenced_block<'a>(text: &'a str, lang: &str) -> Option<&'a str> {
    let mut search_from = 0;
    while let Some(rel) = text[search_from..].find("```") {
        let open = search_from + rel;
        let after = &text[open + 3..];
        let line_end = after.find('\n')?;
        let tag = after[..line_end].trim();
        let body_start = open + 3 + line_end + 1;
        let close = text[body_start..].find("```")?;
        if lang.is_empty() || tag.eq_ignore_ascii_case(lang) {
            return Some(&text[body_start..body_start + close]);
        }
        search_from = body_start + close + 3;
    }
    None
}

/// Pulls a JSON value out of a model reply: a ```json fence first, then the
/// outermost braces.
pub fn extract_json(text: &str) -> Option<serde_json::Value> {
    if let Some(block) = fenced_block(text, "json") {
        if let Ok(v) = serde_json::from_str(block.trim()) {
            return Some(v);
        }
    }
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    if end <= start {
        return None;
    }
    serde_json::from_str(&text[start..=end]).ok()
}
