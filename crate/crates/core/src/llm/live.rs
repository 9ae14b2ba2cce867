//! HTTPS chat-completions transport.

use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{Backend, BackendError, LlmRequest, LlmResponse, Tool};

pub const API_KEY_ENV: &str = "AD_AGENT_API_KEY";
pub const API_BASE_ENV: &str = "AD_AGENT_API_BASE";
pub const DEFAULT_API_BASE: &str = "https://api.openai.com/v1";

#[derive(Debug, Clone)]
pub struct LiveConfig {
    pub api_key: String,
    pub base_url: String,
    pub timeout: Duration,
}

impl LiveConfig {
    /// Reads `AD_AGENT_API_KEY` and, optionally, `AD_AGENT_API_BASE`.
    pub fn from_env() -> Result<Self, BackendError> {
        let api_key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| BackendError::Unavailable(format!("{API_KEY_ENV} is not set")))?;
        let base_url = std::env::var(API_BASE_ENV).ok().filter(|b| !b.trim().is_empty()).unwrap_or_else(|| DEFAULT_API_BASE.to_string());
        Ok(LiveConfig { api_key, base_url, timeout: Duration::from_secs(600) })
    }
}

pub struct LiveBackend {
    config: LiveConfig,
    agent: ureq::Agent,
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Self {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().http_status_as_error(false).timeout_global(Some(config.timeout)).build().into();
        LiveBackend { config, agent }
    }

    fn body(request: &LlmRequest) -> Value {
        let messages: Vec<Value> = request.messages.iter().map(|m| json!({"role": m.role.as_str(), "content": m.content})).collect();
        let mut body = json!({"model": request.model_id, "messages": messages});
        if let Some(t) = request.temperature {
            body["temperature"] = json!(t);
        }
        if request.tools.contains(&Tool::WebSearch) {
            body["web_search_options"] = json!({});
        }
        body
    }
}

fn parse_completion(payload: &Value) -> Result<(String, u64, u64), BackendError> {
    let content = payload
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Unavailable("response has no message content".into()))?
        .to_string();
    let input = payload.pointer("/usage/prompt_tokens").and_then(Value::as_u64).unwrap_or(0);
    let output = payload.pointer("/usage/completion_tokens").and_then(Value::as_u64).unwrap_or(0);
    Ok((content, input, output))
}

impl Backend for LiveBackend {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, BackendError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let started = Instant::now();
        let mut response = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {}", self.config.api_key))
            .send_json(Self::body(request))
            .map_err(|e| match e {
                ureq::Error::Io(_) | ureq::Error::Timeout(_) | ureq::Error::HostNotFound => BackendError::Transient(e.to_string()),
                other => BackendError::Unavailable(other.to_string()),
            })?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| BackendError::Transient(e.to_string()))?;
        let latency = started.elapsed().as_secs_f64();
        match status {
            200..=299 => {}
            429 | 500..=599 => return Err(BackendError::Transient(format!("HTTP {status}: {text}"))),
            _ => return Err(BackendError::Unavailable(format!("HTTP {status}: {text}"))),
        }
        let payload: Value = serde_json::from_str(&text).map_err(|e| BackendError::Unavailable(format!("malformed response body: {e}")))?;
        let (content, input_tokens, output_tokens) = parse_completion(&payload)?;
        Ok(LlmResponse {
            content,
            input_tokens,
            output_tokens,
            latency,
            web_search_calls: u32::from(request.tools.contains(&Tool::WebSearch)),
        })
    }

    fn name(&self) -> &'static str {
        "live"
    }
}
