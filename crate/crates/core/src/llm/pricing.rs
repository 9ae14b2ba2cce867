use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

const BUNDLED_PRICES: &str = include_str!("../../pricing.json");

/// Rates in US$ per one million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelRates {
    pub input_rate: f64,
    pub output_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    pub models: BTreeMap<String, ModelRates>,
    /// US$ per search call.
    pub web_search_call_rate: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum PriceTableError {
    #[error("failed to read price table: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed price table: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("negative or non-finite rate for {0}")]
    BadRate(String),
}

impl PriceTable {
    pub fn from_json(text: &str) -> Result<Self, PriceTableError> {
        let table: PriceTable = serde_json::from_str(text)?;
        let ok = |r: f64| r.is_finite() && r >= 0.0;
        if !ok(table.web_search_call_rate) {
            return Err(PriceTableError::BadRate("web_search_call_rate".into()));
        }
        for (model, rates) in &table.models {
            if !ok(rates.input_rate) || !ok(rates.output_rate) {
                return Err(PriceTableError::BadRate(model.clone()));
            }
        }
        Ok(table)
    }

    pub fn from_path(path: &Path) -> Result<Self, PriceTableError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn rates(&self, model_id: &str) -> Option<ModelRates> {
        self.models.get(model_id).copied()
    }

    /// `input × input_rate + output × output_rate + searches × search_rate`,
    /// with token rates converted from per-million to per-token. Models
    /// missing from the table bill tokens at zero.
    pub fn cost(&self, model_id: &str, input_tokens: u64, output_tokens: u64, web_search_calls: u32) -> f64 {
        let token_cost = match self.rates(model_id) {
            Some(r) => input_tokens as f64 * (r.input_rate / 1e6) + output_tokens as f64 * (r.output_rate / 1e6),
            None => {
                if input_tokens + output_tokens > 0 {
                    log::warn!("no price configured for model `{model_id}`; billing its tokens at $0");
                }
                0.0
            }
        };
        token_cost + f64::from(web_search_calls) * self.web_search_call_rate
    }
}

impl Default for PriceTable {
    fn default() -> Self {
        Self::from_json(BUNDLED_PRICES).expect("bundled price table is valid")
    }
}
