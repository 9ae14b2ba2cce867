//! Cache-first retrieval of model documentation.

mod doc;

use std::time::Instant;

use chrono::{DateTime, Utc};
use serde_json::json;

pub use doc::{
    params_to_json, params_to_python, parse_doc_summary, render_doc, AttributeSpec, DocParseError, DocSource, ModelDocSummary, ParamMap,
    ParamSpec, ParamValue, ParsedDoc,
};

use crate::llm::{AgentName, GatewayError, LlmGateway, LlmRequest, Message, TokenLedger};
use crate::memory::{CacheEntry, CacheLookup, LongTermCache, MissReason};
use crate::registry::{LibraryId, ModelName};

pub fn library_display_name(library: LibraryId) -> &'static str {
    match library {
        LibraryId::Pyod => "PyOD",
        LibraryId::Pygod => "PyGOD",
        LibraryId::Tslib => "TSLib",
    }
}

const SUMMARY_INSTRUCTIONS: &str = "You are the Info Miner of an anomaly detection assistant. \
Search the official documentation and summarize the requested model for code generation. \
Structure the answer as: a short description; **Initialization Function (`__init__`):**; \
**Parameters:** as bullets `- `name`:` with sub-bullets **Type**, **Default** (omit when the argument is required) \
and **Description**; **Attributes:** in the same style; usage notes including the exact import statement; \
and finally the heading **Python Dictionary of `__init__` Parameters with Default Values:** followed by a Python \
dict literal mapping every parameter that has a default to that default.";

const REFORMAT_INSTRUCTIONS: &str = "The summary below lacks a machine-readable parameter mapping. \
Rewrite it unchanged except that it must end with the heading \
**Python Dictionary of `__init__` Parameters with Default Values:** followed by a single Python dict literal \
of parameter names to default values. Use only Python literals (numbers, strings, True/False/None, lists).";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Miss(MissReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelInfo {
    pub doc: ModelDocSummary,
    pub cache_status: CacheStatus,
    /// Seconds: the recorded search latency on the web path, measured
    /// lookup time on a cache hit.
    pub latency: f64,
    pub web_search_calls: u64,
    /// Raw summary text on the web path.
    pub raw_summary: Option<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum InfoMinerError {
    #[error("no usable documentation for {library}/{model}: {reason}")]
    DocumentationUnavailable { library: LibraryId, model: ModelName, reason: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Cache(#[from] crate::memory::CacheError),
}

/// Cache first; on a miss, searches, parses, stores and returns the fresh
/// document.
pub fn get_model_info(
    gateway: &LlmGateway,
    ledger: &mut TokenLedger,
    cache: &LongTermCache,
    library: LibraryId,
    model: &ModelName,
    now: DateTime<Utc>,
) -> Result<ModelInfo, InfoMinerError> {
    let started = Instant::now();
    let miss = match cache.lookup(library, model, now) {
        CacheLookup::Hit(doc) => {
            return Ok(ModelInfo {
                doc,
                cache_status: CacheStatus::Hit,
                latency: started.elapsed().as_secs_f64(),
                web_search_calls: 0,
                raw_summary: None,
                warnings: Vec::new(),
            })
        }
        CacheLookup::Miss(reason) => reason,
    };

    let first_entry = ledger.entries().len();
    let unavailable = |reason: String| InfoMinerError::DocumentationUnavailable { library, model: model.clone(), reason };
    let context = json!({"task": "model_documentation", "library": library.as_str(), "model": model.as_str()});
    let query = format!(
        "{} {model} __init__ parameters, defaults, attributes and import path.\n```json\n{context}\n```",
        library_display_name(library)
    );
    let (mut raw, _) = match gateway.web_search_summarize(SUMMARY_INSTRUCTIONS, &query, ledger) {
        Ok(r) => r,
        Err(GatewayError::EmptyResult) => return Err(unavailable("the search returned nothing".into())),
        Err(e) => return Err(e.into()),
    };
    let parsed = match parse_doc_summary(&raw, model, library, now) {
        Ok(p) => p,
        Err(DocParseError::NoParameterBlock) => {
            let request = LlmRequest::new(
                AgentName::InfoMiner,
                gateway.models().chat.clone(),
                vec![Message::system(REFORMAT_INSTRUCTIONS), Message::user(raw.clone())],
            );
            let response = gateway.complete(&request, ledger)?;
            raw = response.content;
            parse_doc_summary(&raw, model, library, now).map_err(|e| unavailable(format!("{e} after one reformatting request")))?
        }
    };
    let ParsedDoc { doc, mut warnings } = parsed;
    if let Err(e) = cache.store_at(CacheEntry::new(doc.clone()), now) {
        log::warn!("{e}; continuing with the in-memory cache");
        warnings.push(e.to_string());
    }
    let spent = ledger.totals_from(first_entry);
    Ok(ModelInfo {
        doc,
        cache_status: CacheStatus::Miss(miss),
        latency: spent.latency,
        web_search_calls: spent.web_search_calls,
        raw_summary: Some(raw),
        warnings,
    })
}

/// Outcome of refreshing one cached document.
#[derive(Debug)]
pub struct Refreshed {
    pub library: LibraryId,
    pub model: ModelName,
    pub result: Result<ModelInfo, InfoMinerError>,
}

/// Re-fetches stale entries, or every entry when `all` is set. A failed
/// refresh keeps the old entry.
pub fn refresh_cache(
    gateway: &LlmGateway,
    ledger: &mut TokenLedger,
    cache: &LongTermCache,
    now: DateTime<Utc>,
    all: bool,
) -> Vec<Refreshed> {
    let targets: Vec<CacheEntry> = if all { cache.snapshot().values().cloned().collect() } else { cache.stale_entries(now) };
    targets
        .into_iter()
        .map(|old| {
            let result = cache
                .remove(old.library, &old.model)
                .map_err(InfoMinerError::from)
                .and_then(|_| get_model_info(gateway, ledger, cache, old.library, &old.model, now));
            if result.is_err() {
                let restored = old.retrieved_at.min(now);
                if let Err(e) = cache.store_at(old.clone(), restored) {
                    log::warn!("could not restore {}: {e}", old.key());
                }
            }
            Refreshed { library: old.library, model: old.model, result }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{Backend, BackendError, LlmResponse, PriceTable};
    use chrono::Duration;
    use std::sync::{Arc, Mutex};

    struct Scripted {
        replies: Mutex<Vec<LlmResponse>>,
    }

    impl Backend for Scripted {
        fn complete(&self, _request: &LlmRequest) -> Result<LlmResponse, BackendError> {
            let mut r = self.replies.lock().unwrap();
            if r.is_empty() {
                Err(BackendError::Unavailable("script exhausted".into()))
            } else {
                Ok(r.remove(0))
            }
        }

        fn name(&self) -> &'static str {
            "scripted"
        }
    }

    fn gateway(replies: Vec<LlmResponse>) -> LlmGateway {
        LlmGateway::new(Arc::new(Scripted { replies: Mutex::new(replies) }), PriceTable::default())
    }

    const SUMMARY: &str = "VAE.\n**Python Dictionary of `__init__` Parameters with Default Values:**\n{'contamination': 0.1, 'encoder_neuron_list': [128, 64, 32]}";

    fn searched(text: &str) -> LlmResponse {
        LlmResponse { content: text.into(), input_tokens: 100, output_tokens: 50, latency: 10.6, web_search_calls: 1 }
    }

    fn now() -> DateTime<Utc> {
        "2025-06-10T00:00:00Z".parse().unwrap()
    }

    #[test]
    fn web_then_cache() {
        let gw = gateway(vec![searched(SUMMARY)]);
        let cache = LongTermCache::in_memory(Duration::days(7));
        let mut ledger = TokenLedger::new("s");
        let vae = ModelName::new("VAE");

        let first = get_model_info(&gw, &mut ledger, &cache, LibraryId::Pyod, &vae, now()).unwrap();
        assert_eq!(first.cache_status, CacheStatus::Miss(MissReason::Absent));
        assert_eq!(first.doc.source, DocSource::Web);
        assert_eq!(first.web_search_calls, 1);
        assert!(first.latency >= 10.0);
        assert_eq!(
            first.doc.param("encoder_neuron_list").unwrap().default_value,
            Some(ParamValue::List(vec![ParamValue::Int(128), ParamValue::Int(64), ParamValue::Int(32)]))
        );

        let calls = ledger.entries().len();
        let second = get_model_info(&gw, &mut ledger, &cache, LibraryId::Pyod, &vae, now()).unwrap();
        assert_eq!(second.cache_status, CacheStatus::Hit);
        assert_eq!(second.doc.source, DocSource::Cache);
        assert_eq!(second.web_search_calls, 0);
        assert_eq!(ledger.entries().len(), calls);
        assert_eq!(second.doc.init_params, first.doc.init_params);
    }

    #[test]
    fn stale_entry_goes_back_to_the_web() {
        let gw = gateway(vec![searched(SUMMARY), searched(SUMMARY)]);
        let cache = LongTermCache::in_memory(Duration::days(7));
        let mut ledger = TokenLedger::new("s");
        let vae = ModelName::new("VAE");
        get_model_info(&gw, &mut ledger, &cache, LibraryId::Pyod, &vae, now() - Duration::days(8)).unwrap();
        let info = get_model_info(&gw, &mut ledger, &cache, LibraryId::Pyod, &vae, now()).unwrap();
        assert_eq!(info.cache_status, CacheStatus::Miss(MissReason::Stale));
        assert_eq!(cache.get(LibraryId::Pyod, &vae).unwrap().retrieved_at, now());
    }

    #[test]
    fn one_reformat_then_failure() {
        let gw = gateway(vec![searched("no mapping here"), LlmResponse::text(SUMMARY)]);
        let cache = LongTermCache::in_memory(Duration::days(7));
        let mut ledger = TokenLedger::new("s");
        let info = get_model_info(&gw, &mut ledger, &cache, LibraryId::Pyod, &ModelName::new("VAE"), now()).unwrap();
        assert_eq!(info.doc.init_params.len(), 2);
        assert_eq!(ledger.entries().len(), 2);

        let gw = gateway(vec![searched("no mapping"), LlmResponse::text("still none")]);
        let err = get_model_info(&gw, &mut ledger, &cache, LibraryId::Pyod, &ModelName::new("AE"), now()).unwrap_err();
        assert!(matches!(err, InfoMinerError::DocumentationUnavailable { .. }));
        assert!(cache.get(LibraryId::Pyod, &ModelName::new("AE")).is_none());
    }

    #[test]
    fn empty_search_is_documentation_unavailable() {
        let gw = gateway(vec![searched("  ")]);
        let cache = LongTermCache::in_memory(Duration::days(7));
        let mut ledger = TokenLedger::new("s");
        let err = get_model_info(&gw, &mut ledger, &cache, LibraryId::Pyod, &ModelName::new("VAE"), now()).unwrap_err();
        assert!(matches!(err, InfoMinerError::DocumentationUnavailable { .. }));
    }

    #[test]
    fn search_outage_propagates() {
        let gw = gateway(vec![]);
        let cache = LongTermCache::in_memory(Duration::days(7));
        let mut ledger = TokenLedger::new("s");
        let err = get_model_info(&gw, &mut ledger, &cache, LibraryId::Pyod, &ModelName::new("VAE"), now()).unwrap_err();
        assert!(matches!(err, InfoMinerError::Gateway(GatewayError::SearchUnavailable(_))));
    }

    #[test]
    fn refresh_touches_only_stale_entries_and_keeps_them_on_failure() {
        let gw = gateway(vec![searched(SUMMARY), searched(SUMMARY), searched(SUMMARY)]);
        let cache = LongTermCache::in_memory(Duration::days(7));
        let mut ledger = TokenLedger::new("s");
        let (vae, ae) = (ModelName::new("VAE"), ModelName::new("AE"));
        get_model_info(&gw, &mut ledger, &cache, LibraryId::Pyod, &vae, now() - Duration::days(8)).unwrap();
        get_model_info(&gw, &mut ledger, &cache, LibraryId::Pyod, &ae, now() - Duration::days(1)).unwrap();

        let done = refresh_cache(&gw, &mut ledger, &cache, now(), false);
        assert_eq!(done.len(), 1);
        assert_eq!(done[0].model, vae);
        assert!(done[0].result.is_ok());
        assert_eq!(cache.get(LibraryId::Pyod, &vae).unwrap().retrieved_at, now());
        assert_eq!(cache.get(LibraryId::Pyod, &ae).unwrap().retrieved_at, now() - Duration::days(1));

        let done = refresh_cache(&gw, &mut ledger, &cache, now(), true);
        assert_eq!(done.len(), 2);
        assert!(done.iter().all(|r| r.result.is_err()));
        assert_eq!(cache.len(), 2);
        assert_eq!(cache.get(LibraryId::Pyod, &ae).unwrap().retrieved_at, now() - Duration::days(1));
    }
}
