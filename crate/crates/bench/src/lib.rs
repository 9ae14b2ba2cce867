//! Inputs shared by the criterion benches.

use ad_agent_core::info_miner::ModelDocSummary;
use ad_agent_core::llm::{AgentName, LedgerEntry};
use ad_agent_core::registry::{LibraryId, ModelName, Registry};
use ad_agent_core::simulated::catalog_doc;
use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` scores with about 10% positives scored one unit higher on average.
pub fn scored_instance(n: usize, seed: u64) -> (Vec<f64>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<u8> = (0..n).map(|i| u8::from(i == 0 || rng.random_bool(0.1))).collect();
    let scores = labels.iter().map(|&l| rng.random::<f64>() + f64::from(l)).collect();
    (scores, labels)
}

/// Catalog documentation for every bundled model that has an entry.
pub fn all_docs(now: DateTime<Utc>) -> Vec<ModelDocSummary> {
    Registry::bundled().all_models().filter_map(|(lib, model): (LibraryId, &ModelName)| catalog_doc(lib, model.as_str(), now)).collect()
}

/// A plausible mix of chat and search calls.
pub fn ledger_entries(n: usize) -> Vec<LedgerEntry> {
    (0..n)
        .map(|i| LedgerEntry {
            agent: if i % 3 == 0 { AgentName::InfoMiner } else { AgentName::Generator },
            model_id: "gpt-4o".into(),
            input_tokens: 500 + (i as u64 % 700),
            output_tokens: 80 + (i as u64 % 200),
            web_search_calls: u32::from(i % 3 == 0),
            latency: 1.5,
            cost: 0.004,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_hold_both_classes() {
        let (s, l) = scored_instance(1000, 1);
        assert_eq!(s.len(), 1000);
        assert!(l.contains(&0) && l.contains(&1));
    }

    #[test]
    fn every_roster_model_has_catalog_docs() {
        assert_eq!(all_docs(Utc::now()).len(), Registry::bundled().all_models().count());
    }
}
