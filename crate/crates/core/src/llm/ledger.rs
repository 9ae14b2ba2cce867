use serde::{Deserialize, Serialize};

use super::AgentName;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub agent: AgentName,
    pub model_id: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub web_search_calls: u32,
    /// Seconds, as reported by the backend (recorded latency under replay).
    pub latency: f64,
    /// US dollars.
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerTotals {
    pub calls: usize,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub web_search_calls: u64,
    pub latency: f64,
    pub cost: f64,
}

/// Append-only per-session record of every model call.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenLedger {
    session_id: String,
    entries: Vec<LedgerEntry>,
    /// Wall-clock seconds actually spent inside backend calls. Kept apart
    /// from the entries so replayed sessions can swap measured time for
    /// recorded latency.
    #[serde(default)]
    backend_wall: f64,
}

impl TokenLedger {
    pub fn new(session_id: impl Into<String>) -> Self {
        TokenLedger { session_id: session_id.into(), entries: Vec::new(), backend_wall: 0.0 }
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn record(&mut self, entry: LedgerEntry) {
        self.entries.push(entry);
    }

    pub(crate) fn add_backend_wall(&mut self, seconds: f64) {
        self.backend_wall += seconds;
    }

    pub fn backend_wall(&self) -> f64 {
        self.backend_wall
    }

    pub fn totals(&self) -> LedgerTotals {
        self.totals_from(0)
    }

    /// Totals over entries appended at or after position `start`; pair with
    /// `entries().len()` taken before an operation to measure its delta.
    pub fn totals_from(&self, start: usize) -> LedgerTotals {
        self.entries[start.min(self.entries.len())..].iter().fold(LedgerTotals::default(), |mut acc, e| {
            acc.calls += 1;
            acc.input_tokens += e.input_tokens;
            acc.output_tokens += e.output_tokens;
            acc.web_search_calls += u64::from(e.web_search_calls);
            acc.latency += e.latency;
            acc.cost += e.cost;
            acc
        })
    }

    /// Cost excluding per-call web-search fees.
    pub fn token_cost(&self, prices: &super::PriceTable) -> f64 {
        self.entries.iter().map(|e| prices.cost(&e.model_id, e.input_tokens, e.output_tokens, 0)).sum()
    }

    pub fn totals_for(&self, agent: AgentName) -> LedgerTotals {
        let mut filtered = TokenLedger::new(self.session_id.clone());
        filtered.entries = self.entries.iter().filter(|e| e.agent == agent).cloned().collect();
        filtered.totals()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(input: u64, output: u64, calls: u32, cost: f64) -> LedgerEntry {
        LedgerEntry {
            agent: AgentName::Generator,
            model_id: "gpt-4o".into(),
            input_tokens: input,
            output_tokens: output,
            web_search_calls: calls,
            latency: 0.5,
            cost,
        }
    }

    #[test]
    fn totals_from_measures_deltas() {
        let mut ledger = TokenLedger::new("s");
        ledger.record(entry(10, 1, 0, 0.1));
        let mark = ledger.entries().len();
        ledger.record(entry(5, 2, 1, 0.2));
        let delta = ledger.totals_from(mark);
        assert_eq!(delta.calls, 1);
        assert_eq!(delta.input_tokens, 5);
        assert_eq!(delta.web_search_calls, 1);
        assert_eq!(ledger.totals_from(99).calls, 0);
    }

    proptest! {
        #[test]
        fn totals_conserve_entry_sums(
            rows in proptest::collection::vec((0u64..100_000, 0u64..50_000, 0u32..3, 0.0f64..1.0), 0..40)
        ) {
            let mut ledger = TokenLedger::new("p");
            let mut last_cost = 0.0;
            for (i, o, c, cost) in &rows {
                ledger.record(entry(*i, *o, *c, *cost));
                let t = ledger.totals();
                prop_assert!(t.cost >= last_cost);
                last_cost = t.cost;
            }
            let t = ledger.totals();
            prop_assert_eq!(t.calls, rows.len());
            prop_assert_eq!(t.input_tokens, rows.iter().map(|r| r.0).sum::<u64>());
            prop_assert_eq!(t.output_tokens, rows.iter().map(|r| r.1).sum::<u64>());
            prop_assert_eq!(t.web_search_calls, rows.iter().map(|r| u64::from(r.2)).sum::<u64>());
            let direct: f64 = ledger.entries().iter().map(|e| e.cost).sum();
            prop_assert!((t.cost - direct).abs() <= 1e-12);
        }
    }
}
