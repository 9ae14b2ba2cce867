use ad_agent_bench::{all_docs, ledger_entries};
use ad_agent_core::llm::TokenLedger;
use ad_agent_core::memory::{CacheEntry, LongTermCache};
use chrono::{Duration, Utc};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn cache(c: &mut Criterion) {
    let now = Utc::now();
    let docs = all_docs(now);
    let memory = LongTermCache::in_memory(Duration::days(7));
    for d in &docs {
        memory.store_at(CacheEntry::new(d.clone()), now).unwrap();
    }
    let probe = &docs[docs.len() / 2];
    c.bench_function("cache/lookup_hit", |b| b.iter(|| memory.lookup(probe.library, black_box(&probe.model), now)));

    let dir = tempfile::tempdir().unwrap();
    let disk = LongTermCache::open(dir.path().join("cache.json"), Duration::days(7)).unwrap();
    for d in &docs {
        disk.store_at(CacheEntry::new(d.clone()), now).unwrap();
    }
    c.bench_function("cache/store_persisted", |b| b.iter(|| disk.store_at(CacheEntry::new(probe.clone()), now).unwrap()));
    c.bench_function("cache/open_persisted", |b| b.iter(|| LongTermCache::open(dir.path().join("cache.json"), Duration::days(7)).unwrap()));
}

fn ledger(c: &mut Criterion) {
    let mut ledger = TokenLedger::new("bench");
    for e in ledger_entries(10_000) {
        ledger.record(e);
    }
    c.bench_function("ledger/totals_10k", |b| b.iter(|| black_box(&ledger).totals()));
}

criterion_group!(benches, cache, ledger);
criterion_main!(benches);
