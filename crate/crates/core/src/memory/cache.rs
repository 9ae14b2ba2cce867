//! Persisted documentation cache with TTL freshness.
//!
//! Readers clone an `Arc` snapshot and never block writers for long. Every
//! store rewrites the whole file through a temp file and rename, so a crash
//! leaves either the old or the new document on disk.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::info_miner::{DocSource, ModelDocSummary};
use crate::registry::{LibraryId, ModelName};

pub const DEFAULT_CACHE_PATH: &str = "./.ad_agent_cache.json";
pub const DEFAULT_TTL_DAYS: i64 = 7;
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub library: LibraryId,
    pub model: ModelName,
    pub doc: ModelDocSummary,
    pub retrieved_at: DateTime<Utc>,
}

impl CacheEntry {
    pub fn new(doc: ModelDocSummary) -> Self {
        CacheEntry { library: doc.library, model: doc.model.clone(), retrieved_at: doc.retrieved_at, doc }
    }

    pub fn key(&self) -> String {
        entry_key(self.library, &self.model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissReason {
    Absent,
    Stale,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CacheLookup {
    Hit(ModelDocSummary),
    Miss(MissReason),
}

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cache file {path} is unreadable: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("unsupported cache format version {0}")]
    UnsupportedVersion(u32),
    #[error("invalid cache entry: {0}")]
    InvalidEntry(String),
    #[error("failed to persist cache to {path}: {source}")]
    PersistenceFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Serialize, Deserialize)]
struct StoredEntry {
    doc: ModelDocSummary,
    retrieved_at: DateTime<Utc>,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    version: u32,
    ttl_days: f64,
    entries: BTreeMap<String, StoredEntry>,
}

fn entry_key(library: LibraryId, model: &ModelName) -> String {
    format!("{}/{}", library.as_str(), model.as_str())
}

type Snapshot = Arc<BTreeMap<String, CacheEntry>>;

#[derive(Debug)]
pub struct LongTermCache {
    path: Option<PathBuf>,
    ttl: Duration,
    entries: RwLock<Snapshot>,
    write_lock: Mutex<()>,
}

impl LongTermCache {
    /// A cache that never touches disk.
    pub fn in_memory(ttl: Duration) -> Self {
        LongTermCache { path: None, ttl, entries: RwLock::new(Arc::new(BTreeMap::new())), write_lock: Mutex::new(()) }
    }

    /// Loads `path` if it exists; a missing file is an empty cache.
    pub fn open(path: impl Into<PathBuf>, ttl: Duration) -> Result<Self, CacheError> {
        let path = path.into();
        let entries = match std::fs::read_to_string(&path) {
            Ok(text) => parse_file(&path, &text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(CacheError::Corrupt { path, reason: e.to_string() }),
        };
        Ok(LongTermCache { path: Some(path), ttl, entries: RwLock::new(Arc::new(entries)), write_lock: Mutex::new(()) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    pub fn snapshot(&self) -> Snapshot {
        Arc::clone(&self.entries.read().expect("cache lock poisoned"))
    }

    pub fn len(&self) -> usize {
        self.snapshot().len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshot().is_empty()
    }

    pub fn get(&self, library: LibraryId, model: &ModelName) -> Option<CacheEntry> {
        self.snapshot().get(&entry_key(library, model)).cloned()
    }

    /// Hit iff an entry exists and `now - retrieved_at <= ttl`. Hits come
    /// back tagged with `source = cache`.
    pub fn lookup(&self, library: LibraryId, model: &ModelName, now: DateTime<Utc>) -> CacheLookup {
        match self.get(library, model) {
            None => CacheLookup::Miss(MissReason::Absent),
            Some(entry) if now - entry.retrieved_at > self.ttl => CacheLookup::Miss(MissReason::Stale),
            Some(entry) => {
                let mut doc = entry.doc;
                doc.source = DocSource::Cache;
                CacheLookup::Hit(doc)
            }
        }
    }

    /// Replaces any entry for the same key and rewrites the file.
    ///
    /// On `PersistenceFailure` the in-memory entry is kept.
    pub fn store(&self, entry: CacheEntry) -> Result<(), CacheError> {
        self.store_at(entry, Utc::now())
    }

    pub fn store_at(&self, mut entry: CacheEntry, now: DateTime<Utc>) -> Result<(), CacheError> {
        if entry.retrieved_at > now {
            return Err(CacheError::InvalidEntry(format!("retrieved_at {} lies in the future", entry.retrieved_at)));
        }
        if entry.doc.library != entry.library || entry.doc.model != entry.model {
            return Err(CacheError::InvalidEntry(format!(
                "document for {}/{} filed under {}",
                entry.doc.library,
                entry.doc.model,
                entry.key()
            )));
        }
        entry.doc.retrieved_at = entry.retrieved_at;
        let _guard = self.write_lock.lock().expect("cache write lock poisoned");
        let next = {
            let mut map = (*self.snapshot()).clone();
            map.insert(entry.key(), entry);
            Arc::new(map)
        };
        *self.entries.write().expect("cache lock poisoned") = Arc::clone(&next);
        self.persist(&next)
    }

    /// Drops an entry, returning whether one existed.
    pub fn remove(&self, library: LibraryId, model: &ModelName) -> Result<bool, CacheError> {
        let _guard = self.write_lock.lock().expect("cache write lock poisoned");
        let mut map = (*self.snapshot()).clone();
        let existed = map.remove(&entry_key(library, model)).is_some();
        if existed {
            let next = Arc::new(map);
            *self.entries.write().expect("cache lock poisoned") = Arc::clone(&next);
            self.persist(&next)?;
        }
        Ok(existed)
    }

    /// Entries older than the TTL at `now`.
    pub fn stale_entries(&self, now: DateTime<Utc>) -> Vec<CacheEntry> {
        self.snapshot().values().filter(|e| now - e.retrieved_at > self.ttl).cloned().collect()
    }

    fn persist(&self, entries: &BTreeMap<String, CacheEntry>) -> Result<(), CacheError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let file = CacheFile {
            version: FORMAT_VERSION,
            ttl_days: self.ttl.num_seconds() as f64 / 86_400.0,
            entries: entries.iter().map(|(k, e)| (k.clone(), StoredEntry { doc: e.doc.clone(), retrieved_at: e.retrieved_at })).collect(),
        };
        let text = serde_json::to_string_pretty(&file).expect("cache serializes");
        write_atomically(path, text.as_bytes()).map_err(|source| CacheError::PersistenceFailure { path: path.clone(), source })
    }
}

fn write_atomically(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn parse_file(path: &Path, text: &str) -> Result<BTreeMap<String, CacheEntry>, CacheError> {
    let corrupt = |reason: String| CacheError::Corrupt { path: path.to_path_buf(), reason };
    let file: CacheFile = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
    if file.version != FORMAT_VERSION {
        return Err(CacheError::UnsupportedVersion(file.version));
    }
    let mut entries = BTreeMap::new();
    for (key, stored) in file.entries {
        let (library, model) = key.split_once('/').ok_or_else(|| corrupt(format!("entry key `{key}` is not <library>/<model>")))?;
        let library: LibraryId = library.parse().map_err(|_| corrupt(format!("unknown library in `{key}`")))?;
        let model = ModelName::new(model);
        if stored.doc.library != library || stored.doc.model != model {
            return Err(corrupt(format!("entry `{key}` holds documentation for another model")));
        }
        let mut doc = stored.doc;
        doc.retrieved_at = stored.retrieved_at;
        entries.insert(key, CacheEntry { library, model, doc, retrieved_at: stored.retrieved_at });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info_miner::{ParamSpec, ParamValue};

    fn doc(model: &str, at: DateTime<Utc>) -> ModelDocSummary {
        ModelDocSummary {
            model: ModelName::new(model),
            library: LibraryId::Pyod,
            description: "d".into(),
            init_params: vec![ParamSpec::new("contamination", "float", Some(ParamValue::Float(0.1)))],
            attributes: vec![],
            usage_notes: String::new(),
            source: DocSource::Web,
            retrieved_at: at,
        }
    }

    fn now() -> DateTime<Utc> {
        "2025-06-10T12:00:00Z".parse().unwrap()
    }

    fn week() -> Duration {
        Duration::days(DEFAULT_TTL_DAYS)
    }

    #[test]
    fn hit_within_ttl_and_stale_after() {
        let cache = LongTermCache::in_memory(week());
        let vae = ModelName::new("VAE");
        assert_eq!(cache.lookup(LibraryId::Pyod, &vae, now()), CacheLookup::Miss(MissReason::Absent));

        cache.store_at(CacheEntry::new(doc("VAE", now() - Duration::days(2))), now()).unwrap();
        match cache.lookup(LibraryId::Pyod, &vae, now()) {
            CacheLookup::Hit(d) => assert_eq!(d.source, DocSource::Cache),
            other => panic!("{other:?}"),
        }
        // Boundary is inclusive.
        assert!(matches!(cache.lookup(LibraryId::Pyod, &vae, now() + Duration::days(5)), CacheLookup::Hit(_)));

        cache.store_at(CacheEntry::new(doc("VAE", now() - Duration::days(8))), now()).unwrap();
        assert_eq!(cache.lookup(LibraryId::Pyod, &vae, now()), CacheLookup::Miss(MissReason::Stale));
        assert_eq!(cache.len(), 1);
        assert_eq!(cache.stale_entries(now()).len(), 1);
    }

    #[test]
    fn lookup_is_case_sensitive_after_canonicalization() {
        let cache = LongTermCache::in_memory(week());
        cache.store_at(CacheEntry::new(doc("VAE", now())), now()).unwrap();
        assert_eq!(cache.lookup(LibraryId::Pyod, &ModelName::new("vae"), now()), CacheLookup::Miss(MissReason::Absent));
        assert_eq!(cache.lookup(LibraryId::Pygod, &ModelName::new("VAE"), now()), CacheLookup::Miss(MissReason::Absent));
    }

    #[test]
    fn persisted_cache_reloads_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested").join("cache.json");
        let cache = LongTermCache::open(&path, week()).unwrap();
        cache.store_at(CacheEntry::new(doc("VAE", now())), now()).unwrap();
        cache.store_at(CacheEntry::new(doc("AE", now() - Duration::days(1))), now()).unwrap();

        let reloaded = LongTermCache::open(&path, week()).unwrap();
        assert_eq!(*reloaded.snapshot(), *cache.snapshot());

        let raw: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(raw["version"], 1);
        assert_eq!(raw["ttl_days"], 7.0);
        assert!(raw["entries"]["pyod/VAE"]["retrieved_at"].is_string());
        // No temp files are left behind.
        assert_eq!(std::fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn future_timestamps_are_rejected() {
        let cache = LongTermCache::in_memory(week());
        let entry = CacheEntry::new(doc("VAE", now() + Duration::hours(1)));
        assert!(matches!(cache.store_at(entry, now()), Err(CacheError::InvalidEntry(_))));
        assert!(cache.is_empty());
    }

    #[test]
    fn persistence_failure_keeps_memory_entry() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("sub");
        std::fs::create_dir(&sub).unwrap();
        let cache = LongTermCache::open(sub.join("cache.json"), week()).unwrap();
        // Replace the directory with a plain file so the write cannot succeed.
        std::fs::remove_dir(&sub).unwrap();
        std::fs::write(&sub, "x").unwrap();
        let err = cache.store_at(CacheEntry::new(doc("VAE", now())), now()).unwrap_err();
        assert!(matches!(err, CacheError::PersistenceFailure { .. }));
        assert!(matches!(cache.lookup(LibraryId::Pyod, &ModelName::new("VAE"), now()), CacheLookup::Hit(_)));
    }

    #[test]
    fn corrupt_and_foreign_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, "{oops").unwrap();
        assert!(matches!(LongTermCache::open(&path, week()), Err(CacheError::Corrupt { .. })));
        std::fs::write(&path, r#"{"version": 2, "ttl_days": 7, "entries": {}}"#).unwrap();
        assert!(matches!(LongTermCache::open(&path, week()), Err(CacheError::UnsupportedVersion(2))));
    }

    #[test]
    fn remove_drops_entry_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let cache = LongTermCache::open(&path, week()).unwrap();
        cache.store_at(CacheEntry::new(doc("VAE", now())), now()).unwrap();
        assert!(cache.remove(LibraryId::Pyod, &ModelName::new("VAE")).unwrap());
        assert!(!cache.remove(LibraryId::Pyod, &ModelName::new("VAE")).unwrap());
        assert!(LongTermCache::open(&path, week()).unwrap().is_empty());
    }
}
