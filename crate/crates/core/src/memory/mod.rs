//! Session workspace and long-term documentation cache.

mod cache;
mod workspace;

pub use cache::{CacheEntry, CacheError, CacheLookup, LongTermCache, MissReason, DEFAULT_CACHE_PATH, DEFAULT_TTL_DAYS};
pub use workspace::{SessionWorkspace, WorkspaceError};
