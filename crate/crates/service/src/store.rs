//! In-memory per-session state with idle TTL, an LRU bound and JSONL snapshots.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicI64, AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use session_intent::context::PrevQuery;
use session_intent::session::{EngagementKind, ItemAttributes};
use session_intent::Embedding;
use tokio::sync::Mutex;

pub const DEFAULT_TTL_MS: u64 = 30 * 60 * 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StoreConfig {
    pub ttl_ms: u64,
    pub max_sessions: usize,
    pub snapshot_path: Option<PathBuf>,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig { ttl_ms: DEFAULT_TTL_MS, max_sessions: 100_000, snapshot_path: None }
    }
}

/// Engagements on the latest query, deduplicated by item id with
/// precedence order > atc > click.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Engaged {
    pub atc: Vec<ItemAttributes>,
    pub click: Vec<ItemAttributes>,
    pub order: Vec<ItemAttributes>,
}

impl Engaged {
    fn rank(&self, item_id: &str) -> Option<EngagementKind> {
        let has = |v: &[ItemAttributes]| v.iter().any(|i| i.item_id == item_id);
        if has(&self.order) {
            Some(EngagementKind::Order)
        } else if has(&self.atc) {
            Some(EngagementKind::Atc)
        } else if has(&self.click) {
            Some(EngagementKind::Click)
        } else {
            None
        }
    }

    pub fn add(&mut self, kind: EngagementKind, item: ItemAttributes) {
        if self.rank(&item.item_id).is_some_and(|r| r >= kind) {
            return;
        }
        self.atc.retain(|i| i.item_id != item.item_id);
        self.click.retain(|i| i.item_id != item.item_id);
        match kind {
            EngagementKind::Order => self.order.push(item),
            EngagementKind::Atc => self.atc.push(item),
            EngagementKind::Click => self.click.push(item),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStateRecord {
    pub session_id: String,
    pub last_query: Option<PrevQuery>,
    pub engaged: Engaged,
    /// Embedding of the rendered state text (previous query plus engagements).
    pub cached_state_vector: Option<Embedding>,
    pub updated_at: i64,
    pub version: u64,
}

impl SessionStateRecord {
    pub fn new(session_id: impl Into<String>) -> Self {
        SessionStateRecord {
            session_id: session_id.into(),
            last_query: None,
            engaged: Engaged::default(),
            cached_state_vector: None,
            updated_at: 0,
            version: 0,
        }
    }
}

pub struct Slot {
    pub record: Option<SessionStateRecord>,
}

pub struct Entry {
    slot: Mutex<Slot>,
    removed: AtomicBool,
    touched_at: AtomicI64,
    last_use: AtomicU64,
}

impl Entry {
    pub fn slot(&self) -> &Mutex<Slot> {
        &self.slot
    }

    pub fn is_removed(&self) -> bool {
        self.removed.load(Ordering::Acquire)
    }
}

pub struct SessionStore {
    config: StoreConfig,
    entries: RwLock<HashMap<String, Arc<Entry>>>,
    clock: AtomicU64,
}

impl SessionStore {
    pub fn new(config: StoreConfig) -> Self {
        SessionStore { config, entries: RwLock::new(HashMap::new()), clock: AtomicU64::new(0) }
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.entries.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn tick(&self) -> u64 {
        self.clock.fetch_add(1, Ordering::Relaxed) + 1
    }

    pub fn get(&self, id: &str) -> Option<Arc<Entry>> {
        let entry = self.entries.read().get(id).cloned()?;
        entry.last_use.store(self.tick(), Ordering::Relaxed);
        Some(entry)
    }

    /// Existing entry or a fresh empty one; creating may LRU-evict others.
    pub fn get_or_create(&self, id: &str, now_ms: i64) -> Arc<Entry> {
        if let Some(e) = self.get(id) {
            return e;
        }
        let mut map = self.entries.write();
        let entry = map
            .entry(id.to_string())
            .or_insert_with(|| {
                Arc::new(Entry {
                    slot: Mutex::new(Slot { record: None }),
                    removed: AtomicBool::new(false),
                    touched_at: AtomicI64::new(now_ms),
                    last_use: AtomicU64::new(0),
                })
            })
            .clone();
        entry.last_use.store(self.tick(), Ordering::Relaxed);
        while map.len() > self.config.max_sessions.max(1) {
            let victim = map
                .iter()
                .filter(|(k, _)| k.as_str() != id)
                .min_by_key(|(_, e)| e.last_use.load(Ordering::Relaxed))
                .map(|(k, _)| k.clone());
            match victim.and_then(|k| map.remove(&k)) {
                Some(e) => e.removed.store(true, Ordering::Release),
                None => break,
            }
        }
        entry
    }

    pub fn touch(&self, entry: &Entry, now_ms: i64) {
        entry.touched_at.store(now_ms, Ordering::Relaxed);
    }

    /// Removes the record; deleting an absent session is a no-op.
    pub fn remove(&self, id: &str) -> bool {
        match self.entries.write().remove(id) {
            Some(e) => {
                e.removed.store(true, Ordering::Release);
                true
            }
            None => false,
        }
    }

    /// Evicts sessions idle longer than the TTL. Returns how many were removed.
    pub fn sweep(&self, now_ms: i64) -> usize {
        let ttl = self.config.ttl_ms as i64;
        let mut map = self.entries.write();
        let before = map.len();
        map.retain(|_, e| {
            let keep = now_ms.saturating_sub(e.touched_at.load(Ordering::Relaxed)) <= ttl;
            if !keep {
                e.removed.store(true, Ordering::Release);
            }
            keep
        });
        before - map.len()
    }

    /// Snapshot of every live record, sorted by session id.
    pub async fn records(&self) -> Vec<SessionStateRecord> {
        let entries: Vec<Arc<Entry>> = self.entries.read().values().cloned().collect();
        let mut out = Vec::with_capacity(entries.len());
        for e in entries {
            if let Some(r) = &e.slot.lock().await.record {
                out.push(r.clone());
            }
        }
        out.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        out
    }

    pub async fn save_snapshot(&self, path: &Path) -> std::io::Result<usize> {
        let records = self.records().await;
        let mut w = BufWriter::new(File::create(path)?);
        for r in &records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(records.len())
    }

    /// Loads records written by [`save_snapshot`](Self::save_snapshot), versions intact.
    pub fn load_snapshot(&self, path: &Path) -> std::io::Result<usize> {
        let reader = BufReader::new(File::open(path)?);
        let mut map = self.entries.write();
        let mut n = 0;
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: SessionStateRecord = serde_json::from_str(&line)?;
            let entry = Arc::new(Entry {
                slot: Mutex::new(Slot { record: None }),
                removed: AtomicBool::new(false),
                touched_at: AtomicI64::new(record.updated_at),
                last_use: AtomicU64::new(self.tick()),
            });
            let id = record.session_id.clone();
            entry.slot.try_lock().expect("fresh entry is unlocked").record = Some(record);
            map.insert(id, entry);
            n += 1;
        }
        Ok(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: &str) -> ItemAttributes {
        ItemAttributes {
            item_id: id.into(),
            title: "t".into(),
            brand: None,
            gender: None,
            size: None,
            description: None,
            product_type: "p".into(),
        }
    }

    #[test]
    fn engagement_precedence() {
        let mut e = Engaged::default();
        e.add(EngagementKind::Click, item("a"));
        e.add(EngagementKind::Atc, item("a"));
        e.add(EngagementKind::Click, item("a"));
        assert!(e.click.is_empty());
        assert_eq!(e.atc.len(), 1);
        e.add(EngagementKind::Order, item("a"));
        assert!(e.atc.is_empty());
        assert_eq!(e.order.len(), 1);
    }

    #[test]
    fn lru_bound_evicts_oldest() {
        let store = SessionStore::new(StoreConfig { max_sessions: 1, ..StoreConfig::default() });
        let first = store.get_or_create("a", 0);
        store.get_or_create("b", 1);
        assert!(store.get("a").is_none());
        assert!(first.is_removed());
        assert!(store.get("b").is_some());
    }

    #[test]
    fn lru_prefers_least_recently_used() {
        let store = SessionStore::new(StoreConfig { max_sessions: 2, ..StoreConfig::default() });
        store.get_or_create("a", 0);
        store.get_or_create("b", 0);
        store.get("a");
        store.get_or_create("c", 0);
        assert!(store.get("b").is_none());
        assert!(store.get("a").is_some());
    }

    #[test]
    fn sweep_uses_idle_time() {
        let store = SessionStore::new(StoreConfig { ttl_ms: 100, ..StoreConfig::default() });
        let a = store.get_or_create("a", 0);
        let b = store.get_or_create("b", 0);
        store.touch(&b, 150);
        assert_eq!(store.sweep(200), 1);
        assert!(a.is_removed());
        assert!(store.get("b").is_some());
    }

    #[test]
    fn remove_is_idempotent() {
        let store = SessionStore::new(StoreConfig::default());
        store.get_or_create("a", 0);
        assert!(store.remove("a"));
        assert!(!store.remove("a"));
    }
}
