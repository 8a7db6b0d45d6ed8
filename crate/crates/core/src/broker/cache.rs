use std::collections::HashMap;
use std::io::{self, BufRead, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::NetConditionKey;
use crate::corelog::ParamSetting;

/// Default number of cached keys.
pub const CACHE_CAPACITY: usize = 256;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache file: {0}")]
    Io(#[from] io::Error),
    #[error("cache file line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub theta: ParamSetting,
    /// Throughput efficiency observed with `theta`.
    pub efficiency: f64,
    /// Epoch seconds of the last write.
    pub ts: i64,
}

#[derive(Serialize, Deserialize)]
struct FileRecord {
    #[serde(flatten)]
    key: NetConditionKey,
    #[serde(flatten)]
    entry: CacheEntry,
}

struct Slot {
    entry: CacheEntry,
    last_used: AtomicU64,
}

/// LRU map from network conditions to the best known setting.
///
/// Lookups take a shared lock and bump recency atomically, so readers never
/// block each other; writes take the exclusive lock.
pub struct ParamCache {
    capacity: usize,
    clock: AtomicU64,
    slots: RwLock<HashMap<NetConditionKey, Slot>>,
}

impl ParamCache {
    pub fn new(capacity: usize) -> Self {
        ParamCache {
            capacity: capacity.max(1),
            clock: AtomicU64::new(0),
            slots: RwLock::new(HashMap::new()),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    fn tick(&self) -> u64 {
        self.clock.fetch_add(1, Ordering::Relaxed) + 1
    }

    pub fn len(&self) -> usize {
        self.slots.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &NetConditionKey) -> Option<CacheEntry> {
        let slots = self.slots.read().expect("cache lock");
        slots.get(key).map(|s| {
            s.last_used.store(self.tick(), Ordering::Relaxed);
            s.entry
        })
    }

    /// Writes `theta` back after a successful transfer. An existing entry is
    /// replaced only if `efficiency` is at least its recorded efficiency.
    /// Returns whether the cache changed.
    pub fn record(&self, key: NetConditionKey, theta: ParamSetting, efficiency: f64, ts: i64) -> bool {
        if !efficiency.is_finite() {
            return false;
        }
        let now = self.tick();
        let mut slots = self.slots.write().expect("cache lock");
        if let Some(slot) = slots.get_mut(&key) {
            slot.last_used.store(now, Ordering::Relaxed);
            if efficiency < slot.entry.efficiency {
                return false;
            }
            slot.entry = CacheEntry { theta, efficiency, ts };
            return true;
        }
        if slots.len() >= self.capacity {
            let oldest = slots
                .iter()
                .min_by_key(|(_, s)| s.last_used.load(Ordering::Relaxed))
                .map(|(k, _)| k.clone())
                .expect("non-empty at capacity");
            slots.remove(&oldest);
        }
        slots.insert(
            key,
            Slot {
                entry: CacheEntry { theta, efficiency, ts },
                last_used: AtomicU64::new(now),
            },
        );
        true
    }

    /// Entries from least to most recently used.
    pub fn entries(&self) -> Vec<(NetConditionKey, CacheEntry)> {
        let slots = self.slots.read().expect("cache lock");
        let mut v: Vec<_> = slots
            .iter()
            .map(|(k, s)| (s.last_used.load(Ordering::Relaxed), k.clone(), s.entry))
            .collect();
        v.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        v.into_iter().map(|(_, k, e)| (k, e)).collect()
    }

    /// Writes the cache as JSONL, least recently used first.
    pub fn save(&self, path: &Path) -> Result<(), CacheError> {
        let tmp = path.with_extension("tmp");
        {
            let mut out = io::BufWriter::new(std::fs::File::create(&tmp)?);
            for (key, entry) in self.entries() {
                let line = serde_json::to_string(&FileRecord { key, entry }).map_err(io::Error::from)?;
                writeln!(out, "{line}")?;
            }
            out.flush()?;
        }
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    /// Loads a cache file. A missing file gives an empty cache.
    pub fn load(path: &Path, capacity: usize) -> Result<Self, CacheError> {
        let cache = ParamCache::new(capacity);
        let file = match std::fs::File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(cache),
            Err(e) => return Err(e.into()),
        };
        for (i, line) in io::BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: FileRecord = serde_json::from_str(&line).map_err(|e| CacheError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            cache.insert_loaded(rec.key, rec.entry);
        }
        Ok(cache)
    }

    fn insert_loaded(&self, key: NetConditionKey, entry: CacheEntry) {
        let now = self.tick();
        let mut slots = self.slots.write().expect("cache lock");
        if !slots.contains_key(&key) && slots.len() >= self.capacity {
            let oldest = slots
                .iter()
                .min_by_key(|(_, s)| s.last_used.load(Ordering::Relaxed))
                .map(|(k, _)| k.clone())
                .expect("non-empty at capacity");
            slots.remove(&oldest);
        }
        slots.insert(
            key,
            Slot {
                entry,
                last_used: AtomicU64::new(now),
            },
        );
    }
}

impl std::fmt::Debug for ParamCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParamCache")
            .field("capacity", &self.capacity)
            .field("len", &self.len())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::broker::RttBucket;
    use crate::corelog::NetInterface;
    use proptest::prelude::*;

    fn key(i: i32) -> NetConditionKey {
        NetConditionKey {
            net_if: NetInterface::Wifi,
            bw_log2: i,
            rtt_bucket: RttBucket::Low,
            size_class: 5,
            device_model: "pixel".into(),
        }
    }

    fn theta(cc: u32) -> ParamSetting {
        ParamSetting::with_kib(cc, 1, 8).unwrap()
    }

    #[test]
    fn write_back_keeps_best() {
        let c = ParamCache::new(4);
        assert!(c.record(key(1), theta(2), 5.0, 1));
        assert!(!c.record(key(1), theta(4), 4.0, 2));
        assert_eq!(c.get(&key(1)).unwrap().theta, theta(2));
        assert!(c.record(key(1), theta(8), 5.0, 3));
        assert_eq!(c.get(&key(1)).unwrap().theta, theta(8));
    }

    #[test]
    fn lru_eviction() {
        let c = ParamCache::new(2);
        c.record(key(1), theta(1), 1.0, 0);
        c.record(key(2), theta(2), 1.0, 0);
        c.get(&key(1));
        c.record(key(3), theta(4), 1.0, 0);
        assert!(c.get(&key(2)).is_none());
        assert!(c.get(&key(1)).is_some());
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let c = ParamCache::new(8);
        for i in 0..5 {
            c.record(key(i), theta(1 << i), i as f64, 100 + i as i64);
        }
        c.get(&key(0));
        c.save(&path).unwrap();
        let loaded = ParamCache::load(&path, 8).unwrap();
        assert_eq!(loaded.entries(), c.entries());
        let first = std::fs::read_to_string(&path).unwrap();
        assert!(first.lines().next().unwrap().contains("\"efficiency\":1.0"));
        assert!(ParamCache::load(&dir.path().join("missing"), 8).unwrap().is_empty());
        std::fs::write(&path, "{not json}\n").unwrap();
        assert!(matches!(ParamCache::load(&path, 8), Err(CacheError::Parse { line: 1, .. })));
    }

    #[test]
    fn concurrent_readers() {
        let c = std::sync::Arc::new(ParamCache::new(CACHE_CAPACITY));
        c.record(key(0), theta(2), 1.0, 0);
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let c = c.clone();
                std::thread::spawn(move || (0..1000).all(|_| c.get(&key(0)).is_some()))
            })
            .collect();
        for i in 1..50 {
            c.record(key(i), theta(1), 1.0, 0);
        }
        assert!(handles.into_iter().all(|h| h.join().unwrap()));
    }

    proptest! {
        #[test]
        fn recorded_efficiency_never_decreases(ops in prop::collection::vec((0i32..4, 0.0f64..10.0), 1..60)) {
            let c = ParamCache::new(CACHE_CAPACITY);
            let mut best = std::collections::HashMap::new();
            for (k, eff) in ops {
                c.record(key(k), theta(1), eff, 0);
                let b = best.entry(k).or_insert(eff);
                *b = f64::max(*b, eff);
                prop_assert_eq!(c.get(&key(k)).unwrap().efficiency, *b);
            }
        }

        #[test]
        fn never_exceeds_capacity(keys in prop::collection::vec(0i32..40, 1..200), cap in 1usize..10) {
            let c = ParamCache::new(cap);
            for k in keys {
                c.record(key(k), theta(1), 1.0, 0);
                prop_assert!(c.len() <= cap);
            }
        }
    }
}
