use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{EntailmentJudgment, EntailmentScorer, NliPair, ScorerError};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("scorer unavailable, {} pair(s) left unscored: {message}", unscored.len())]
    ScorerUnavailable {
        /// Positions in the request that have no judgment.
        unscored: Vec<usize>,
        message: String,
    },
    #[error("entailment cache I/O: {0}")]
    Cache(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: String,
    judgment: EntailmentJudgment,
}

/// Judgment store keyed by `sha256(scorer_id, hypothesis, premise)`.
///
/// Reads go through an in-memory index; writes append one JSON line to the
/// backing file under a single writer lock.
#[derive(Default)]
pub struct EntailmentCache {
    index: RwLock<HashMap<String, EntailmentJudgment>>,
    writer: Option<Mutex<File>>,
}

impl EntailmentCache {
    pub fn in_memory() -> Self {
        EntailmentCache::default()
    }

    pub fn open(path: &Path) -> std::io::Result<Self> {
        let mut index = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for line in reader.lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                // A torn final line from an interrupted run is skipped.
                if let Ok(rec) = serde_json::from_str::<CacheLine>(&line) {
                    index.insert(rec.key, rec.judgment);
                }
            }
        } else if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(EntailmentCache {
            index: RwLock::new(index),
            writer: Some(Mutex::new(file)),
        })
    }

    pub fn key(scorer_id: &str, pair: &NliPair) -> String {
        let mut h = Sha256::new();
        for part in [scorer_id, pair.hypothesis.as_str(), pair.premise.as_str()] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn get(&self, key: &str) -> Option<EntailmentJudgment> {
        self.index.read().expect("cache lock poisoned").get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.index.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn insert_many(&self, entries: &[(String, EntailmentJudgment)]) -> std::io::Result<()> {
        if let Some(writer) = &self.writer {
            let mut buf = String::new();
            for (key, judgment) in entries {
                buf.push_str(&serde_json::to_string(&CacheLine {
                    key: key.clone(),
                    judgment: *judgment,
                })?);
                buf.push('\n');
            }
            let mut f = writer.lock().expect("cache writer poisoned");
            f.write_all(buf.as_bytes())?;
            f.flush()?;
        }
        let mut index = self.index.write().expect("cache lock poisoned");
        for (key, judgment) in entries {
            index.insert(key.clone(), *judgment);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub batch_size: usize,
    pub max_in_flight: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            batch_size: 16,
            max_in_flight: 4,
        }
    }
}

/// Snapshot of gateway traffic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayCounters {
    pub scorer_calls: u64,
    pub pairs_scored: u64,
    pub cache_hits: u64,
    pub truncated_premises: u64,
}

struct Limiter {
    max: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl Limiter {
    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut n = self.in_flight.lock().expect("limiter poisoned");
            while *n >= self.max {
                n = self.freed.wait(n).expect("limiter poisoned");
            }
            *n += 1;
        }
        let out = f();
        *self.in_flight.lock().expect("limiter poisoned") -= 1;
        self.freed.notify_one();
        out
    }
}

/// Cached, batched front door to an [`EntailmentScorer`].
pub struct EntailmentGateway {
    scorer: Box<dyn EntailmentScorer>,
    cache: EntailmentCache,
    batch_size: usize,
    limiter: Limiter,
    scorer_calls: AtomicU64,
    pairs_scored: AtomicU64,
    cache_hits: AtomicU64,
    truncated: AtomicU64,
}

fn truncate_words(text: &str, limit: usize) -> Option<String> {
    let words: Vec<&str> = text.split_whitespace().collect();
    (words.len() > limit).then(|| words[..limit].join(" "))
}

impl EntailmentGateway {
    pub fn new(scorer: Box<dyn EntailmentScorer>, cache: EntailmentCache, config: GatewayConfig) -> Self {
        EntailmentGateway {
            scorer,
            cache,
            batch_size: config.batch_size.max(1),
            limiter: Limiter {
                max: config.max_in_flight.max(1),
                in_flight: Mutex::new(0),
                freed: Condvar::new(),
            },
            scorer_calls: AtomicU64::new(0),
            pairs_scored: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
            truncated: AtomicU64::new(0),
        }
    }

    /// Gateway over an in-memory cache with default batching.
    pub fn uncached(scorer: Box<dyn EntailmentScorer>) -> Self {
        Self::new(scorer, EntailmentCache::in_memory(), GatewayConfig::default())
    }

    pub fn scorer_id(&self) -> &str {
        self.scorer.scorer_id()
    }

    pub fn counters(&self) -> GatewayCounters {
        GatewayCounters {
            scorer_calls: self.scorer_calls.load(Ordering::Relaxed),
            pairs_scored: self.pairs_scored.load(Ordering::Relaxed),
            cache_hits: self.cache_hits.load(Ordering::Relaxed),
            truncated_premises: self.truncated.load(Ordering::Relaxed),
        }
    }

    /// Scores `pairs`, serving what it can from cache and sending the
    /// remaining distinct pairs to the scorer in batches.
    pub fn score_cached(&self, pairs: &[NliPair]) -> Result<Vec<EntailmentJudgment>, GatewayError> {
        let scorer_id = self.scorer.scorer_id();
        let keys: Vec<String> = pairs.iter().map(|p| EntailmentCache::key(scorer_id, p)).collect();
        let mut out: Vec<Option<EntailmentJudgment>> = keys.iter().map(|k| self.cache.get(k)).collect();
        let hits = out.iter().filter(|j| j.is_some()).count();
        self.cache_hits.fetch_add(hits as u64, Ordering::Relaxed);

        // Distinct misses in first-seen order.
        let mut miss_slot: HashMap<&str, usize> = HashMap::new();
        let mut misses: Vec<usize> = Vec::new();
        for (i, key) in keys.iter().enumerate() {
            if out[i].is_none() && !miss_slot.contains_key(key.as_str()) {
                miss_slot.insert(key, misses.len());
                misses.push(i);
            }
        }

        let limit = self.scorer.max_premise_words();
        let mut failures: Vec<String> = Vec::new();
        let mut scored: Vec<Option<EntailmentJudgment>> = vec![None; misses.len()];
        for (chunk_no, chunk) in misses.chunks(self.batch_size).enumerate() {
            let batch: Vec<NliPair> = chunk
                .iter()
                .map(|&i| {
                    let p = &pairs[i];
                    match limit.and_then(|l| truncate_words(&p.premise, l)) {
                        Some(premise) => {
                            self.truncated.fetch_add(1, Ordering::Relaxed);
                            NliPair::new(p.hypothesis.clone(), premise)
                        }
                        None => p.clone(),
                    }
                })
                .collect();
            self.scorer_calls.fetch_add(1, Ordering::Relaxed);
            let result = self.limiter.run(|| self.scorer.score_batch(&batch));
            match result.and_then(|js| {
                if js.len() == batch.len() {
                    Ok(js)
                } else {
                    Err(ScorerError::Malformed(format!("expected {} judgments, got {}", batch.len(), js.len())))
                }
            }) {
                Ok(judgments) => {
                    self.pairs_scored.fetch_add(judgments.len() as u64, Ordering::Relaxed);
                    let entries: Vec<(String, EntailmentJudgment)> = chunk
                        .iter()
                        .zip(&judgments)
                        .map(|(&i, j)| (keys[i].clone(), *j))
                        .collect();
                    self.cache.insert_many(&entries)?;
                    let base = chunk_no * self.batch_size;
                    for (k, j) in judgments.into_iter().enumerate() {
                        scored[base + k] = Some(j);
                    }
                }
                Err(e) => failures.push(e.to_string()),
            }
        }

        for (i, slot) in out.iter_mut().enumerate() {
            if slot.is_none() {
                if let Some(&m) = miss_slot.get(keys[i].as_str()) {
                    *slot = scored[m];
                }
            }
        }
        let unscored: Vec<usize> = out
            .iter()
            .enumerate()
            .filter_map(|(i, j)| j.is_none().then_some(i))
            .collect();
        if !unscored.is_empty() {
            return Err(GatewayError::ScorerUnavailable {
                unscored,
                message: failures.join("; "),
            });
        }
        Ok(out.into_iter().map(|j| j.expect("all slots filled")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entailment::MockScorer;
    use std::sync::Arc;

    /// Counts calls and pairs received, delegating to the mock.
    struct Counting {
        inner: MockScorer,
        calls: Arc<AtomicU64>,
        received: Arc<AtomicU64>,
        fail: bool,
    }

    impl EntailmentScorer for Counting {
        fn scorer_id(&self) -> &str {
            "counting"
        }
        fn max_premise_words(&self) -> Option<usize> {
            self.inner.max_premise_words()
        }
        fn score_batch(&self, pairs: &[NliPair]) -> Result<Vec<EntailmentJudgment>, ScorerError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.received.fetch_add(pairs.len() as u64, Ordering::SeqCst);
            if self.fail {
                return Err(ScorerError::Unreachable("down".into()));
            }
            self.inner.score_batch(pairs)
        }
    }

    fn gateway(batch: usize, fail: bool) -> (EntailmentGateway, Arc<AtomicU64>, Arc<AtomicU64>) {
        let calls = Arc::new(AtomicU64::new(0));
        let received = Arc::new(AtomicU64::new(0));
        let scorer = Counting {
            inner: MockScorer::new(),
            calls: calls.clone(),
            received: received.clone(),
            fail,
        };
        let gw = EntailmentGateway::new(
            Box::new(scorer),
            EntailmentCache::in_memory(),
            GatewayConfig {
                batch_size: batch,
                max_in_flight: 2,
            },
        );
        (gw, calls, received)
    }

    fn pairs(range: std::ops::Range<usize>) -> Vec<NliPair> {
        range
            .map(|i| NliPair::new(format!("fact {i} holds"), format!("premise {i}")))
            .collect()
    }

    #[test]
    fn cached_pairs_never_reach_scorer() {
        let (gw, _, received) = gateway(16, false);
        gw.score_cached(&pairs(0..60)).unwrap();
        received.store(0, Ordering::SeqCst);
        let out = gw.score_cached(&pairs(0..100)).unwrap();
        assert_eq!(out.len(), 100);
        assert_eq!(received.load(Ordering::SeqCst), 40);
        assert_eq!(gw.counters().cache_hits, 60);
    }

    #[test]
    fn repeat_call_makes_no_scorer_calls() {
        let (gw, calls, _) = gateway(16, false);
        let p = pairs(0..10);
        let first = gw.score_cached(&p).unwrap();
        let before = calls.load(Ordering::SeqCst);
        let second = gw.score_cached(&p).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), before);
        assert_eq!(first, second);
    }

    #[test]
    fn misses_are_batched() {
        let (gw, calls, _) = gateway(16, false);
        gw.score_cached(&pairs(0..40)).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn duplicate_pairs_scored_once() {
        let (gw, _, received) = gateway(16, false);
        let mut p = pairs(0..3);
        p.extend(pairs(0..3));
        let out = gw.score_cached(&p).unwrap();
        assert_eq!(received.load(Ordering::SeqCst), 3);
        assert_eq!(out[0], out[3]);
    }

    #[test]
    fn unavailable_scorer_reports_unscored_positions() {
        let (gw, _, _) = gateway(4, true);
        match gw.score_cached(&pairs(0..5)) {
            Err(GatewayError::ScorerUnavailable { unscored, .. }) => assert_eq!(unscored, vec![0, 1, 2, 3, 4]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn long_premises_are_truncated_from_the_tail() {
        let calls = Arc::new(AtomicU64::new(0));
        let scorer = Counting {
            inner: MockScorer::new().with_max_premise_words(3),
            calls: calls.clone(),
            received: Arc::new(AtomicU64::new(0)),
            fail: false,
        };
        let gw = EntailmentGateway::uncached(Box::new(scorer));
        // "1815" survives truncation; "London" is cut.
        let out = gw
            .score_cached(&[
                NliPair::new("born 1815", "born in 1815 London"),
                NliPair::new("London", "born in 1815 London"),
                NliPair::new("London", "London"),
            ])
            .unwrap();
        assert_eq!(out[0].entail_logit, 3.0);
        assert_eq!(out[1].entail_logit, 0.0);
        assert_eq!(gw.counters().truncated_premises, 2);
    }

    #[test]
    fn file_cache_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nli.jsonl");
        let p = pairs(0..5);
        {
            let gw = EntailmentGateway::new(
                Box::new(MockScorer::new()),
                EntailmentCache::open(&path).unwrap(),
                GatewayConfig::default(),
            );
            gw.score_cached(&p).unwrap();
        }
        let cache = EntailmentCache::open(&path).unwrap();
        assert_eq!(cache.len(), 5);
        let key = EntailmentCache::key("mock-v1", &p[0]);
        assert!(cache.get(&key).is_some());
    }
}
