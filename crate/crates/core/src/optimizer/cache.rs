//! Memoization of objective evaluations keyed by canonical design identity.
//!
//! The optimizer revisits designs constantly — especially late in a run,
//! when the policy concentrates — so every objective call is routed through
//! an [`EvaluationCache`]. A design's value is computed at most once per
//! run; repeat lookups are cache hits. Keys are the packed bit words of the
//! design, which are injective over `{0,1}^N` for any `N`.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;

use crate::design;
use crate::objectives::Objective;
use crate::Result;

/// A concurrent map from canonical design keys to objective values, with
/// hit/miss accounting.
#[derive(Debug, Default)]
pub struct EvaluationCache {
    map: Mutex<HashMap<Vec<u64>, f64>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl EvaluationCache {
    /// An empty cache.
    #[must_use]
    pub fn new() -> Self {
        EvaluationCache::default()
    }

    /// Number of distinct designs evaluated so far.
    #[must_use]
    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    /// True when nothing has been evaluated yet.
    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of lookups answered from the cache.
    #[must_use]
    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    /// Number of lookups that required a fresh evaluation.
    #[must_use]
    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    /// The cached value for `design`, if present (counts a hit or a miss).
    #[must_use]
    pub fn get(&self, design: &[u8]) -> Option<f64> {
        let key = design::pack_words(design).into_vec();
        let found = self.map.lock().expect("cache lock").get(&key).copied();
        match found {
            Some(_) => self.hits.fetch_add(1, Ordering::Relaxed),
            None => self.misses.fetch_add(1, Ordering::Relaxed),
        };
        found
    }

    /// Stores a value for `design` (overwrites nothing: the first value for
    /// a key wins, matching the at-most-once evaluation contract).
    pub fn insert(&self, design: &[u8], value: f64) {
        let key = design::pack_words(design).into_vec();
        self.map
            .lock()
            .expect("cache lock")
            .entry(key)
            .or_insert(value);
    }

    /// Evaluates a batch of designs through the cache, returning values in
    /// batch order.
    ///
    /// Designs not yet cached are deduplicated and evaluated concurrently
    /// (each distinct design exactly once); results are merged in a fixed
    /// order, so the cache contents never depend on evaluation scheduling.
    ///
    /// # Errors
    /// The first objective failure, by batch position, is propagated; the
    /// cache retains values that were already computed.
    pub fn evaluate_batch(
        &self,
        objective: &dyn Objective,
        designs: &[Vec<u8>],
    ) -> Result<Vec<f64>> {
        let keys: Vec<Vec<u64>> = designs
            .iter()
            .map(|d| design::pack_words(d).into_vec())
            .collect();
        // Single locked pass: classify lookups and claim first occurrences
        // of unknown keys in batch order.
        let mut pending: Vec<usize> = Vec::new();
        {
            let map = self.map.lock().expect("cache lock");
            let mut claimed: std::collections::HashSet<&[u64]> = std::collections::HashSet::new();
            for (pos, key) in keys.iter().enumerate() {
                if map.contains_key(key) {
                    self.hits.fetch_add(1, Ordering::Relaxed);
                } else if claimed.insert(key.as_slice()) {
                    self.misses.fetch_add(1, Ordering::Relaxed);
                    pending.push(pos);
                } else {
                    // An in-batch duplicate of a pending evaluation is
                    // served without a fresh objective call: a hit.
                    self.hits.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
        let fresh: Vec<(usize, Result<f64>)> = pending
            .par_iter()
            .map(|&pos| (pos, objective.evaluate(&designs[pos])))
            .collect();
        // Deterministic merge: pending order, first error wins.
        let mut first_error = None;
        {
            let mut map = self.map.lock().expect("cache lock");
            for (pos, outcome) in fresh {
                match outcome {
                    Ok(value) => {
                        map.entry(keys[pos].clone()).or_insert(value);
                    }
                    Err(e) => {
                        if first_error.is_none() {
                            first_error = Some(e);
                        }
                    }
                }
            }
        }
        if let Some(e) = first_error {
            return Err(e);
        }
        let map = self.map.lock().expect("cache lock");
        Ok(keys.iter().map(|key| map[key]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use std::sync::atomic::AtomicUsize;

    /// Counts how many times each design is really evaluated.
    struct CountingObjective {
        calls: AtomicUsize,
    }

    impl Objective for CountingObjective {
        fn dimension(&self) -> usize {
            4
        }
        fn evaluate(&self, design: &[u8]) -> Result<f64> {
            self.calls.fetch_add(1, Ordering::Relaxed);
            Ok(design.iter().map(|&b| f64::from(b)).sum())
        }
        fn name(&self) -> &str {
            "counting"
        }
    }

    struct FailingObjective;

    impl Objective for FailingObjective {
        fn dimension(&self) -> usize {
            2
        }
        fn evaluate(&self, design: &[u8]) -> Result<f64> {
            if design[0] == 1 {
                Err(Error::Objective {
                    reason: "poisoned coordinate".to_string(),
                })
            } else {
                Ok(0.0)
            }
        }
        fn name(&self) -> &str {
            "failing"
        }
    }

    #[test]
    fn get_and_insert_round_trip_with_counters() {
        let cache = EvaluationCache::new();
        assert!(cache.is_empty());
        assert_eq!(cache.get(&[1, 0, 1]), None);
        cache.insert(&[1, 0, 1], 2.5);
        assert_eq!(cache.get(&[1, 0, 1]), Some(2.5));
        assert_eq!((cache.hits(), cache.misses()), (1, 1));
        assert_eq!(cache.len(), 1);
        // First value wins.
        cache.insert(&[1, 0, 1], 99.0);
        assert_eq!(cache.get(&[1, 0, 1]), Some(2.5));
    }

    #[test]
    fn batch_evaluation_is_at_most_once_per_design() {
        let objective = CountingObjective {
            calls: AtomicUsize::new(0),
        };
        let cache = EvaluationCache::new();
        let designs = vec![
            vec![1, 0, 0, 0],
            vec![0, 1, 1, 0],
            vec![1, 0, 0, 0], // duplicate within the batch
            vec![0, 0, 0, 1],
        ];
        let values = cache.evaluate_batch(&objective, &designs).unwrap();
        assert_eq!(values, vec![1.0, 2.0, 1.0, 1.0]);
        assert_eq!(objective.calls.load(Ordering::Relaxed), 3);
        assert_eq!(cache.len(), 3);
        // A second batch reuses everything.
        let again = cache.evaluate_batch(&objective, &designs).unwrap();
        assert_eq!(again, values);
        assert_eq!(objective.calls.load(Ordering::Relaxed), 3);
        assert_eq!(cache.hits(), 5); // 1 in-batch duplicate + 4 repeats
    }

    #[test]
    fn batch_evaluation_propagates_failures_and_keeps_partial_results() {
        let cache = EvaluationCache::new();
        let designs = vec![vec![0, 0], vec![1, 0]];
        let err = cache
            .evaluate_batch(&FailingObjective, &designs)
            .err()
            .unwrap();
        assert!(matches!(err, Error::Objective { .. }), "{err}");
        // The good design's value was retained.
        assert_eq!(cache.get(&[0, 0]), Some(0.0));
    }

    #[test]
    fn keys_distinguish_designs_beyond_word_boundaries() {
        let cache = EvaluationCache::new();
        let mut a = vec![0u8; 70];
        let mut b = vec![0u8; 70];
        a[0] = 1;
        b[69] = 1;
        cache.insert(&a, 1.0);
        cache.insert(&b, 2.0);
        assert_eq!(cache.get(&a), Some(1.0));
        assert_eq!(cache.get(&b), Some(2.0));
    }
}
