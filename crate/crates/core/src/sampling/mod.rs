//! Reservoir sampling and online stratified reservoir sampling.
//!
//! [`OasrsSampler`] keeps one [`Reservoir`] per stratum plus a counter of the
//! items that stratum delivered during the current interval. Closing the
//! interval turns the reservoirs into a [`WeightedSample`] where each sampled
//! item of stratum *i* stands for `C_i / Y_i` original items.

mod random;
mod reservoir;
mod stratified;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::StratumId;

pub use random::{derive_seed, seeded, RandomSource, SeededRng};
pub use reservoir::{Offer, Reservoir};
pub use stratified::{OasrsSampler, StratumState, WorkerShare};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SamplingError {
    #[error("reservoir capacity must be positive")]
    ZeroCapacity,
    #[error("reservoir capacity can only shrink ({from} -> {to})")]
    CapacityGrowth { from: usize, to: usize },
    #[error("no items selected out of {counter} received")]
    DegenerateSample { counter: u64 },
    #[error("more items selected ({selected}) than received ({counter})")]
    SelectedExceedsCounter { counter: u64, selected: usize },
    #[error("cannot allocate a sample across an empty stratum set")]
    NoStrata,
    #[error("budget of {total} cannot give one item to each of {strata} strata")]
    InsufficientBudget { total: usize, strata: usize },
    #[error("sample size must be at least 1")]
    ZeroSampleSize,
}

/// Weight of each selected item of a stratum: `counter / selected` when the
/// stratum was oversubscribed, `1` when every received item was kept.
pub fn compute_weight(counter: u64, selected: usize) -> Result<f64, SamplingError> {
    if selected == 0 {
        return if counter == 0 {
            Ok(1.0)
        } else {
            Err(SamplingError::DegenerateSample { counter })
        };
    }
    if counter > selected as u64 {
        Ok(counter as f64 / selected as f64)
    } else {
        Ok(1.0)
    }
}

/// Splits `total` equally across `strata`, handing the remainder out one by
/// one in ascending key order. Every stratum gets at least one slot.
pub fn allocate_sample_sizes<K, I>(total: usize, strata: I) -> Result<BTreeMap<K, usize>, SamplingError>
where
    K: Ord,
    I: IntoIterator<Item = K>,
{
    let keys: std::collections::BTreeSet<K> = strata.into_iter().collect();
    let n = keys.len();
    if n == 0 {
        return Err(SamplingError::NoStrata);
    }
    if total < n {
        return Err(SamplingError::InsufficientBudget { total, strata: n });
    }
    let (base, remainder) = (total / n, total % n);
    Ok(keys
        .into_iter()
        .enumerate()
        .map(|(rank, key)| (key, base + usize::from(rank < remainder)))
        .collect())
}

/// The sampled items of one stratum (or one worker's share of a stratum)
/// over one interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumEntry {
    pub stratum: StratumId,
    pub items: Vec<f64>,
    /// `W_i`, the number of original items each sampled item represents.
    pub weight: f64,
    /// `C_i`, the number of items the stratum delivered.
    pub counter: u64,
}

impl StratumEntry {
    /// Builds an entry, deriving the weight from the counter.
    pub fn new(stratum: StratumId, items: Vec<f64>, counter: u64) -> Result<Self, SamplingError> {
        if items.len() as u64 > counter {
            return Err(SamplingError::SelectedExceedsCounter {
                counter,
                selected: items.len(),
            });
        }
        let weight = compute_weight(counter, items.len())?;
        Ok(Self {
            stratum,
            items,
            weight,
            counter,
        })
    }

    /// `Y_i`.
    pub fn sampled(&self) -> usize {
        self.items.len()
    }

    pub fn is_fully_sampled(&self) -> bool {
        self.items.len() as u64 == self.counter
    }
}

/// A stratified sample of one interval, the unit consumed by the estimators.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WeightedSample {
    pub interval_start: u64,
    pub interval_end: u64,
    pub entries: Vec<StratumEntry>,
}

impl WeightedSample {
    pub fn new(interval_start: u64, interval_end: u64, entries: Vec<StratumEntry>) -> Self {
        Self {
            interval_start,
            interval_end,
            entries,
        }
    }

    pub fn empty(interval_start: u64, interval_end: u64) -> Self {
        Self::new(interval_start, interval_end, Vec::new())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total `Σ C_i`.
    pub fn items_received(&self) -> u64 {
        self.entries.iter().map(|e| e.counter).sum()
    }

    /// Total `Σ Y_i`.
    pub fn items_sampled(&self) -> usize {
        self.entries.iter().map(|e| e.items.len()).sum()
    }

    pub fn entry(&self, stratum: StratumId) -> Option<&StratumEntry> {
        self.entries.iter().find(|e| e.stratum == stratum)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_follows_counter_ratio() {
        assert_eq!(compute_weight(100, 40).unwrap(), 2.5);
        assert_eq!(compute_weight(30, 40).unwrap(), 1.0);
        assert_eq!(compute_weight(40, 40).unwrap(), 1.0);
        assert_eq!(compute_weight(0, 0).unwrap(), 1.0);
        assert_eq!(compute_weight(3, 0), Err(SamplingError::DegenerateSample { counter: 3 }));
    }

    #[test]
    fn allocation_examples() {
        let even = allocate_sample_sizes(100, ["a", "b", "c", "d"]).unwrap();
        assert!(even.values().all(|&n| n == 25));

        let uneven = allocate_sample_sizes(10, ["c", "a", "b"]).unwrap();
        assert_eq!(uneven.into_iter().collect::<Vec<_>>(), vec![("a", 4), ("b", 3), ("c", 3)]);

        assert_eq!(
            allocate_sample_sizes(2, ["a", "b", "c"]),
            Err(SamplingError::InsufficientBudget { total: 2, strata: 3 })
        );
        assert_eq!(allocate_sample_sizes::<&str, _>(5, []), Err(SamplingError::NoStrata));
    }

    #[test]
    fn allocation_ignores_duplicates() {
        let sizes = allocate_sample_sizes(9, [2, 1, 2, 3]).unwrap();
        assert_eq!(sizes.len(), 3);
        assert_eq!(sizes.values().sum::<usize>(), 9);
    }

    #[test]
    fn entry_rejects_more_items_than_counter() {
        assert!(StratumEntry::new(StratumId(0), vec![1.0, 2.0], 1).is_err());
        let e = StratumEntry::new(StratumId(0), vec![4.0, 6.0], 10).unwrap();
        assert_eq!(e.weight, 5.0);
        assert!(!e.is_fully_sampled());
    }

    proptest::proptest! {
        #[test]
        fn allocation_covers_budget(total in 1usize..10_000, n in 1usize..64) {
            proptest::prop_assume!(total >= n);
            let sizes = allocate_sample_sizes(total, 0..n).unwrap();
            proptest::prop_assert_eq!(sizes.values().sum::<usize>(), total);
            let (lo, hi) = (sizes.values().min().unwrap(), sizes.values().max().unwrap());
            proptest::prop_assert!(*lo >= 1 && hi - lo <= 1);
        }
    }
}
