//! Batch samplers used for comparison: simple random sampling by random sort
//! (SRS) and grouped stratified sampling (STS). Both need the whole interval
//! in memory before they can select anything.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::record::{Item, StratumId};
use crate::sampling::{RandomSource, StratumEntry, WeightedSample};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("sample size must be at least 1")]
    ZeroSampleSize,
    #[error("sampling fraction must be in (0, 1], got {0}")]
    Fraction(f64),
    #[error("record at {timestamp} ms lies outside the batch [{start}, {end})")]
    OutOfBatch { timestamp: u64, start: u64, end: u64 },
}

/// The fully materialized records of one interval `[interval_start, interval_end)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch {
    pub interval_start: u64,
    pub interval_end: u64,
    pub records: Vec<Item>,
}

impl Batch {
    pub fn new(interval_start: u64, interval_end: u64, records: Vec<Item>) -> Result<Self, BaselineError> {
        if let Some(r) = records
            .iter()
            .find(|r| r.timestamp < interval_start || r.timestamp >= interval_end)
        {
            return Err(BaselineError::OutOfBatch {
                timestamp: r.timestamp,
                start: interval_start,
                end: interval_end,
            });
        }
        Ok(Self {
            interval_start,
            interval_end,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Acceptance thresholds `(p, q)` for picking `k` of `n` uniformly keyed
/// items: keys below `p` are taken outright, keys above `q` are dropped, and
/// only the band in between needs ordering. The band is `k/n ± 3·sqrt(k)/n`.
pub fn srs_thresholds(n: usize, k: usize) -> (f64, f64) {
    let (n, k) = (n as f64, k as f64);
    let center = k / n;
    let spread = 3.0 * k.sqrt() / n;
    ((center - spread).max(0.0), (center + spread).min(1.0))
}

/// Picks `k` of `values` uniformly at random by the random-sort scheme with
/// thresholds. Falls back to keying and selecting over everything when the
/// thresholds leave fewer than `k` candidates.
fn random_sort_select<R: RandomSource + ?Sized>(values: &[f64], k: usize, rng: &mut R) -> Vec<f64> {
    let n = values.len();
    if n <= k {
        return values.to_vec();
    }
    let (p, q) = srs_thresholds(n, k);
    let mut accepted: Vec<(f64, f64)> = Vec::with_capacity(k);
    let mut waitlist: Vec<(f64, f64)> = Vec::new();
    for &v in values {
        let key = rng.unit();
        if key < p {
            accepted.push((key, v));
        } else if key <= q {
            waitlist.push((key, v));
        }
    }
    let by_key = |a: &(f64, f64), b: &(f64, f64)| a.0.total_cmp(&b.0);
    if accepted.len() >= k {
        accepted.select_nth_unstable_by(k - 1, by_key);
        accepted.truncate(k);
    } else if accepted.len() + waitlist.len() >= k {
        let need = k - accepted.len();
        waitlist.select_nth_unstable_by(need - 1, by_key);
        accepted.extend_from_slice(&waitlist[..need]);
    } else {
        // Threshold failure: key everything afresh and sort. The selection
        // is uniform either way by symmetry.
        let mut keyed: Vec<(f64, f64)> = values.iter().map(|&v| (rng.unit(), v)).collect();
        keyed.sort_unstable_by(by_key);
        keyed.truncate(k);
        accepted = keyed;
    }
    accepted.into_iter().map(|(_, v)| v).collect()
}

/// Simple random sample of `k` records, ignoring strata. The result has a
/// single [`StratumId::UNSTRATIFIED`] entry with weight `|batch| / k`.
pub fn srs_sample<R: RandomSource + ?Sized>(batch: &Batch, k: usize, rng: &mut R) -> Result<WeightedSample, BaselineError> {
    if k == 0 {
        return Err(BaselineError::ZeroSampleSize);
    }
    let mut sample = WeightedSample::empty(batch.interval_start, batch.interval_end);
    if batch.is_empty() {
        return Ok(sample);
    }
    let values: Vec<f64> = batch.records.iter().map(|r| r.value).collect();
    let items = random_sort_select(&values, k, rng);
    sample.entries.push(
        StratumEntry::new(StratumId::UNSTRATIFIED, items, batch.len() as u64).expect("selection is a non-empty subset"),
    );
    Ok(sample)
}

/// Per-stratum sample size for STS: `max(1, round(fraction × C_i))`.
pub fn sts_stratum_size(counter: usize, fraction: f64) -> usize {
    ((fraction * counter as f64).round() as usize).clamp(1, counter.max(1))
}

/// Stratified sample: group the batch by stratum, then draw exactly
/// `max(1, round(fraction × C_i))` items from each group by random sort.
pub fn sts_sample<R: RandomSource + ?Sized>(batch: &Batch, fraction: f64, rng: &mut R) -> Result<WeightedSample, BaselineError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(BaselineError::Fraction(fraction));
    }
    let mut groups: BTreeMap<StratumId, Vec<f64>> = BTreeMap::new();
    for r in &batch.records {
        groups.entry(r.stratum).or_default().push(r.value);
    }
    let entries = groups
        .into_iter()
        .map(|(stratum, values)| {
            let k = sts_stratum_size(values.len(), fraction);
            let items = random_sort_select(&values, k, rng);
            StratumEntry::new(stratum, items, values.len() as u64).expect("selection is a non-empty subset")
        })
        .collect();
    Ok(WeightedSample::new(batch.interval_start, batch.interval_end, entries))
}
