//! Linear-query estimators over weighted samples and their error bounds.
//!
//! For strata `i` with counters `C_i`, sampled items `I_ij` (`Y_i` of them)
//! and weights `W_i`:
//!
//! * `SUM = Σ_i W_i Σ_j I_ij`, `MEAN = SUM / Σ_i C_i`
//! * `Var(SUM) = Σ_i C_i (C_i - Y_i) s_i² / Y_i`
//! * `Var(MEAN) = Σ_i ω_i² (s_i² / Y_i) (C_i - Y_i) / C_i` with `ω_i = C_i / Σ C`
//!
//! where `s_i²` is the unbiased sample variance of the stratum's sampled
//! items. Bounds are `estimate ± z·sqrt(Var)` with `z` from the 68-95-99.7
//! rule or from a Student-t quantile.
//!
//! Every function takes any re-iterable collection of [`StratumEntry`]s, so a
//! window can be estimated straight from its intervals' samples without
//! copying items.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

use crate::record::{Aggregate, QuerySpec, StratumId};
use crate::sampling::StratumEntry;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("mean is undefined when no items were received")]
    UndefinedMean,
    #[error("variance must be non-negative, got {0}")]
    NegativeVariance(f64),
    #[error("histogram bucket width must be positive, got {0}")]
    BucketWidth(f64),
    #[error("confidence must be in (0, 1), got {0}")]
    Confidence(f64),
}

/// `SUM = Σ_i (Σ_j I_ij) × W_i`. Zero for an empty sample.
pub fn estimate_sum<'a, I>(entries: I) -> f64
where
    I: IntoIterator<Item = &'a StratumEntry>,
{
    entries.into_iter().map(|e| e.items.iter().sum::<f64>() * e.weight).sum()
}

/// `MEAN = SUM / Σ_i C_i`, dividing by the true counters.
pub fn estimate_mean<'a, I>(entries: I) -> Result<f64, EstimateError>
where
    I: IntoIterator<Item = &'a StratumEntry>,
{
    let (sum, received) = entries.into_iter().fold((0.0, 0u64), |(s, c), e| {
        (s + e.items.iter().sum::<f64>() * e.weight, c + e.counter)
    });
    if received == 0 {
        return Err(EstimateError::UndefinedMean);
    }
    Ok(sum / received as f64)
}

/// `s²` of a stratum's sampled items, with the `Y - 1` divisor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleVariance {
    pub value: f64,
    /// Fewer than two items: the formula is undefined and `value` is 0.
    pub degenerate: bool,
}

pub fn sample_stddev_sq(items: &[f64]) -> SampleVariance {
    if items.len() < 2 {
        return SampleVariance {
            value: 0.0,
            degenerate: true,
        };
    }
    let n = items.len() as f64;
    let mean = items.iter().sum::<f64>() / n;
    let ss: f64 = items.iter().map(|v| (v - mean) * (v - mean)).sum();
    SampleVariance {
        value: ss / (n - 1.0),
        degenerate: false,
    }
}

/// A variance estimate plus the number of strata whose `s²` had to be taken
/// as 0 (single sampled item out of several received). Those strata make the
/// estimate optimistic.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VarianceEstimate {
    pub value: f64,
    pub degenerate_strata: usize,
}

fn stratum_sum_variance(entry: &StratumEntry) -> (f64, bool) {
    let y = entry.items.len() as u64;
    if y == 0 || entry.counter <= y {
        return (0.0, false);
    }
    let s2 = sample_stddev_sq(&entry.items);
    let c = entry.counter as f64;
    let y = y as f64;
    (c * (c - y) * s2.value / y, s2.degenerate)
}

/// `Var(SUM) = Σ_i C_i (C_i - Y_i) s_i² / Y_i`.
pub fn variance_of_sum<'a, I>(entries: I) -> VarianceEstimate
where
    I: IntoIterator<Item = &'a StratumEntry>,
{
    entries.into_iter().fold(VarianceEstimate::default(), |acc, e| {
        let (v, degenerate) = stratum_sum_variance(e);
        VarianceEstimate {
            value: acc.value + v,
            degenerate_strata: acc.degenerate_strata + usize::from(degenerate),
        }
    })
}

/// `Var(MEAN) = Σ_i ω_i² (s_i² / Y_i) (C_i - Y_i) / C_i`.
pub fn variance_of_mean<'a, I>(entries: I) -> Result<VarianceEstimate, EstimateError>
where
    I: IntoIterator<Item = &'a StratumEntry>,
    I::IntoIter: Clone,
{
    let entries = entries.into_iter();
    let received: u64 = entries.clone().map(|e| e.counter).sum();
    if received == 0 {
        return Err(EstimateError::UndefinedMean);
    }
    let total = received as f64;
    let mut out = VarianceEstimate::default();
    for e in entries {
        let y = e.items.len() as u64;
        if y == 0 || e.counter <= y {
            continue;
        }
        let s2 = sample_stddev_sq(&e.items);
        let (c, y) = (e.counter as f64, y as f64);
        let omega = c / total;
        out.value += omega * omega * (s2.value / y) * (c - y) / c;
        out.degenerate_strata += usize::from(s2.degenerate);
    }
    Ok(out)
}

/// One, two or three standard deviations (68%, 95%, 99.7%).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SigmaRule {
    #[serde(rename = "68")]
    One,
    #[serde(rename = "95")]
    Two,
    #[serde(rename = "99.7")]
    Three,
}

impl SigmaRule {
    pub fn multiplier(self) -> f64 {
        match self {
            SigmaRule::One => 1.0,
            SigmaRule::Two => 2.0,
            SigmaRule::Three => 3.0,
        }
    }

    pub fn confidence(self) -> f64 {
        match self {
            SigmaRule::One => 0.68,
            SigmaRule::Two => 0.95,
            SigmaRule::Three => 0.997,
        }
    }
}

/// How the half-width multiplier of a confidence interval is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum IntervalMethod {
    Normal { rule: SigmaRule },
    /// Student-t quantile at `confidence`, with `Σ Y_i - strata` degrees of
    /// freedom.
    StudentT { confidence: f64 },
}

impl Default for IntervalMethod {
    fn default() -> Self {
        IntervalMethod::Normal { rule: SigmaRule::Two }
    }
}

/// A symmetric interval around a point estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBound {
    pub low: f64,
    pub high: f64,
    pub multiplier: f64,
    /// The Student-t method was requested without a usable degree of
    /// freedom, so a normal quantile was used instead.
    pub normal_fallback: bool,
}

impl ErrorBound {
    pub fn half_width(&self) -> f64 {
        (self.high - self.low) / 2.0
    }

    pub fn contains(&self, value: f64) -> bool {
        self.low <= value && value <= self.high
    }
}

/// Two-sided Student-t critical value.
pub fn t_critical_value(confidence: f64, dof: f64) -> Result<f64, EstimateError> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(EstimateError::Confidence(confidence));
    }
    let dist = StudentsT::new(0.0, 1.0, dof).map_err(|_| EstimateError::Confidence(confidence))?;
    Ok(dist.inverse_cdf(1.0 - (1.0 - confidence) / 2.0))
}

/// Two-sided standard-normal critical value.
pub fn z_critical_value(confidence: f64) -> Result<f64, EstimateError> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(EstimateError::Confidence(confidence));
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(1.0 - (1.0 - confidence) / 2.0))
}

/// `point ± multiplier × sqrt(variance)`.
///
/// With the Student-t method and `dof < 1` the normal quantile for the same
/// confidence is used and `normal_fallback` is set.
pub fn error_bound(point: f64, variance: f64, method: IntervalMethod, dof: f64) -> Result<ErrorBound, EstimateError> {
    if !(variance >= 0.0) {
        return Err(EstimateError::NegativeVariance(variance));
    }
    let (multiplier, normal_fallback) = match method {
        IntervalMethod::Normal { rule } => (rule.multiplier(), false),
        IntervalMethod::StudentT { confidence } if dof >= 1.0 => (t_critical_value(confidence, dof)?, false),
        IntervalMethod::StudentT { confidence } => (z_critical_value(confidence)?, true),
    };
    let half = multiplier * variance.sqrt();
    Ok(ErrorBound {
        low: point - half,
        high: point + half,
        multiplier,
        normal_fallback,
    })
}

/// Estimated count of one histogram bucket `[lower, upper)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketEstimate {
    pub lower: f64,
    pub upper: f64,
    pub count: f64,
    pub variance: f64,
}

/// Weighted histogram: every sampled item adds its stratum weight to its
/// bucket. Per-bucket variance is `Var(SUM)` applied to the 0/1 indicator of
/// bucket membership. Buckets are returned in ascending order.
pub fn estimate_histogram<'a, I>(entries: I, bucket_width: f64) -> Result<Vec<BucketEstimate>, EstimateError>
where
    I: IntoIterator<Item = &'a StratumEntry>,
{
    if !(bucket_width > 0.0 && bucket_width.is_finite()) {
        return Err(EstimateError::BucketWidth(bucket_width));
    }
    let mut buckets: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
    let mut hits: BTreeMap<i64, u64> = BTreeMap::new();
    for entry in entries {
        hits.clear();
        for v in &entry.items {
            *hits.entry((v / bucket_width).floor() as i64).or_default() += 1;
        }
        let y = entry.items.len() as f64;
        let c = entry.counter as f64;
        for (&bucket, &m) in &hits {
            let slot = buckets.entry(bucket).or_default();
            slot.0 += entry.weight * m as f64;
            if entry.counter > entry.items.len() as u64 && entry.items.len() >= 2 {
                let m = m as f64;
                let s2 = (m - m * m / y) / (y - 1.0);
                slot.1 += c * (c - y) * s2 / y;
            }
        }
    }
    Ok(buckets
        .into_iter()
        .map(|(k, (count, variance))| BucketEstimate {
            lower: k as f64 * bucket_width,
            upper: (k + 1) as f64 * bucket_width,
            count,
            variance,
        })
        .collect())
}

/// Result for one stratum, when a per-stratum breakdown is requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumReport {
    pub stratum: StratumId,
    pub point_estimate: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// An approximate query answer with its error bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub query: QuerySpec,
    /// Sum, mean or count; for histograms the estimated total count.
    pub point_estimate: f64,
    pub variance: f64,
    pub std_dev: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub method: IntervalMethod,
    pub multiplier: f64,
    pub normal_fallback: bool,
    /// Strata whose `s²` was undefined and taken as 0.
    pub degenerate_strata: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub buckets: Option<Vec<BucketEstimate>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_stratum: Option<Vec<StratumReport>>,
}

impl EstimateReport {
    pub fn bound(&self) -> ErrorBound {
        ErrorBound {
            low: self.ci_low,
            high: self.ci_high,
            multiplier: self.multiplier,
            normal_fallback: self.normal_fallback,
        }
    }

    /// Half-width of the interval relative to the estimate; `None` when the
    /// estimate is zero.
    pub fn relative_half_width(&self) -> Option<f64> {
        (self.point_estimate != 0.0).then(|| (self.ci_high - self.ci_low) / 2.0 / self.point_estimate.abs())
    }
}

fn degrees_of_freedom<'a>(entries: impl Iterator<Item = &'a StratumEntry>) -> f64 {
    let (sampled, strata) = entries.fold((0usize, 0usize), |(y, n), e| (y + e.items.len(), n + 1));
    sampled as f64 - strata as f64
}

fn point_and_variance<'a, I>(entries: I, query: &QuerySpec) -> Result<(f64, VarianceEstimate, Option<Vec<BucketEstimate>>), EstimateError>
where
    I: Iterator<Item = &'a StratumEntry> + Clone,
{
    Ok(match query.aggregate {
        Aggregate::Sum => (estimate_sum(entries.clone()), variance_of_sum(entries), None),
        Aggregate::Mean => (estimate_mean(entries.clone())?, variance_of_mean(entries)?, None),
        Aggregate::Count => {
            // Constant-1 items: the sum is Σ W_i Y_i and s² vanishes.
            let count = entries.clone().map(|e| e.weight * e.items.len() as f64).sum();
            let degenerate = entries.filter(|e| e.items.len() == 1 && e.counter > 1).count();
            (
                count,
                VarianceEstimate {
                    value: 0.0,
                    degenerate_strata: degenerate,
                },
                None,
            )
        }
        Aggregate::Histogram => {
            let width = query.histogram_bucketing.ok_or(EstimateError::BucketWidth(0.0))?;
            let buckets = estimate_histogram(entries.clone(), width)?;
            let count = buckets.iter().map(|b| b.count).sum();
            let degenerate = entries.filter(|e| e.items.len() == 1 && e.counter > 1).count();
            (
                count,
                VarianceEstimate {
                    value: 0.0,
                    degenerate_strata: degenerate,
                },
                Some(buckets),
            )
        }
    })
}

/// Runs `query` over the entries and attaches an error bound.
pub fn estimate<'a, I>(entries: I, query: &QuerySpec, method: IntervalMethod) -> Result<EstimateReport, EstimateError>
where
    I: IntoIterator<Item = &'a StratumEntry>,
    I::IntoIter: Clone,
{
    let entries = entries.into_iter();
    let (point, variance, buckets) = point_and_variance(entries.clone(), query)?;
    let dof = degrees_of_freedom(entries.clone());
    let bound = error_bound(point, variance.value, method, dof)?;

    let per_stratum = if query.per_stratum {
        let mut ids: Vec<StratumId> = entries.clone().map(|e| e.stratum).collect();
        ids.sort_unstable();
        ids.dedup();
        let mut reports = Vec::with_capacity(ids.len());
        for id in ids {
            let subset = entries.clone().filter(move |e| e.stratum == id);
            let (p, v, _) = point_and_variance(subset.clone(), query)?;
            let b = error_bound(p, v.value, method, degrees_of_freedom(subset))?;
            reports.push(StratumReport {
                stratum: id,
                point_estimate: p,
                variance: v.value,
                ci_low: b.low,
                ci_high: b.high,
            });
        }
        Some(reports)
    } else {
        None
    };

    Ok(EstimateReport {
        query: *query,
        point_estimate: point,
        variance: variance.value,
        std_dev: variance.value.sqrt(),
        ci_low: bound.low,
        ci_high: bound.high,
        method,
        multiplier: bound.multiplier,
        normal_fallback: bound.normal_fallback,
        degenerate_strata: variance.degenerate_strata,
        buckets,
        per_stratum,
    })
}
