use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::estimator::{BucketEstimate, EstimateReport};
use crate::record::StratumId;

/// The outcome of one sliding window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowResult {
    pub window_start: u64,
    pub window_end: u64,
    /// `None` when the query is undefined for the window (mean of nothing).
    pub report: Option<EstimateReport>,
    /// Exact answer from the shadow pass, when enabled.
    pub exact: Option<f64>,
    /// `|approx - exact| / |exact|`, when both exist and `exact != 0`.
    pub accuracy_loss: Option<f64>,
    pub items_processed: u64,
    pub items_sampled: u64,
    /// Wall time spent since the previous window was emitted.
    pub processing_ms: f64,
}

impl WindowResult {
    pub fn estimate(&self) -> Option<f64> {
        self.report.as_ref().map(|r| r.point_estimate)
    }

    /// The line-oriented JSON form of this result.
    pub fn to_row(&self, names: &[Arc<str>]) -> WindowRow {
        let report = self.report.as_ref();
        WindowRow {
            window_start: self.window_start,
            window_end: self.window_end,
            estimate: report.map(|r| r.point_estimate),
            variance: report.map(|r| r.variance),
            ci_low: report.map(|r| r.ci_low),
            ci_high: report.map(|r| r.ci_high),
            exact: self.exact,
            accuracy_loss: self.accuracy_loss,
            items_processed: self.items_processed,
            items_sampled: self.items_sampled,
            processing_ms: self.processing_ms,
            buckets: report.and_then(|r| r.buckets.clone()),
            per_stratum: report.and_then(|r| r.per_stratum.as_ref()).map(|per| {
                per.iter()
                    .map(|s| StratumRow {
                        stratum: stratum_label(s.stratum, names),
                        estimate: s.point_estimate,
                        variance: s.variance,
                        ci_low: s.ci_low,
                        ci_high: s.ci_high,
                    })
                    .collect()
            }),
        }
    }
}

fn stratum_label(id: StratumId, names: &[Arc<str>]) -> String {
    names.get(id.index()).map(|n| n.to_string()).unwrap_or_else(|| id.to_string())
}

/// One line of the window-result stream:
/// `{window_start, window_end, estimate, variance, ci_low, ci_high, exact?,
/// accuracy_loss?, items_processed, items_sampled, processing_ms}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub window_start: u64,
    pub window_end: u64,
    pub estimate: Option<f64>,
    pub variance: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exact: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy_loss: Option<f64>,
    pub items_processed: u64,
    pub items_sampled: u64,
    pub processing_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub buckets: Option<Vec<BucketEstimate>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_stratum: Option<Vec<StratumRow>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumRow {
    pub stratum: String,
    pub estimate: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Counters describing a whole run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    /// Records accepted into an interval.
    pub items_ingested: u64,
    /// Records that arrived later than the lateness tolerance allows.
    pub items_dropped_late: u64,
    pub intervals_closed: u64,
    /// Largest number of records held by the sampling stage at any time.
    pub peak_retained: usize,
    /// Windows for which adaptive feedback could not run (zero estimate).
    pub feedback_skipped: u64,
    /// Times adaptive feedback raised the budget.
    pub budget_increases: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub windows: Vec<WindowResult>,
    pub stats: RunStats,
    /// Stratum names, indexed by interned id.
    pub strata: Vec<Arc<str>>,
}

impl RunOutput {
    pub fn rows(&self) -> impl Iterator<Item = WindowRow> + '_ {
        self.windows.iter().map(|w| w.to_row(&self.strata))
    }
}
