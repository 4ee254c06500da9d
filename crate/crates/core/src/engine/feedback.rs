use super::{EngineError, WindowResult};
use crate::record::QueryBudget;

/// Outcome of one adaptive-feedback step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Feedback {
    Unchanged,
    Increased(QueryBudget),
    /// The estimate was zero (or missing), so no relative error exists.
    Skipped,
}

/// Grows the budget when the last window's relative error bound exceeded
/// `target_error`.
///
/// The budget is multiplied by `min((observed / target)², 2)`. Absolute
/// budgets are capped at `interval_items`, fractions at 1.
pub fn adaptive_feedback(previous: &WindowResult, budget: QueryBudget, target_error: f64, interval_items: u64) -> Feedback {
    let Some(observed) = previous.report.as_ref().and_then(|r| r.relative_half_width()) else {
        return Feedback::Skipped;
    };
    if observed <= target_error {
        return Feedback::Unchanged;
    }
    let factor = ((observed / target_error).powi(2)).min(2.0);
    let next = match budget {
        QueryBudget::AbsoluteSampleSize(n) => {
            let grown = (n as f64 * factor).ceil() as usize;
            QueryBudget::AbsoluteSampleSize(grown.min(interval_items as usize).max(n))
        }
        QueryBudget::SamplingFraction(f) => QueryBudget::SamplingFraction((f * factor).min(1.0)),
    };
    if next == budget {
        Feedback::Unchanged
    } else {
        Feedback::Increased(next)
    }
}

/// `|approx - exact| / |exact|`.
pub fn accuracy_loss(approx: f64, exact: f64) -> Result<f64, EngineError> {
    if exact == 0.0 {
        return Err(EngineError::UndefinedLoss);
    }
    Ok((approx - exact).abs() / exact.abs())
}
