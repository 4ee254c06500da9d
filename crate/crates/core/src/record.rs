//! Records, stratum identifiers and the line-oriented ingestion format.
//!
//! A record file is UTF-8 text with one `timestamp,stratum,value` triple per
//! LF-terminated line. Lines starting with `#` are comments. Timestamps are
//! integer milliseconds, values are finite `f64`s.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One timestamped item of a sub-stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    /// Event time in milliseconds.
    pub timestamp: u64,
    /// Identifier of the sub-stream (stratum) the item belongs to.
    pub stratum: Arc<str>,
    pub value: f64,
}

impl Record {
    /// Builds a record, rejecting non-finite values and stratum names that
    /// cannot be written back to the line format.
    pub fn new(timestamp: u64, stratum: impl Into<Arc<str>>, value: f64) -> Result<Self, ParseError> {
        let stratum = stratum.into();
        validate_stratum(&stratum, 0)?;
        if !value.is_finite() {
            return Err(ParseError::new(Field::Value, 0, ParseErrorKind::NonFinite));
        }
        Ok(Self {
            timestamp,
            stratum,
            value,
        })
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.timestamp, self.stratum, self.value)
    }
}

/// Which column of a record line an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Timestamp,
    Stratum,
    Value,
    /// The line as a whole (wrong number of columns).
    Line,
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Field::Timestamp => "timestamp",
            Field::Stratum => "stratum",
            Field::Value => "value",
            Field::Line => "line",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    MissingField,
    TrailingField,
    InvalidInteger,
    InvalidNumber,
    NonFinite,
    EmptyStratum,
    InvalidStratum,
}

/// A malformed or invalid record line. `column` is the 1-based character
/// position where the offending field starts.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid {field} at column {column}: {kind:?}")]
pub struct ParseError {
    pub field: Field,
    pub column: usize,
    pub kind: ParseErrorKind,
}

impl ParseError {
    fn new(field: Field, column: usize, kind: ParseErrorKind) -> Self {
        Self { field, column, kind }
    }
}

fn validate_stratum(name: &str, column: usize) -> Result<(), ParseError> {
    if name.is_empty() {
        return Err(ParseError::new(Field::Stratum, column, ParseErrorKind::EmptyStratum));
    }
    if name.contains([',', '\n', '\r']) || name.starts_with('#') {
        return Err(ParseError::new(Field::Stratum, column, ParseErrorKind::InvalidStratum));
    }
    Ok(())
}

/// Decodes one ingestion line (without its terminating newline).
pub fn parse_record(line: &str) -> Result<Record, ParseError> {
    let line = line.strip_suffix('\r').unwrap_or(line);
    let mut parts = line.splitn(3, ',');
    let ts = parts.next().unwrap_or_default();
    let stratum = parts
        .next()
        .ok_or_else(|| ParseError::new(Field::Stratum, ts.len() + 1, ParseErrorKind::MissingField))?;
    let stratum_col = ts.len() + 2;
    let value_col = stratum_col + stratum.len() + 1;
    let value = parts
        .next()
        .ok_or_else(|| ParseError::new(Field::Value, value_col - 1, ParseErrorKind::MissingField))?;
    if value.contains(',') {
        return Err(ParseError::new(Field::Line, value_col, ParseErrorKind::TrailingField));
    }

    let timestamp = ts
        .parse::<u64>()
        .map_err(|_| ParseError::new(Field::Timestamp, 1, ParseErrorKind::InvalidInteger))?;
    validate_stratum(stratum, stratum_col)?;
    let value = value
        .parse::<f64>()
        .map_err(|_| ParseError::new(Field::Value, value_col, ParseErrorKind::InvalidNumber))?;
    if !value.is_finite() {
        return Err(ParseError::new(Field::Value, value_col, ParseErrorKind::NonFinite));
    }
    Ok(Record {
        timestamp,
        stratum: Arc::from(stratum),
        value,
    })
}

/// Encodes a record as one ingestion line (no trailing newline).
///
/// `f64`'s `Display` prints the shortest representation that parses back to
/// the same bits, so `parse_record(&serialize_record(r)) == r`.
pub fn serialize_record(record: &Record) -> String {
    record.to_string()
}

/// Dense identifier for an interned stratum name.
///
/// Identifiers are handed out in first-appearance order, and that order is
/// the stable order used when splitting a budget across strata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StratumId(pub u32);

impl StratumId {
    /// Pseudo-stratum used by samplers that ignore stratification.
    pub const UNSTRATIFIED: StratumId = StratumId(u32::MAX);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for StratumId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Self::UNSTRATIFIED {
            f.write_str("*")
        } else {
            write!(f, "#{}", self.0)
        }
    }
}

/// Maps stratum names to small integers.
#[derive(Debug, Default, Clone)]
pub struct StratumInterner {
    names: Vec<Arc<str>>,
    ids: HashMap<Arc<str>, StratumId>,
}

impl StratumInterner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &Arc<str>) -> StratumId {
        if let Some(id) = self.ids.get(name) {
            return *id;
        }
        let id = StratumId(self.names.len() as u32);
        self.names.push(name.clone());
        self.ids.insert(name.clone(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<StratumId> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: StratumId) -> Option<&Arc<str>> {
        self.names.get(id.index())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Converts a record into its interned form.
    pub fn item(&mut self, record: &Record) -> Item {
        Item {
            timestamp: record.timestamp,
            stratum: self.intern(&record.stratum),
            value: record.value,
        }
    }
}

/// A record whose stratum has been interned. This is what the samplers see.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Item {
    pub timestamp: u64,
    pub stratum: StratumId,
    pub value: f64,
}

/// Invalid window, budget or query configuration.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("window durations must be positive (window {window}, slide {slide}, interval {interval})")]
    NonPositiveDuration { window: u64, slide: u64, interval: u64 },
    #[error("slide {slide} ms does not divide window length {window} ms")]
    SlideDoesNotDivideWindow { window: u64, slide: u64 },
    #[error("interval {interval} ms does not divide slide {slide} ms")]
    IntervalDoesNotDivideSlide { slide: u64, interval: u64 },
    #[error("sampling fraction must be in (0, 1], got {0}")]
    Fraction(f64),
    #[error("absolute sample size must be at least 1, got {0}")]
    AbsoluteSize(f64),
    #[error("histogram queries need a positive bucket width")]
    BucketWidth,
    #[error("bucket width is only meaningful for histogram queries")]
    UnexpectedBucketWidth,
}

/// Sliding-window geometry in milliseconds.
///
/// Event time is cut into tumbling intervals of `interval_ms`; a window of
/// `window_ms` ending at every multiple of `slide_ms` is assembled from the
/// intervals it covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub window_ms: u64,
    pub slide_ms: u64,
    pub interval_ms: u64,
}

impl WindowSpec {
    pub fn new(window_ms: u64, slide_ms: u64, interval_ms: u64) -> Result<Self, ConfigError> {
        let spec = Self {
            window_ms,
            slide_ms,
            interval_ms,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let (window, slide, interval) = (self.window_ms, self.slide_ms, self.interval_ms);
        if window == 0 || slide == 0 || interval == 0 {
            return Err(ConfigError::NonPositiveDuration {
                window,
                slide,
                interval,
            });
        }
        if window % slide != 0 {
            return Err(ConfigError::SlideDoesNotDivideWindow { window, slide });
        }
        if slide % interval != 0 {
            return Err(ConfigError::IntervalDoesNotDivideSlide { slide, interval });
        }
        Ok(())
    }

    /// Number of tumbling intervals making up one window.
    pub fn intervals_per_window(&self) -> u64 {
        self.window_ms / self.interval_ms
    }

    pub fn intervals_per_slide(&self) -> u64 {
        self.slide_ms / self.interval_ms
    }
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            window_ms: 10_000,
            slide_ms: 5_000,
            interval_ms: 5_000,
        }
    }
}

/// How large the per-interval sample may be.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "amount", rename_all = "snake_case")]
pub enum QueryBudget {
    /// At most this many items per interval, across all strata.
    AbsoluteSampleSize(usize),
    /// Keep roughly this fraction of the items of each interval.
    SamplingFraction(f64),
}

impl QueryBudget {
    pub fn absolute(size: usize) -> Result<Self, ConfigError> {
        let budget = QueryBudget::AbsoluteSampleSize(size);
        budget.validate()?;
        Ok(budget)
    }

    pub fn fraction(fraction: f64) -> Result<Self, ConfigError> {
        let budget = QueryBudget::SamplingFraction(fraction);
        budget.validate()?;
        Ok(budget)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match *self {
            QueryBudget::AbsoluteSampleSize(n) if n < 1 => Err(ConfigError::AbsoluteSize(n as f64)),
            QueryBudget::SamplingFraction(f) if !(f > 0.0 && f <= 1.0) => Err(ConfigError::Fraction(f)),
            _ => Ok(()),
        }
    }

    /// Total sample size for an interval expected to hold `expected_items`.
    /// Never less than one.
    pub fn sample_size(&self, expected_items: u64) -> usize {
        match *self {
            QueryBudget::AbsoluteSampleSize(n) => n.max(1),
            QueryBudget::SamplingFraction(f) => ((f * expected_items as f64).ceil() as usize).max(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    Sum,
    Mean,
    Count,
    Histogram,
}

/// A linear query over the window contents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub aggregate: Aggregate,
    /// Bucket width, present exactly for histogram queries.
    pub histogram_bucketing: Option<f64>,
    /// Also report per-stratum results.
    pub per_stratum: bool,
}

impl QuerySpec {
    pub fn sum() -> Self {
        Self::scalar(Aggregate::Sum)
    }

    pub fn mean() -> Self {
        Self::scalar(Aggregate::Mean)
    }

    pub fn count() -> Self {
        Self::scalar(Aggregate::Count)
    }

    pub fn histogram(bucket_width: f64) -> Result<Self, ConfigError> {
        let query = Self {
            aggregate: Aggregate::Histogram,
            histogram_bucketing: Some(bucket_width),
            per_stratum: false,
        };
        query.validate()?;
        Ok(query)
    }

    fn scalar(aggregate: Aggregate) -> Self {
        Self {
            aggregate,
            histogram_bucketing: None,
            per_stratum: false,
        }
    }

    pub fn with_per_stratum(mut self, per_stratum: bool) -> Self {
        self.per_stratum = per_stratum;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match (self.aggregate, self.histogram_bucketing) {
            (Aggregate::Histogram, Some(w)) if w > 0.0 && w.is_finite() => Ok(()),
            (Aggregate::Histogram, _) => Err(ConfigError::BucketWidth),
            (_, Some(_)) => Err(ConfigError::UnexpectedBucketWidth),
            (_, None) => Ok(()),
        }
    }
}
