//! Synthetic multi-stratum streams and record-file replay.
//!
//! A [`WorkloadSpec`] describes a set of sub-streams, each with a value
//! distribution and a deterministic arrival rate. [`generate`] turns it into
//! a lazy, timestamp-ordered record source that is fully determined by the
//! spec and its seed.

mod generate;
mod presets;
mod replay;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::ParseError;

pub use generate::{generate, Generator};
pub use presets::{preset, PRESETS};
pub use replay::{read_records, replay, write_records, Replay};

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("invalid workload: {0}")]
    Invalid(String),
    #[error("unknown preset `{name}` (available: {})", PRESETS.join(", "))]
    UnknownPreset { name: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: String,
        line: usize,
        #[source]
        source: ParseError,
    },
    #[error("{path}:{line}: timestamp {timestamp} precedes {previous}")]
    OutOfOrder {
        path: String,
        line: usize,
        timestamp: u64,
        previous: u64,
    },
    #[error("{path}: {message}")]
    Config { path: String, message: String },
}

/// Value distribution of one stratum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    Gaussian { mean: f64, std_dev: f64 },
    /// Integer counts, emitted as reals.
    Poisson { lambda: f64 },
    Constant { value: f64 },
}

impl Distribution {
    pub fn mean(&self) -> f64 {
        match *self {
            Distribution::Gaussian { mean, .. } => mean,
            Distribution::Poisson { lambda } => lambda,
            Distribution::Constant { value } => value,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Distribution::Gaussian { std_dev, .. } => std_dev * std_dev,
            Distribution::Poisson { lambda } => lambda,
            Distribution::Constant { .. } => 0.0,
        }
    }

    fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            Distribution::Gaussian { mean, std_dev } => mean.is_finite() && std_dev.is_finite() && std_dev >= 0.0,
            Distribution::Poisson { lambda } => lambda.is_finite() && lambda > 0.0,
            Distribution::Constant { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("invalid distribution {self:?}"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumSpec {
    pub id: String,
    pub distribution: Distribution,
    /// Items per second.
    pub arrival_rate: f64,
    /// Fraction of the whole stream this stratum makes up.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub share: Option<f64>,
}

impl StratumSpec {
    pub fn new(id: impl Into<String>, distribution: Distribution, arrival_rate: f64) -> Self {
        Self {
            id: id.into(),
            distribution,
            arrival_rate,
            share: None,
        }
    }
}

/// How per-stratum arrivals are merged into one stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interleaving {
    /// Merge the strata's own arrival processes in timestamp order; ties go
    /// to the stratum listed first.
    #[default]
    ByTimestamp,
    /// Strata take turns, one record each, skipping exhausted ones. The
    /// merged stream arrives evenly at the summed rate.
    RoundRobin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub strata: Vec<StratumSpec>,
    pub duration_secs: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub interleaving: Interleaving,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let invalid = |m: String| Err(WorkloadError::Invalid(m));
        if self.strata.is_empty() {
            return invalid("at least one stratum is required".into());
        }
        if !(self.duration_secs > 0.0 && self.duration_secs.is_finite()) {
            return invalid(format!("duration must be positive, got {}", self.duration_secs));
        }
        for (i, s) in self.strata.iter().enumerate() {
            if let Err(e) = crate::record::Record::new(0, s.id.as_str(), 0.0) {
                return invalid(format!("stratum id `{}`: {e}", s.id));
            }
            if self.strata[..i].iter().any(|t| t.id == s.id) {
                return invalid(format!("duplicate stratum id `{}`", s.id));
            }
            if !(s.arrival_rate > 0.0 && s.arrival_rate.is_finite()) {
                return invalid(format!("stratum `{}`: arrival rate must be positive", s.id));
            }
            s.distribution.validate().or_else(|m| invalid(format!("stratum `{}`: {m}", s.id)))?;
        }
        let shares: Vec<f64> = self.strata.iter().filter_map(|s| s.share).collect();
        if !shares.is_empty() {
            if shares.len() != self.strata.len() {
                return invalid("either every stratum or none has a share".into());
            }
            if shares.iter().any(|s| !(*s > 0.0 && *s <= 1.0)) || (shares.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return invalid(format!("shares must be in (0, 1] and sum to 1, got {shares:?}"));
            }
        }
        Ok(())
    }

    pub fn total_rate(&self) -> f64 {
        self.strata.iter().map(|s| s.arrival_rate).sum()
    }

    /// Expected number of records.
    pub fn total_items(&self) -> u64 {
        self.strata.iter().map(|s| item_count(s.arrival_rate, self.duration_secs)).sum()
    }

    /// The same workload with every rate scaled so they sum to `total`.
    /// Strata with shares get `share × total`.
    pub fn with_total_rate(&self, total: f64) -> Self {
        let current = self.total_rate();
        let mut out = self.clone();
        for s in &mut out.strata {
            s.arrival_rate = match s.share {
                Some(share) => share * total,
                None => s.arrival_rate * total / current,
            };
        }
        out
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("workload specs always serialize")
    }

    /// Loads and validates a TOML workload file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, WorkloadError> {
        let path = path.as_ref();
        let display = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|source| WorkloadError::Io {
            path: display.clone(),
            source,
        })?;
        let spec = Self::from_toml(&text).map_err(|message| WorkloadError::Config { path: display, message })?;
        spec.validate()?;
        Ok(spec)
    }
}

fn item_count(rate: f64, duration_secs: f64) -> u64 {
    // Rounded first so that e.g. 0.1 s at 10/s gives 1 rather than 0.9999.
    let exact = rate * duration_secs;
    let rounded = exact.round();
    if (exact - rounded).abs() < 1e-9 {
        rounded as u64
    } else {
        exact.floor() as u64
    }
}

/// Timestamp (ms) of the `k`-th arrival at `rate` items per second.
fn arrival_ms(k: u64, rate: f64) -> u64 {
    let exact = k as f64 * 1000.0 / rate;
    let rounded = exact.round();
    if (exact - rounded).abs() < 1e-9 {
        rounded as u64
    } else {
        exact.floor() as u64
    }
}
