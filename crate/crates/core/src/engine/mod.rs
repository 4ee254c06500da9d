//! Windowed query execution over an event-time ordered record stream.
//!
//! Event time is cut into tumbling intervals. Each interval is turned into a
//! [`WeightedSample`] by the configured sampler, and every sliding window is
//! answered from the samples of the intervals it covers. Windows are never
//! resampled; an interval shared by two windows contributes the same sample
//! to both.
//!
//! Two execution models are offered:
//!
//! * **pipelined**: every record is handed to the sampler the moment it
//!   arrives; only the stratified reservoirs are held in memory.
//! * **batched**: the interval is collected first and sampled at interval
//!   close. The stratified reservoir sampler still samples on arrival, so the
//!   two models give identical samples for it; the batch samplers (SRS and
//!   STS) exist only in this model.

mod feedback;
mod result;

use std::borrow::Borrow;
use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{self, Batch, BaselineError};
use crate::distributed::{merge_samples, DistributedError, DistributedSampler, WorkerConfig};
use crate::estimator::{estimate, EstimateError, IntervalMethod};
use crate::record::{Aggregate, ConfigError, Item, QueryBudget, QuerySpec, Record, StratumId, StratumInterner, WindowSpec};
use crate::sampling::{seeded, OasrsSampler, SamplingError, SeededRng, StratumEntry, WeightedSample};

pub use feedback::{accuracy_loss, adaptive_feedback, Feedback};
pub use result::{RunOutput, RunStats, StratumRow, WindowResult, WindowRow};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid execution config: {0}")]
    InvalidConfig(String),
    #[error("accuracy loss is undefined for an exact result of zero")]
    UndefinedLoss,
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Distributed(#[from] DistributedError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionModel {
    Batched,
    #[default]
    Pipelined,
}

/// Which sampler produces the per-interval sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    /// Online adaptive stratified reservoir sampling.
    Oasrs,
    /// Simple random sampling by random sort (batched only).
    Srs,
    /// Grouped stratified sampling (batched only).
    Sts,
    /// No sampling: the exact answer.
    None,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 4] = [SamplerKind::Oasrs, SamplerKind::Srs, SamplerKind::Sts, SamplerKind::None];

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Oasrs => "oasrs",
            SamplerKind::Srs => "srs",
            SamplerKind::Sts => "sts",
            SamplerKind::None => "none",
        }
    }

    /// The execution model a sampler runs under unless told otherwise.
    pub fn natural_model(self) -> ExecutionModel {
        match self {
            SamplerKind::Oasrs | SamplerKind::None => ExecutionModel::Pipelined,
            SamplerKind::Srs | SamplerKind::Sts => ExecutionModel::Batched,
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SamplerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown sampler `{s}` (expected oasrs, srs, sts or none)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionConfig {
    pub model: ExecutionModel,
    pub sampler: SamplerKind,
    pub window: WindowSpec,
    pub budget: QueryBudget,
    pub query: QuerySpec,
    pub seed: u64,
    /// Relative error bound to steer the budget towards.
    pub target_error: Option<f64>,
    pub interval_method: IntervalMethod,
    /// How far behind the newest timestamp a record may arrive.
    pub lateness_ms: u64,
    /// Also compute the exact answer of every window.
    pub exact_shadow: bool,
    /// Expected item count of the first interval, used to turn a sampling
    /// fraction into a sample size before any interval has been observed.
    pub initial_interval_items: u64,
    pub workers: WorkerConfig,
}

impl Default for ExecutionConfig {
    fn default() -> Self {
        Self {
            model: ExecutionModel::Pipelined,
            sampler: SamplerKind::Oasrs,
            window: WindowSpec::default(),
            budget: QueryBudget::SamplingFraction(0.1),
            query: QuerySpec::sum(),
            seed: 0,
            target_error: None,
            interval_method: IntervalMethod::default(),
            lateness_ms: 0,
            exact_shadow: false,
            initial_interval_items: 1000,
            workers: WorkerConfig::default(),
        }
    }
}

impl ExecutionConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        self.window.validate()?;
        self.budget.validate()?;
        self.query.validate()?;
        let batch_only = matches!(self.sampler, SamplerKind::Srs | SamplerKind::Sts);
        if batch_only && self.model != ExecutionModel::Batched {
            return Err(EngineError::InvalidConfig(format!(
                "sampler {} needs the whole interval and only runs in the batched model",
                self.sampler
            )));
        }
        if self.workers.workers == 0 {
            return Err(EngineError::InvalidConfig("workers must be at least 1".into()));
        }
        if self.workers.workers > 1 && (self.sampler != SamplerKind::Oasrs || self.model != ExecutionModel::Batched) {
            return Err(EngineError::InvalidConfig(
                "multiple workers are supported for the oasrs sampler in the batched model".into(),
            ));
        }
        if let Some(t) = self.target_error {
            if !(t > 0.0 && t.is_finite()) {
                return Err(EngineError::InvalidConfig(format!("target error must be positive, got {t}")));
            }
        }
        Ok(())
    }

    fn distributed(&self) -> bool {
        self.workers.workers > 1
    }
}

/// Where an open interval keeps its records.
#[derive(Debug)]
enum Buffer {
    /// Stratified reservoirs filled on arrival.
    Reservoirs(OasrsSampler),
    /// The whole interval, sampled at close.
    Batch(Vec<Item>),
    /// Exact pass in the pipelined model: values grouped by stratum as they
    /// arrive.
    Grouped(BTreeMap<StratumId, Vec<f64>>),
}

#[derive(Debug)]
struct OpenInterval {
    buffer: Buffer,
    held: usize,
    items: u64,
    exact_sum: f64,
}

#[derive(Debug, Clone)]
struct ClosedInterval {
    sample: WeightedSample,
    items: u64,
    exact_sum: f64,
}

/// Incremental form of [`run_stream`]: push records one at a time and drain
/// window results as they become final.
#[derive(Debug)]
pub struct StreamEngine {
    config: ExecutionConfig,
    interner: StratumInterner,
    rng: SeededRng,
    distributed: Option<DistributedSampler<SeededRng>>,
    budget: QueryBudget,
    origin: Option<u64>,
    max_ts: u64,
    next_close: u64,
    open: BTreeMap<u64, OpenInterval>,
    closed: VecDeque<ClosedInterval>,
    known: Vec<StratumId>,
    last_interval_items: Option<u64>,
    results: Vec<WindowResult>,
    stats: RunStats,
    last_emit: Instant,
}

impl StreamEngine {
    pub fn new(config: ExecutionConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let distributed = if config.distributed() {
            let total = config.budget.sample_size(config.initial_interval_items);
            Some(DistributedSampler::seeded(config.workers, total, config.seed)?)
        } else {
            None
        };
        Ok(Self {
            rng: seeded(config.seed),
            budget: config.budget,
            interner: StratumInterner::new(),
            distributed,
            origin: None,
            max_ts: 0,
            next_close: 0,
            open: BTreeMap::new(),
            closed: VecDeque::new(),
            known: Vec::new(),
            last_interval_items: None,
            results: Vec::new(),
            stats: RunStats::default(),
            last_emit: Instant::now(),
            config,
        })
    }

    pub fn config(&self) -> &ExecutionConfig {
        &self.config
    }

    /// The budget in effect, after any adaptive feedback.
    pub fn budget(&self) -> QueryBudget {
        self.budget
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    pub fn interner(&self) -> &StratumInterner {
        &self.interner
    }

    /// Removes and returns the window results emitted so far.
    pub fn drain_results(&mut self) -> Vec<WindowResult> {
        std::mem::take(&mut self.results)
    }

    /// Offers one record. Records more than `lateness_ms` behind the newest
    /// timestamp seen are dropped and counted in
    /// [`RunStats::items_dropped_late`].
    pub fn push(&mut self, record: &Record) -> Result<(), EngineError> {
        let item = self.interner.item(record);
        self.push_item(item)
    }

    /// Like [`push`](Self::push) for an already interned item.
    pub fn push_item(&mut self, item: Item) -> Result<(), EngineError> {
        let interval = self.config.window.interval_ms;
        let ts = item.timestamp;
        let origin = *self.origin.get_or_insert_with(|| {
            self.max_ts = ts;
            ts - ts % self.config.window.slide_ms
        });
        if ts < origin || ts.saturating_add(self.config.lateness_ms) < self.max_ts {
            self.stats.items_dropped_late += 1;
            return Ok(());
        }
        self.max_ts = self.max_ts.max(ts);
        let watermark = self.max_ts - self.config.lateness_ms.min(self.max_ts);
        if watermark >= origin {
            self.close_before((watermark - origin) / interval)?;
        }

        let index = (ts - origin) / interval;
        if !self.open.contains_key(&index) {
            let fresh = self.open_interval()?;
            self.open.insert(index, fresh);
        }
        let open = self.open.get_mut(&index).expect("inserted above");
        open.items += 1;
        if self.config.exact_shadow {
            open.exact_sum += item.value;
        }
        let before = open.held;
        match &mut open.buffer {
            Buffer::Reservoirs(sampler) => {
                sampler.offer(item.stratum, item.value, &mut self.rng);
                open.held = sampler.retained();
            }
            Buffer::Batch(items) => {
                items.push(item);
                open.held += 1;
            }
            Buffer::Grouped(groups) => {
                groups.entry(item.stratum).or_default().push(item.value);
                open.held += 1;
            }
        }
        let after = open.held;
        self.stats.items_ingested += 1;
        if after > before {
            let held: usize = if self.open.len() == 1 {
                after
            } else {
                self.open.values().map(|o| o.held).sum()
            };
            self.stats.peak_retained = self.stats.peak_retained.max(held);
        }
        Ok(())
    }

    /// Closes every open interval and emits the remaining windows.
    pub fn finish(mut self) -> Result<RunOutput, EngineError> {
        if let Some(origin) = self.origin {
            let last = (self.max_ts - origin) / self.config.window.interval_ms;
            self.close_before(last + 1)?;
        }
        debug_assert!(self.open.is_empty());
        Ok(RunOutput {
            windows: self.results,
            stats: self.stats,
            strata: (0..self.interner.len() as u32)
                .map(|i| self.interner.name(StratumId(i)).expect("dense ids").clone())
                .collect(),
        })
    }

    fn expected_items(&self) -> u64 {
        self.last_interval_items.unwrap_or(self.config.initial_interval_items)
    }

    fn open_interval(&mut self) -> Result<OpenInterval, EngineError> {
        let buffer = match (self.config.sampler, self.config.model) {
            (SamplerKind::Oasrs, _) if self.config.distributed() => Buffer::Batch(Vec::new()),
            (SamplerKind::Oasrs, _) => {
                let total = self.budget.sample_size(self.expected_items());
                let mut sampler = OasrsSampler::new(total)?;
                sampler.declare_strata(self.known.iter().copied());
                sampler.start_interval(total)?;
                Buffer::Reservoirs(sampler)
            }
            (SamplerKind::None, ExecutionModel::Pipelined) => Buffer::Grouped(BTreeMap::new()),
            _ => Buffer::Batch(Vec::new()),
        };
        Ok(OpenInterval {
            buffer,
            held: 0,
            items: 0,
            exact_sum: 0.0,
        })
    }

    /// Closes all intervals with index below `end_index`.
    fn close_before(&mut self, end_index: u64) -> Result<(), EngineError> {
        while self.next_close < end_index {
            let index = self.next_close;
            self.close_interval(index)?;
            self.next_close += 1;
        }
        Ok(())
    }

    fn close_interval(&mut self, index: u64) -> Result<(), EngineError> {
        let origin = self.origin.expect("intervals exist only after the first record");
        let interval = self.config.window.interval_ms;
        let (start, end) = (origin + index * interval, origin + (index + 1) * interval);
        let closed = match self.open.remove(&index) {
            None => ClosedInterval {
                sample: WeightedSample::empty(start, end),
                items: 0,
                exact_sum: 0.0,
            },
            Some(open) => ClosedInterval {
                sample: self.sample_interval(open.buffer, start, end)?,
                items: open.items,
                exact_sum: open.exact_sum,
            },
        };
        for e in &closed.sample.entries {
            if e.stratum != StratumId::UNSTRATIFIED {
                if let Err(pos) = self.known.binary_search(&e.stratum) {
                    self.known.insert(pos, e.stratum);
                }
            }
        }
        self.last_interval_items = Some(closed.items);
        self.stats.intervals_closed += 1;
        self.closed.push_back(closed);
        let per_window = self.config.window.intervals_per_window() as usize;
        while self.closed.len() > per_window {
            self.closed.pop_front();
        }

        let elapsed = (index + 1) * interval;
        if elapsed % self.config.window.slide_ms == 0 && elapsed >= self.config.window.window_ms {
            self.emit_window(origin + elapsed)?;
        }
        Ok(())
    }

    fn sample_interval(&mut self, buffer: Buffer, start: u64, end: u64) -> Result<WeightedSample, EngineError> {
        Ok(match buffer {
            Buffer::Reservoirs(mut sampler) => sampler.close_interval(start, end),
            Buffer::Grouped(groups) => exact_sample(groups, start, end),
            Buffer::Batch(items) => {
                let n = items.len();
                match self.config.sampler {
                    SamplerKind::Oasrs => {
                        let total = self.budget.sample_size(self.expected_items());
                        let distributed = self.distributed.as_mut().expect("batched oasrs without workers samples on arrival");
                        distributed.set_total(total)?;
                        let locals = distributed.sample_interval(&items, start, end)?;
                        merge_samples(&locals)?
                    }
                    SamplerKind::Srs => {
                        let k = self.budget.sample_size(n as u64);
                        baselines::srs_sample(&Batch::new(start, end, items)?, k, &mut self.rng)?
                    }
                    SamplerKind::Sts => {
                        let fraction = match self.budget {
                            QueryBudget::SamplingFraction(f) => f,
                            QueryBudget::AbsoluteSampleSize(k) => (k as f64 / n.max(1) as f64).min(1.0),
                        };
                        baselines::sts_sample(&Batch::new(start, end, items)?, fraction, &mut self.rng)?
                    }
                    SamplerKind::None => {
                        let mut groups: BTreeMap<StratumId, Vec<f64>> = BTreeMap::new();
                        for it in items {
                            groups.entry(it.stratum).or_default().push(it.value);
                        }
                        exact_sample(groups, start, end)
                    }
                }
            }
        })
    }

    fn emit_window(&mut self, window_end: u64) -> Result<(), EngineError> {
        let window_start = window_end - self.config.window.window_ms;
        let entries = self.closed.iter().flat_map(|c| c.sample.entries.iter());
        let report = match estimate(entries, &self.config.query, self.config.interval_method) {
            Ok(report) => Some(report),
            Err(EstimateError::UndefinedMean) => None,
            Err(e) => return Err(e.into()),
        };
        let items_processed: u64 = self.closed.iter().map(|c| c.items).sum();
        let items_sampled: u64 = self.closed.iter().map(|c| c.sample.items_sampled() as u64).sum();
        let exact = if self.config.exact_shadow {
            let sum: f64 = self.closed.iter().map(|c| c.exact_sum).sum();
            match self.config.query.aggregate {
                Aggregate::Sum => Some(sum),
                Aggregate::Count => Some(items_processed as f64),
                Aggregate::Mean => (items_processed > 0).then(|| sum / items_processed as f64),
                Aggregate::Histogram => None,
            }
        } else {
            None
        };
        let accuracy_loss = match (&report, exact) {
            (Some(r), Some(x)) if x != 0.0 => Some(accuracy_loss(r.point_estimate, x)?),
            _ => None,
        };
        let now = Instant::now();
        let result = WindowResult {
            window_start,
            window_end,
            report,
            exact,
            accuracy_loss,
            items_processed,
            items_sampled,
            processing_ms: now.duration_since(self.last_emit).as_secs_f64() * 1e3,
        };
        self.last_emit = now;

        if let Some(target) = self.config.target_error {
            let cap = self.last_interval_items.unwrap_or(0);
            match adaptive_feedback(&result, self.budget, target, cap) {
                Feedback::Increased(next) => {
                    self.budget = next;
                    self.stats.budget_increases += 1;
                }
                Feedback::Skipped => self.stats.feedback_skipped += 1,
                Feedback::Unchanged => {}
            }
        }
        self.results.push(result);
        Ok(())
    }
}

fn exact_sample(groups: BTreeMap<StratumId, Vec<f64>>, start: u64, end: u64) -> WeightedSample {
    let entries = groups
        .into_iter()
        .map(|(stratum, items)| {
            let counter = items.len() as u64;
            StratumEntry {
                stratum,
                items,
                weight: 1.0,
                counter,
            }
        })
        .collect();
    WeightedSample::new(start, end, entries)
}

/// Runs `config` over an event-time ordered record stream.
pub fn run_stream<I>(records: I, config: &ExecutionConfig) -> Result<RunOutput, EngineError>
where
    I: IntoIterator,
    I::Item: Borrow<Record>,
{
    let mut engine = StreamEngine::new(config.clone())?;
    for r in records {
        engine.push(r.borrow())?;
    }
    engine.finish()
}
