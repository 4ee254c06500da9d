//! Synchronization-free parallel stratified reservoir sampling.
//!
//! Every stratum is spread over `w` workers. Each worker runs its own
//! [`OasrsSampler`] over the records routed to it, with a reservoir of about
//! `N_i / w` per stratum and its own counters. Workers share nothing but the
//! immutable configuration while an interval is in progress; at interval
//! close each worker sends one [`LocalSample`] and [`merge_samples`] stacks
//! them, treating every (worker, stratum) pair as a stratum of its own.
//!
//! ```
//! use stratified_stream::distributed::{merge_samples, partition_and_sample, WorkerConfig};
//! use stratified_stream::estimator::estimate_sum;
//! use stratified_stream::record::{Item, StratumId};
//!
//! let items: Vec<Item> = (0..1000)
//!     .map(|i| Item { timestamp: i, stratum: StratumId((i % 3) as u32), value: 1.0 })
//!     .collect();
//! let locals = partition_and_sample(&items, 0, 1000, WorkerConfig::new(4), 120, 7).unwrap();
//! assert_eq!(locals.len(), 4);
//! let merged = merge_samples(&locals).unwrap();
//! assert_eq!(estimate_sum(&merged.entries), 1000.0);
//! ```

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::{Item, StratumId};
use crate::sampling::{derive_seed, seeded, OasrsSampler, RandomSource, SamplingError, SeededRng, StratumEntry, WeightedSample, WorkerShare};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributedError {
    #[error("at least one worker is required")]
    NoWorkers,
    #[error("expected {expected} random sources, got {got}")]
    RngCount { expected: usize, got: usize },
    #[error("worker order must be a permutation of 0..{0}")]
    BadOrder(usize),
    #[error("cannot merge samples of different intervals ([{0}, {1}) vs [{2}, {3}))")]
    IntervalMismatch(u64, u64, u64, u64),
    #[error("nothing to merge")]
    NothingToMerge,
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

/// How records are assigned to workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partitioner {
    /// Record `j` of the interval goes to worker `j mod w`.
    #[default]
    RoundRobin,
    /// Record `j` goes to worker `mix(j) mod w`.
    HashByRecordIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerConfig {
    pub workers: usize,
    pub partitioner: Partitioner,
}

impl WorkerConfig {
    pub fn new(workers: usize) -> Self {
        Self {
            workers,
            partitioner: Partitioner::RoundRobin,
        }
    }

    pub fn with_partitioner(mut self, partitioner: Partitioner) -> Self {
        self.partitioner = partitioner;
        self
    }
}

impl Default for WorkerConfig {
    fn default() -> Self {
        Self::new(1)
    }
}

/// Worker that receives the `index`-th record of an interval.
pub fn route(partitioner: Partitioner, index: u64, workers: usize) -> usize {
    match partitioner {
        Partitioner::RoundRobin => (index % workers as u64) as usize,
        Partitioner::HashByRecordIndex => (derive_seed(0x5EED, index.wrapping_add(1)) % workers as u64) as usize,
    }
}

/// What one worker reports at interval close.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSample {
    pub worker: usize,
    pub interval_start: u64,
    pub interval_end: u64,
    /// One entry per stratum the worker saw, with its local counter and
    /// local weight.
    pub entries: Vec<StratumEntry>,
}

/// A single worker's sampler and randomness.
#[derive(Debug, Clone)]
pub struct Worker<R> {
    share: WorkerShare,
    sampler: OasrsSampler,
    rng: R,
}

impl<R: RandomSource> Worker<R> {
    pub fn index(&self) -> usize {
        self.share.index
    }

    pub fn sampler(&self) -> &OasrsSampler {
        &self.sampler
    }

    fn run<'a>(&mut self, items: impl Iterator<Item = &'a Item>, start: u64, end: u64) -> LocalSample {
        for item in items {
            self.sampler.offer(item.stratum, item.value, &mut self.rng);
        }
        let sample = self.sampler.close_interval(start, end);
        LocalSample {
            worker: self.share.index,
            interval_start: start,
            interval_end: end,
            entries: sample.entries,
        }
    }
}

/// `w` independent workers that persist across intervals.
#[derive(Debug, Clone)]
pub struct DistributedSampler<R> {
    config: WorkerConfig,
    workers: Vec<Worker<R>>,
    total: usize,
    known: BTreeSet<StratumId>,
}

impl DistributedSampler<SeededRng> {
    /// Worker `i` draws from `seeded(derive_seed(seed, i))`; worker 0 uses
    /// `seed` itself, so one worker reproduces the single-context sampler.
    pub fn seeded(config: WorkerConfig, total: usize, seed: u64) -> Result<Self, DistributedError> {
        let rngs = (0..config.workers as u64).map(|i| seeded(derive_seed(seed, i))).collect();
        Self::new(config, total, rngs)
    }
}

impl<R: RandomSource> DistributedSampler<R> {
    pub fn new(config: WorkerConfig, total: usize, rngs: Vec<R>) -> Result<Self, DistributedError> {
        if config.workers == 0 {
            return Err(DistributedError::NoWorkers);
        }
        if rngs.len() != config.workers {
            return Err(DistributedError::RngCount {
                expected: config.workers,
                got: rngs.len(),
            });
        }
        let workers = rngs
            .into_iter()
            .enumerate()
            .map(|(index, rng)| {
                let share = WorkerShare {
                    index,
                    workers: config.workers,
                };
                Ok(Worker {
                    share,
                    sampler: OasrsSampler::with_share(total, share)?,
                    rng,
                })
            })
            .collect::<Result<_, SamplingError>>()?;
        Ok(Self {
            config,
            workers,
            total,
            known: BTreeSet::new(),
        })
    }

    pub fn config(&self) -> WorkerConfig {
        self.config
    }

    pub fn workers(&self) -> &[Worker<R>] {
        &self.workers
    }

    /// Total budget for intervals started from now on.
    pub fn set_total(&mut self, total: usize) -> Result<(), DistributedError> {
        if total == 0 {
            return Err(SamplingError::ZeroSampleSize.into());
        }
        self.total = total;
        Ok(())
    }

    /// Strata known to every worker at the start of the next interval.
    pub fn known_strata(&self) -> impl Iterator<Item = StratumId> + '_ {
        self.known.iter().copied()
    }

    fn begin(&mut self) -> Result<(), DistributedError> {
        for w in &mut self.workers {
            w.sampler.declare_strata(self.known.iter().copied());
            w.sampler.start_interval(self.total)?;
        }
        Ok(())
    }

    fn finish(&mut self, locals: &[LocalSample]) {
        self.known.extend(locals.iter().flat_map(|l| l.entries.iter().map(|e| e.stratum)));
    }

    /// Runs the workers one after another in `order`. Since workers share no
    /// state, every order yields the same local samples.
    pub fn sample_interval_in_order(&mut self, items: &[Item], start: u64, end: u64, order: &[usize]) -> Result<Vec<LocalSample>, DistributedError> {
        let w = self.config.workers;
        let mut seen = vec![false; w];
        if order.len() != w || order.iter().any(|&i| i >= w || std::mem::replace(&mut seen[i], true)) {
            return Err(DistributedError::BadOrder(w));
        }
        self.begin()?;
        let partitioner = self.config.partitioner;
        let mut locals: Vec<Option<LocalSample>> = vec![None; w];
        for &i in order {
            let local = self.workers[i].run(routed(items, partitioner, i, w), start, end);
            locals[i] = Some(local);
        }
        let locals: Vec<LocalSample> = locals.into_iter().map(|l| l.expect("every worker ran")).collect();
        self.finish(&locals);
        Ok(locals)
    }
}

impl<R: RandomSource + Send> DistributedSampler<R> {
    /// Runs all workers concurrently, one thread each, and collects their
    /// local samples in worker order.
    pub fn sample_interval(&mut self, items: &[Item], start: u64, end: u64) -> Result<Vec<LocalSample>, DistributedError> {
        self.begin()?;
        let w = self.config.workers;
        let partitioner = self.config.partitioner;
        let locals: Vec<LocalSample> = if w == 1 {
            vec![self.workers[0].run(items.iter(), start, end)]
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = self
                    .workers
                    .iter_mut()
                    .enumerate()
                    .map(|(i, worker)| scope.spawn(move || worker.run(routed(items, partitioner, i, w), start, end)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
            })
        };
        self.finish(&locals);
        Ok(locals)
    }
}

fn routed(items: &[Item], partitioner: Partitioner, worker: usize, workers: usize) -> Box<dyn Iterator<Item = &Item> + '_> {
    match partitioner {
        Partitioner::RoundRobin => Box::new(items.iter().skip(worker).step_by(workers)),
        Partitioner::HashByRecordIndex => Box::new(
            items
                .iter()
                .enumerate()
                .filter(move |(j, _)| route(partitioner, *j as u64, workers) == worker)
                .map(|(_, item)| item),
        ),
    }
}

/// One-shot parallel sampling of a single interval with fresh workers.
pub fn partition_and_sample(items: &[Item], start: u64, end: u64, config: WorkerConfig, total: usize, seed: u64) -> Result<Vec<LocalSample>, DistributedError> {
    DistributedSampler::seeded(config, total, seed)?.sample_interval(items, start, end)
}

/// Stacks local samples into one weighted sample. No counters are combined
/// across workers: each local entry keeps the weight its worker computed.
pub fn merge_samples(locals: &[LocalSample]) -> Result<WeightedSample, DistributedError> {
    let first = locals.first().ok_or(DistributedError::NothingToMerge)?;
    let (start, end) = (first.interval_start, first.interval_end);
    if let Some(bad) = locals.iter().find(|l| (l.interval_start, l.interval_end) != (start, end)) {
        return Err(DistributedError::IntervalMismatch(start, end, bad.interval_start, bad.interval_end));
    }
    let entries = locals.iter().flat_map(|l| l.entries.iter().cloned()).collect();
    Ok(WeightedSample::new(start, end, entries))
}
