use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::Arc;

use rand_distr::{Distribution as _, Normal, Poisson};

use super::{arrival_ms, item_count, Distribution, Interleaving, WorkloadError, WorkloadSpec};
use crate::record::Record;
use crate::sampling::{derive_seed, seeded, SeededRng};

#[derive(Debug, Clone)]
enum ValueSource {
    Normal(Normal<f64>),
    Poisson(Poisson<f64>),
    Constant(f64),
}

impl ValueSource {
    fn new(d: Distribution) -> Self {
        match d {
            Distribution::Gaussian { mean, std_dev } => {
                ValueSource::Normal(Normal::new(mean, std_dev).expect("validated"))
            }
            Distribution::Poisson { lambda } => ValueSource::Poisson(Poisson::new(lambda).expect("validated")),
            Distribution::Constant { value } => ValueSource::Constant(value),
        }
    }

    fn draw(&self, rng: &mut SeededRng) -> f64 {
        match self {
            ValueSource::Normal(d) => d.sample(rng),
            ValueSource::Poisson(d) => d.sample(rng),
            ValueSource::Constant(v) => *v,
        }
    }
}

#[derive(Debug, Clone)]
struct Lane {
    name: Arc<str>,
    source: ValueSource,
    rng: SeededRng,
    rate: f64,
    next: u64,
    count: u64,
}

impl Lane {
    fn exhausted(&self) -> bool {
        self.next >= self.count
    }

    fn next_timestamp(&self) -> u64 {
        arrival_ms(self.next, self.rate)
    }

    fn emit(&mut self, timestamp: u64) -> Record {
        self.next += 1;
        Record {
            timestamp,
            stratum: self.name.clone(),
            value: self.source.draw(&mut self.rng),
        }
    }
}

/// Lazy record source built by [`generate`].
#[derive(Debug, Clone)]
pub struct Generator {
    lanes: Vec<Lane>,
    interleaving: Interleaving,
    heap: BinaryHeap<Reverse<(u64, usize)>>,
    cursor: usize,
    emitted: u64,
    total: u64,
    total_rate: f64,
}

/// Builds the record stream of `spec`.
///
/// Each stratum draws its values from its own generator seeded from the
/// workload seed and the stratum's position, so adding a stratum does not
/// change the values of the others.
pub fn generate(spec: &WorkloadSpec) -> Result<Generator, WorkloadError> {
    spec.validate()?;
    let lanes: Vec<Lane> = spec
        .strata
        .iter()
        .enumerate()
        .map(|(i, s)| Lane {
            name: Arc::from(s.id.as_str()),
            source: ValueSource::new(s.distribution),
            rng: seeded(derive_seed(spec.seed, i as u64 + 1)),
            rate: s.arrival_rate,
            next: 0,
            count: item_count(s.arrival_rate, spec.duration_secs),
        })
        .collect();
    let heap = match spec.interleaving {
        Interleaving::ByTimestamp => lanes
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.exhausted())
            .map(|(i, l)| Reverse((l.next_timestamp(), i)))
            .collect(),
        Interleaving::RoundRobin => BinaryHeap::new(),
    };
    Ok(Generator {
        total: lanes.iter().map(|l| l.count).sum(),
        total_rate: spec.total_rate(),
        lanes,
        interleaving: spec.interleaving,
        heap,
        cursor: 0,
        emitted: 0,
    })
}

impl Iterator for Generator {
    type Item = Record;

    fn next(&mut self) -> Option<Record> {
        if self.emitted == self.total {
            return None;
        }
        let record = match self.interleaving {
            Interleaving::ByTimestamp => {
                let Reverse((ts, i)) = self.heap.pop()?;
                let lane = &mut self.lanes[i];
                let record = lane.emit(ts);
                if !lane.exhausted() {
                    self.heap.push(Reverse((lane.next_timestamp(), i)));
                }
                record
            }
            Interleaving::RoundRobin => {
                while self.lanes[self.cursor].exhausted() {
                    self.cursor = (self.cursor + 1) % self.lanes.len();
                }
                let ts = arrival_ms(self.emitted, self.total_rate);
                let record = self.lanes[self.cursor].emit(ts);
                self.cursor = (self.cursor + 1) % self.lanes.len();
                record
            }
        };
        self.emitted += 1;
        Some(record)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.total - self.emitted) as usize;
        (left, Some(left))
    }
}

impl ExactSizeIterator for Generator {}
