use super::{allocate_sample_sizes, Offer, RandomSource, Reservoir, SamplingError, StratumEntry, WeightedSample};
use crate::record::StratumId;

/// Which slice of each stratum's allocation a sampler owns when a stratum is
/// split across several independent workers.
///
/// Worker `index` of `workers` gets `floor(N_i / workers)` slots, plus one if
/// `index < N_i % workers`. A worker never gets fewer than one slot, since a
/// zero-capacity reservoir could not represent the items routed to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkerShare {
    pub index: usize,
    pub workers: usize,
}

impl WorkerShare {
    pub const WHOLE: WorkerShare = WorkerShare { index: 0, workers: 1 };

    pub fn of(&self, capacity: usize) -> usize {
        let base = capacity / self.workers;
        let extra = usize::from(self.index < capacity % self.workers);
        (base + extra).max(1)
    }
}

impl Default for WorkerShare {
    fn default() -> Self {
        Self::WHOLE
    }
}

/// Per-stratum sampling state for the current interval.
#[derive(Debug, Clone)]
pub struct StratumState {
    pub stratum: StratumId,
    pub reservoir: Reservoir<f64>,
    /// Items this stratum delivered during the current interval.
    pub counter: u64,
}

/// Online adaptive stratified reservoir sampler.
///
/// Items are routed to their stratum's reservoir as they arrive, so the
/// sampler never holds more than the per-interval budget. Strata are
/// discovered on the fly: the first item of an unseen stratum re-splits the
/// budget across the enlarged stratum set, and reservoirs that already exceed
/// their new capacity are thinned by uniform eviction right away.
///
/// Capacities are re-derived at every [`start_interval`](Self::start_interval);
/// the set of known strata persists across intervals.
#[derive(Debug, Clone)]
pub struct OasrsSampler {
    total: usize,
    share: WorkerShare,
    /// Indexed by `StratumId`; `None` for ids this sampler never saw.
    slots: Vec<Option<StratumState>>,
    known: Vec<StratumId>,
    retained: usize,
    received: u64,
}

impl OasrsSampler {
    pub fn new(total: usize) -> Result<Self, SamplingError> {
        Self::with_share(total, WorkerShare::WHOLE)
    }

    pub fn with_share(total: usize, share: WorkerShare) -> Result<Self, SamplingError> {
        if total == 0 {
            return Err(SamplingError::ZeroSampleSize);
        }
        Ok(Self {
            total,
            share,
            slots: Vec::new(),
            known: Vec::new(),
            retained: 0,
            received: 0,
        })
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Items currently held across all reservoirs.
    pub fn retained(&self) -> usize {
        self.retained
    }

    /// Items offered since the interval started.
    pub fn received(&self) -> u64 {
        self.received
    }

    pub fn known_strata(&self) -> &[StratumId] {
        &self.known
    }

    pub fn stratum(&self, stratum: StratumId) -> Option<&StratumState> {
        self.slots.get(stratum.index()).and_then(Option::as_ref)
    }

    pub fn strata(&self) -> impl Iterator<Item = &StratumState> {
        self.known.iter().filter_map(|id| self.stratum(*id))
    }

    /// Current capacity of a stratum's reservoir.
    pub fn capacity_of(&self, stratum: StratumId) -> Option<usize> {
        self.stratum(stratum).map(|s| s.reservoir.capacity())
    }

    /// Registers strata ahead of their first item, e.g. from configuration or
    /// from the stratum set observed by other workers. Takes effect at the
    /// next [`start_interval`](Self::start_interval), or immediately if the
    /// current interval has not received anything yet.
    pub fn declare_strata(&mut self, strata: impl IntoIterator<Item = StratumId>) {
        let mut added = false;
        for id in strata {
            added |= self.insert_known(id);
        }
        if added && self.received == 0 {
            self.reallocate_fresh();
        }
    }

    /// Begins a new interval with a (possibly new) total budget.
    /// Any items still held are discarded.
    pub fn start_interval(&mut self, total: usize) -> Result<(), SamplingError> {
        if total == 0 {
            return Err(SamplingError::ZeroSampleSize);
        }
        self.total = total;
        self.reallocate_fresh();
        Ok(())
    }

    /// Routes one item to its stratum. O(1) except when the stratum is new.
    #[inline]
    pub fn offer<R: RandomSource + ?Sized>(&mut self, stratum: StratumId, value: f64, rng: &mut R) -> Offer {
        if self.stratum(stratum).is_none() {
            self.discover(stratum, rng);
        }
        self.received += 1;
        let state = self.slots[stratum.index()].as_mut().expect("stratum registered above");
        state.counter += 1;
        let outcome = state.reservoir.offer(value, rng);
        if outcome == Offer::Appended {
            self.retained += 1;
        }
        outcome
    }

    /// Emits the interval's weighted sample and resets counters and
    /// reservoirs for the next interval, keeping the current budget.
    pub fn close_interval(&mut self, interval_start: u64, interval_end: u64) -> WeightedSample {
        let mut entries = Vec::new();
        for id in &self.known {
            let Some(state) = self.slots[id.index()].as_mut() else {
                continue;
            };
            if state.counter == 0 {
                continue;
            }
            let items = state.reservoir.take_items();
            let entry = StratumEntry::new(state.stratum, items, state.counter)
                .expect("reservoir never holds more items than were counted, and at least one when counted");
            entries.push(entry);
            state.counter = 0;
        }
        self.reallocate_fresh();
        WeightedSample::new(interval_start, interval_end, entries)
    }

    fn insert_known(&mut self, id: StratumId) -> bool {
        assert!(
            id != StratumId::UNSTRATIFIED,
            "the unstratified pseudo-id cannot be sampled per stratum"
        );
        match self.known.binary_search(&id) {
            Ok(_) => false,
            Err(pos) => {
                self.known.insert(pos, id);
                if self.slots.len() <= id.index() {
                    self.slots.resize_with(id.index() + 1, || None);
                }
                true
            }
        }
    }

    fn capacities(&self) -> impl Iterator<Item = (StratumId, usize)> + '_ {
        // Each stratum needs at least one slot.
        let total = self.total.max(self.known.len());
        let sizes = allocate_sample_sizes(total, self.known.iter().copied()).expect("known is non-empty and total covers it");
        sizes.into_iter().map(move |(id, n)| (id, self.share.of(n)))
    }

    /// Fresh, empty reservoirs for every known stratum.
    fn reallocate_fresh(&mut self) {
        self.retained = 0;
        self.received = 0;
        if self.known.is_empty() {
            return;
        }
        let caps: Vec<_> = self.capacities().collect();
        for (id, cap) in caps {
            let slot = &mut self.slots[id.index()];
            match slot {
                Some(state) => {
                    state.reservoir.reset(cap).expect("capacity is at least one");
                    state.counter = 0;
                }
                None => {
                    *slot = Some(StratumState {
                        stratum: id,
                        reservoir: Reservoir::new(cap).expect("capacity is at least one"),
                        counter: 0,
                    })
                }
            }
        }
    }

    #[cold]
    fn discover<R: RandomSource + ?Sized>(&mut self, stratum: StratumId, rng: &mut R) {
        self.insert_known(stratum);
        let caps: Vec<_> = self.capacities().collect();
        for (id, cap) in caps {
            let slot = &mut self.slots[id.index()];
            match slot {
                Some(state) => {
                    // Capacities never grow when strata are added, but keep
                    // the smaller one to be safe.
                    let cap = cap.min(state.reservoir.capacity());
                    let dropped = state.reservoir.shrink_to(cap, rng).expect("shrinking to a positive capacity");
                    self.retained -= dropped;
                }
                None => {
                    *slot = Some(StratumState {
                        stratum: id,
                        reservoir: Reservoir::new(cap).expect("capacity is at least one"),
                        counter: 0,
                    })
                }
            }
        }
    }
}
