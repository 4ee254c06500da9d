use super::{RandomSource, SamplingError};

/// What happened to an offered item.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Offer {
    /// The reservoir had room.
    Appended,
    /// The item replaced the item in this slot.
    Replaced(usize),
    Rejected,
}

/// Fixed-capacity uniform sample of a stream (Vitter's algorithm R).
///
/// After `seen` offers the reservoir holds `min(seen, capacity)` items and
/// every offered item is present with probability `capacity / seen`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reservoir<T> {
    capacity: usize,
    items: Vec<T>,
    seen: u64,
}

impl<T> Reservoir<T> {
    pub fn new(capacity: usize) -> Result<Self, SamplingError> {
        if capacity == 0 {
            return Err(SamplingError::ZeroCapacity);
        }
        Ok(Self {
            capacity,
            items: Vec::new(),
            seen: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn items(&self) -> &[T] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Draw `j` uniformly from `[0, seen)` and keep the item in slot `j` when
    /// `j < capacity`, i.e. with probability `capacity / seen`.
    #[inline]
    pub fn offer<R: RandomSource + ?Sized>(&mut self, item: T, rng: &mut R) -> Offer {
        self.seen += 1;
        if self.items.len() < self.capacity {
            self.items.push(item);
            return Offer::Appended;
        }
        let j = rng.index(self.seen);
        if j < self.capacity as u64 {
            self.items[j as usize] = item;
            Offer::Replaced(j as usize)
        } else {
            Offer::Rejected
        }
    }

    /// Lowers the capacity, discarding a uniformly random subset of the
    /// excess. A uniform subset of a uniform sample is itself uniform, so the
    /// reservoir stays a valid sample of everything seen so far.
    ///
    /// Returns the number of items dropped. Raising the capacity is refused
    /// because it would break uniformity for items already rejected.
    pub fn shrink_to<R: RandomSource + ?Sized>(&mut self, capacity: usize, rng: &mut R) -> Result<usize, SamplingError> {
        if capacity == 0 {
            return Err(SamplingError::ZeroCapacity);
        }
        if capacity > self.capacity {
            return Err(SamplingError::CapacityGrowth {
                from: self.capacity,
                to: capacity,
            });
        }
        self.capacity = capacity;
        let mut dropped = 0;
        while self.items.len() > capacity {
            let slot = rng.index(self.items.len() as u64) as usize;
            self.items.swap_remove(slot);
            dropped += 1;
        }
        Ok(dropped)
    }

    /// Empties the reservoir and resets `seen`, optionally with a new capacity.
    pub fn reset(&mut self, capacity: usize) -> Result<(), SamplingError> {
        if capacity == 0 {
            return Err(SamplingError::ZeroCapacity);
        }
        self.capacity = capacity;
        self.items.clear();
        self.seen = 0;
        Ok(())
    }

    pub fn into_items(self) -> Vec<T> {
        self.items
    }

    pub(crate) fn take_items(&mut self) -> Vec<T> {
        self.seen = 0;
        std::mem::take(&mut self.items)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::seeded;

    #[test]
    fn below_capacity_keeps_everything() {
        let mut rng = seeded(1);
        let mut r = Reservoir::new(5).unwrap();
        for i in 0..3 {
            assert_eq!(r.offer(i, &mut rng), Offer::Appended);
        }
        assert_eq!(r.items(), &[0, 1, 2]);
        assert_eq!(r.seen(), 3);
    }

    #[test]
    fn zero_capacity_is_rejected() {
        assert_eq!(Reservoir::<u8>::new(0).unwrap_err(), SamplingError::ZeroCapacity);
    }

    #[test]
    fn size_is_min_of_seen_and_capacity() {
        let mut rng = seeded(2);
        let mut r = Reservoir::new(7).unwrap();
        for i in 0..1000u64 {
            r.offer(i, &mut rng);
            assert_eq!(r.len() as u64, r.seen().min(7));
        }
    }

    #[test]
    fn inclusion_probability_two_of_five() {
        let trials = 100_000;
        let mut hits = [0u32; 5];
        let mut rng = seeded(3);
        for _ in 0..trials {
            let mut r = Reservoir::new(2).unwrap();
            for i in 0..5usize {
                r.offer(i, &mut rng);
            }
            for &i in r.items() {
                hits[i] += 1;
            }
        }
        for h in hits {
            let p = h as f64 / trials as f64;
            assert!((p - 0.4).abs() < 0.01, "inclusion {p}");
        }
    }

    #[test]
    fn shrink_keeps_uniformity() {
        // Fill to 6 of 10, shrink to 3, continue to 20 items: each item
        // should be present with probability 3/20.
        let trials = 60_000;
        let mut hits = [0u32; 20];
        let mut rng = seeded(4);
        for _ in 0..trials {
            let mut r = Reservoir::new(6).unwrap();
            for i in 0..10usize {
                r.offer(i, &mut rng);
            }
            r.shrink_to(3, &mut rng).unwrap();
            for i in 10..20usize {
                r.offer(i, &mut rng);
            }
            for &i in r.items() {
                hits[i] += 1;
            }
        }
        for h in hits {
            let p = h as f64 / trials as f64;
            assert!((p - 0.15).abs() < 0.01, "inclusion {p}");
        }
    }

    #[test]
    fn shrink_refuses_growth() {
        let mut rng = seeded(5);
        let mut r = Reservoir::<u8>::new(2).unwrap();
        assert!(matches!(r.shrink_to(3, &mut rng), Err(SamplingError::CapacityGrowth { .. })));
        assert_eq!(r.shrink_to(0, &mut rng), Err(SamplingError::ZeroCapacity));
    }
}
