use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The randomness a sampler consumes.
///
/// Every `rand::Rng` is a `RandomSource`. The indirection lets tests drive
/// the samplers with scripted draws, for instance to enumerate every possible
/// outcome of a small sampling run.
pub trait RandomSource {
    /// Uniform integer in `0..bound`. `bound` is never zero.
    fn index(&mut self, bound: u64) -> u64;

    /// Uniform real in `[0, 1)`.
    fn unit(&mut self) -> f64;
}

impl<R: Rng + ?Sized> RandomSource for R {
    #[inline]
    fn index(&mut self, bound: u64) -> u64 {
        self.random_range(0..bound)
    }

    #[inline]
    fn unit(&mut self) -> f64 {
        self.random::<f64>()
    }
}

/// The generator used throughout the crate.
pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent seed for a numbered sub-stream of randomness
/// (splitmix64 finalizer). `derive_seed(s, 0) == s`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    if stream == 0 {
        return seed;
    }
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
