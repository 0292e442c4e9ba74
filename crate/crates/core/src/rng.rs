//! Seeded, splittable random streams.
//!
//! All randomness in the crate flows through [`Stream`], a thin wrapper
//! around the counter-based ChaCha8 generator. ChaCha exposes a 64-bit
//! stream number alongside the 256-bit key, which gives us cheap,
//! statistically independent substreams: every (seed, stream id) pair is a
//! separate generator whose output does not depend on how many draws any
//! other stream has made.
//!
//! That property is what makes parallel work deterministic here. Each unit
//! of work (a Monte Carlo trial, a training epoch, one attacked example,
//! one image pushed through the print-scan channel) derives its stream id
//! from a [`Purpose`] tag and its own index, so results are identical no
//! matter how work is scheduled across threads — or whether it is
//! parallelized at all.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Role tags baked into the high byte of a stream id so that different
/// consumers of the same stage seed can never collide.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    /// One Monte Carlo election trial per index.
    Trial = 1,
    /// One synthesized bubble image per index.
    Synth = 2,
    /// Model weight initialization.
    WeightInit = 3,
    /// Mini-batch order for one training epoch per index.
    EpochShuffle = 4,
    /// One attacked example per index (restart draws included).
    Attack = 5,
    /// One image pushed through the print-scan channel per index.
    Channel = 6,
    /// Train/validation assignment during dataset generation.
    Split = 7,
}

/// Compose a stream id from a purpose tag and an item index.
///
/// The tag occupies the top byte, leaving 56 bits of index space.
pub fn stream_id(purpose: Purpose, index: u64) -> u64 {
    debug_assert!(index < (1 << 56), "stream index overflows 56 bits");
    ((purpose as u64) << 56) | index
}

/// A deterministic random stream identified by (seed, stream id).
pub struct Stream(ChaCha8Rng);

impl Stream {
    /// Open the stream `id` of the generator family keyed by `seed`.
    pub fn new(seed: u64, id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id);
        Stream(rng)
    }

    /// Shorthand for [`Stream::new`] with a composed [`stream_id`].
    pub fn for_item(seed: u64, purpose: Purpose, index: u64) -> Self {
        Stream::new(seed, stream_id(purpose, index))
    }

    /// Next raw 64-bit word (the cheapest draw; used by hot loops).
    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform draw in [0, 1) with 53-bit resolution.
    pub fn uniform(&mut self) -> f64 {
        self.0.random::<f64>()
    }

    /// Uniform draw in [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        debug_assert!(lo <= hi);
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform index in 0..n.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        self.0.random_range(0..n)
    }

    /// Standard normal draw via Box-Muller.
    ///
    /// Both uniforms are consumed every call (no cached spare), so the
    /// number of raw draws per sample is fixed and replayable.
    pub fn normal(&mut self) -> f64 {
        let mut u1 = self.uniform();
        while u1 <= 0.0 {
            u1 = self.uniform();
        }
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher-Yates shuffle in place.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.0.random_range(0..=i);
            items.swap(i, j);
        }
    }

    /// A sorted random k-subset of 0..n (partial Fisher-Yates).
    pub fn choose_k(&mut self, n: usize, k: usize) -> Vec<usize> {
        debug_assert!(k <= n);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.0.random_range(0..n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx.sort_unstable();
        idx
    }
}
