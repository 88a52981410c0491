//! Deterministic randomness.
//!
//! Every stochastic choice in the crate draws from a ChaCha8 stream seeded
//! through [`child_seed`], so a single master seed fans out into independent,
//! replayable streams. No entropy source is ever consulted.

use alloc::vec::Vec;
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
pub use rand_core::RngCore;

/// Labels for independent seed streams derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Partition,
    ProblemSuite,
    ParamInit,
    Train,
    EvalMask,
    Synthetic,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Partition => 0x01,
            Stream::ProblemSuite => 0x02,
            Stream::ParamInit => 0x03,
            Stream::Train => 0x04,
            Stream::EvalMask => 0x05,
            Stream::Synthetic => 0x06,
        }
    }
}

/// SplitMix64 finalizer; decorrelates nearby seeds.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Derive the seed for stream `stream`, element `index`, from a master seed.
pub fn child_seed(master: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ stream.tag().rotate_left(32)) ^ index)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw from `[0, 1)` with 53 bits of precision.
pub fn uniform_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw from `[lo, hi)`.
pub fn uniform_range(rng: &mut impl RngCore, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform_f64(rng)
}

/// Unbiased uniform index in `0..n` (rejection sampling).
pub fn gen_index(rng: &mut impl RngCore, n: usize) -> usize {
    assert!(n > 0, "gen_index: n must be positive");
    let n = n as u64;
    let zone = u64::MAX - (u64::MAX % n);
    loop {
        let v = rng.next_u64();
        if v < zone {
            return (v % n) as usize;
        }
    }
}

/// In-place Fisher-Yates shuffle.
pub fn shuffle<T>(rng: &mut impl RngCore, xs: &mut [T]) {
    for i in (1..xs.len()).rev() {
        let j = gen_index(rng, i + 1);
        xs.swap(i, j);
    }
}

/// `k` distinct indices from `0..n`, in draw order (partial Fisher-Yates).
pub fn sample_indices(rng: &mut impl RngCore, n: usize, k: usize) -> Vec<usize> {
    assert!(k <= n, "sample_indices: k ({k}) > n ({n})");
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + gen_index(rng, n - i);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Draw an index proportionally to `weights` (which need not be normalized).
/// Entries must be nonnegative with a positive sum.
pub fn sample_weighted(rng: &mut impl RngCore, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0, "sample_weighted: nonpositive total weight");
    let mut u = uniform_f64(rng) * total;
    for (i, w) in weights.iter().enumerate() {
        u -= w;
        if u < 0.0 {
            return i;
        }
    }
    // Rounding can leave u barely nonnegative; fall back to the last
    // positive-weight entry.
    weights
        .iter()
        .rposition(|w| *w > 0.0)
        .unwrap_or(weights.len() - 1)
}
