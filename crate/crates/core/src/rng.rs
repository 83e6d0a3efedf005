//! Reproducible random streams.
//!
//! Streams are ChaCha20 instances (a counter-based generator) keyed by a
//! 64-bit seed. Child seeds are derived by hashing the parent seed together
//! with integer labels, so replication `r` of a study always sees the same
//! stream no matter how replications are scheduled across threads.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::normal::normal_quantile;

/// Stream label for chain innovations.
pub const CHAIN_STREAM: u64 = 0x6368_6169_6e00_0001;
/// Stream label for regression / volatility noise.
pub const NOISE_STREAM: u64 = 0x6e6f_6973_6500_0002;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` and a sequence of labels.
pub fn derive_seed(base: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(base), |acc, &l| splitmix64(acc ^ splitmix64(l)))
}

pub struct Stream {
    inner: ChaCha20Rng,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw on the open interval (0, 1) on a 2^-53 lattice.
    pub fn uniform_open(&mut self) -> f64 {
        let k = self.inner.next_u64() >> 11;
        (k as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw by inverting the normal CDF.
    pub fn standard_normal(&mut self) -> f64 {
        normal_quantile(self.uniform_open())
    }

    /// Pareto draw with scale 1 and tail index `shape`: P(X > x) = x^-shape.
    pub fn pareto(&mut self, shape: f64) -> f64 {
        self.uniform_open().powf(-1.0 / shape)
    }

    /// +1 or -1 with equal probability.
    pub fn sign(&mut self) -> f64 {
        if self.inner.next_u64() >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}
