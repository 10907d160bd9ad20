//! Seeding for reproducible runs.
//!
//! Every run draws from a single ChaCha8 stream keyed by `(seed, stream)`.
//! Ensemble replications use `stream = (n << 32) | replication`, so runs at
//! different scaling levels or replication indices never share a stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn replication_stream(n: u32, replication: u32) -> u64 {
    (u64::from(n) << 32) | u64::from(replication)
}

/// Uniform on `[0, 1)`.
#[inline]
pub fn uniform(rng: &mut SimRng) -> f64 {
    rng.random::<f64>()
}

/// Inverse CDF of Exponential(`rate`) at `u ∈ [0, 1)`.
#[inline]
pub fn exp_inverse_cdf(u: f64, rate: f64) -> f64 {
    -(1.0 - u).ln() / rate
}
