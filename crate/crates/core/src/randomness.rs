//! Reproducible, stream-splittable randomness.
//!
//! Every experiment is keyed by a [`SeedSpec`] (a master seed plus a short
//! label). Replica `i` always draws from stream `i` of that key, so results
//! do not depend on how replicas are scheduled across worker threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};

/// Seed used when none is given on the command line.
pub const DEFAULT_SEED: u64 = 0xC0FFEE;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub label: String,
}

impl SeedSpec {
    pub fn new(master_seed: u64, label: impl Into<String>) -> Self {
        Self {
            master_seed,
            label: label.into(),
        }
    }

    /// Same master seed, different label. Used to give sub-experiments
    /// disjoint stream families.
    pub fn child(&self, suffix: &str) -> Self {
        Self::new(self.master_seed, format!("{}/{}", self.label, suffix))
    }

    fn key(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.master_seed.to_le_bytes());
        hasher.update(self.label.as_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        key
    }

    pub fn stream(&self, index: u64) -> RngStream {
        derive_stream(self, index)
    }
}

impl Default for SeedSpec {
    fn default() -> Self {
        Self::new(DEFAULT_SEED, "default")
    }
}

/// One independent random stream. Not `Sync`-shared: move it to the worker
/// that owns the replica.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
    index: u64,
}

impl RngStream {
    pub fn stream_index(&self) -> u64 {
        self.index
    }

    /// Uniform draw on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform integer in `0..n`.
    #[inline]
    pub fn below(&mut self, n: u32) -> u32 {
        self.rng.random_range(0..n)
    }

    #[inline]
    pub fn coin(&mut self) -> bool {
        self.rng.random::<bool>()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

pub fn derive_stream(seed: &SeedSpec, index: u64) -> RngStream {
    let mut rng = ChaCha8Rng::from_seed(seed.key());
    rng.set_stream(index);
    RngStream { rng, index }
}

/// Draw from `N(mean, std^2)`.
pub fn sample_gaussian(stream: &mut RngStream, mean: f64, std: f64) -> Result<f64> {
    if !(std >= 0.0) || !std.is_finite() {
        return Err(invalid("std", format!("must be finite and >= 0, got {std}")));
    }
    if std == 0.0 {
        return Ok(mean);
    }
    Ok(mean + std * stream.standard_normal())
}

/// Evaluate `f` once per replica index in `range`, each call owning stream
/// `index` of `seed`. Output order follows the index order regardless of
/// thread count.
pub fn map_replicas<T, F>(seed: &SeedSpec, range: std::ops::Range<u64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut RngStream) -> T + Sync,
{
    range
        .into_par_iter()
        .map(|i| {
            let mut stream = seed.stream(i);
            f(i, &mut stream)
        })
        .collect()
}

/// Kahan-compensated sum in iteration order.
pub fn ordered_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}
