//! Random streams.
//!
//! Every trajectory owns one stream, derived from `(master_seed, label, index)`
//! so results do not depend on which worker runs which trajectory.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

/// Seed of the child stream for sample `index` of instance `label`.
pub fn child_seed(master_seed: u64, label: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Source of standard normal variates for the integrator.
pub trait GaussianSource {
    fn next_standard_normal(&mut self) -> f64;

    /// Whether draws are real. The integrator skips drawing when this is false.
    fn is_active(&self) -> bool {
        true
    }
}

/// Standard normal draws from a ChaCha stream.
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        Self { rng: seeded(seed) }
    }
}

impl GaussianSource for NormalStream {
    fn next_standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

/// Noise switched off: every draw is zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoNoise;

impl GaussianSource for NoNoise {
    fn next_standard_normal(&mut self) -> f64 {
        0.0
    }

    fn is_active(&self) -> bool {
        false
    }
}
