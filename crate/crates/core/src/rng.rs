//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit `u64` seed and builds a
//! [`SimRng`] from it, so results are reproducible across platforms and
//! independent of thread scheduling. The generator is ChaCha with 8 rounds
//! (`rand_chacha::ChaCha8Rng`), whose output stream is fixed by its
//! specification rather than by the platform.

use rand::{Rng, SeedableRng};

pub type SimRng = rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Uniform draw on `[0, 1)`.
#[inline]
pub fn uniform(rng: &mut SimRng) -> f64 {
    rng.gen::<f64>()
}

/// Exponential variate with the given rate by inverse CDF, `-ln(1 - u) / rate`.
#[inline]
pub fn exponential(rng: &mut SimRng, rate: f64) -> f64 {
    -(1.0 - uniform(rng)).ln() / rate
}
