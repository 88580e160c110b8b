//! Random streams.
//!
//! Every run owns independent, seeded streams: one for the learner and one for
//! the adversary. Child seeds are derived with the SplitMix64 finalizer so that
//! `derive_seed(base, i)` for consecutive `i` gives decorrelated ChaCha8 streams.
//! Learners draw through the [`RandomSource`] trait so tests can substitute a
//! [`ScriptedSource`] with a fixed coin sequence.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// SplitMix64 output function applied to `state`.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `index`-th child stream of `base`.
///
/// `derive_seed(base, i) = splitmix64(base + i)`; the sweep harness uses this
/// for run seeds and the engine uses it to split a run seed into learner and
/// adversary streams.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(base.wrapping_add(index))
}

/// Stream labels used when splitting a run seed.
pub const LEARNER_STREAM: u64 = 0x4C45_4152; // "LEAR"
pub const ADVERSARY_STREAM: u64 = 0x4144_5653; // "ADVS"

pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Randomness consumed by learners.
pub trait RandomSource {
    /// Exploration coin: `true` (heads) with probability `p`.
    fn coin(&mut self, p: f64) -> bool;

    /// Uniform draw from `[0, 1)`, used for sampling from a weight vector.
    fn unit(&mut self) -> f64;

    /// Uniform index in `[0, n)`; `n` must be positive.
    fn below(&mut self, n: usize) -> usize;
}

/// Seeded stream backed by ChaCha8.
#[derive(Debug, Clone)]
pub struct SeededSource(ChaCha8Rng);

impl SeededSource {
    pub fn new(seed: u64) -> Self {
        Self(stream(seed))
    }
}

impl RandomSource for SeededSource {
    fn coin(&mut self, p: f64) -> bool {
        // Always consume one draw so the stream position does not depend on p.
        self.0.random::<f64>() < p
    }

    fn unit(&mut self) -> f64 {
        self.0.random::<f64>()
    }

    fn below(&mut self, n: usize) -> usize {
        self.0.random_range(0..n)
    }
}

/// Replays a fixed coin sequence; sampling draws come from a second script.
///
/// When a script runs dry, coins come up tails, `unit` returns 0 and `below`
/// returns 0.
#[derive(Debug, Clone, Default)]
pub struct ScriptedSource {
    coins: VecDeque<bool>,
    units: VecDeque<f64>,
    pub coins_drawn: usize,
}

impl ScriptedSource {
    pub fn new(coins: impl IntoIterator<Item = bool>) -> Self {
        Self {
            coins: coins.into_iter().collect(),
            units: VecDeque::new(),
            coins_drawn: 0,
        }
    }

    pub fn with_units(mut self, units: impl IntoIterator<Item = f64>) -> Self {
        self.units = units.into_iter().collect();
        self
    }
}

impl RandomSource for ScriptedSource {
    fn coin(&mut self, _p: f64) -> bool {
        self.coins_drawn += 1;
        self.coins.pop_front().unwrap_or(false)
    }

    fn unit(&mut self) -> f64 {
        self.units.pop_front().unwrap_or(0.0)
    }

    fn below(&mut self, n: usize) -> usize {
        let u = self.unit();
        ((u * n as f64) as usize).min(n - 1)
    }
}
