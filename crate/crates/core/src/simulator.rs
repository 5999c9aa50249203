//! Generative access to an MDP.
//!
//! The planner only ever sees the [`Simulator`] trait: a sampled next state
//! and reward per query. [`GenerativeOracle`] implements it on top of a
//! tabular [`Mdp`] with a reproducible ChaCha stream. Streams are keyed by
//! `(seed, stream id)` and advance one draw at a time, so forked oracles can
//! run on different threads without sharing any state.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mdp::Mdp;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("state-action pair ({state}, {action}) out of range")]
    InvalidPair { state: usize, action: usize },
}

/// A generative model: `simulate(s, a)` returns `s' ~ P_{sa}` and a reward
/// with mean `r_{sa}` and magnitude at most 1.
pub trait Simulator {
    fn num_actions(&self) -> usize;
    fn simulate(&mut self, s: usize, a: usize) -> Result<(usize, f64), SimError>;
    /// Number of `simulate` calls served so far.
    fn query_count(&self) -> u64;
}

/// Zero-mean reward perturbation applied by the oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RewardNoise {
    None,
    /// Uniform on `[r - ρ, r + ρ]`.
    UniformPm(f64),
}

#[derive(Debug, Clone)]
pub struct GenerativeOracle {
    mdp: Arc<Mdp>,
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
    query_count: u64,
    noise: RewardNoise,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Smallest index whose cumulative probability exceeds `u`.
///
/// Zero-probability outcomes are never returned; if round-off leaves `u`
/// beyond the last cumulative sum, the last outcome with positive mass is.
pub fn inverse_cdf(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc && p > 0.0 {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

impl GenerativeOracle {
    pub fn new(mdp: Arc<Mdp>, seed: u64) -> Self {
        GenerativeOracle {
            mdp,
            seed,
            stream: 0,
            rng: stream_rng(seed, 0),
            query_count: 0,
            noise: RewardNoise::None,
        }
    }

    /// Enables reward noise. The half-width is clipped to `1 - max|r|` so every
    /// emitted reward stays in `[-1, 1]`.
    pub fn with_noise(mut self, noise: RewardNoise) -> Self {
        self.noise = match noise {
            RewardNoise::None => RewardNoise::None,
            RewardNoise::UniformPm(rho) => {
                let max_abs = self.mdp.rewards().iter().fold(0.0f64, |m, r| m.max(r.abs()));
                let rho = rho.clamp(0.0, (1.0 - max_abs).max(0.0));
                if rho == 0.0 {
                    RewardNoise::None
                } else {
                    RewardNoise::UniformPm(rho)
                }
            }
        };
        self
    }

    pub fn mdp(&self) -> &Arc<Mdp> {
        &self.mdp
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn noise(&self) -> RewardNoise {
        self.noise
    }

    /// An independent oracle over the same MDP. Its stream depends only on
    /// this oracle's `(seed, stream)` and `stream_id`; the query counter
    /// starts at zero and the parent is left untouched.
    pub fn fork(&self, stream_id: u64) -> Self {
        let stream = splitmix64(self.stream ^ splitmix64(stream_id.wrapping_add(1)));
        GenerativeOracle {
            mdp: Arc::clone(&self.mdp),
            seed: self.seed,
            stream,
            rng: stream_rng(self.seed, stream),
            query_count: 0,
            noise: self.noise,
        }
    }

    /// Draws an index from `probs` using this oracle's stream. Not a query.
    pub fn sample_categorical(&mut self, probs: &[f64]) -> usize {
        let total: f64 = probs.iter().sum();
        inverse_cdf(probs, self.rng.random::<f64>() * total)
    }
}

impl Simulator for GenerativeOracle {
    fn num_actions(&self) -> usize {
        self.mdp.num_actions()
    }

    fn simulate(&mut self, s: usize, a: usize) -> Result<(usize, f64), SimError> {
        if s >= self.mdp.num_states() || a >= self.mdp.num_actions() {
            return Err(SimError::InvalidPair { state: s, action: a });
        }
        self.query_count += 1;
        let next = inverse_cdf(self.mdp.transition_row(s, a), self.rng.random::<f64>());
        let r = self.mdp.reward(s, a);
        let reward = match self.noise {
            RewardNoise::None => r,
            RewardNoise::UniformPm(rho) => r + rho * (2.0 * self.rng.random::<f64>() - 1.0),
        };
        Ok((next, reward))
    }

    fn query_count(&self) -> u64 {
        self.query_count
    }
}
