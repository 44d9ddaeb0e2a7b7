//! Reproducible trajectories of the hidden chain and its signals.
//!
//! Generator: ChaCha8 seeded with `seed_from_u64(seed)`. The hidden chain
//! draws from stream 0 and the signals from stream 1 of the same key, so
//! changing the emission family never perturbs the state path.
//! Gaussian draws use the cosine branch of Box-Muller (two uniforms per
//! draw); Poisson draws use sequential inversion, splitting rates above 30
//! into a sum of smaller independent draws.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{MeeError, Result};
use crate::model::{HmmModel, SignalFamily};

const CHAIN_STREAM: u64 = 0;
const SIGNAL_STREAM: u64 = 1;

/// Generator on a given stream of a seed.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed of replication `rep` derived from a master seed.
pub fn replication_seed(seed: u64, rep: u64) -> u64 {
    seed ^ rep
}

/// Uniform on `[0, 1)` with 53 random bits.
pub fn uniform<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal via Box-Muller (cosine branch).
pub fn standard_normal<R: RngCore>(rng: &mut R) -> f64 {
    let u1 = 1.0 - uniform(rng);
    let u2 = uniform(rng);
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

/// Index drawn from a probability vector by inversion.
pub fn categorical_index<R: RngCore>(rng: &mut R, probs: &[f64]) -> usize {
    let u = uniform(rng);
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // Rounding left u above the accumulated mass: last positive entry.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

pub fn poisson<R: RngCore>(rng: &mut R, rate: f64) -> u64 {
    if rate > 30.0 {
        let pieces = libm::ceil(rate / 30.0) as u64;
        let part = rate / pieces as f64;
        return (0..pieces).map(|_| poisson_small(rng, part)).sum();
    }
    poisson_small(rng, rate)
}

fn poisson_small<R: RngCore>(rng: &mut R, rate: f64) -> u64 {
    let u = uniform(rng);
    let mut k = 0u64;
    let mut pmf = libm::exp(-rate);
    let mut cdf = pmf;
    while u >= cdf {
        k += 1;
        pmf *= rate / k as f64;
        cdf += pmf;
        if pmf == 0.0 && k as f64 > rate {
            break;
        }
    }
    k
}

/// One emission draw from `q_beta`.
pub fn sample_signal<R: RngCore>(family: &SignalFamily, beta: &[f64], rng: &mut R) -> f64 {
    match *family {
        SignalFamily::Poisson => poisson(rng, beta[0]) as f64,
        SignalFamily::GaussianKnownVar { variance } => beta[0] + libm::sqrt(variance) * standard_normal(rng),
        SignalFamily::GaussianFull => {
            let sd = libm::sqrt(0.5 / beta[1]);
            beta[0] + sd * standard_normal(rng)
        }
        SignalFamily::Categorical { .. } => {
            let u = uniform(rng);
            let mut acc = 0.0;
            for (k, &p) in beta.iter().enumerate() {
                acc += p;
                if u < acc {
                    return k as f64;
                }
            }
            beta.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub model: HmmModel,
    /// Law of the first hidden state.
    pub initial: Vec<f64>,
    /// Number of transitions; the trajectory has `n + 1` points.
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub signals: Vec<f64>,
}

impl SimulationConfig {
    pub fn check(&self) -> Result<()> {
        let m = self.model.m();
        if self.initial.len() != m {
            return Err(MeeError::Shape { expected: m, found: self.initial.len() });
        }
        let sum: f64 = self.initial.iter().sum();
        if self.initial.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(MeeError::invalid("initial distribution must be a probability vector"));
        }
        if self.n == 0 {
            return Err(MeeError::invalid("number of transitions must be at least 1"));
        }
        crate::markov::check_stochastic(self.model.transition())?;
        for b in self.model.betas() {
            self.model.family().check_beta(b)?;
        }
        Ok(())
    }
}

/// Draws `X_0 ~ initial`, `X_{k+1} ~ P(X_k, .)`, `Y_k ~ q_{beta_{X_k}}`.
pub fn simulate(cfg: &SimulationConfig) -> Result<Trajectory> {
    cfg.check()?;
    let model = &cfg.model;
    let m = model.m();
    let rows: Vec<Vec<f64>> = (0..m).map(|i| model.transition().row(i).iter().cloned().collect()).collect();
    let mut chain = rng_for(cfg.seed, CHAIN_STREAM);
    let mut emit = rng_for(cfg.seed, SIGNAL_STREAM);
    let len = cfg.n + 1;
    let mut states = vec![0usize; len];
    let mut signals = vec![0.0; len];
    let mut x = categorical_index(&mut chain, &cfg.initial);
    for k in 0..len {
        if k > 0 {
            x = categorical_index(&mut chain, &rows[x]);
        }
        states[k] = x;
        signals[k] = sample_signal(model.family(), model.beta(x), &mut emit);
    }
    Ok(Trajectory { states, signals })
}
