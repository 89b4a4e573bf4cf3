//! Homodyne readout model: Gaussian conditional densities, their mixture,
//! and seeded sampling.
//!
//! A readout time-averaged over `duration` conditioned on basis state i is
//! Normal(δvi, s/(2·duration)).

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use libm::erfc;

use crate::error::{Error, Result};
use crate::model::{Basis, MeasConfig, XState};

/// One instantaneous readout, averaged over the window starting at `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReadoutSample {
    pub v: f64,
    pub t: f64,
}

/// Counter-based random stream. Stream `k` of a given seed is independent
/// of every other stream and of the order in which streams are consumed.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

fn check_duration(duration: f64) -> Result<()> {
    if duration > 0.0 && duration.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "readout duration {duration} must be positive"
        )))
    }
}

/// ln p(v | i) for a readout averaged over `duration`.
pub fn log_cond_density(v: f64, i: Basis, duration: f64, cfg: &MeasConfig) -> Result<f64> {
    check_duration(duration)?;
    let s = cfg.s();
    let d = v - cfg.dv[i.index()];
    Ok(0.5 * (duration / (PI * s)).ln() - d * d * duration / s)
}

/// p(v | i) = sqrt(t/πs) exp{−(v − δvi)² t/s}.
pub fn cond_density(v: f64, i: Basis, duration: f64, cfg: &MeasConfig) -> Result<f64> {
    Ok(log_cond_density(v, i, duration, cfg)?.exp())
}

/// p(v) = Σ xi p(v | i).
pub fn mixture_density(v: f64, state: &XState, duration: f64, cfg: &MeasConfig) -> Result<f64> {
    check_duration(duration)?;
    mixture_density_weights(v, &state.populations(), duration, cfg)
}

pub(crate) fn mixture_density_weights(
    v: f64,
    weights: &[f64; 4],
    duration: f64,
    cfg: &MeasConfig,
) -> Result<f64> {
    let s = cfg.s();
    let norm = (duration / (PI * s)).sqrt();
    Ok(weights
        .iter()
        .zip(cfg.dv.iter())
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, mu)| {
            let d = v - mu;
            w * norm * (-d * d * duration / s).exp()
        })
        .sum())
}

/// Standard normal mass on (a, b], accurate in both tails.
pub(crate) fn normal_mass(a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    // Φ(z) = erfc(−z/√2)/2 and 1 − Φ(z) = erfc(z/√2)/2
    if a >= 0.0 {
        0.5 * (erfc(a / SQRT_2) - erfc(b / SQRT_2))
    } else if b <= 0.0 {
        0.5 * (erfc(-b / SQRT_2) - erfc(-a / SQRT_2))
    } else {
        1.0 - 0.5 * erfc(-a / SQRT_2) - 0.5 * erfc(b / SQRT_2)
    }
}

/// Probability that the time-averaged readout falls in (a, b] when the
/// initial populations are `weights`. Infinite endpoints are allowed.
pub fn mixture_mass(a: f64, b: f64, weights: &[f64; 4], duration: f64, cfg: &MeasConfig) -> Result<f64> {
    check_duration(duration)?;
    let sigma = cfg.readout_sigma(duration);
    Ok(weights
        .iter()
        .zip(cfg.dv.iter())
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, mu)| w * normal_mass((a - mu) / sigma, (b - mu) / sigma))
        .sum())
}

/// P(V ≤ v) under the mixture.
pub fn mixture_cdf(v: f64, state: &XState, duration: f64, cfg: &MeasConfig) -> Result<f64> {
    mixture_mass(f64::NEG_INFINITY, v, &state.populations(), duration, cfg)
}

/// Draws a component with probability xk, then v ~ Normal(δvk, s/(2δt)).
pub fn sample_readout(state: &XState, rng: &mut RngStream, cfg: &MeasConfig, t: f64) -> ReadoutSample {
    let pop = state.populations();
    let u = rng.uniform();
    let mut acc = 0.0;
    let mut k = 3;
    for (i, &p) in pop.iter().enumerate() {
        acc += p;
        if u < acc {
            k = i;
            break;
        }
    }
    // rounding can leave u ≥ Σx; fall back to the last populated component
    if u >= acc {
        k = pop.iter().rposition(|&p| p > 0.0).unwrap_or(3);
    }
    let sigma = cfg.readout_sigma(cfg.dt);
    ReadoutSample {
        v: cfg.dv[k] + sigma * rng.standard_normal(),
        t,
    }
}
