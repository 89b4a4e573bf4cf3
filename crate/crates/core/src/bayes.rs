//! Quantum Bayesian state update and Monte Carlo trajectory generation.

use rayon::prelude::*;

use crate::concurrence::concurrence;
use crate::error::{Error, Result};
use crate::model::{MeasConfig, XState, ALGEBRAIC_TOL};
use crate::readout::{sample_readout, RngStream};

/// One measurement record and the state it produces on a uniform grid.
///
/// `readouts[k]` is the instantaneous readout over `[times[k], times[k+1])`,
/// so there is one fewer readout than grid points.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub readouts: Vec<f64>,
    pub states: Vec<XState>,
    pub concurrences: Vec<f64>,
}

impl Trajectory {
    /// Builds a trajectory and recomputes concurrences from the states.
    pub fn new(times: Vec<f64>, readouts: Vec<f64>, states: Vec<XState>) -> Result<Self> {
        if states.len() != times.len() {
            return Err(Error::InvalidArgument(format!(
                "{} states for {} grid points",
                states.len(),
                times.len()
            )));
        }
        if !times.is_empty() && readouts.len() + 1 != times.len() {
            return Err(Error::InvalidArgument(format!(
                "{} readouts for {} grid points",
                readouts.len(),
                times.len()
            )));
        }
        let concurrences = states.iter().map(concurrence).collect();
        Ok(Trajectory {
            times,
            readouts,
            states,
            concurrences,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&XState> {
        self.states.last()
    }

    /// Running mean of the readouts up to grid point `k` (k ≥ 1).
    pub fn time_averaged_readout(&self, k: usize) -> Option<f64> {
        if k == 0 || k > self.readouts.len() {
            return None;
        }
        Some(self.readouts[..k].iter().sum::<f64>() / k as f64)
    }
}

/// Bayesian update for a readout time-averaged over `duration`:
/// ρij(t) = ρij(0) sqrt(Pi Pj) e^{−γij t} / Σk ρkk(0) Pk, keeping only the
/// populations and |ρ23|. Evaluated in log space.
pub fn update(state0: &XState, v: f64, duration: f64, cfg: &MeasConfig) -> Result<XState> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "update duration {duration} must be positive"
        )));
    }
    if !v.is_finite() {
        return Err(Error::InvalidArgument(format!("readout {v} is not finite")));
    }
    let scale = duration / cfg.s();
    let pop = state0.populations();
    // common factors of the Gaussian likelihoods cancel in the normalization
    let log_lik = [0, 1, 2, 3].map(|i| {
        let d = v - cfg.dv[i];
        -d * d * scale
    });
    let mut log_w = [f64::NEG_INFINITY; 4];
    let mut max = f64::NEG_INFINITY;
    for i in 0..4 {
        if pop[i] > 0.0 {
            log_w[i] = pop[i].ln() + log_lik[i];
            max = max.max(log_w[i]);
        }
    }
    if !max.is_finite() {
        return Err(Error::Numerical(
            "all populations vanish; normalization is zero".into(),
        ));
    }
    let w = log_w.map(|l| (l - max).exp());
    let norm: f64 = w.iter().sum();
    let coh0 = state0.coherence();
    let coh = if coh0 > 0.0 {
        (coh0.ln() + 0.5 * (log_lik[1] + log_lik[2]) - cfg.gamma * duration - max).exp() / norm
    } else {
        0.0
    };
    let out = XState::from_array_unchecked([w[0] / norm, w[1] / norm, w[2] / norm, w[3] / norm, coh]);
    out.check(ALGEBRAIC_TOL)?;
    Ok(out)
}

/// One δt step driven by an instantaneous readout.
pub fn step(state: &XState, v: f64, cfg: &MeasConfig) -> Result<XState> {
    update(state, v, cfg.dt, cfg)
}

/// Monte Carlo unraveling: alternate readout sampling and Bayesian steps
/// from t = 0 to T.
pub fn simulate(state0: &XState, cfg: &MeasConfig, rng: &mut RngStream) -> Result<Trajectory> {
    let times = cfg.time_grid();
    let n = times.len() - 1;
    let mut states = Vec::with_capacity(n + 1);
    let mut readouts = Vec::with_capacity(n);
    let mut x = *state0;
    states.push(x);
    for &t in &times[..n] {
        let r = sample_readout(&x, rng, cfg, t);
        x = step(&x, r.v, cfg)?;
        readouts.push(r.v);
        states.push(x);
    }
    Trajectory::new(times, readouts, states)
}

/// `n` trajectories where trajectory i uses stream i of `seed`; the result
/// does not depend on how rayon schedules the work.
pub fn simulate_ensemble(
    state0: &XState,
    cfg: &MeasConfig,
    seed: u64,
    n: usize,
) -> Result<Vec<Trajectory>> {
    (0..n)
        .into_par_iter()
        .map(|i| simulate(state0, cfg, &mut RngStream::new(seed, i as u64)))
        .collect()
}
