//! Most likely paths: the optimal-path equations at constant readout, the
//! conjugate (Lagrange-multiplier) system, likelihood scans over constant
//! readouts, and closed-form solutions for the symmetric and full-parity
//! cases.
//!
//! Notation: e_k = (v − δvk)², X = Σ xk over the four populations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concurrence::concurrence;
use crate::error::{Error, Result};
use crate::model::{MeasConfig, XState, INTEGRATION_TOL};
use crate::ode::{self, Tolerances};

fn sq_dev(v: f64, cfg: &MeasConfig) -> [f64; 4] {
    cfg.dv.map(|d| (v - d) * (v - d))
}

// Growth rate of x5 apart from −γ.
fn coherence_rate(x: &[f64; 5], v: f64, cfg: &MeasConfig) -> f64 {
    let d = &cfg.dv;
    let mut acc = v * (d[1] + d[2]) - 0.5 * (d[1] * d[1] + d[2] * d[2]);
    for k in 0..4 {
        acc += x[k] * (d[k] * d[k] - 2.0 * v * d[k]);
    }
    acc / cfg.s()
}

fn state_rhs_raw(x: &[f64; 5], v: f64, cfg: &MeasConfig) -> [f64; 5] {
    let s = cfg.s();
    let e = sq_dev(v, cfg);
    let mut out = [0.0; 5];
    for i in 0..4 {
        let mut acc = 0.0;
        for k in 0..4 {
            acc += x[k] * (e[k] - e[i]);
        }
        out[i] = x[i] * acc / s;
    }
    out[4] = x[4] * (coherence_rate(x, v, cfg) - cfg.gamma);
    out
}

/// Time derivatives of (x1..x4, x5) along a path with readout v:
/// ∂t xi = (xi/s) Σk xk {2v(δvi − δvk) − δvi² + δvk²}.
pub fn state_rhs(x: &XState, v: f64, cfg: &MeasConfig) -> [f64; 5] {
    state_rhs_raw(&x.as_array(), v, cfg)
}

/// A state together with its five conjugate variables.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianState {
    pub x: XState,
    pub p: [f64; 5],
}

fn split(y: &[f64; 10]) -> ([f64; 5], [f64; 5]) {
    let mut x = [0.0; 5];
    let mut p = [0.0; 5];
    x.copy_from_slice(&y[..5]);
    p.copy_from_slice(&y[5..]);
    (x, p)
}

fn conjugate_rhs_raw(x: &[f64; 5], p: &[f64; 5], v: f64, cfg: &MeasConfig) -> [f64; 5] {
    let s = cfg.s();
    let e = sq_dev(v, cfg);
    let d = &cfg.dv;
    let mut out = [0.0; 5];
    for i in 0..4 {
        let mut acc = 0.0;
        for j in 0..4 {
            acc += x[j] * (p[j] - p[i]) * (e[j] - e[i]);
        }
        out[i] = (e[i] + acc - p[4] * x[4] * (d[i] * d[i] - 2.0 * v * d[i])) / s;
    }
    out[4] = -p[4] * (coherence_rate(x, v, cfg) - cfg.gamma);
    out
}

/// ∂t p = −∂H/∂x for the action Hamiltonian (see [`hamiltonian`]).
pub fn conjugate_rhs(h: &HamiltonianState, v: f64, cfg: &MeasConfig) -> [f64; 5] {
    conjugate_rhs_raw(&h.x.as_array(), &h.p, v, cfg)
}

fn hamiltonian_raw(x: &[f64; 5], p: &[f64; 5], v: f64, cfg: &MeasConfig) -> f64 {
    let f = state_rhs_raw(x, v, cfg);
    let e = sq_dev(v, cfg);
    let mut h = 0.0;
    for j in 0..5 {
        h += p[j] * f[j];
    }
    for k in 0..4 {
        h -= e[k] * x[k] / cfg.s();
    }
    h
}

/// H = Σ pj ∂t xj − (1/s) Σk (v − δvk)² xk.
pub fn hamiltonian(h: &HamiltonianState, v: f64, cfg: &MeasConfig) -> f64 {
    hamiltonian_raw(&h.x.as_array(), &h.p, v, cfg)
}

fn optimal_readout_raw(x: &[f64; 5], p: &[f64; 5], cfg: &MeasConfig) -> f64 {
    let d = &cfg.dv;
    let total: f64 = x[..4].iter().sum();
    let mean: f64 = (0..4).map(|k| x[k] * d[k]).sum();
    let mut acc = mean;
    for i in 0..4 {
        let mut inner = 0.0;
        for k in 0..4 {
            inner += x[k] * (d[i] - d[k]);
        }
        acc += p[i] * x[i] * inner;
    }
    acc += 0.5 * p[4] * x[4] * (d[1] + d[2] - 2.0 * mean);
    acc / total
}

/// Readout that makes H stationary (∂H/∂v = 0).
pub fn optimal_readout(h: &HamiltonianState, cfg: &MeasConfig) -> f64 {
    optimal_readout_raw(&h.x.as_array(), &h.p, cfg)
}

/// Uniform grid t0, t0 + δt, …, T.
pub fn time_grid(t0: f64, horizon: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !(horizon >= t0) || !t0.is_finite() || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "bad time grid: t0 = {t0}, T = {horizon}, dt = {dt}"
        )));
    }
    let n = ((horizon - t0) / dt).round() as usize;
    Ok((0..=n).map(|k| t0 + k as f64 * dt).collect())
}

fn to_state(x: &[f64; 5], t: f64) -> Result<XState> {
    XState::with_tolerance([x[0], x[1], x[2], x[3]], x[4], INTEGRATION_TOL).map_err(|e| {
        Error::StepFailure {
            t,
            reason: format!("state left the physical region: {e}"),
        }
    })
}

/// Solution of the coupled state and conjugate equations.
#[derive(Clone, Debug)]
pub struct HamiltonianFlow {
    pub times: Vec<f64>,
    pub states: Vec<HamiltonianState>,
    /// Optimal readout evaluated at each grid point.
    pub readouts: Vec<f64>,
    /// Hamiltonian evaluated at each grid point.
    pub energy: Vec<f64>,
}

/// Integrates the ten optimal-path equations with v = optimal_readout(x, p)
/// evaluated continuously, reporting on the δt grid up to `horizon`.
pub fn integrate_hamiltonian(h0: &HamiltonianState, cfg: &MeasConfig, horizon: f64) -> Result<HamiltonianFlow> {
    h0.x.check(INTEGRATION_TOL)?;
    let times = time_grid(0.0, horizon, cfg.dt)?;
    let mut y0 = [0.0; 10];
    y0[..5].copy_from_slice(&h0.x.as_array());
    y0[5..].copy_from_slice(&h0.p);
    let rhs = |_t: f64, y: &[f64; 10]| {
        let (x, p) = split(y);
        let v = optimal_readout_raw(&x, &p, cfg);
        let fx = state_rhs_raw(&x, v, cfg);
        let fp = conjugate_rhs_raw(&x, &p, v, cfg);
        let mut out = [0.0; 10];
        out[..5].copy_from_slice(&fx);
        out[5..].copy_from_slice(&fp);
        out
    };
    let ys = ode::integrate(rhs, y0, &times, Tolerances::default())?;
    let mut states = Vec::with_capacity(ys.len());
    let mut readouts = Vec::with_capacity(ys.len());
    let mut energy = Vec::with_capacity(ys.len());
    for (y, &t) in ys.iter().zip(&times) {
        let (x, p) = split(y);
        let v = optimal_readout_raw(&x, &p, cfg);
        readouts.push(v);
        energy.push(hamiltonian_raw(&x, &p, v, cfg));
        states.push(HamiltonianState { x: to_state(&x, t)?, p });
    }
    Ok(HamiltonianFlow {
        times,
        states,
        readouts,
        energy,
    })
}

/// State path at constant readout v on the given grid (`times[0]` is the
/// time of `x0`).
pub fn integrate_state_on(x0: &XState, v: f64, cfg: &MeasConfig, times: &[f64]) -> Result<Vec<XState>> {
    x0.check(INTEGRATION_TOL)?;
    let ys = ode::integrate(
        |_t, x: &[f64; 5]| state_rhs_raw(x, v, cfg),
        x0.as_array(),
        times,
        Tolerances::default(),
    )?;
    ys.iter().zip(times).map(|(y, &t)| to_state(y, t)).collect()
}

/// State path at constant readout v on the δt grid over [0, T].
pub fn integrate_state(x0: &XState, v: f64, cfg: &MeasConfig, horizon: f64) -> Result<Vec<XState>> {
    integrate_state_on(x0, v, cfg, &time_grid(0.0, horizon, cfg.dt)?)
}

/// −∫₀^T (1/s) Σk (v − δvk)² xk(t) dt along the constant-v path, the
/// state-dependent part of the path log-likelihood.
pub fn log_likelihood(x0: &XState, v: f64, cfg: &MeasConfig, horizon: f64) -> Result<f64> {
    x0.check(INTEGRATION_TOL)?;
    if !(horizon >= 0.0) {
        return Err(Error::InvalidArgument(format!("horizon {horizon} is negative")));
    }
    let s = cfg.s();
    let e = sq_dev(v, cfg);
    let rhs = |_t: f64, y: &[f64; 6]| {
        let mut x = [0.0; 5];
        x.copy_from_slice(&y[..5]);
        let f = state_rhs_raw(&x, v, cfg);
        let mut out = [0.0; 6];
        out[..5].copy_from_slice(&f);
        out[5] = -(0..4).map(|k| e[k] * y[k]).sum::<f64>() / s;
        out
    };
    let x = x0.as_array();
    let y0 = [x[0], x[1], x[2], x[3], x[4], 0.0];
    let ys = ode::integrate(rhs, y0, &[0.0, horizon], Tolerances::default())?;
    Ok(ys[1][5])
}

/// Evenly spaced constant-readout grid for likelihood scans.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl ScanSpec {
    /// [min δv − 2σ, max δv + 2σ] with σ = sqrt(s/2T), the spread of the
    /// time-averaged readout over the whole record.
    pub fn covering(cfg: &MeasConfig, duration: f64) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(Error::InvalidArgument(format!("scan duration {duration} must be positive")));
        }
        let sigma = cfg.readout_sigma(duration);
        let lo = cfg.dv.iter().cloned().fold(f64::INFINITY, f64::min) - 2.0 * sigma;
        let hi = cfg.dv.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 2.0 * sigma;
        Ok(ScanSpec { lo, hi, n: 801 })
    }

    pub fn points(&self) -> Vec<f64> {
        if self.n < 2 {
            return vec![self.lo];
        }
        let h = (self.hi - self.lo) / (self.n - 1) as f64;
        (0..self.n).map(|k| self.lo + k as f64 * h).collect()
    }
}

/// Log-likelihood at every scan point, as (v, log_like) pairs.
pub fn likelihood_scan(x0: &XState, cfg: &MeasConfig, horizon: f64, scan: &ScanSpec) -> Result<Vec<(f64, f64)>> {
    if scan.n < 3 || !(scan.hi > scan.lo) {
        return Err(Error::InvalidArgument("scan needs at least 3 points on a nonempty range".into()));
    }
    scan.points()
        .into_par_iter()
        .map(|v| Ok((v, log_likelihood(x0, v, cfg, horizon)?)))
        .collect()
}

/// Indices of strict local maxima of `ys` sampled at `xs`. A flat run that
/// is higher than both neighbours counts once, at its element with the
/// smallest |x|. Falls back to the global maximum when there is no
/// interior maximum.
pub fn local_maxima(xs: &[f64], ys: &[f64]) -> Vec<usize> {
    let n = ys.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        let mut j = i;
        while j + 1 < n && ys[j + 1] == ys[i] {
            j += 1;
        }
        if j + 1 < n && ys[i] > ys[i - 1] && ys[j] > ys[j + 1] {
            let best = (i..=j)
                .min_by(|&a, &b| xs[a].abs().total_cmp(&xs[b].abs()))
                .unwrap_or(i);
            out.push(best);
        }
        i = j + 1;
    }
    if out.is_empty() && n > 0 {
        let best = (0..n).fold(0, |b, k| if ys[k] > ys[b] { k } else { b });
        out.push(best);
    }
    out
}

/// Golden-section search for a maximum of `f` on [a, b].
pub fn golden_max<F: Fn(f64) -> Result<f64>>(f: F, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)?))
}

/// Terminal subspace a path or trajectory ends up in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Branch {
    #[serde(rename = "high")]
    High,
    #[serde(rename = "low-00")]
    Low00,
    #[serde(rename = "low-11")]
    Low11,
}

impl Branch {
    pub const ALL: [Branch; 3] = [Branch::High, Branch::Low00, Branch::Low11];

    pub fn label(self) -> &'static str {
        match self {
            Branch::High => "high",
            Branch::Low00 => "low-00",
            Branch::Low11 => "low-11",
        }
    }

    pub fn parse(s: &str) -> Result<Branch> {
        Branch::ALL
            .into_iter()
            .find(|b| b.label() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown branch '{s}'")))
    }

    /// Largest of x2 + x3 (high), x1 (low-00), x4 (low-11); ties go to high.
    pub fn of_state(x: &XState) -> Branch {
        let [x1, x2, x3, x4] = x.populations();
        let odd = x2 + x3;
        if odd >= x1 && odd >= x4 {
            Branch::High
        } else if x1 >= x4 {
            Branch::Low00
        } else {
            Branch::Low11
        }
    }
}

/// First index of the maximum.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// One most likely path at constant readout.
#[derive(Clone, Debug, Serialize)]
pub struct MlpSolution {
    pub v_opt: f64,
    pub log_like: f64,
    pub times: Vec<f64>,
    pub path: Vec<XState>,
    pub conc_path: Vec<f64>,
    pub t_peak: f64,
    pub branch: Branch,
}

impl MlpSolution {
    /// Integrates the path at readout v from `x0` at `times[0]`.
    pub fn at_readout(x0: &XState, v: f64, log_like: f64, cfg: &MeasConfig, times: Vec<f64>) -> Result<Self> {
        let path = integrate_state_on(x0, v, cfg, &times)?;
        let conc_path: Vec<f64> = path.iter().map(concurrence).collect();
        let t_peak = times[argmax_first(&conc_path)];
        let branch = Branch::of_state(path.last().expect("grid has at least one point"));
        Ok(MlpSolution {
            v_opt: v,
            log_like,
            times,
            path,
            conc_path,
            t_peak,
            branch,
        })
    }
}

/// Result of a branch search: the scan and the polished maxima.
#[derive(Clone, Debug)]
pub struct MlpSearch {
    pub scan: Vec<(f64, f64)>,
    pub branches: Vec<MlpSolution>,
}

/// Locates every local maximum of the constant-readout log-likelihood and
/// integrates the path for each. The path starts from `x0` at time `t0`
/// (0 unless re-initializing from a later state) and runs to `horizon`.
pub fn find_mlp_branches(
    x0: &XState,
    cfg: &MeasConfig,
    t0: f64,
    horizon: f64,
    scan: &ScanSpec,
) -> Result<MlpSearch> {
    let duration = horizon - t0;
    if !(duration > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "start time {t0} must precede the horizon {horizon}"
        )));
    }
    let table = likelihood_scan(x0, cfg, duration, scan)?;
    let xs: Vec<f64> = table.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = table.iter().map(|p| p.1).collect();
    let times = time_grid(t0, horizon, cfg.dt)?;
    let peaks = local_maxima(&xs, &ys);
    let mut branches = peaks
        .par_iter()
        .map(|&i| {
            let a = xs[i.saturating_sub(1)];
            let b = xs[(i + 1).min(xs.len() - 1)];
            let (v, ll) = golden_max(|v| log_likelihood(x0, v, cfg, duration), a, b, 1e-10)?;
            // keep the grid point if polishing did not improve on it
            let (v, ll) = if ll >= ys[i] { (v, ll) } else { (xs[i], ys[i]) };
            MlpSolution::at_readout(x0, v, ll, cfg, times.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    branches.sort_by(|a, b| a.v_opt.total_cmp(&b.v_opt));
    Ok(MlpSearch {
        scan: table,
        branches,
    })
}

fn require_symmetric(cfg: &MeasConfig) -> Result<()> {
    if cfg.is_symmetric() {
        Ok(())
    } else {
        Err(Error::InvalidConfig("closed form needs a symmetric configuration".into()))
    }
}

/// Closed-form v = 0 path for symmetric signals:
/// x_{1,4} ∝ x⁰ e^{−δv²t/s}, x_{2,3} ∝ x⁰, x5 ∝ x5⁰ e^{−γt}.
pub fn symmetric_high_branch(x0: &XState, cfg: &MeasConfig, times: &[f64]) -> Result<Vec<XState>> {
    require_symmetric(cfg)?;
    x0.check(INTEGRATION_TOL)?;
    let rate = cfg.dv_mag().powi(2) / cfg.s();
    let [a1, a2, a3, a4] = x0.populations();
    times
        .iter()
        .map(|&t| {
            let e = (-rate * t).exp();
            let norm = (a2 + a3) + (a1 + a4) * e;
            XState::with_tolerance(
                [a1 * e / norm, a2 / norm, a3 / norm, a4 * e / norm],
                x0.coherence() * (-cfg.gamma * t).exp() / norm,
                INTEGRATION_TOL,
            )
        })
        .collect()
}

/// Closed-form most likely path for a parity meter (δv1 = δv4, δv2 = δv3 = 0)
/// with rate λ = (2vδv − δv²)/s.
pub fn full_parity_path(x0: &XState, lambda: f64, gamma: f64, times: &[f64]) -> Result<Vec<XState>> {
    x0.check(INTEGRATION_TOL)?;
    let [a1, a2, a3, a4] = x0.populations();
    times
        .iter()
        .map(|&t| {
            let e = (-lambda * t).exp();
            let d = 1.0 - (a2 + a3) * (1.0 - e);
            XState::with_tolerance(
                [a1 / d, a2 * e / d, a3 * e / d, a4 / d],
                x0.coherence() * (-(gamma + lambda) * t).exp() / d,
                INTEGRATION_TOL,
            )
        })
        .collect()
}

/// Odd-parity probability on the parity-meter path: x_o⁰e^{−λt}/(1 − x_o⁰(1 − e^{−λt})).
pub fn full_parity_odd(x_o0: f64, lambda: f64, t: f64) -> f64 {
    let e = (-lambda * t).exp();
    x_o0 * e / (1.0 - x_o0 * (1.0 - e))
}

/// λ connecting odd-parity probability `x_o0` at 0 to `x_of` at t.
pub fn full_parity_lambda(x_o0: f64, x_of: f64, t: f64) -> Result<f64> {
    let open = |p: f64| p > 0.0 && p < 1.0;
    if !open(x_o0) || !open(x_of) {
        return Err(Error::InvalidArgument(format!(
            "parity probabilities must lie in (0, 1), got {x_o0} and {x_of}"
        )));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("time {t} must be positive")));
    }
    Ok(-((x_of * (1.0 - x_o0)) / (x_o0 * (1.0 - x_of))).ln() / t)
}

/// Concurrence on the parity-meter path:
/// 2·max{0, (x5⁰e^{−(γ+λ)t} − sqrt(x1⁰x4⁰)) / (1 − (x2⁰+x3⁰)(1 − e^{−λt}))}.
pub fn full_parity_concurrence(x0: &XState, lambda: f64, gamma: f64, t: f64) -> f64 {
    let [a1, a2, a3, a4] = x0.populations();
    let num = x0.coherence() * (-(gamma + lambda) * t).exp() - (a1 * a4).sqrt();
    let den = 1.0 - (a2 + a3) * (1.0 - (-lambda * t).exp());
    2.0 * (num / den.abs()).max(0.0)
}

/// λ at which the parity-meter path sits on the entanglement border at t:
/// γ + λ = (1/t) ln(x5⁰ / sqrt(x1⁰x4⁰)).
pub fn entanglement_border_lambda(x0: &XState, gamma: f64, t: f64) -> Result<f64> {
    let [a1, _, _, a4] = x0.populations();
    let even = (a1 * a4).sqrt();
    if !(even > 0.0 && x0.coherence() > 0.0 && t > 0.0) {
        return Err(Error::InvalidArgument(
            "border needs x1, x4, x5 > 0 and t > 0".into(),
        ));
    }
    Ok((x0.coherence() / even).ln() / t - gamma)
}

/// Constant readout that produces rate λ for a parity meter with signal δv.
pub fn parity_readout(lambda: f64, dv: f64, s: f64) -> f64 {
    (lambda * s + dv * dv) / (2.0 * dv)
}
