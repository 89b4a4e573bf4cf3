//! Two-qubit X-shaped states and the measurement configuration.
//!
//! Units: times in μs, rates in μs⁻¹, readouts are dimensionless rescaled
//! signals, so the signal centers carry μs^(-1/2).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for exact algebraic identities.
pub const ALGEBRAIC_TOL: f64 = 1e-12;
/// Tolerance for quantities that went through ODE integration.
pub const INTEGRATION_TOL: f64 = 1e-9;

/// Computational basis states in the order |00⟩, |01⟩, |10⟩, |11⟩.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    B00,
    B01,
    B10,
    B11,
}

impl Basis {
    pub const ALL: [Basis; 4] = [Basis::B00, Basis::B01, Basis::B10, Basis::B11];

    /// Zero-based position in the population vector.
    pub fn index(self) -> usize {
        self as usize
    }

    /// One-based label (1..=4).
    pub fn from_label(label: usize) -> Result<Basis> {
        match label {
            1..=4 => Ok(Basis::ALL[label - 1]),
            _ => Err(Error::InvalidArgument(format!(
                "basis label {label} outside 1..=4"
            ))),
        }
    }
}

/// The five tracked elements of an X-shaped two-qubit density matrix:
/// populations of |00⟩, |01⟩, |10⟩, |11⟩ and the magnitude |ρ23|.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XState {
    pop: [f64; 4],
    coh: f64,
}

impl XState {
    /// Validates at [`ALGEBRAIC_TOL`].
    pub fn new(pop: [f64; 4], coh: f64) -> Result<Self> {
        Self::with_tolerance(pop, coh, ALGEBRAIC_TOL)
    }

    pub fn with_tolerance(pop: [f64; 4], coh: f64, tol: f64) -> Result<Self> {
        let s = XState { pop, coh };
        s.check(tol)?;
        Ok(s)
    }

    pub fn from_array(x: [f64; 5]) -> Result<Self> {
        Self::new([x[0], x[1], x[2], x[3]], x[4])
    }

    /// Skips validation. Callers guarantee the invariants.
    pub(crate) fn from_array_unchecked(x: [f64; 5]) -> Self {
        XState {
            pop: [x[0], x[1], x[2], x[3]],
            coh: x[4],
        }
    }

    /// Product of two single-qubit x̂ eigenstates: every element equals 1/4.
    pub fn x_product() -> Self {
        XState {
            pop: [0.25; 4],
            coh: 0.25,
        }
    }

    pub fn basis(b: Basis) -> Self {
        let mut pop = [0.0; 4];
        pop[b.index()] = 1.0;
        XState { pop, coh: 0.0 }
    }

    /// Bell state (|01⟩ + |10⟩)/√2.
    pub fn odd_bell() -> Self {
        XState {
            pop: [0.0, 0.5, 0.5, 0.0],
            coh: 0.5,
        }
    }

    pub fn populations(&self) -> [f64; 4] {
        self.pop
    }

    pub fn population(&self, b: Basis) -> f64 {
        self.pop[b.index()]
    }

    pub fn coherence(&self) -> f64 {
        self.coh
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.pop[0], self.pop[1], self.pop[2], self.pop[3], self.coh]
    }

    pub fn trace(&self) -> f64 {
        self.pop.iter().sum()
    }

    pub fn is_x_product(&self) -> bool {
        self.as_array()
            .iter()
            .all(|&v| (v - 0.25).abs() <= ALGEBRAIC_TOL)
    }

    /// Checks trace, bounds and positivity of the odd block.
    pub fn check(&self, tol: f64) -> Result<()> {
        let x = self.as_array();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidState(format!("non-finite element in {x:?}")));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > tol {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        for (i, &p) in self.pop.iter().enumerate() {
            if p < -tol || p > 1.0 + tol {
                return Err(Error::InvalidState(format!(
                    "population x{} = {p} outside [0, 1]",
                    i + 1
                )));
            }
        }
        if self.coh < -tol {
            return Err(Error::InvalidState(format!(
                "coherence x5 = {} is negative",
                self.coh
            )));
        }
        let bound = (self.pop[1].max(0.0) * self.pop[2].max(0.0)).sqrt();
        if self.coh > bound + tol {
            return Err(Error::InvalidState(format!(
                "coherence x5 = {} exceeds sqrt(x2 x3) = {bound}",
                self.coh
            )));
        }
        Ok(())
    }

    /// Dense 4×4 matrix with ρ23 placed as a real entry.
    pub fn full_matrix(&self) -> [[f64; 4]; 4] {
        let mut m = [[0.0; 4]; 4];
        for i in 0..4 {
            m[i][i] = self.pop[i];
        }
        m[1][2] = self.coh;
        m[2][1] = self.coh;
        m
    }

    /// Eigenvalues of [`full_matrix`](Self::full_matrix) from the odd-block
    /// closed form, in the order x1, x4, λ₊, λ₋.
    pub fn eigenvalues(&self) -> [f64; 4] {
        let [x1, x2, x3, x4] = self.pop;
        let mean = 0.5 * (x2 + x3);
        let r = (0.25 * (x2 - x3).powi(2) + self.coh * self.coh).sqrt();
        [x1, x4, mean + r, mean - r]
    }
}

/// Validated full matrix, the module-level entry point.
pub fn full_matrix(state: &XState) -> Result<[[f64; 4]; 4]> {
    state.check(ALGEBRAIC_TOL)?;
    Ok(state.full_matrix())
}

/// Measurement model: signal centers, efficiency, extra dephasing, time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasConfig {
    /// Centered signal levels δv1..δv4 (μs^(-1/2)).
    pub dv: [f64; 4],
    /// Quantum efficiency η_m.
    pub eta_m: f64,
    /// Extra dephasing γ = γ23 (μs⁻¹).
    pub gamma: f64,
    /// Integration step δt (μs).
    pub dt: f64,
    /// Total measurement time T (μs).
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl MeasConfig {
    pub fn new(dv: [f64; 4], eta_m: f64, gamma: f64, dt: f64, horizon: f64) -> Result<Self> {
        let cfg = MeasConfig {
            dv,
            eta_m,
            gamma,
            dt,
            horizon,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dv.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("signal centers must be finite".into()));
        }
        if !(self.eta_m > 0.0 && self.eta_m <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "eta_m = {} outside (0, 1]",
                self.eta_m
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "gamma = {} must be finite and nonnegative",
                self.gamma
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "T = {} must be at least dt = {}",
                self.horizon, self.dt
            )));
        }
        Ok(())
    }

    /// s = 1/(2η_m).
    pub fn s(&self) -> f64 {
        0.5 / self.eta_m
    }

    /// Half the separation of the outer signals, δv = (δv4 − δv1)/2.
    pub fn dv_mag(&self) -> f64 {
        0.5 * (self.dv[3] - self.dv[0])
    }

    /// τ_m = 1/(δv² η_m); infinite when the outer signals coincide.
    pub fn tau_m(&self) -> f64 {
        let dv = self.dv_mag();
        1.0 / (dv * dv * self.eta_m)
    }

    /// Number of δt steps in the horizon.
    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Uniform grid 0, δt, …, n·δt.
    pub fn time_grid(&self) -> Vec<f64> {
        (0..=self.n_steps()).map(|k| k as f64 * self.dt).collect()
    }

    /// δv2 = δv3 = 0 and −δv1 = δv4 > 0, exactly.
    pub fn is_symmetric(&self) -> bool {
        self.dv[1] == 0.0 && self.dv[2] == 0.0 && self.dv[0] == -self.dv[3] && self.dv[3] > 0.0
    }

    /// Standard deviation of the time-averaged readout after `duration`.
    pub fn readout_sigma(&self, duration: f64) -> f64 {
        (self.s() / (2.0 * duration)).sqrt()
    }
}

/// Perfectly symmetric half-parity measurement: δv2 = δv3 = 0, −δv1 = δv4 = δv.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetricConfig {
    pub dv_mag: f64,
    pub eta_m: f64,
    pub gamma: f64,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl SymmetricConfig {
    /// Derives δv = sqrt(1/(τ_m η_m)).
    pub fn from_tau_m(tau_m: f64, eta_m: f64, gamma: f64, dt: f64, horizon: f64) -> Result<Self> {
        if !(tau_m > 0.0 && tau_m.is_finite()) {
            return Err(Error::InvalidConfig(format!("tau_m = {tau_m} must be positive")));
        }
        if !(eta_m > 0.0 && eta_m <= 1.0) {
            return Err(Error::InvalidConfig(format!("eta_m = {eta_m} outside (0, 1]")));
        }
        Ok(SymmetricConfig {
            dv_mag: (1.0 / (tau_m * eta_m)).sqrt(),
            eta_m,
            gamma,
            dt,
            horizon,
        })
    }

    pub fn to_config(&self) -> Result<MeasConfig> {
        if !(self.dv_mag > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "symmetric signal magnitude {} must be positive",
                self.dv_mag
            )));
        }
        MeasConfig::new(
            [-self.dv_mag, 0.0, 0.0, self.dv_mag],
            self.eta_m,
            self.gamma,
            self.dt,
            self.horizon,
        )
    }

    pub fn s(&self) -> f64 {
        0.5 / self.eta_m
    }

    /// Measurement rate δv²/s.
    pub fn rate(&self) -> f64 {
        self.dv_mag * self.dv_mag / self.s()
    }
}

/// Named parameter sets for the three measurement strengths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Weak,
    Medium,
    Strong,
}

impl Preset {
    pub const ETA_M: f64 = 0.22;
    /// Assumed value; only an upper bound of 0.6 μs⁻¹ is known.
    pub const GAMMA: f64 = 0.5;
    pub const DT: f64 = 0.01;
    pub const HORIZON: f64 = 1.6;

    pub fn tau_m(self) -> f64 {
        match self {
            Preset::Weak => 2.10,
            Preset::Medium => 0.60,
            Preset::Strong => 0.36,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Weak => "weak",
            Preset::Medium => "medium",
            Preset::Strong => "strong",
        }
    }

    pub fn parse(name: &str) -> Result<Preset> {
        match name {
            "weak" => Ok(Preset::Weak),
            "medium" => Ok(Preset::Medium),
            "strong" => Ok(Preset::Strong),
            other => Err(Error::InvalidConfig(format!("unknown preset '{other}'"))),
        }
    }

    pub fn symmetric(self) -> SymmetricConfig {
        SymmetricConfig::from_tau_m(self.tau_m(), Self::ETA_M, Self::GAMMA, Self::DT, Self::HORIZON)
            .expect("preset parameters are valid")
    }

    pub fn config(self) -> MeasConfig {
        self.symmetric().to_config().expect("preset parameters are valid")
    }
}

/// Scalars derived from a configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivedParams {
    pub s: f64,
    pub tau_m: f64,
    /// αi = δvi/s
    pub alpha: [f64; 4],
    /// βi = δvi²/2s
    pub beta: [f64; 4],
    pub alpha_23: f64,
    pub alpha_14: f64,
    pub beta_23: f64,
    pub beta_14: f64,
}

pub fn derived_params(cfg: &MeasConfig) -> Result<DerivedParams> {
    if !(cfg.eta_m > 0.0 && cfg.eta_m <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "eta_m = {} outside (0, 1]",
            cfg.eta_m
        )));
    }
    let s = cfg.s();
    let alpha = cfg.dv.map(|d| d / s);
    let beta = cfg.dv.map(|d| d * d / (2.0 * s));
    Ok(DerivedParams {
        s,
        tau_m: cfg.tau_m(),
        alpha,
        beta,
        alpha_23: alpha[1] + alpha[2],
        alpha_14: alpha[0] + alpha[3],
        beta_23: beta[1] + beta[2],
        beta_14: beta[0] + beta[3],
    })
}

/// Off-diagonal decoherence rate γij. The odd-subspace pair (|01⟩, |10⟩)
/// uses the configured γ; other pairs are set by signal distinguishability.
pub fn dephasing_rate(cfg: &MeasConfig, i: Basis, j: Basis) -> f64 {
    if i == j {
        return 0.0;
    }
    let pair = if i < j { (i, j) } else { (j, i) };
    if pair == (Basis::B01, Basis::B10) {
        return cfg.gamma;
    }
    let diff = cfg.dv[i.index()] - cfg.dv[j.index()];
    (1.0 / cfg.eta_m - 1.0) * diff * diff / (4.0 * cfg.s())
}
