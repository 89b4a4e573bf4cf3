//! Run configuration: flat key-value files layered over presets, with
//! command-line overrides.
//!
//! Recognized keys: `dv1..dv4`, `tau_m` (symmetric signals with
//! δv = sqrt(1/(τ_m η_m)), exclusive with the `dv` keys), `eta_m`, `gamma`,
//! `dt`, `T`, `seed`, `n_traj`, and `x0` (five numbers, default x̂-product).

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::model::{MeasConfig, Preset, SymmetricConfig, XState};

pub const DEFAULT_SEED: u64 = 20_240_101;
pub const DEFAULT_N_TRAJ: usize = 1_000;

const KEYS: [&str; 12] = [
    "dv1", "dv2", "dv3", "dv4", "tau_m", "eta_m", "gamma", "dt", "T", "seed", "n_traj", "x0",
];
const DV_KEYS: [&str; 4] = ["dv1", "dv2", "dv3", "dv4"];

/// Fully resolved settings for one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub meas: MeasConfig,
    /// Set when the signals were derived from τ_m.
    pub tau_m: Option<f64>,
    pub seed: u64,
    pub n_traj: usize,
    pub x0: XState,
}

fn preset_table(p: Preset) -> Table {
    let mut t = Table::new();
    t.insert("tau_m".into(), Value::Float(p.tau_m()));
    t.insert("eta_m".into(), Value::Float(Preset::ETA_M));
    t.insert("gamma".into(), Value::Float(Preset::GAMMA));
    t.insert("dt".into(), Value::Float(Preset::DT));
    t.insert("T".into(), Value::Float(Preset::HORIZON));
    t.insert("seed".into(), Value::Integer(DEFAULT_SEED as i64));
    t.insert("n_traj".into(), Value::Integer(DEFAULT_N_TRAJ as i64));
    t
}

/// Accumulates configuration layers; later layers win.
#[derive(Clone, Debug)]
pub struct ConfigBuilder {
    table: Table,
}

impl ConfigBuilder {
    pub fn from_preset(p: Preset) -> Self {
        ConfigBuilder {
            table: preset_table(p),
        }
    }

    fn check_keys(t: &Table) -> Result<()> {
        for k in t.keys() {
            if !KEYS.contains(&k.as_str()) {
                return Err(Error::InvalidConfig(format!("unknown key '{k}'")));
            }
        }
        Ok(())
    }

    /// Overlays a table. Giving any `dv` key drops an inherited `tau_m` and
    /// vice versa.
    pub fn layer(mut self, t: Table) -> Result<Self> {
        Self::check_keys(&t)?;
        if t.contains_key("tau_m") && DV_KEYS.iter().any(|k| t.contains_key(*k)) {
            return Err(Error::InvalidConfig(
                "give either 'tau_m' or 'dv1'..'dv4', not both".into(),
            ));
        }
        if DV_KEYS.iter().any(|k| t.contains_key(*k)) {
            self.table.remove("tau_m");
        }
        if t.contains_key("tau_m") {
            for k in DV_KEYS {
                self.table.remove(k);
            }
        }
        self.table.extend(t);
        Ok(self)
    }

    pub fn layer_str(self, text: &str) -> Result<Self> {
        let t: Table = text
            .parse()
            .map_err(|e| Error::InvalidConfig(format!("cannot parse config: {e}")))?;
        self.layer(t)
    }

    pub fn layer_file(self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        self.layer_str(&text)
    }

    /// Applies a `key=value` override; the value uses TOML syntax.
    pub fn set(self, assignment: &str) -> Result<Self> {
        let Some((k, v)) = assignment.split_once('=') else {
            return Err(Error::InvalidConfig(format!(
                "override '{assignment}' is not of the form key=value"
            )));
        };
        let text = format!("{} = {}", k.trim(), v.trim());
        self.layer_str(&text)
    }

    pub fn build(&self) -> Result<RunConfig> {
        resolve(&self.table)
    }
}

fn get_f64(t: &Table, key: &str) -> Result<Option<f64>> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::Float(f)) => Ok(Some(*f)),
        Some(Value::Integer(i)) => Ok(Some(*i as f64)),
        Some(other) => Err(Error::InvalidConfig(format!(
            "key '{key}' must be a number, got {other}"
        ))),
    }
}

fn require_f64(t: &Table, key: &str) -> Result<f64> {
    get_f64(t, key)?.ok_or_else(|| Error::InvalidConfig(format!("missing key '{key}'")))
}

fn get_count(t: &Table, key: &str) -> Result<Option<u64>> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
        Some(other) => Err(Error::InvalidConfig(format!(
            "key '{key}' must be a nonnegative integer, got {other}"
        ))),
    }
}

fn resolve(t: &Table) -> Result<RunConfig> {
    let eta_m = require_f64(t, "eta_m")?;
    let gamma = require_f64(t, "gamma")?;
    let dt = require_f64(t, "dt")?;
    let horizon = require_f64(t, "T")?;
    let tau_m = get_f64(t, "tau_m")?;
    let meas = match tau_m {
        Some(tau) => SymmetricConfig::from_tau_m(tau, eta_m, gamma, dt, horizon)?.to_config()?,
        None => {
            let mut dv = [0.0; 4];
            for (d, k) in dv.iter_mut().zip(DV_KEYS) {
                *d = require_f64(t, k)?;
            }
            MeasConfig::new(dv, eta_m, gamma, dt, horizon)?
        }
    };
    let seed = get_count(t, "seed")?.unwrap_or(DEFAULT_SEED);
    let n_traj = get_count(t, "n_traj")?.unwrap_or(DEFAULT_N_TRAJ as u64) as usize;
    let x0 = match t.get("x0") {
        None => XState::x_product(),
        Some(Value::Array(a)) => {
            if a.len() != 5 {
                return Err(Error::InvalidConfig(format!(
                    "key 'x0' needs 5 numbers, got {}",
                    a.len()
                )));
            }
            let mut x = [0.0; 5];
            for (xi, v) in x.iter_mut().zip(a) {
                *xi = match v {
                    Value::Float(f) => *f,
                    Value::Integer(i) => *i as f64,
                    other => {
                        return Err(Error::InvalidConfig(format!(
                            "key 'x0' must hold numbers, got {other}"
                        )))
                    }
                };
            }
            XState::from_array(x).map_err(|e| Error::InvalidConfig(format!("key 'x0': {e}")))?
        }
        Some(other) => {
            return Err(Error::InvalidConfig(format!(
                "key 'x0' must be an array, got {other}"
            )))
        }
    };
    Ok(RunConfig {
        meas,
        tau_m,
        seed,
        n_traj,
        x0,
    })
}
