//! Concurrence of X-states, the concurrence–readout relation, and the
//! distribution of concurrence at a fixed time.
//!
//! After a time-averaged readout V over duration t, the state is a
//! deterministic function of V, so the concurrence is too:
//!
//! c_t(V) = (2/M)·{x5⁰ e^{(α23 V − β23 − γ)t} − sqrt(x1⁰x4⁰) e^{(α14 V − β14)t}},
//! M = Σ xi⁰ e^{2αi V t − 2βi t}.
//!
//! ln c_t is concave on the set where c_t > 0, and that set is a half-line,
//! the whole line, or empty (the sign of c_t is set by a linear function of
//! V). The distribution of C is the push-forward of the readout mixture
//! through this map: a density on (0, c_max) plus an atom at C = 0.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{derived_params, MeasConfig, XState};
use crate::quad;
use crate::readout::{mixture_density_weights, mixture_mass};

/// C = 2·max{0, x5 − sqrt(x1 x4)}.
pub fn concurrence(state: &XState) -> f64 {
    let [x1, _, _, x4] = state.populations();
    2.0 * (state.coherence() - (x1 * x4).sqrt()).max(0.0)
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("time {t} must be positive")))
    }
}

/// Signed c_t(V) for a readout averaged over t, starting from `x0`.
pub fn c_of_readout(v: f64, t: f64, x0: &XState, cfg: &MeasConfig) -> Result<f64> {
    Ok(ReadoutRelation::new(t, x0, cfg)?.signed(v))
}

/// Closed form for the symmetric measurement and x̂-product start:
/// (e^{−γt} − e^{−δv²t/s}) / (1 + cosh(2Vδvt/s) e^{−δv²t/s}).
pub fn c_symmetric_closed_form(v: f64, t: f64, cfg: &MeasConfig) -> Result<f64> {
    check_time(t)?;
    if !cfg.is_symmetric() {
        return Err(Error::InvalidConfig("closed form needs a symmetric configuration".into()));
    }
    let s = cfg.s();
    let dv = cfg.dv_mag();
    let e = (-dv * dv * t / s).exp();
    Ok(((-cfg.gamma * t).exp() - e) / (1.0 + (2.0 * v * dv * t / s).cosh() * e))
}

/// Whether c_t(V) ≥ 0 is guaranteed, i.e. (γ − α23 V + β23) < (β14 − α14 V).
/// Only meaningful for the x̂-product initial state.
pub fn nonneg_condition(x0: &XState, cfg: &MeasConfig, t: f64, v: f64) -> Result<bool> {
    check_time(t)?;
    if !x0.is_x_product() {
        return Err(Error::InvalidArgument(
            "condition is derived for the x̂-product initial state only".into(),
        ));
    }
    let p = derived_params(cfg)?;
    Ok(cfg.gamma - p.alpha_23 * v + p.beta_23 < p.beta_14 - p.alpha_14 * v)
}

/// Upper concurrence bound for the symmetric measurement with x̂-product
/// start: (e^{−γt} − e^{−δv²t/s}) / (1 + e^{−δv²t/s}).
pub fn c_max(t: f64, cfg: &MeasConfig) -> Result<f64> {
    if !cfg.is_symmetric() {
        return Err(Error::InvalidConfig(
            "closed-form bound needs a symmetric configuration; use c_max_numeric".into(),
        ));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    c_symmetric_closed_form(0.0, t, cfg)
}

/// Maximum of c_t over V for any configuration: (V at the peak, peak value).
/// The peak value is ≤ 0 when no readout yields entanglement.
pub fn c_max_numeric(t: f64, x0: &XState, cfg: &MeasConfig) -> Result<(f64, f64)> {
    let rel = ReadoutRelation::new(t, x0, cfg)?;
    rel.peak()
}

/// The two readouts V₋ < V_peak < V₊ with c_t(V±) = c.
pub fn invert_readout(c: f64, t: f64, x0: &XState, cfg: &MeasConfig) -> Result<(f64, f64)> {
    ReadoutRelation::new(t, x0, cfg)?.invert(c)
}

/// Continuous part of the concurrence density at time t.
pub fn pdf(c: f64, t: f64, x0: &XState, cfg: &MeasConfig) -> Result<f64> {
    ReadoutRelation::new(t, x0, cfg)?.pdf(c)
}

/// Probability of exactly zero concurrence at time t.
pub fn prob_zero(t: f64, x0: &XState, cfg: &MeasConfig) -> Result<f64> {
    if t == 0.0 {
        return Ok(if concurrence(x0) > 0.0 { 0.0 } else { 1.0 });
    }
    ReadoutRelation::new(t, x0, cfg)?.prob_zero()
}

/// The map V ↦ c_t(V) at a fixed time, with everything needed to push the
/// readout distribution through it.
#[derive(Clone, Debug)]
pub struct ReadoutRelation {
    t: f64,
    cfg: MeasConfig,
    weights: [f64; 4],
    // ln of the mixture terms: slope·V + intercept
    mix_slope: [f64; 4],
    mix_icpt: [f64; 4],
    coh_slope: f64,
    coh_icpt: f64,
    even_slope: f64,
    even_icpt: f64,
    /// Closed forms apply (symmetric signals, x̂-product start).
    closed_form: bool,
    /// Where c_t > 0; `None` when empty.
    positive: Option<(f64, f64)>,
}

impl ReadoutRelation {
    pub fn new(t: f64, x0: &XState, cfg: &MeasConfig) -> Result<Self> {
        check_time(t)?;
        x0.check(crate::model::ALGEBRAIC_TOL)?;
        let p = derived_params(cfg)?;
        let pop = x0.populations();
        let ln = |x: f64| if x > 0.0 { x.ln() } else { f64::NEG_INFINITY };
        let mix_slope = p.alpha.map(|a| 2.0 * a * t);
        let mut mix_icpt = [0.0; 4];
        for i in 0..4 {
            mix_icpt[i] = ln(pop[i]) - 2.0 * p.beta[i] * t;
        }
        let coh_slope = p.alpha_23 * t;
        let coh_icpt = ln(x0.coherence()) - (p.beta_23 + cfg.gamma) * t;
        let even_slope = p.alpha_14 * t;
        let even_icpt = 0.5 * ln(pop[0] * pop[3]) - p.beta_14 * t;

        // c_t > 0  ⇔  u(V) = even − coh < 0, with u linear in V
        let positive = if coh_icpt == f64::NEG_INFINITY {
            None
        } else if even_icpt == f64::NEG_INFINITY {
            Some((f64::NEG_INFINITY, f64::INFINITY))
        } else {
            let k = even_slope - coh_slope;
            let q = even_icpt - coh_icpt;
            if k == 0.0 {
                (q < 0.0).then_some((f64::NEG_INFINITY, f64::INFINITY))
            } else if k > 0.0 {
                Some((f64::NEG_INFINITY, -q / k))
            } else {
                Some((-q / k, f64::INFINITY))
            }
        };

        Ok(ReadoutRelation {
            t,
            cfg: cfg.clone(),
            weights: pop,
            mix_slope,
            mix_icpt,
            coh_slope,
            coh_icpt,
            even_slope,
            even_icpt,
            closed_form: cfg.is_symmetric() && x0.is_x_product(),
            positive,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// Interval of readouts with c_t > 0.
    pub fn positive_interval(&self) -> Option<(f64, f64)> {
        self.positive
    }

    fn log_mix(&self, v: f64) -> (f64, f64, f64) {
        // (max exponent, Σ e^{Li − max}, Σ Li' e^{Li − max})
        let mut m = f64::NEG_INFINITY;
        for i in 0..4 {
            if self.mix_icpt[i] > f64::NEG_INFINITY {
                m = m.max(self.mix_slope[i] * v + self.mix_icpt[i]);
            }
        }
        let (mut sum, mut dsum) = (0.0, 0.0);
        for i in 0..4 {
            if self.mix_icpt[i] > f64::NEG_INFINITY {
                let w = (self.mix_slope[i] * v + self.mix_icpt[i] - m).exp();
                sum += w;
                dsum += w * self.mix_slope[i];
            }
        }
        (m, sum, dsum)
    }

    /// Signed c_t(V).
    pub fn signed(&self, v: f64) -> f64 {
        let (m, sum, _) = self.log_mix(v);
        let a = (self.coh_slope * v + self.coh_icpt - m).exp();
        let b = (self.even_slope * v + self.even_icpt - m).exp();
        2.0 * (a - b) / sum
    }

    /// ln c_t(V); −∞ outside the positive interval.
    fn log_c(&self, v: f64) -> f64 {
        let a = self.coh_slope * v + self.coh_icpt;
        let u = self.even_slope * v + self.even_icpt - a;
        if !(u < 0.0) {
            return f64::NEG_INFINITY;
        }
        let (m, sum, _) = self.log_mix(v);
        std::f64::consts::LN_2 + a - m + (-u.exp_m1()).ln() - sum.ln()
    }

    /// d ln c_t / dV on the positive interval.
    fn dlog_c(&self, v: f64) -> f64 {
        let a = self.coh_slope * v + self.coh_icpt;
        let u = self.even_slope * v + self.even_icpt - a;
        let (_, sum, dsum) = self.log_mix(v);
        let eu = u.exp();
        (self.coh_slope - self.even_slope * eu) / (-u.exp_m1()) - dsum / sum
    }

    /// dc_t/dV.
    pub fn derivative(&self, v: f64) -> f64 {
        if self.closed_form {
            let s = self.cfg.s();
            let dv = self.cfg.dv_mag();
            let e = (-dv * dv * self.t / s).exp();
            let num = (-self.cfg.gamma * self.t).exp() - e;
            let k = 2.0 * dv * self.t / s;
            let den = 1.0 + (k * v).cosh() * e;
            return -num * e * k * (k * v).sinh() / (den * den);
        }
        let c = self.signed(v);
        if c > 0.0 {
            c * self.dlog_c(v)
        } else {
            let h = 1e-6 * v.abs().max(1.0);
            (self.signed(v + h) - self.signed(v - h)) / (2.0 * h)
        }
    }

    /// Readout and value of the maximum of c_t.
    pub fn peak(&self) -> Result<(f64, f64)> {
        if self.closed_form {
            return Ok((0.0, self.signed(0.0)));
        }
        let Some((lb, ub)) = self.positive else {
            // c_t ≤ 0 everywhere; report the least negative value on a coarse scan
            return Ok(self.peak_of_nonpositive());
        };
        let start = {
            let mean: f64 = self
                .weights
                .iter()
                .zip(self.cfg.dv.iter())
                .map(|(w, d)| w * d)
                .sum();
            if mean > lb && mean < ub {
                mean
            } else if lb.is_finite() {
                lb + 1.0
            } else {
                ub - 1.0
            }
        };
        let g0 = self.dlog_c(start);
        if g0 == 0.0 {
            return Ok((start, self.signed(start)));
        }
        let dir = if g0 > 0.0 { 1.0 } else { -1.0 };
        let bound = if dir > 0.0 { ub } else { lb };
        let mut near = start;
        let mut far = None;
        for j in 1..=2000 {
            let cand = if bound.is_finite() {
                bound - (bound - start) * 0.5f64.powi(j)
            } else {
                start + dir * 2f64.powi(j - 1)
            };
            let g = self.dlog_c(cand);
            if g.is_nan() {
                break;
            }
            if g * dir <= 0.0 {
                far = Some(cand);
                break;
            }
            near = cand;
        }
        let Some(far) = far else {
            return Err(Error::Numerical("could not bracket the concurrence peak".into()));
        };
        let (mut lo, mut hi) = if dir > 0.0 { (near, far) } else { (far, near) };
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.dlog_c(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let v = 0.5 * (lo + hi);
        Ok((v, self.signed(v)))
    }

    fn peak_of_nonpositive(&self) -> (f64, f64) {
        let lo = self.cfg.dv.iter().cloned().fold(f64::INFINITY, f64::min) - 5.0;
        let hi = self.cfg.dv.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 5.0;
        (0..=400)
            .map(|k| lo + (hi - lo) * k as f64 / 400.0)
            .map(|v| (v, self.signed(v)))
            .fold((0.0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
    }

    /// Bisection for ln c_t(V) = ln c between `inside` (above target) and
    /// `outside` (below target).
    fn bisect_level(&self, log_target: f64, inside: f64, outside: f64) -> f64 {
        let (mut a, mut b) = (inside, outside);
        for _ in 0..300 {
            let mid = 0.5 * (a + b);
            if mid == a || mid == b {
                break;
            }
            if self.log_c(mid) >= log_target {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }

    fn outside_point(&self, peak: f64, log_target: f64, dir: f64) -> Result<f64> {
        let (lb, ub) = self.positive.unwrap_or((0.0, 0.0));
        let bound = if dir > 0.0 { ub } else { lb };
        if bound.is_finite() {
            return Ok(bound);
        }
        let mut step = 1.0;
        for _ in 0..1100 {
            let v = peak + dir * step;
            if self.log_c(v) < log_target {
                return Ok(v);
            }
            step *= 2.0;
        }
        Err(Error::Numerical("could not bracket a readout root".into()))
    }

    /// Verifies on a grid that c_t rises to the peak and falls after it.
    pub fn check_unimodal(&self) -> Result<()> {
        let (vp, cp) = self.peak()?;
        if !(cp > 0.0) {
            return Ok(());
        }
        let level = (cp * 1e-6).ln();
        let left = self.bisect_level(level, vp, self.outside_point(vp, level, -1.0)?);
        let right = self.bisect_level(level, vp, self.outside_point(vp, level, 1.0)?);
        let n = 128;
        let vals: Vec<f64> = (0..=n)
            .map(|k| self.signed(left + (right - left) * k as f64 / n as f64))
            .collect();
        let noise = 1e-12 * cp;
        let mut falling = false;
        for w in vals.windows(2) {
            let d = w[1] - w[0];
            if d < -noise {
                falling = true;
            } else if d > noise && falling {
                return Err(Error::NotUnimodal(format!(
                    "c_t rises again after its peak at t = {}",
                    self.t
                )));
            }
        }
        Ok(())
    }

    /// V₋ < V_peak < V₊ with c_t(V±) = c.
    pub fn invert(&self, c: f64) -> Result<(f64, f64)> {
        if !(c > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "target concurrence {c} must be positive"
            )));
        }
        let (vp, cp) = self.peak()?;
        if c >= cp {
            return Err(Error::NoSolution {
                target: c,
                cutoff: cp.max(0.0),
            });
        }
        if self.closed_form {
            let (k, y) = self.closed_form_arg(c);
            let v = y.acosh() / k;
            return Ok((-v, v));
        }
        self.check_unimodal()?;
        let level = c.ln();
        let left = self.bisect_level(level, vp, self.outside_point(vp, level, -1.0)?);
        let right = self.bisect_level(level, vp, self.outside_point(vp, level, 1.0)?);
        Ok((left, right))
    }

    // cosh(k V) = y for the symmetric closed form
    fn closed_form_arg(&self, c: f64) -> (f64, f64) {
        let s = self.cfg.s();
        let dv = self.cfg.dv_mag();
        let rate = dv * dv / s;
        let num = (-self.cfg.gamma * self.t).exp() - (-rate * self.t).exp();
        let y = (num / c - 1.0) * (rate * self.t).exp();
        (2.0 * dv * self.t / s, y.max(1.0))
    }

    /// |dV±/dc|, identical on both branches in the symmetric closed form.
    fn closed_form_jacobian(&self, c: f64) -> f64 {
        let s = self.cfg.s();
        let dv = self.cfg.dv_mag();
        let rate = dv * dv / s;
        let num = (-self.cfg.gamma * self.t).exp() - (-rate * self.t).exp();
        let (k, y) = self.closed_form_arg(c);
        let dy_dc = num * (rate * self.t).exp() / (c * c);
        dy_dc / ((y * y - 1.0).sqrt() * k)
    }

    fn mixture_at(&self, v: f64) -> f64 {
        if !v.is_finite() {
            return 0.0;
        }
        mixture_density_weights(v, &self.weights, self.t, &self.cfg).unwrap_or(0.0)
    }

    /// p(V₋)|dV₋/dc| + p(V₊)|dV₊/dc| for 0 < c < c_max, zero elsewhere.
    pub fn pdf(&self, c: f64) -> Result<f64> {
        if !(c > 0.0) {
            return Ok(0.0);
        }
        let (_, cp) = self.peak()?;
        if c >= cp {
            return Ok(0.0);
        }
        let (vm, vp) = self.invert(c)?;
        if self.closed_form {
            let jac = self.closed_form_jacobian(c);
            if !jac.is_finite() {
                return Ok(0.0);
            }
            return Ok((self.mixture_at(vm) + self.mixture_at(vp)) * jac);
        }
        let term = |v: f64| {
            let p = self.mixture_at(v);
            if p == 0.0 {
                0.0
            } else {
                p / self.derivative(v).abs()
            }
        };
        Ok(term(vm) + term(vp))
    }

    /// Mixture mass outside the positive interval.
    pub fn prob_zero(&self) -> Result<f64> {
        match self.positive {
            None => Ok(1.0),
            Some((lb, ub)) => {
                let inside = mixture_mass(lb, ub, &self.weights, self.t, &self.cfg)?;
                Ok((1.0 - inside).max(0.0))
            }
        }
    }

    /// V₋(c), V₊(c) extended to c ≤ 0 (interval bounds) and c ≥ c_max (peak).
    fn level_readouts(&self, c: f64, peak: (f64, f64)) -> Result<(f64, f64)> {
        let (lb, ub) = self.positive.unwrap_or((peak.0, peak.0));
        if c <= 0.0 {
            return Ok((lb, ub));
        }
        if c >= peak.1 {
            return Ok((peak.0, peak.0));
        }
        self.invert(c)
    }

    /// P(lo < C ≤ hi) excluding the atom at zero, from the readout CDF.
    pub fn mass_between(&self, lo: f64, hi: f64) -> Result<f64> {
        if self.positive.is_none() || hi <= lo {
            return Ok(0.0);
        }
        let peak = self.peak()?;
        let (lm, lp) = self.level_readouts(lo, peak)?;
        let (hm, hp) = self.level_readouts(hi, peak)?;
        let left = mixture_mass(lm, hm, &self.weights, self.t, &self.cfg)?;
        let right = mixture_mass(hp, lp, &self.weights, self.t, &self.cfg)?;
        Ok(left + right)
    }

    /// ∫ pdf over (lo, hi) by adaptive quadrature, with the substitution
    /// c = c_max(1 − u²) that removes the inverse-square-root blow-up at
    /// the cutoff.
    pub fn pdf_mass_quadrature(&self, lo: f64, hi: f64, tol: f64) -> Result<f64> {
        let (_, cp) = self.peak()?;
        if !(cp > 0.0) {
            return Ok(0.0);
        }
        let lo = lo.max(0.0);
        let hi = hi.min(cp);
        if hi <= lo {
            return Ok(0.0);
        }
        let u_of = |c: f64| (1.0 - c / cp).max(0.0).sqrt();
        let (u_lo, u_hi) = (u_of(hi), u_of(lo));
        let integrand = |u: f64| {
            let c = cp * (1.0 - u * u);
            self.pdf(c).unwrap_or(0.0) * 2.0 * cp * u
        };
        Ok(quad::integrate(integrand, u_lo, u_hi, tol))
    }
}

/// Coarse-grained concurrence distribution on a time × bin grid.
#[derive(Clone, Debug, Serialize)]
pub struct HistogramGrid {
    pub times: Vec<f64>,
    pub bin: f64,
    /// `mass[k][j]`: probability that C(times[k]) lies in bin j; bin 0
    /// includes the C = 0 atom.
    pub mass: Vec<Vec<f64>>,
    pub c_max: Vec<f64>,
    pub prob_zero: Vec<f64>,
}

impl HistogramGrid {
    pub fn n_bins(&self) -> usize {
        self.mass.first().map_or(0, Vec::len)
    }

    /// Each time slice divided by its largest element.
    pub fn normalized_by_max(&self) -> Vec<Vec<f64>> {
        self.mass
            .iter()
            .map(|row| {
                let m = row.iter().cloned().fold(0.0, f64::max);
                row.iter().map(|v| if m > 0.0 { v / m } else { 0.0 }).collect()
            })
            .collect()
    }
}

pub fn n_bins(bin: f64) -> usize {
    ((1.0 / bin) - 1e-9).ceil().max(1.0) as usize
}

/// Bin index for a concurrence value; values at or above 1 go to the last bin.
pub fn bin_index(c: f64, bin: f64) -> usize {
    ((c / bin).floor().max(0.0) as usize).min(n_bins(bin) - 1)
}

/// Probabilities per concurrence bin at one time.
pub fn histogram_slice(t: f64, x0: &XState, cfg: &MeasConfig, bin: f64) -> Result<(Vec<f64>, f64, f64)> {
    let nb = n_bins(bin);
    let mut row = vec![0.0; nb];
    if t <= 0.0 {
        let c = concurrence(x0);
        row[bin_index(c, bin)] = 1.0;
        return Ok((row, c, if c > 0.0 { 0.0 } else { 1.0 }));
    }
    let rel = ReadoutRelation::new(t, x0, cfg)?;
    let (_, cp) = rel.peak()?;
    let p0 = rel.prob_zero()?;
    row[0] += p0;
    for (j, r) in row.iter_mut().enumerate() {
        let lo = j as f64 * bin;
        let hi = if j + 1 == nb { f64::INFINITY } else { (j + 1) as f64 * bin };
        if lo >= cp {
            break;
        }
        *r += rel.mass_between(lo, hi)?;
    }
    Ok((row, cp.max(0.0), p0))
}

/// Coarse-grained distribution for every time in `t_grid`.
pub fn histogram_grid(x0: &XState, cfg: &MeasConfig, t_grid: &[f64], bin: f64) -> Result<HistogramGrid> {
    if !(bin > 0.0 && bin <= 1.0) {
        return Err(Error::InvalidArgument(format!("bin width {bin} outside (0, 1]")));
    }
    let rows: Vec<(Vec<f64>, f64, f64)> = t_grid
        .par_iter()
        .map(|&t| histogram_slice(t, x0, cfg, bin))
        .collect::<Result<_>>()?;
    let mut grid = HistogramGrid {
        times: t_grid.to_vec(),
        bin,
        mass: Vec::with_capacity(rows.len()),
        c_max: Vec::with_capacity(rows.len()),
        prob_zero: Vec::with_capacity(rows.len()),
    };
    for (row, cm, p0) in rows {
        grid.mass.push(row);
        grid.c_max.push(cm);
        grid.prob_zero.push(p0);
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::update;
    use crate::model::{Basis, Preset, SymmetricConfig};

    #[test]
    fn concurrence_examples() {
        assert_eq!(concurrence(&XState::x_product()), 0.0);
        assert_eq!(concurrence(&XState::odd_bell()), 1.0);
        let x = XState::new([0.1, 0.4, 0.4, 0.1], 0.3).unwrap();
        assert!((concurrence(&x) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn readout_relation_matches_update() {
        let cfg = MeasConfig::new([-1.1, 0.15, -0.1, 0.9], 0.3, 0.4, 0.01, 2.0).unwrap();
        let x0 = XState::new([0.2, 0.3, 0.35, 0.15], 0.25).unwrap();
        for &(v, t) in &[(0.0, 0.3), (0.7, 1.1), (-1.4, 0.05), (2.0, 2.5)] {
            let c = c_of_readout(v, t, &x0, &cfg).unwrap();
            let direct = concurrence(&update(&x0, v, t, &cfg).unwrap());
            assert!((c.max(0.0) - direct).abs() < 1e-12, "{c} {direct}");
        }
    }

    #[test]
    fn closed_form_matches_general() {
        let cfg = Preset::Medium.config();
        let x0 = XState::x_product();
        for &(v, t) in &[(0.0, 0.3), (0.5, 1.0), (-2.2, 1.4), (4.0, 0.7)] {
            let a = c_of_readout(v, t, &x0, &cfg).unwrap();
            let b = c_symmetric_closed_form(v, t, &cfg).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn long_time_decay_at_zero_readout() {
        let cfg = Preset::Medium.config();
        let c = c_of_readout(0.0, 60.0, &XState::x_product(), &cfg).unwrap();
        assert!(c > 0.0 && c < 1e-12);
    }

    #[test]
    fn nonneg_condition_cases() {
        let x0 = XState::x_product();
        let cfg = Preset::Medium.config();
        for &v in &[-5.0, 0.0, 3.0] {
            assert!(nonneg_condition(&x0, &cfg, 1.0, v).unwrap());
        }
        let mut at_boundary = cfg.clone();
        at_boundary.gamma = derived_params(&cfg).unwrap().beta_14;
        assert!(!nonneg_condition(&x0, &at_boundary, 1.0, 0.0).unwrap());
        assert!(nonneg_condition(&XState::odd_bell(), &cfg, 1.0, 0.0).is_err());
    }

    #[test]
    fn c_max_values() {
        let sym = SymmetricConfig {
            dv_mag: (10.0f64 / 3.0 / 0.44).sqrt(),
            eta_m: 0.22,
            gamma: 0.5,
            dt: 0.01,
            horizon: 1.6,
        };
        let cfg = sym.to_config().unwrap();
        assert_eq!(c_max(0.0, &cfg).unwrap(), 0.0);
        // 30-digit evaluation of the bound with δv²/s = 10/3, γ = 0.5, t = 1
        assert!((c_max(1.0, &cfg).unwrap() - 0.551_193_396_795_064_4).abs() < 1e-13);
        let (v, c) = c_max_numeric(1.0, &XState::x_product(), &cfg).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(c, c_max(1.0, &cfg).unwrap());
        let asym = MeasConfig::new([-1.0, 0.1, 0.0, 1.0], 0.22, 0.5, 0.01, 1.6).unwrap();
        assert!(c_max(1.0, &asym).is_err());
    }

    #[test]
    fn numeric_peak_agrees_with_closed_form_on_general_path() {
        // tiny asymmetry forces the general path; the peak moves continuously
        let cfg = MeasConfig::new([-2.0, 1e-9, 0.0, 2.0], 0.22, 0.5, 0.01, 1.6).unwrap();
        let (v, c) = c_max_numeric(0.8, &XState::x_product(), &cfg).unwrap();
        let sym = Preset::Medium.config();
        let mut sym = sym.clone();
        sym.dv = [-2.0, 0.0, 0.0, 2.0];
        let cm = c_max(0.8, &sym).unwrap();
        assert!(v.abs() < 1e-6 && (c - cm).abs() < 1e-9, "{v} {c} {cm}");
    }

    #[test]
    fn inversion_round_trip_and_cutoff() {
        let cfg = Preset::Medium.config();
        let x0 = XState::x_product();
        let t = 0.8;
        let cm = c_max(t, &cfg).unwrap();
        for &frac in &[0.01, 0.3, 0.9, 0.999_999] {
            let c = frac * cm;
            let (vm, vp) = invert_readout(c, t, &x0, &cfg).unwrap();
            assert!(vm < 0.0 && vp > 0.0);
            assert!((c_of_readout(vm, t, &x0, &cfg).unwrap() - c).abs() < 1e-10);
            assert!((c_of_readout(vp, t, &x0, &cfg).unwrap() - c).abs() < 1e-10);
        }
        let (vm, vp) = invert_readout(cm * (1.0 - 1e-12), t, &x0, &cfg).unwrap();
        assert!(vm.abs() < 1e-4 && vp.abs() < 1e-4);
        assert!(matches!(
            invert_readout(cm * 1.01, t, &x0, &cfg),
            Err(Error::NoSolution { .. })
        ));
    }

    #[test]
    fn general_inversion_round_trip() {
        let cfg = MeasConfig::new([-1.5, 0.2, -0.1, 1.2], 0.3, 0.3, 0.01, 2.0).unwrap();
        let x0 = XState::new([0.2, 0.3, 0.3, 0.2], 0.28).unwrap();
        let t = 0.6;
        let (vpk, cp) = c_max_numeric(t, &x0, &cfg).unwrap();
        assert!(cp > 0.0);
        for &frac in &[0.05, 0.5, 0.95] {
            let (vm, vp) = invert_readout(frac * cp, t, &x0, &cfg).unwrap();
            assert!(vm < vpk && vpk < vp);
            for v in [vm, vp] {
                let c = c_of_readout(v, t, &x0, &cfg).unwrap();
                assert!((c - frac * cp).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn pdf_outside_support_is_zero() {
        let cfg = Preset::Medium.config();
        let x0 = XState::x_product();
        assert_eq!(pdf(0.0, 0.5, &x0, &cfg).unwrap(), 0.0);
        assert_eq!(pdf(-0.1, 0.5, &x0, &cfg).unwrap(), 0.0);
        let cm = c_max(0.5, &cfg).unwrap();
        assert_eq!(pdf(cm + 1e-6, 0.5, &x0, &cfg).unwrap(), 0.0);
        assert!(pdf(0.5 * cm, 0.5, &x0, &cfg).unwrap() > 0.0);
    }

    #[test]
    fn prob_zero_cases() {
        let cfg = Preset::Medium.config();
        assert_eq!(prob_zero(0.3, &XState::basis(Basis::B00), &cfg).unwrap(), 1.0);
        let mut no_dephasing = cfg.clone();
        no_dephasing.gamma = 0.0;
        assert_eq!(prob_zero(1e-6, &XState::x_product(), &no_dephasing).unwrap(), 0.0);
        assert_eq!(prob_zero(0.0, &XState::x_product(), &cfg).unwrap(), 1.0);
    }

    #[test]
    fn closed_form_jacobian_matches_derivative() {
        let cfg = Preset::Strong.config();
        let x0 = XState::x_product();
        let rel = ReadoutRelation::new(0.7, &x0, &cfg).unwrap();
        let (_, cp) = rel.peak().unwrap();
        for &frac in &[0.1, 0.6, 0.95] {
            let c = frac * cp;
            let (_, vp) = rel.invert(c).unwrap();
            let jac = rel.closed_form_jacobian(c);
            let d = rel.derivative(vp).abs();
            assert!((jac * d - 1.0).abs() < 1e-8, "{jac} {d}");
        }
    }

    #[test]
    fn bins() {
        assert_eq!(n_bins(0.015), 67);
        assert_eq!(n_bins(0.1), 10);
        assert_eq!(bin_index(0.0, 0.015), 0);
        assert_eq!(bin_index(1.0, 0.015), 66);
        assert_eq!(bin_index(0.0151, 0.015), 1);
    }
}
