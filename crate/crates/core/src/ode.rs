//! Dormand–Prince 5(4) with adaptive step control, reporting the solution
//! exactly at requested output times.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 1_000_000,
        }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// 5th-order weights are the last row of A; these are 5th minus 4th order
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates y' = f(t, y) from `times[0]` and returns y at every entry of
/// `times` (which must be nondecreasing).
pub fn integrate<const N: usize, F>(f: F, y0: [f64; N], times: &[f64], tol: Tolerances) -> Result<Vec<[f64; N]>>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let mut out = Vec::with_capacity(times.len());
    if times.is_empty() {
        return Ok(out);
    }
    if times.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::InvalidArgument("output times must be nondecreasing".into()));
    }
    let mut t = times[0];
    let mut y = y0;
    out.push(y);
    let span = times[times.len() - 1] - t;
    let mut h = if span > 0.0 { (span * 1e-3).min(1e-2) } else { 0.0 };
    let mut k = [[0.0; N]; 7];
    k[0] = f(t, &y);
    let mut steps = 0usize;

    for &target in &times[1..] {
        while t < target {
            if steps >= tol.max_steps {
                return Err(Error::StepFailure {
                    t,
                    reason: format!("exceeded {} steps", tol.max_steps),
                });
            }
            steps += 1;
            let last = t + h >= target - 1e-14 * target.abs().max(1.0);
            let h_try = if last { target - t } else { h };
            for stage in 1..7 {
                let mut ys = y;
                for (j, kj) in k.iter().enumerate().take(stage) {
                    let a = A[stage][j];
                    if a != 0.0 {
                        for n in 0..N {
                            ys[n] += h_try * a * kj[n];
                        }
                    }
                }
                k[stage] = f(t + C[stage] * h_try, &ys);
            }
            let mut y_new = y;
            for n in 0..N {
                let mut acc = 0.0;
                for j in 0..6 {
                    acc += A[6][j] * k[j][n];
                }
                y_new[n] += h_try * acc;
            }
            let mut err = 0.0f64;
            for n in 0..N {
                let mut e = 0.0;
                for j in 0..7 {
                    e += E[j] * k[j][n];
                }
                let sc = tol.atol + tol.rtol * y[n].abs().max(y_new[n].abs());
                err = err.max((h_try * e / sc).abs());
            }
            if !err.is_finite() {
                h = h_try * 0.1;
                if h < 1e-14 * target.abs().max(1.0) {
                    return Err(Error::StepFailure {
                        t,
                        reason: "non-finite derivative".into(),
                    });
                }
                continue;
            }
            if err <= 1.0 {
                t = if last { target } else { t + h_try };
                y = y_new;
                // first-same-as-last: stage 7 is f at the new point
                k[0] = k[6];
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last || fac < 1.0 {
                    h = h_try * fac;
                }
            } else {
                h = h_try * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                if h < 1e-15 * t.abs().max(1.0) {
                    return Err(Error::StepFailure {
                        t,
                        reason: "step size underflow".into(),
                    });
                }
            }
        }
        out.push(y);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.3).collect();
        let ys = integrate(|_, y: &[f64; 1]| [-2.0 * y[0]], [1.0], &times, Tolerances::default()).unwrap();
        for (t, y) in times.iter().zip(&ys) {
            assert!((y[0] - (-2.0 * t).exp()).abs() < 1e-11);
        }
    }

    #[test]
    fn harmonic_oscillator() {
        let times = [0.0, 1.0, 5.0, 10.0];
        let ys = integrate(|_, y: &[f64; 2]| [y[1], -y[0]], [1.0, 0.0], &times, Tolerances::default()).unwrap();
        for (t, y) in times.iter().zip(&ys) {
            assert!((y[0] - t.cos()).abs() < 1e-9 && (y[1] + t.sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn repeated_output_time() {
        let ys = integrate(|t, _: &[f64; 1]| [t], [0.0], &[0.0, 1.0, 1.0, 2.0], Tolerances::default()).unwrap();
        assert_eq!(ys[1], ys[2]);
        assert!((ys[3][0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn step_limit_reported() {
        let tol = Tolerances {
            max_steps: 3,
            ..Tolerances::default()
        };
        let r = integrate(|_, y: &[f64; 1]| [y[0]], [1.0], &[0.0, 50.0], tol);
        assert!(matches!(r, Err(Error::StepFailure { .. })));
    }
}
