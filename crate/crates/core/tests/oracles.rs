//! Properties checked against independent routes: dense linear algebra,
//! closed forms, and finite differences.

use nalgebra::{Matrix4, SymmetricEigen};
use proptest::prelude::*;

use qtraj::bayes::{update, Trajectory};
use qtraj::concurrence::{
    c_max, c_of_readout, concurrence, histogram_slice, invert_readout, nonneg_condition, prob_zero, ReadoutRelation,
};
use qtraj::ensemble::{trace_distance, x_trace_norm};
use qtraj::mlp::{
    conjugate_rhs, find_mlp_branches, hamiltonian, integrate_state, integrate_state_on, log_likelihood,
    optimal_readout, state_rhs, symmetric_high_branch, time_grid, Branch, HamiltonianState, ScanSpec,
};
use qtraj::model::{Basis, MeasConfig, Preset, XState};
use qtraj::readout::mixture_mass;

fn state_strategy() -> impl Strategy<Value = XState> {
    (
        prop::array::uniform4(0.001f64..1.0),
        0.0f64..1.0,
    )
        .prop_map(|(raw, f)| {
            let total: f64 = raw.iter().sum();
            let pop = raw.map(|r| r / total);
            XState::new(pop, f * (pop[1] * pop[2]).sqrt()).unwrap()
        })
}

fn config_strategy() -> impl Strategy<Value = MeasConfig> {
    (prop::array::uniform4(-2.5f64..2.5), 0.05f64..1.0, 0.0f64..1.5)
        .prop_map(|(dv, eta, gamma)| MeasConfig::new(dv, eta, gamma, 0.01, 1.6).unwrap())
}

fn dense(x: &XState) -> Matrix4<f64> {
    let m = x.full_matrix();
    Matrix4::from_fn(|i, j| m[i][j])
}

/// Wootters concurrence from the eigenvalues of sqrt(ρ) ρ̃ sqrt(ρ), with
/// ρ̃ = (σy⊗σy) ρ* (σy⊗σy).
fn wootters(x: &XState) -> f64 {
    let rho = dense(x);
    let eig = SymmetricEigen::new(rho);
    let sqrt_rho = eig.eigenvectors
        * Matrix4::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()))
        * eig.eigenvectors.transpose();
    let yy = Matrix4::new(
        0.0, 0.0, 0.0, -1.0, //
        0.0, 0.0, 1.0, 0.0, //
        0.0, 1.0, 0.0, 0.0, //
        -1.0, 0.0, 0.0, 0.0,
    );
    let tilde = yy * rho * yy;
    let r = sqrt_rho * tilde * sqrt_rho;
    let r = 0.5 * (r + r.transpose());
    let mut l: Vec<f64> = SymmetricEigen::new(r)
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .collect();
    l.sort_by(|a, b| b.total_cmp(a));
    (l[0] - l[1] - l[2] - l[3]).max(0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn concurrence_matches_wootters(x in state_strategy()) {
        prop_assert!((concurrence(&x) - wootters(&x)).abs() < 1e-7);
    }

    #[test]
    fn eigenvalues_match_dense(x in state_strategy()) {
        let mut a = x.eigenvalues().to_vec();
        let mut b: Vec<f64> = SymmetricEigen::new(dense(&x)).eigenvalues.iter().cloned().collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - v).abs() < 1e-12);
        }
        prop_assert!(a[0] >= -1e-12);
    }

    #[test]
    fn trace_norm_matches_dense(a in state_strategy(), b in state_strategy()) {
        let d = dense(&a) - dense(&b);
        let want: f64 = SymmetricEigen::new(d).eigenvalues.iter().map(|l| l.abs()).sum();
        prop_assert!((x_trace_norm(&a, &b) - want).abs() < 1e-12);
    }

    #[test]
    fn stepwise_equals_single_shot(
        x0 in state_strategy(),
        cfg in config_strategy(),
        vs in prop::collection::vec(-4.0f64..4.0, 1..30),
        dt in 0.001f64..0.05,
    ) {
        let mut x = x0;
        for &v in &vs {
            x = update(&x, v, dt, &cfg).unwrap();
        }
        let mean = vs.iter().sum::<f64>() / vs.len() as f64;
        let once = update(&x0, mean, dt * vs.len() as f64, &cfg).unwrap();
        for (u, w) in x.as_array().iter().zip(once.as_array()) {
            prop_assert!((u - w).abs() <= 1e-10 * u.abs().max(w.abs()).max(1e-300));
        }
    }

    #[test]
    fn readout_relation_is_concurrence_of_update(
        x0 in state_strategy(),
        cfg in config_strategy(),
        v in -4.0f64..4.0,
        t in 0.01f64..3.0,
    ) {
        let c = c_of_readout(v, t, &x0, &cfg).unwrap();
        let direct = concurrence(&update(&x0, v, t, &cfg).unwrap());
        prop_assert!((c.max(0.0) - direct).abs() < 1e-10);
    }

    #[test]
    fn state_rhs_conserves_trace(x in state_strategy(), cfg in config_strategy(), v in -5.0f64..5.0) {
        let f = state_rhs(&x, v, &cfg);
        prop_assert!((f[0] + f[1] + f[2] + f[3]).abs() < 1e-12);
    }

    #[test]
    fn conjugates_are_minus_hamiltonian_gradient(
        x in state_strategy(),
        cfg in config_strategy(),
        p in prop::array::uniform5(-2.0f64..2.0),
        v in -3.0f64..3.0,
    ) {
        let h = HamiltonianState { x, p };
        let dp = conjugate_rhs(&h, v, &cfg);
        let step = 1e-6;
        for i in 0..5 {
            let mut up = x.as_array();
            let mut dn = x.as_array();
            up[i] += step;
            dn[i] -= step;
            // off the physical simplex on purpose: H is a polynomial in x
            let hu = hamiltonian_raw(up, p, v, &cfg);
            let hd = hamiltonian_raw(dn, p, v, &cfg);
            let fd = -(hu - hd) / (2.0 * step);
            prop_assert!((dp[i] - fd).abs() <= 1e-6 * fd.abs().max(1.0), "i={} {} {}", i, dp[i], fd);
        }
    }

    #[test]
    fn optimal_readout_is_stationary(
        x in state_strategy(),
        cfg in config_strategy(),
        p in prop::array::uniform5(-2.0f64..2.0),
    ) {
        let h = HamiltonianState { x, p };
        let v = optimal_readout(&h, &cfg);
        let step = 1e-4;
        let d = (hamiltonian(&h, v + step, &cfg) - hamiltonian(&h, v - step, &cfg)) / (2.0 * step);
        prop_assert!(d.abs() < 1e-6, "{}", d);
    }
}

/// H evaluated at an arbitrary point of R⁵ (no state validation), from the
/// same definition: Σ pj fj(x) − (1/s) Σ (v − δvk)² xk.
fn hamiltonian_raw(x: [f64; 5], p: [f64; 5], v: f64, cfg: &MeasConfig) -> f64 {
    let s = cfg.s();
    let d = cfg.dv;
    let e: [f64; 4] = std::array::from_fn(|k| (v - d[k]).powi(2));
    let mut h = 0.0;
    for i in 0..4 {
        let f: f64 = (0..4).map(|k| x[k] * (e[k] - e[i])).sum::<f64>() * x[i] / s;
        h += p[i] * f;
    }
    let mut rate = v * (d[1] + d[2]) - 0.5 * (d[1] * d[1] + d[2] * d[2]);
    for k in 0..4 {
        rate += x[k] * (d[k] * d[k] - 2.0 * v * d[k]);
    }
    h += p[4] * x[4] * (rate / s - cfg.gamma);
    h - (0..4).map(|k| e[k] * x[k]).sum::<f64>() / s
}

#[test]
fn hamiltonian_definition_agrees() {
    let cfg = MeasConfig::new([-1.0, 0.3, -0.2, 1.4], 0.3, 0.4, 0.01, 1.6).unwrap();
    let x = XState::new([0.1, 0.3, 0.2, 0.4], 0.2).unwrap();
    let p = [0.3, -0.7, 1.1, 0.2, -0.5];
    let h = hamiltonian(&HamiltonianState { x, p }, 0.4, &cfg);
    assert!((h - hamiltonian_raw(x.as_array(), p, 0.4, &cfg)).abs() < 1e-14);
}

#[test]
fn constant_readout_path_is_bayes_update() {
    // at constant v the path equals the single-shot update with V = v
    let cfg = MeasConfig::new([-1.3, 0.2, -0.1, 1.1], 0.3, 0.4, 0.01, 1.6).unwrap();
    let x0 = XState::new([0.2, 0.3, 0.35, 0.15], 0.25).unwrap();
    for &v in &[-1.5, 0.0, 0.4, 2.0] {
        let times = time_grid(0.0, 1.6, 0.01).unwrap();
        let path = integrate_state_on(&x0, v, &cfg, &times).unwrap();
        for (x, &t) in path.iter().zip(&times).skip(1) {
            let want = update(&x0, v, t, &cfg).unwrap();
            for (a, b) in x.as_array().iter().zip(want.as_array()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn log_likelihood_closed_form() {
    // −∫ (1/s) Σ e_k x_k dt = ln Σ x_k⁰ exp(−e_k T/s) along the constant-v path
    let cfg = MeasConfig::new([-1.3, 0.2, -0.1, 1.1], 0.3, 0.4, 0.01, 1.6).unwrap();
    let x0 = XState::new([0.2, 0.3, 0.35, 0.15], 0.25).unwrap();
    for &v in &[-2.0, -0.3, 0.0, 0.9, 2.5] {
        let want: f64 = (0..4)
            .map(|k| x0.populations()[k] * (-(v - cfg.dv[k]).powi(2) * 1.6 / cfg.s()).exp())
            .sum::<f64>()
            .ln();
        let got = log_likelihood(&x0, v, &cfg, 1.6).unwrap();
        assert!((got - want).abs() < 1e-9, "{v}: {got} {want}");
    }
}

#[test]
fn log_likelihood_parity_symmetry() {
    let cfg = Preset::Medium.config();
    let x0 = XState::new([0.1, 0.3, 0.2, 0.4], 0.2).unwrap();
    let [a, b, c, d] = x0.populations();
    let mirrored = XState::new([d, b, c, a], 0.2).unwrap();
    for &v in &[0.3, 1.7, -2.2] {
        let l = log_likelihood(&x0, v, &cfg, 1.6).unwrap();
        let m = log_likelihood(&mirrored, -v, &cfg, 1.6).unwrap();
        assert!((l - m).abs() < 1e-10);
    }
}

#[test]
fn symmetric_closed_form_path() {
    for p in [Preset::Weak, Preset::Medium, Preset::Strong] {
        let cfg = p.config();
        let path = integrate_state(&XState::x_product(), 0.0, &cfg, 1.6).unwrap();
        let times = time_grid(0.0, 1.6, cfg.dt).unwrap();
        let closed = symmetric_high_branch(&XState::x_product(), &cfg, &times).unwrap();
        for ((a, b), &t) in path.iter().zip(&closed).zip(&times) {
            for (u, w) in a.as_array().iter().zip(b.as_array()) {
                assert!((u - w).abs() < 1e-8);
            }
            assert!((concurrence(a) - c_max(t, &cfg).unwrap()).abs() < 1e-10);
            assert!((a.trace() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn high_branch_properties() {
    let cfg = Preset::Medium.config();
    let scan = ScanSpec::covering(&cfg, 1.6).unwrap();
    let search = find_mlp_branches(&XState::x_product(), &cfg, 0.0, 1.6, &scan).unwrap();
    let labels: Vec<Branch> = search.branches.iter().map(|b| b.branch).collect();
    assert_eq!(labels, vec![Branch::Low00, Branch::High, Branch::Low11]);
    let high = &search.branches[1];
    assert!(high.v_opt.abs() < 1e-6);
    for (c, &t) in high.conc_path.iter().zip(&high.times) {
        assert!((c - c_max(t, &cfg).unwrap()).abs() < 1e-8);
    }
    // low branches peak earlier than the high branch
    assert!(search.branches[0].t_peak < high.t_peak);
    // t_peak agrees with a re-evaluation on a grid of half the step
    for b in &search.branches {
        let fine = time_grid(0.0, 1.6, cfg.dt / 2.0).unwrap();
        let path = integrate_state_on(&XState::x_product(), b.v_opt, &cfg, &fine).unwrap();
        let conc: Vec<f64> = path.iter().map(concurrence).collect();
        let k = qtraj::mlp::argmax_first(&conc);
        assert!((fine[k] - b.t_peak).abs() <= cfg.dt / 2.0 + 1e-12);
        assert_eq!(b.path[0], XState::x_product());
    }
}

#[test]
fn weak_branching_appears_with_longer_records() {
    let cfg = Preset::Weak.config();
    let count = |horizon: f64| {
        let scan = ScanSpec::covering(&cfg, horizon).unwrap();
        find_mlp_branches(&XState::x_product(), &cfg, 0.0, horizon, &scan)
            .unwrap()
            .branches
            .len()
    };
    assert_eq!(count(1.6), 1);
    assert_eq!(count(6.0), 3);
}

#[test]
fn reinitialized_search_starts_at_t0() {
    let cfg = Preset::Strong.config();
    let x0 = XState::new([0.2, 0.3, 0.3, 0.2], 0.27).unwrap();
    let scan = ScanSpec::covering(&cfg, 1.6 - 0.13).unwrap();
    let search = find_mlp_branches(&x0, &cfg, 0.13, 1.6, &scan).unwrap();
    for b in &search.branches {
        assert!((b.times[0] - 0.13).abs() < 1e-15);
        assert!((b.times.last().unwrap() - 1.6).abs() < 1e-12);
        assert_eq!(b.path[0], x0);
    }
}

#[test]
fn distribution_normalization_general_config() {
    let cfg = MeasConfig::new([-1.7, 0.25, -0.15, 1.3], 0.3, 0.3, 0.01, 2.0).unwrap();
    let x0 = XState::new([0.2, 0.3, 0.3, 0.2], 0.28).unwrap();
    for &t in &[0.2, 0.7, 1.5] {
        let rel = ReadoutRelation::new(t, &x0, &cfg).unwrap();
        rel.check_unimodal().unwrap();
        let (_, cp) = rel.peak().unwrap();
        let quad = rel.pdf_mass_quadrature(0.0, cp, 1e-10).unwrap();
        let p0 = rel.prob_zero().unwrap();
        assert!((quad + p0 - 1.0).abs() < 1e-4, "t={t}: {quad} + {p0}");
        let (row, _, _) = histogram_slice(t, &x0, &cfg, 0.015).unwrap();
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // bin masses from the readout CDF agree with integrating the density
        for j in 1..8 {
            let lo = j as f64 * 0.015;
            let q = rel.pdf_mass_quadrature(lo, lo + 0.015, 1e-12).unwrap();
            assert!((q - row[j]).abs() < 1e-7, "bin {j}: {q} {}", row[j]);
        }
    }
}

#[test]
fn pdf_matches_derivative_of_mass() {
    let cfg = Preset::Strong.config();
    let x0 = XState::x_product();
    let t = 0.9;
    let rel = ReadoutRelation::new(t, &x0, &cfg).unwrap();
    let cm = c_max(t, &cfg).unwrap();
    for &frac in &[0.1, 0.4, 0.8, 0.97] {
        let c = frac * cm;
        let h = 1e-5;
        let fd = rel.mass_between(c - h, c + h).unwrap() / (2.0 * h);
        let p = rel.pdf(c).unwrap();
        assert!((fd - p).abs() < 1e-5 * p.max(1.0), "{frac}: {fd} {p}");
    }
}

#[test]
fn dephasing_faster_than_measurement_prevents_entanglement() {
    let cfg = MeasConfig::new([-1.0, 0.0, 0.0, 1.0], 0.22, 3.0, 0.01, 1.6).unwrap();
    let x0 = XState::x_product();
    let t = 0.5;
    assert!(!nonneg_condition(&x0, &cfg, t, 0.0).unwrap());
    let p0 = prob_zero(t, &x0, &cfg).unwrap();
    // c_t(0) < 0 here, so every readout yields zero concurrence
    assert!(c_of_readout(0.0, t, &x0, &cfg).unwrap() < 0.0);
    assert_eq!(p0, 1.0);
}

#[test]
fn inversion_on_asymmetric_half_line() {
    // a pure-odd start has x1 x4 = 0, so c_t > 0 for every readout
    let cfg = MeasConfig::new([-1.1, 0.3, -0.2, 0.9], 0.4, 0.2, 0.01, 1.6).unwrap();
    let x0 = XState::new([0.0, 0.6, 0.4, 0.0], 0.45).unwrap();
    assert_eq!(prob_zero(0.8, &x0, &cfg).unwrap(), 0.0);
    let rel = ReadoutRelation::new(0.8, &x0, &cfg).unwrap();
    let (_, cp) = rel.peak().unwrap();
    let (a, b) = invert_readout(0.5 * cp, 0.8, &x0, &cfg).unwrap();
    for v in [a, b] {
        assert!((c_of_readout(v, 0.8, &x0, &cfg).unwrap() - 0.5 * cp).abs() < 1e-10);
    }
}

#[test]
fn trajectory_distance_is_a_pseudometric() {
    let cfg = Preset::Strong.config();
    let trajs = qtraj::bayes::simulate_ensemble(&XState::x_product(), &cfg, 21, 60).unwrap();
    for i in 0..20 {
        let (a, b, c) = (&trajs[i], &trajs[i + 20], &trajs[i + 40]);
        let ab = trace_distance(a, b).unwrap();
        let ba = trace_distance(b, a).unwrap();
        let bc = trace_distance(b, c).unwrap();
        let ac = trace_distance(a, c).unwrap();
        assert_eq!(ab, ba);
        assert!(ac <= ab + bc + 1e-12);
        assert!((0.0..=1.0).contains(&ab));
    }
}

#[test]
fn pure_trajectory_distance_one() {
    let times: Vec<f64> = (0..=160).map(|k| k as f64 * 0.01).collect();
    let a = Trajectory::new(times.clone(), vec![0.0; 160], vec![XState::basis(Basis::B00); 161]).unwrap();
    let b = Trajectory::new(times, vec![0.0; 160], vec![XState::basis(Basis::B11); 161]).unwrap();
    assert!((trace_distance(&a, &b).unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn strong_branch_weights_from_readout_regions() {
    // the terminal label is a function of the record mean V_T; the branch
    // boundaries solve x1 = x2 + x3 (and its mirror) for the symmetric case
    let cfg = Preset::Strong.config();
    let t = cfg.horizon;
    let dv = cfg.dv_mag();
    let s = cfg.s();
    let edge = (dv * dv + s * 2f64.ln() / t) / (2.0 * dv);
    let w = [0.25; 4];
    let low = mixture_mass(f64::NEG_INFINITY, -edge, &w, t, &cfg).unwrap();
    let mid = mixture_mass(-edge, edge, &w, t, &cfg).unwrap();
    let n = 20_000;
    let e = qtraj::ensemble::Ensemble::simulate(&XState::x_product(), &cfg, 5, n).unwrap();
    let labels: Vec<Branch> = e
        .trajectories
        .iter()
        .map(|tr| Branch::of_state(tr.final_state().unwrap()))
        .collect();
    let frac = |b: Branch| labels.iter().filter(|&&l| l == b).count() as f64 / n as f64;
    let sd = |p: f64| (p * (1.0 - p) / n as f64).sqrt();
    assert!((frac(Branch::Low00) - low).abs() < 4.0 * sd(low));
    assert!((frac(Branch::High) - mid).abs() < 4.0 * sd(mid));
    assert!((frac(Branch::Low11) - low).abs() < 4.0 * sd(low));
}
