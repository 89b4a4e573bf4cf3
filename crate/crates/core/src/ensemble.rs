//! Ensemble analytics: trajectory trace distances, minimum-total-distance
//! path extraction, terminal-subspace branch partition, and time-to-maximum
//! concurrence histograms.

use rayon::prelude::*;
use serde::Serialize;

use crate::bayes::{simulate_ensemble, Trajectory};
use crate::error::{Error, Result};
use crate::mlp::{argmax_first, Branch};
use crate::model::{MeasConfig, XState, ALGEBRAIC_TOL};
use crate::readout::RngStream;

/// Above this size total distances are estimated against a random subset.
pub const FULL_PAIRWISE_LIMIT: usize = 20_000;
pub const SUBSAMPLE_SIZE: usize = 1_000;
pub const DEFAULT_K_SELECT: usize = 100;
const BLOCK_ROWS: usize = 64;
// stream index reserved for subset selection, disjoint from trajectory streams
const SUBSAMPLE_STREAM: u64 = u64::MAX;

/// Trajectories sharing one time grid and measurement configuration.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub trajectories: Vec<Trajectory>,
    pub cfg: MeasConfig,
    pub seed: u64,
}

impl Ensemble {
    pub fn new(trajectories: Vec<Trajectory>, cfg: MeasConfig, seed: u64) -> Result<Self> {
        if let Some(first) = trajectories.first() {
            for (k, tr) in trajectories.iter().enumerate().skip(1) {
                if tr.times != first.times {
                    return Err(Error::GridMismatch(format!(
                        "trajectory {k} does not share the grid of trajectory 0"
                    )));
                }
            }
        }
        Ok(Ensemble {
            trajectories,
            cfg,
            seed,
        })
    }

    pub fn simulate(x0: &XState, cfg: &MeasConfig, seed: u64, n: usize) -> Result<Self> {
        Ensemble::new(simulate_ensemble(x0, cfg, seed, n)?, cfg.clone(), seed)
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        self.trajectories.first().map_or(&[], |t| t.times.as_slice())
    }
}

/// Trace norm of the difference of two X-states:
/// |Δ1| + |Δ4| + max(|Δ2 + Δ3|, 2·sqrt(((Δ2 − Δ3)/2)² + Δ5²)).
pub fn x_trace_norm(a: &XState, b: &XState) -> f64 {
    let x = a.as_array();
    let y = b.as_array();
    let d: [f64; 5] = std::array::from_fn(|k| x[k] - y[k]);
    let r = (0.25 * (d[1] - d[2]).powi(2) + d[4] * d[4]).sqrt();
    d[0].abs() + d[3].abs() + (d[1] + d[2]).abs().max(2.0 * r)
}

/// Trapezoidal weights summing to 1 over the grid.
pub fn time_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    if n <= 1 {
        return vec![1.0; n];
    }
    let span = times[n - 1] - times[0];
    if !(span > 0.0) {
        return vec![1.0 / n as f64; n];
    }
    (0..n)
        .map(|k| {
            let left = if k > 0 { times[k] - times[k - 1] } else { 0.0 };
            let right = if k + 1 < n { times[k + 1] - times[k] } else { 0.0 };
            0.5 * (left + right) / span
        })
        .collect()
}

fn weighted_distance(weights: &[f64], a: &[XState], b: &[XState]) -> f64 {
    weights
        .iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * 0.5 * x_trace_norm(x, y))
        .sum()
}

/// Time-averaged trace distance between two state paths on one grid.
pub fn path_distance(times: &[f64], a: &[XState], b: &[XState]) -> Result<f64> {
    if a.len() != times.len() || b.len() != times.len() {
        return Err(Error::GridMismatch(format!(
            "paths of length {} and {} on a grid of {} points",
            a.len(),
            b.len(),
            times.len()
        )));
    }
    Ok(weighted_distance(&time_weights(times), a, b))
}

/// Time-averaged trace distance between two trajectories on a shared grid,
/// each step weighted by its trapezoidal share of [0, T].
pub fn trace_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.times != b.times {
        return Err(Error::GridMismatch(
            "trajectories have different time grids".into(),
        ));
    }
    path_distance(&a.times, &a.states, &b.states)
}

/// Σ_j D(i, j) for every member i of `members` (indices into `trajs`), in a
/// fixed summation order so that the result does not depend on scheduling.
fn pairwise_totals(trajs: &[Trajectory], members: &[usize], weights: &[f64]) -> Vec<f64> {
    let n = members.len();
    let n_blocks = n.div_ceil(BLOCK_ROWS);
    let blocks: Vec<(Vec<f64>, Vec<f64>)> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK_ROWS;
            let end = (start + BLOCK_ROWS).min(n);
            let mut rows = vec![0.0; end - start];
            let mut cols = vec![0.0; n];
            for i in start..end {
                let si = &trajs[members[i]].states;
                for j in (i + 1)..n {
                    let d = weighted_distance(weights, si, &trajs[members[j]].states);
                    rows[i - start] += d;
                    cols[j] += d;
                }
            }
            (rows, cols)
        })
        .collect();
    let mut totals = vec![0.0; n];
    for (b, (rows, _)) in blocks.iter().enumerate() {
        for (k, r) in rows.iter().enumerate() {
            totals[b * BLOCK_ROWS + k] = *r;
        }
    }
    for (_, cols) in &blocks {
        for (t, c) in totals.iter_mut().zip(cols) {
            *t += c;
        }
    }
    totals
}

/// Seeded subset of `n` indices of size `k` (partial Fisher–Yates), sorted.
fn subsample(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = RngStream::new(seed, SUBSAMPLE_STREAM);
    for i in 0..k.min(n) {
        let j = i + rng.below(n - i);
        idx.swap(i, j);
    }
    idx.truncate(k.min(n));
    idx.sort_unstable();
    idx
}

/// Total distance from each member to the others. Exact up to
/// [`FULL_PAIRWISE_LIMIT`] members; beyond that, distances to a seeded
/// subset of [`SUBSAMPLE_SIZE`] members.
pub fn total_distances_of(trajs: &[Trajectory], members: &[usize], seed: u64) -> Vec<f64> {
    if members.is_empty() {
        return Vec::new();
    }
    let weights = time_weights(&trajs[members[0]].times);
    if members.len() <= FULL_PAIRWISE_LIMIT {
        return pairwise_totals(trajs, members, &weights);
    }
    let refs: Vec<usize> = subsample(members.len(), SUBSAMPLE_SIZE, seed)
        .into_iter()
        .map(|k| members[k])
        .collect();
    members
        .par_iter()
        .map(|&i| {
            refs.iter()
                .map(|&j| weighted_distance(&weights, &trajs[i].states, &trajs[j].states))
                .sum()
        })
        .collect()
}

pub fn total_distances(e: &Ensemble) -> Vec<f64> {
    let all: Vec<usize> = (0..e.len()).collect();
    total_distances_of(&e.trajectories, &all, e.seed)
}

/// Positions of the `k` smallest totals, ties broken by position.
fn smallest(totals: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..totals.len()).collect();
    order.sort_by(|&a, &b| totals[a].total_cmp(&totals[b]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Element-wise mean of the selected trajectories, trace renormalized and
/// concurrence recomputed.
pub fn average_trajectories(trajs: &[Trajectory], selected: &[usize]) -> Result<Trajectory> {
    let Some(&first) = selected.first() else {
        return Err(Error::InvalidArgument("nothing to average".into()));
    };
    let times = trajs[first].times.clone();
    let n_pts = times.len();
    let n_read = trajs[first].readouts.len();
    let mut acc = vec![[0.0f64; 5]; n_pts];
    let mut reads = vec![0.0; n_read];
    for &i in selected {
        let tr = &trajs[i];
        if tr.times != times {
            return Err(Error::GridMismatch(format!("trajectory {i} is on a different grid")));
        }
        for (a, s) in acc.iter_mut().zip(&tr.states) {
            for (ak, sk) in a.iter_mut().zip(s.as_array()) {
                *ak += sk;
            }
        }
        for (r, v) in reads.iter_mut().zip(&tr.readouts) {
            *r += v;
        }
    }
    let m = selected.len() as f64;
    let states = acc
        .iter()
        .map(|a| {
            let tr: f64 = a[..4].iter().sum();
            XState::with_tolerance([a[0] / tr, a[1] / tr, a[2] / tr, a[3] / tr], a[4] / tr, ALGEBRAIC_TOL)
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(times, reads.iter().map(|r| r / m).collect(), states)
}

/// Averages the `k_select` trajectories with the smallest total trace
/// distance to the rest of the ensemble.
pub fn extract_mlp(e: &Ensemble, k_select: usize) -> Result<Trajectory> {
    if e.is_empty() {
        return Err(Error::InvalidArgument("empty ensemble".into()));
    }
    if k_select == 0 || k_select > e.len() {
        return Err(Error::InvalidArgument(format!(
            "k_select = {k_select} must lie in 1..={}",
            e.len()
        )));
    }
    let totals = total_distances(e);
    average_trajectories(&e.trajectories, &smallest(&totals, k_select))
}

/// Terminal-subspace assignment of every trajectory.
#[derive(Clone, Debug, Serialize)]
pub struct BranchPartition {
    pub labels: Vec<Branch>,
    /// Member with the smallest within-branch total distance, per nonempty branch.
    pub medoids: Vec<(Branch, usize)>,
    /// Within-branch total distance of each trajectory.
    pub within_totals: Vec<f64>,
}

impl BranchPartition {
    pub fn members(&self, b: Branch) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == b).collect()
    }

    /// Fraction of trajectories per branch, in [`Branch::ALL`] order.
    pub fn weights(&self) -> Vec<(Branch, f64)> {
        let n = self.labels.len().max(1) as f64;
        Branch::ALL
            .iter()
            .map(|&b| (b, self.labels.iter().filter(|&&l| l == b).count() as f64 / n))
            .collect()
    }
}

/// Labels each trajectory by its dominant terminal population (x2 + x3,
/// x1 or x4) and finds each branch's medoid.
pub fn partition_branches(e: &Ensemble) -> Result<BranchPartition> {
    if e.is_empty() {
        return Err(Error::InvalidArgument("empty ensemble".into()));
    }
    let labels: Vec<Branch> = e
        .trajectories
        .iter()
        .map(|t| Branch::of_state(t.final_state().expect("trajectories are nonempty")))
        .collect();
    let mut within_totals = vec![0.0; e.len()];
    let mut medoids = Vec::new();
    for b in Branch::ALL {
        let members: Vec<usize> = (0..e.len()).filter(|&i| labels[i] == b).collect();
        if members.is_empty() {
            continue;
        }
        let totals = total_distances_of(&e.trajectories, &members, e.seed);
        for (&i, &t) in members.iter().zip(&totals) {
            within_totals[i] = t;
        }
        medoids.push((b, members[smallest(&totals, 1)[0]]));
    }
    Ok(BranchPartition {
        labels,
        medoids,
        within_totals,
    })
}

/// Minimum-total-distance extraction applied separately within each
/// nonempty branch. Branches smaller than `k_select` use all members.
pub fn extract_branch_mlps(e: &Ensemble, partition: &BranchPartition, k_select: usize) -> Result<Vec<(Branch, Trajectory)>> {
    if k_select == 0 {
        return Err(Error::InvalidArgument("k_select must be positive".into()));
    }
    let mut out = Vec::new();
    for b in Branch::ALL {
        let members = partition.members(b);
        if members.is_empty() {
            continue;
        }
        let totals: Vec<f64> = members.iter().map(|&i| partition.within_totals[i]).collect();
        let chosen: Vec<usize> = smallest(&totals, k_select.min(members.len()))
            .into_iter()
            .map(|k| members[k])
            .collect();
        out.push((b, average_trajectories(&e.trajectories, &chosen)?));
    }
    Ok(out)
}

/// Distribution of the time at which each trajectory's concurrence peaks.
#[derive(Clone, Debug, Serialize)]
pub struct TimeToMax {
    pub bin: f64,
    /// Left edge of each bin.
    pub edges: Vec<f64>,
    /// Fraction of all trajectories whose peak falls in each bin.
    pub mass: Vec<f64>,
    /// Fraction of trajectories whose concurrence is identically zero.
    pub never_entangled: f64,
    pub n_trajectories: usize,
}

impl TimeToMax {
    pub fn counts(&self) -> Vec<f64> {
        self.mass.iter().map(|m| m * self.n_trajectories as f64).collect()
    }

    /// Bins holding local maxima whose topographic prominence exceeds three
    /// Poisson standard deviations of the peak count.
    pub fn significant_peaks(&self) -> Vec<usize> {
        let c = self.counts();
        let n = c.len();
        let mut peaks = Vec::new();
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && c[j + 1] == c[i] {
                j += 1;
            }
            let rises = i == 0 || c[i - 1] < c[i];
            let falls = j + 1 == n || c[j + 1] < c[j];
            if rises && falls && c[i] > 0.0 {
                let h = c[i];
                let mut left_min = h;
                for k in (0..i).rev() {
                    if c[k] > h {
                        break;
                    }
                    left_min = left_min.min(c[k]);
                }
                let mut right_min = h;
                for &ck in &c[j + 1..] {
                    if ck > h {
                        break;
                    }
                    right_min = right_min.min(ck);
                }
                let prominence = h - left_min.max(right_min);
                // an edge bin with no neighbour on one side is measured from the other
                let prominence = if i == 0 && j + 1 == n {
                    h
                } else if i == 0 {
                    h - right_min
                } else if j + 1 == n {
                    h - left_min
                } else {
                    prominence
                };
                if prominence > 3.0 * h.sqrt() {
                    peaks.push(i);
                }
            }
            i = j + 1;
        }
        peaks
    }

    pub fn bin_of(&self, t: f64) -> usize {
        time_bin(t, self.bin, self.mass.len())
    }
}

fn time_bin(t: f64, bin: f64, n_bins: usize) -> usize {
    (((t / bin) + 1e-9).floor().max(0.0) as usize).min(n_bins.saturating_sub(1))
}

/// Histogram of per-trajectory concurrence peak times over [0, T] from
/// concurrence sequences on a shared grid.
pub fn time_to_max_from_series(times: &[f64], series: &[Vec<f64>], bin: f64) -> Result<TimeToMax> {
    if !(bin > 0.0) {
        return Err(Error::InvalidArgument(format!("bin width {bin} must be positive")));
    }
    let horizon = times.last().copied().unwrap_or(0.0);
    let n_bins = ((horizon / bin) - 1e-9).ceil().max(1.0) as usize;
    let mut counts = vec![0usize; n_bins];
    let mut never = 0usize;
    for c in series {
        if c.len() != times.len() {
            return Err(Error::GridMismatch(format!(
                "concurrence series of length {} on a grid of {}",
                c.len(),
                times.len()
            )));
        }
        if c.iter().all(|&v| v == 0.0) {
            never += 1;
            continue;
        }
        counts[time_bin(times[argmax_first(c)], bin, n_bins)] += 1;
    }
    let n = series.len().max(1) as f64;
    Ok(TimeToMax {
        bin,
        edges: (0..n_bins).map(|k| k as f64 * bin).collect(),
        mass: counts.iter().map(|&c| c as f64 / n).collect(),
        never_entangled: never as f64 / n,
        n_trajectories: series.len(),
    })
}

pub fn time_to_max_histogram(e: &Ensemble, bin: f64) -> Result<TimeToMax> {
    let series: Vec<Vec<f64>> = e.trajectories.iter().map(|t| t.concurrences.clone()).collect();
    time_to_max_from_series(e.times(), &series, bin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Basis, Preset};

    fn constant(state: XState, n: usize) -> Trajectory {
        let times: Vec<f64> = (0..n).map(|k| k as f64 * 0.01).collect();
        Trajectory::new(times, vec![0.0; n - 1], vec![state; n]).unwrap()
    }

    #[test]
    fn orthogonal_constant_states_are_distance_one() {
        let a = constant(XState::basis(Basis::B00), 11);
        let b = constant(XState::basis(Basis::B11), 11);
        assert!((trace_distance(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(trace_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn grid_mismatch() {
        let a = constant(XState::x_product(), 11);
        let b = constant(XState::x_product(), 12);
        assert!(matches!(trace_distance(&a, &b), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn bell_versus_product() {
        // difference block [[1/4, 1/4],[1/4, 1/4]] minus diag: eigenvalues −1/4, −1/4, 1/2 − … sum abs = 1
        let n = x_trace_norm(&XState::odd_bell(), &XState::x_product());
        assert!((n - 1.0).abs() < 1e-15);
    }

    #[test]
    fn weights_sum_to_one() {
        let w = time_weights(&[0.0, 0.1, 0.3, 0.6]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn blocked_totals_match_direct_sum() {
        let cfg = Preset::Strong.config();
        let e = Ensemble::simulate(&XState::x_product(), &cfg, 3, 150).unwrap();
        let totals = total_distances(&e);
        for &i in &[0usize, 63, 64, 149] {
            let direct: f64 = (0..e.len())
                .filter(|&j| j != i)
                .map(|j| trace_distance(&e.trajectories[i], &e.trajectories[j]).unwrap())
                .sum();
            assert!((totals[i] - direct).abs() < 1e-10 * direct);
        }
    }

    #[test]
    fn identical_ensemble_extracts_itself() {
        let cfg = Preset::Medium.config();
        let e = Ensemble::simulate(&XState::x_product(), &cfg, 9, 1).unwrap();
        let tr = e.trajectories[0].clone();
        let many = Ensemble::new(vec![tr.clone(); 5], cfg, 9).unwrap();
        let out = extract_mlp(&many, 3).unwrap();
        for (a, b) in out.states.iter().zip(&tr.states) {
            for (x, y) in a.as_array().iter().zip(b.as_array()) {
                assert!((x - y).abs() < 1e-15);
            }
        }
        assert!(extract_mlp(&many, 6).is_err());
    }

    #[test]
    fn single_peak_histogram() {
        let times: Vec<f64> = (0..=160).map(|k| k as f64 * 0.01).collect();
        let conc: Vec<f64> = times.iter().map(|t| (-(t - 0.5f64).powi(2)).exp()).collect();
        let h = time_to_max_from_series(&times, &[conc], 0.1).unwrap();
        assert_eq!(h.mass.len(), 16);
        assert_eq!(h.mass[5], 1.0);
        assert_eq!(h.never_entangled, 0.0);
        let flat = time_to_max_from_series(&times, &[vec![0.0; 161]], 0.1).unwrap();
        assert_eq!(flat.never_entangled, 1.0);
        assert!(flat.mass.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn significant_peak_detection() {
        let mk = |counts: &[f64]| {
            let n: f64 = counts.iter().sum();
            TimeToMax {
                bin: 0.1,
                edges: (0..counts.len()).map(|k| k as f64 * 0.1).collect(),
                mass: counts.iter().map(|c| c / n).collect(),
                never_entangled: 0.0,
                n_trajectories: n as usize,
            }
        };
        assert_eq!(mk(&[10.0, 400.0, 100.0, 300.0, 20.0]).significant_peaks(), vec![1, 3]);
        assert_eq!(mk(&[10.0, 400.0, 390.0, 395.0, 20.0]).significant_peaks(), vec![1]);
        assert_eq!(mk(&[10.0, 50.0, 100.0, 200.0, 400.0]).significant_peaks(), vec![4]);
    }
}
