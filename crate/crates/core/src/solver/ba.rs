//! Blahut-Arimoto iteration with one multiplier per constraint.

use std::collections::HashMap;

use rayon::prelude::*;

use super::{ConditionalTable, PairMetrics, RdcPoint, SolverError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaOptions {
    /// Stop once the Lagrangian changes by less than this (bits per block).
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BaOptions {
    fn default() -> Self {
        BaOptions {
            tol: 1e-10,
            max_iter: 100_000,
        }
    }
}

/// Allowed numerical increase of the Lagrangian between iterations.
const MONOTONE_SLACK: f64 = 1e-12;

/// `I(X; J) + lambda_d E[d] + lambda_g E[g]` in bits per block, with `q`
/// the marginal of `cond` and `energy` the weighted metric of each column.
fn lagrangian(px: &[f64], energy: &[f64], cond: &[f64], q: &[f64]) -> f64 {
    let m = q.len();
    let mut f = 0.0;
    for (r, &w) in px.iter().enumerate() {
        let row = &cond[r * m..(r + 1) * m];
        let e = &energy[r * m..(r + 1) * m];
        let mut acc = 0.0;
        for j in 0..m {
            let p = row[j];
            // A mass that underflowed out of the marginal contributes nothing.
            if p > 0.0 && q[j] > 0.0 {
                acc += p * ((p / q[j]).log2() + e[j]);
            }
        }
        f += w * acc;
    }
    f
}

/// Trees with identical distortion and cost rows, in order of first
/// appearance. Such trees stay proportional under the iteration, so it
/// runs once per class.
fn duplicate_classes(metrics: &PairMetrics) -> Vec<Vec<usize>> {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for j in 0..metrics.n_trees() {
        let key = (0..metrics.n_rows())
            .flat_map(|r| [metrics.d(r, j).to_bits(), metrics.g(r, j).to_bits()])
            .collect();
        match index.get(&key) {
            Some(&c) => classes[c].push(j),
            None => {
                index.insert(key, classes.len());
                classes.push(vec![j]);
            }
        }
    }
    classes
}

/// Minimizes `I(X; J) + lambda_d E[d] + lambda_g E[g]` over `P(j | x)`
/// starting from the uniform law.
///
/// Each iteration sets `P(j|x) ∝ q(j) 2^{-lambda_d d(x,j) - lambda_g g(x,j)}`
/// and then `q(j) = sum_x P(x) P(j|x)`. The Lagrangian is checked to be
/// nonincreasing at every step.
pub fn ba_solve(
    metrics: &PairMetrics,
    lambda_d: f64,
    lambda_g: f64,
    opts: BaOptions,
) -> Result<RdcPoint, SolverError> {
    ba_solve_from(metrics, lambda_d, lambda_g, opts, None)
}

/// Weight of the uniform law blended into a warm start, which keeps every
/// tree reachable.
const WARM_BLEND: f64 = 1e-6;

/// [`ba_solve`] started from the codetree marginal `start` (blended with the
/// uniform law) instead of the uniform law.
pub(crate) fn ba_solve_from(
    metrics: &PairMetrics,
    lambda_d: f64,
    lambda_g: f64,
    opts: BaOptions,
    start: Option<&[f64]>,
) -> Result<RdcPoint, SolverError> {
    if !(lambda_d >= 0.0 && lambda_g >= 0.0 && lambda_d.is_finite() && lambda_g.is_finite()) {
        return Err(SolverError::BadMultiplier(lambda_d, lambda_g));
    }
    let (n, m) = (metrics.n_rows(), metrics.n_trees());
    let classes = duplicate_classes(metrics);
    let k = classes.len();
    let px = metrics.px();

    let mut energy = vec![0.0; n * k];
    // Row-shifted exponential weights; the shift cancels in the normalization.
    let mut kernel = vec![0.0; n * k];
    for r in 0..n {
        for (c, members) in classes.iter().enumerate() {
            let j = members[0];
            energy[r * k + c] = lambda_d * metrics.d(r, j) + lambda_g * metrics.g(r, j);
        }
        let row = &energy[r * k..(r + 1) * k];
        let low = row.iter().copied().fold(f64::INFINITY, f64::min);
        for c in 0..k {
            kernel[r * k + c] = (low - row[c]).exp2();
        }
    }

    let share: Vec<f64> = classes.iter().map(|c| c.len() as f64 / m as f64).collect();
    let mut q = share.clone();
    if let Some(start) = start {
        for (c, members) in classes.iter().enumerate() {
            let warm: f64 = members.iter().map(|&j| start[j]).sum();
            q[c] = (1.0 - WARM_BLEND) * warm + WARM_BLEND * share[c];
        }
    }
    let mut cond: Vec<f64> = (0..n).flat_map(|_| q.iter().copied()).collect();
    let mut f_prev = lagrangian(px, &energy, &cond, &q);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iter {
        iterations += 1;
        for r in 0..n {
            let row = &mut cond[r * k..(r + 1) * k];
            let w = &kernel[r * k..(r + 1) * k];
            let mut z = 0.0;
            for c in 0..k {
                row[c] = q[c] * w[c];
                z += row[c];
            }
            if !(z > 0.0 && z.is_finite()) {
                return Err(SolverError::NonFinite { iteration: iterations });
            }
            row.iter_mut().for_each(|p| *p /= z);
        }
        q.iter_mut().for_each(|v| *v = 0.0);
        for (r, &w) in px.iter().enumerate() {
            for (qc, &p) in q.iter_mut().zip(&cond[r * k..(r + 1) * k]) {
                *qc += w * p;
            }
        }
        let f = lagrangian(px, &energy, &cond, &q);
        if !f.is_finite() {
            return Err(SolverError::NonFinite { iteration: iterations });
        }
        if f > f_prev + MONOTONE_SLACK * f_prev.abs().max(1.0) {
            return Err(SolverError::LagrangianIncrease {
                iteration: iterations,
                increase: f - f_prev,
            });
        }
        let change = f_prev - f;
        f_prev = f;
        if change.abs() < opts.tol {
            converged = true;
            break;
        }
    }

    // Spread each class's mass evenly over its members.
    let mut full = vec![0.0; n * m];
    for r in 0..n {
        for (c, members) in classes.iter().enumerate() {
            let each = cond[r * k + c] / members.len() as f64;
            for &j in members {
                full[r * m + j] = each;
            }
        }
    }
    Ok(RdcPoint::from_table(
        metrics,
        ConditionalTable::from_raw(n, m, full),
        lambda_d,
        lambda_g,
        iterations,
        converged,
    ))
}

/// `count` multipliers spaced geometrically from `start` to `stop`.
pub fn geometric_grid(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let ratio = (stop / start).powf(1.0 / (count - 1) as f64);
            (0..count)
                .map(|k| if k + 1 == count { stop } else { start * ratio.powi(k as i32) })
                .collect()
        }
    }
}

/// One [`ba_solve`] per multiplier pair, sorted by `(lambda_d, lambda_g)`.
/// Failures are reported per point.
pub fn rdc_surface(
    metrics: &PairMetrics,
    grid: &[(f64, f64)],
    opts: BaOptions,
) -> Vec<((f64, f64), Result<RdcPoint, SolverError>)> {
    rdc_surface_with(metrics, grid, opts, true)
}

pub fn rdc_surface_with(
    metrics: &PairMetrics,
    grid: &[(f64, f64)],
    opts: BaOptions,
    parallel: bool,
) -> Vec<((f64, f64), Result<RdcPoint, SolverError>)> {
    let mut sorted = grid.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let solve = |&(ld, lg): &(f64, f64)| ((ld, lg), ba_solve(metrics, ld, lg, opts));
    if parallel {
        sorted.par_iter().map(solve).collect()
    } else {
        sorted.iter().map(solve).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_support::binary_metrics;
    use super::*;
    use crate::info::{mutual_information, JointTable};

    /// 1 - H2(D) through natural logs, independent of the crate's entropy code.
    fn binary_rd(d: f64) -> f64 {
        let h = -(d * d.ln() + (1.0 - d) * (1.0 - d).ln()) / std::f64::consts::LN_2;
        1.0 - h
    }

    #[test]
    fn zero_multipliers_give_zero_rate() {
        let p = ba_solve(&binary_metrics(0.5), 0.0, 0.0, BaOptions::default()).unwrap();
        assert_eq!(p.rate, 0.0);
        assert!(p.converged);
    }

    #[test]
    fn traces_binary_curve() {
        let m = binary_metrics(0.5);
        for lambda in [0.5, 1.0, 2.0, 3.0, 5.0] {
            let p = ba_solve(&m, lambda, 0.0, BaOptions::default()).unwrap();
            if p.rate > 1e-6 {
                assert!((p.rate - binary_rd(p.distortion)).abs() < 1e-7, "{p:?}");
                // The slope of R(D) is -lambda: D = 1 / (1 + 2^lambda).
                assert!((p.distortion - 1.0 / (1.0 + lambda.exp2())).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn lossless_limit() {
        let p = ba_solve(&binary_metrics(0.5), 60.0, 0.0, BaOptions::default()).unwrap();
        assert!((p.rate - 1.0).abs() < 1e-9);
        assert!(p.distortion < 1e-12);
    }

    #[test]
    fn rate_matches_mutual_information_of_joint() {
        let m = binary_metrics(0.3);
        let p = ba_solve(&m, 2.5, 0.0, BaOptions::default()).unwrap();
        let mut joint = Vec::new();
        for r in 0..2 {
            for j in 0..2 {
                joint.push(m.px()[r] * p.pj_given_x.get(r, j));
            }
        }
        let mi = mutual_information(&JointTable::new(&[2, 2], joint).unwrap()).unwrap();
        assert!((mi - p.rate).abs() < 1e-10);
    }

    #[test]
    fn rejects_negative_multiplier() {
        assert!(ba_solve(&binary_metrics(0.5), -1.0, 0.0, BaOptions::default()).is_err());
        assert!(ba_solve(&binary_metrics(0.5), f64::NAN, 0.0, BaOptions::default()).is_err());
    }

    #[test]
    fn max_iter_reports_non_convergence() {
        let opts = BaOptions { tol: 0.0, max_iter: 3 };
        let p = ba_solve(&binary_metrics(0.5), 2.0, 0.0, opts).unwrap();
        assert!(!p.converged);
        assert_eq!(p.iterations, 3);
    }

    #[test]
    fn geometric_grid_endpoints() {
        let g = geometric_grid(0.5, 8.0, 5);
        assert_eq!(g.len(), 5);
        assert_eq!(g[0], 0.5);
        assert_eq!(g[4], 8.0);
        assert!((g[2] - 2.0).abs() < 1e-12);
        assert_eq!(geometric_grid(3.0, 9.0, 1), vec![3.0]);
    }

    #[test]
    fn surface_sorted_and_parallel_identical() {
        let m = binary_metrics(0.5);
        let grid = [(3.0, 0.0), (1.0, 0.0), (2.0, 0.0)];
        let par = rdc_surface_with(&m, &grid, BaOptions::default(), true);
        let seq = rdc_surface_with(&m, &grid, BaOptions::default(), false);
        let lambdas: Vec<f64> = par.iter().map(|(l, _)| l.0).collect();
        assert_eq!(lambdas, vec![1.0, 2.0, 3.0]);
        for ((_, a), (_, b)) in par.iter().zip(&seq) {
            assert_eq!(a.as_ref().unwrap(), b.as_ref().unwrap());
        }
        let single = rdc_surface(&m, &[(2.0, 0.0)], BaOptions::default());
        assert_eq!(
            single[0].1.as_ref().unwrap(),
            &ba_solve(&m, 2.0, 0.0, BaOptions::default()).unwrap()
        );
    }
}
