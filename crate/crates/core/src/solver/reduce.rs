//! Support reduction of the codetree law.
//!
//! The posteriors `P(x | j)` stay fixed while the weights `q(j)` move along
//! null directions of the linear map sending `q` to (source marginal,
//! conditional entropy, expected distortion, expected cost, total mass).
//! Each move zeroes one atom, so rate, distortion and cost are unchanged.

use nalgebra::DMatrix;

use super::{evaluate, ConditionalTable, PairMetrics, SolverError};
use crate::info::entropy;

/// Largest accepted change of rate, distortion or cost.
pub const DRIFT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Reduction {
    pub pj_given_x: ConditionalTable,
    pub support_before: usize,
    pub support_after: usize,
    /// Largest absolute change among per-symbol rate, distortion and cost.
    pub drift: f64,
}

struct Atom {
    column: usize,
    weight: f64,
    features: Vec<f64>,
}

/// Shrinks the support of `cond` to at most `bound` codetrees (default:
/// number of source blocks plus 3).
pub fn reduce_support(
    metrics: &PairMetrics,
    cond: &ConditionalTable,
    bound: Option<usize>,
) -> Result<Reduction, SolverError> {
    let (n, m) = (metrics.n_rows(), metrics.n_trees());
    if cond.n_rows() != n || cond.n_cols() != m {
        return Err(SolverError::Shape(format!(
            "{}x{} table for {n} rows and {m} codetrees",
            cond.n_rows(),
            cond.n_cols()
        )));
    }
    let bound = bound.unwrap_or(metrics.x_count() + 3);
    let px = metrics.px();
    let q = cond.marginal(px);
    let support: Vec<usize> = (0..m).filter(|&j| q[j] > 0.0).collect();
    let before = support.len();
    if before <= bound {
        return Ok(Reduction {
            pj_given_x: cond.clone(),
            support_before: before,
            support_after: before,
            drift: 0.0,
        });
    }

    // Posterior of each atom and the quantities its weight multiplies.
    let mut atoms: Vec<Atom> = support
        .iter()
        .map(|&j| {
            let post: Vec<f64> = (0..n).map(|r| px[r] * cond.get(r, j) / q[j]).collect();
            let d: f64 = (0..n).map(|r| post[r] * metrics.d(r, j)).sum();
            let g: f64 = (0..n).map(|r| post[r] * metrics.g(r, j)).sum();
            let mut features = post[..n - 1].to_vec();
            features.extend([entropy(&post), d, g, 1.0]);
            Atom { column: j, weight: q[j], features }
        })
        .collect();
    let k = n + 3;

    while atoms.len() > bound {
        // Work on the k + 1 lightest atoms: small moves, and a null
        // direction always exists. Fewer atoms need a rank deficiency.
        let mut order: Vec<usize> = (0..atoms.len()).collect();
        order.sort_by(|&a, &b| atoms[a].weight.total_cmp(&atoms[b].weight).then(a.cmp(&b)));
        let chosen = &order[..(k + 1).min(atoms.len())];
        let mut a = DMatrix::<f64>::zeros(k + 1, chosen.len());
        for (c, &i) in chosen.iter().enumerate() {
            for (r, &f) in atoms[i].features.iter().enumerate() {
                a[(r, c)] = f;
            }
        }
        let svd = a.svd(false, true);
        let v_t = svd.v_t.expect("requested");
        let sv = &svd.singular_values;
        let (smallest, &min_sv) = sv
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(y.1))
            .expect("nonempty");
        if chosen.len() <= k && min_sv > 1e-10 * sv.max() {
            return Err(SolverError::ReductionStalled {
                support: atoms.len(),
                bound,
            });
        }
        let dir: Vec<f64> = v_t.row(smallest).iter().copied().collect();
        let scale = dir.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let dir: Vec<f64> = dir.iter().map(|v| v / scale).collect();
        // Every column sums to one in the mass row, so the direction has
        // entries of both signs.
        let mut step = f64::INFINITY;
        let mut hit = 0;
        for (c, &i) in chosen.iter().enumerate() {
            if dir[c] < -1e-12 {
                let t = atoms[i].weight / -dir[c];
                if t < step {
                    step = t;
                    hit = c;
                }
            }
        }
        if !step.is_finite() {
            return Err(SolverError::ReductionStalled {
                support: atoms.len(),
                bound,
            });
        }
        for (c, &i) in chosen.iter().enumerate() {
            atoms[i].weight = (atoms[i].weight + step * dir[c]).max(0.0);
        }
        atoms[chosen[hit]].weight = 0.0;
        atoms.retain(|a| a.weight > 0.0);
    }

    let mut p = vec![0.0; n * m];
    for atom in &atoms {
        let j = atom.column;
        for r in 0..n {
            p[r * m + j] = atom.weight * px[r] * cond.get(r, j) / q[j] / px[r];
        }
    }
    for r in 0..n {
        let row = &mut p[r * m..(r + 1) * m];
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    let reduced = ConditionalTable::from_raw(n, m, p);
    let (e0, e1) = (evaluate(metrics, cond), evaluate(metrics, &reduced));
    let drift = (e0.rate - e1.rate)
        .abs()
        .max((e0.distortion - e1.distortion).abs())
        .max((e0.cost - e1.cost).abs());
    if drift >= DRIFT_TOL {
        return Err(SolverError::ReductionDrift(drift));
    }
    Ok(Reduction {
        support_after: reduced.support(px).len(),
        pj_given_x: reduced,
        support_before: before,
        drift,
    })
}

#[cfg(test)]
mod tests {
    use super::super::test_support::binary_metrics;
    use super::super::{ba_solve, BaOptions};
    use super::*;

    /// Binary problem whose 7 columns repeat the two useful estimates.
    fn duplicated() -> PairMetrics {
        let cols = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let mut d = Vec::new();
        for x in 0..2 {
            for &e in &cols {
                d.push(if e == x as f64 { 0.0 } else { 1.0 });
            }
        }
        PairMetrics::from_tables(1, vec![0.5, 0.5], d, vec![0.0; 14]).unwrap()
    }

    #[test]
    fn small_support_unchanged() {
        let m = binary_metrics(0.5);
        let c = ConditionalTable::new(2, 2, vec![0.9, 0.1, 0.1, 0.9]).unwrap();
        let r = reduce_support(&m, &c, None).unwrap();
        assert_eq!(r.pj_given_x, c);
        assert_eq!(r.drift, 0.0);
    }

    #[test]
    fn duplicated_trees_reduced() {
        let m = duplicated();
        let p = ba_solve(&m, 2.0, 0.0, BaOptions::default()).unwrap();
        assert_eq!(p.support_above(0.0).len(), 7);
        let r = reduce_support(&m, &p.pj_given_x, None).unwrap();
        assert!(r.support_after <= 5);
        assert!(r.drift < DRIFT_TOL);
        let e = evaluate(&m, &r.pj_given_x);
        assert!((e.rate - p.rate).abs() < 1e-9);
        assert!((e.distortion - p.distortion).abs() < 1e-9);
    }

    #[test]
    fn reduction_to_tighter_bound() {
        let m = duplicated();
        let c = ConditionalTable::uniform(2, 7);
        // Identical posteriors leave a rank-one system.
        let r = reduce_support(&m, &c, Some(1)).unwrap();
        assert_eq!(r.support_after, 1);
        assert!(matches!(
            reduce_support(&m, &c, Some(0)),
            Err(SolverError::ReductionStalled { .. })
        ));
    }
}
