//! Multiplier search for a prescribed (distortion, cost) pair.

use std::cell::RefCell;
use std::collections::HashMap;

use super::ba::ba_solve_from;
use super::{BaOptions, ConditionalTable, PairMetrics, RdcPoint, SolverError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetOptions {
    /// Accepted gap between achieved and target distortion or cost.
    pub tol_dg: f64,
    pub ba: BaOptions,
    /// Doublings of a multiplier before a target is declared unreachable.
    pub max_doublings: usize,
    pub max_bisections: usize,
}

impl Default for TargetOptions {
    fn default() -> Self {
        TargetOptions {
            tol_dg: 1e-4,
            ba: BaOptions::default(),
            max_doublings: 60,
            max_bisections: 100,
        }
    }
}

/// Relative width at which a multiplier bracket counts as a jump.
const MULTIPLIER_RESOLUTION: f64 = 1e-7;

#[derive(Clone, Copy, PartialEq)]
enum Constraint {
    Distortion,
    Cost,
}

impl Constraint {
    fn name(self) -> &'static str {
        match self {
            Constraint::Distortion => "distortion",
            Constraint::Cost => "cost",
        }
    }

    fn value(self, p: &RdcPoint) -> f64 {
        match self {
            Constraint::Distortion => p.distortion,
            Constraint::Cost => p.cost,
        }
    }

    fn multiplier(self, p: &RdcPoint) -> f64 {
        match self {
            Constraint::Distortion => p.lambda_d,
            Constraint::Cost => p.lambda_g,
        }
    }

    fn entry(self, metrics: &PairMetrics, r: usize, j: usize) -> f64 {
        match self {
            Constraint::Distortion => metrics.d(r, j),
            Constraint::Cost => metrics.g(r, j),
        }
    }
}

/// Limit of the solution as the multiplier of `which` tends to zero from
/// above, given the solution at zero.
///
/// Trees whose weighted metric rows coincide carry identical posteriors, so
/// their masses can be pooled on any one of them without changing the
/// objective. A vanishing positive multiplier pools them on the member that
/// is cheapest for `which`.
fn settle_ties(metrics: &PairMetrics, p: RdcPoint, which: Constraint) -> RdcPoint {
    let (n, m) = (metrics.n_rows(), metrics.n_trees());
    let (ld, lg) = (p.lambda_d, p.lambda_g);
    let mut groups: HashMap<Vec<u64>, Vec<usize>> = HashMap::new();
    for j in (0..m).filter(|&j| p.pj[j] > 0.0) {
        let key = (0..n)
            .map(|r| (ld * metrics.d(r, j) + lg * metrics.g(r, j)).to_bits())
            .collect();
        groups.entry(key).or_default().push(j);
    }
    if groups.values().all(|g| g.len() == 1) {
        return p;
    }
    let mut cond = p.pj_given_x.as_slice().to_vec();
    for members in groups.values().filter(|g| g.len() > 1) {
        let pooled: Vec<f64> = (0..n)
            .map(|r| members.iter().map(|&j| cond[r * m + j]).sum())
            .collect();
        let score = |j: usize| -> f64 {
            (0..n)
                .map(|r| metrics.px()[r] * pooled[r] * which.entry(metrics, r, j))
                .sum()
        };
        let mut best = members[0];
        for &j in &members[1..] {
            if score(j) < score(best) {
                best = j;
            }
        }
        for r in 0..n {
            for &j in members {
                cond[r * m + j] = if j == best { pooled[r] } else { 0.0 };
            }
        }
    }
    RdcPoint::from_table(
        metrics,
        ConditionalTable::from_raw(n, m, cond),
        ld,
        lg,
        p.iterations,
        p.converged,
    )
}

/// Finds the smallest multiplier whose solution meets `target` on the
/// constrained quantity, which is nonincreasing in the multiplier.
/// Returns the time-sharing of the two bracketing solutions when the
/// quantity jumps across the target.
fn meet(
    metrics: &PairMetrics,
    solve: &dyn Fn(f64) -> Result<RdcPoint, SolverError>,
    which: Constraint,
    target: f64,
    opts: &TargetOptions,
) -> Result<RdcPoint, SolverError> {
    let tol = opts.tol_dg;
    let value = |p: &RdcPoint| which.value(p);
    let mut lo = settle_ties(metrics, solve(0.0)?, which);
    if value(&lo) <= target + tol {
        return Ok(lo);
    }
    let mut lambda = 1.0;
    let mut hi = loop {
        let p = solve(lambda)?;
        if value(&p) <= target + tol {
            break p;
        }
        lo = p;
        if lambda >= 2f64.powi(opts.max_doublings as i32) {
            return Err(SolverError::Infeasible(format!(
                "{} {target} not reached (still {} at multiplier {lambda})",
                which.name(),
                value(&lo)
            )));
        }
        lambda *= 2.0;
    };
    if value(&hi) >= target - tol {
        return Ok(hi);
    }
    for _ in 0..opts.max_bisections {
        let (a, b) = (which.multiplier(&lo), which.multiplier(&hi));
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b || b - a <= MULTIPLIER_RESOLUTION * b {
            break;
        }
        let p = solve(mid)?;
        let v = value(&p);
        if v > target + tol {
            lo = p;
        } else if v < target - tol {
            hi = p;
        } else {
            return Ok(p);
        }
    }
    let (vl, vh) = (value(&lo), value(&hi));
    let theta = ((target - vh) / (vl - vh)).clamp(0.0, 1.0);
    Ok(RdcPoint::mix(metrics, &lo, &hi, theta))
}

/// Smallest per-symbol cost of any conditional law with per-symbol
/// distortion at most `d_target`, ignoring rate. By linear programming
/// duality it is `max_mu [E min_j (g + mu d) - mu D]`, a concave function of
/// `mu`, maximized here by ternary search.
fn min_cost_at(metrics: &PairMetrics, d_target: f64) -> f64 {
    if d_target.is_infinite() {
        return metrics.floors().1;
    }
    let l = metrics.block_len() as f64;
    let dual = |mu: f64| -> f64 {
        let mut v = -mu * d_target * l;
        for r in 0..metrics.n_rows() {
            let best = (0..metrics.n_trees())
                .map(|j| metrics.g(r, j) + mu * metrics.d(r, j))
                .fold(f64::INFINITY, f64::min);
            v += metrics.px()[r] * best;
        }
        v / l
    };
    let (mut lo, mut hi) = (0.0, 1e12);
    for _ in 0..300 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if dual(m1) < dual(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    dual(0.0).max(dual(0.5 * (lo + hi)))
}

/// A law that ignores the source and meets both targets, if one exists.
///
/// Such laws are mixtures of single trees judged by their average
/// distortion and cost, and two trees always suffice for two constraints.
/// Searching here avoids driving a multiplier toward zero, where the
/// iteration slows down without bound.
fn zero_rate_point(metrics: &PairMetrics, d_target: f64, g_target: f64, tol: f64) -> Option<RdcPoint> {
    let (n, m) = (metrics.n_rows(), metrics.n_trees());
    let l = metrics.block_len() as f64;
    let mut mean = vec![(0.0, 0.0); m];
    for r in 0..n {
        let w = metrics.px()[r] / l;
        for (j, acc) in mean.iter_mut().enumerate() {
            acc.0 += w * metrics.d(r, j);
            acc.1 += w * metrics.g(r, j);
        }
    }
    // Excess over the (relaxed) targets; infinite targets never bind.
    let excess: Vec<(f64, f64)> = mean
        .iter()
        .map(|&(d, g)| {
            let over = |v: f64, t: f64| if t.is_infinite() { f64::NEG_INFINITY } else { v - t - tol };
            (over(d, d_target), over(g, g_target))
        })
        .collect();

    // Lower-left staircase of the excess points, by increasing distortion.
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (excess[a], excess[b]);
        ea.0.total_cmp(&eb.0).then(ea.1.total_cmp(&eb.1)).then(a.cmp(&b))
    });
    let mut front: Vec<usize> = Vec::new();
    for j in order {
        if front.last().is_none_or(|&k| excess[j].1 < excess[k].1) {
            front.push(j);
        }
    }

    let mut weights = vec![0.0; m];
    if let Some(&j) = front.iter().find(|&&j| excess[j].0 <= 0.0 && excess[j].1 <= 0.0) {
        weights[j] = 1.0;
    } else {
        // Pair a distortion-feasible tree with a cost-feasible one.
        let pair = front.iter().filter(|&&a| excess[a].0 <= 0.0).find_map(|&a| {
            front.iter().filter(|&&b| excess[b].1 <= 0.0).find_map(|&b| {
                let ((da, ga), (db, gb)) = (excess[a], excess[b]);
                // Weight theta on `a`: distortion needs theta >= lo, cost theta <= hi.
                let lo = db / (db - da);
                let hi = -gb / (ga - gb);
                // Prefer meeting the distortion target exactly, at least cost.
                let exact = (db + tol) / (db - da);
                (lo <= hi).then_some((a, b, exact.clamp(lo, hi)))
            })
        });
        let (a, b, theta) = pair?;
        weights[a] = theta;
        weights[b] = 1.0 - theta;
    }
    let mut table = Vec::with_capacity(n * m);
    for _ in 0..n {
        table.extend_from_slice(&weights);
    }
    Some(RdcPoint::from_table(
        metrics,
        ConditionalTable::from_raw(n, m, table),
        0.0,
        0.0,
        0,
        true,
    ))
}

/// Minimum-rate point with per-symbol distortion at most `d_target` and
/// per-symbol cost at most `g_target` (each up to `tol_dg`). Pass
/// `f64::INFINITY` for an unconstrained quantity.
pub fn rdc_at(
    metrics: &PairMetrics,
    d_target: f64,
    g_target: f64,
    opts: TargetOptions,
) -> Result<RdcPoint, SolverError> {
    for (name, t) in [("distortion", d_target), ("cost", g_target)] {
        if t.is_nan() || t < 0.0 {
            return Err(SolverError::Infeasible(format!("{name} target {t} is not a nonnegative number")));
        }
    }
    let (d_floor, g_floor) = metrics.floors();
    if d_target + opts.tol_dg < d_floor {
        return Err(SolverError::Infeasible(format!(
            "distortion {d_target} is below the floor {d_floor}"
        )));
    }
    if g_target + opts.tol_dg < g_floor {
        return Err(SolverError::Infeasible(format!(
            "cost {g_target} is below the floor {g_floor}"
        )));
    }
    let needed = min_cost_at(metrics, d_target);
    if g_target + opts.tol_dg < needed {
        return Err(SolverError::Infeasible(format!(
            "distortion {d_target} needs cost at least {needed}, above {g_target}"
        )));
    }
    if let Some(p) = zero_rate_point(metrics, d_target, g_target, opts.tol_dg) {
        return Ok(p);
    }
    // Each solve starts from the previous optimum; neighbouring multipliers
    // have close optima, which saves most iterations near ties.
    let warm: RefCell<Option<Vec<f64>>> = RefCell::new(None);
    let inner = |lambda_g: f64| {
        meet(
            metrics,
            &|lambda_d| {
                let start = warm.borrow().clone();
                let p = ba_solve_from(metrics, lambda_d, lambda_g, opts.ba, start.as_deref())?;
                *warm.borrow_mut() = Some(p.pj.clone());
                Ok(p)
            },
            Constraint::Distortion,
            d_target,
            &opts,
        )
    };
    meet(metrics, &inner, Constraint::Cost, g_target, &opts)
}

/// `R(mid) - (R(a) + R(b)) / 2` for two (distortion, cost) targets; a
/// positive value is a midpoint convexity violation of the computed surface.
pub fn midpoint_convexity_gap(
    metrics: &PairMetrics,
    a: (f64, f64),
    b: (f64, f64),
    opts: TargetOptions,
) -> Result<f64, SolverError> {
    let mid = (0.5 * (a.0 + b.0), 0.5 * (a.1 + b.1));
    let ra = rdc_at(metrics, a.0, a.1, opts)?.rate;
    let rb = rdc_at(metrics, b.0, b.1, opts)?.rate;
    Ok(rdc_at(metrics, mid.0, mid.1, opts)?.rate - 0.5 * (ra + rb))
}

#[cfg(test)]
mod tests {
    use super::super::test_support::binary_metrics;
    use super::*;

    fn h2(p: f64) -> f64 {
        -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
    }

    #[test]
    fn binary_quarter_distortion() {
        let p = rdc_at(&binary_metrics(0.5), 0.25, f64::INFINITY, TargetOptions::default()).unwrap();
        assert!((p.distortion - 0.25).abs() <= 1e-4);
        assert!((p.rate - (1.0 - h2(0.25))).abs() < 1e-3, "{}", p.rate);
        assert!((1.0 - h2(0.25) - 0.188722).abs() < 1e-6);
    }

    #[test]
    fn zero_rate_above_floor() {
        let p = rdc_at(&binary_metrics(0.5), 0.5, f64::INFINITY, TargetOptions::default()).unwrap();
        assert_eq!(p.rate, 0.0);
        assert_eq!(p.lambda_d, 0.0);
    }

    #[test]
    fn infeasible_below_floor() {
        // Every tree costs 1 per symbol.
        let m = PairMetrics::from_tables(1, vec![0.5, 0.5], vec![0.0, 1.0, 1.0, 0.0], vec![1.0; 4])
            .unwrap();
        assert!(matches!(
            rdc_at(&m, 0.2, 0.5, TargetOptions::default()),
            Err(SolverError::Infeasible(_))
        ));
        assert!(rdc_at(&m, -0.1, 1.0, TargetOptions::default()).is_err());
    }

    #[test]
    fn cost_constraint_binds() {
        // Tree 0 is free and useless, tree 1 is exact but costs 1.
        let m = PairMetrics::from_tables(
            1,
            vec![0.5, 0.5],
            vec![0.5, 0.0, 0.5, 0.0],
            vec![0.0, 1.0, 0.0, 1.0],
        )
        .unwrap();
        let p = rdc_at(&m, f64::INFINITY, 0.3, TargetOptions::default()).unwrap();
        assert_eq!(p.rate, 0.0);
        let p = rdc_at(&m, 0.1, 0.9, TargetOptions::default()).unwrap();
        assert!((p.distortion - 0.1).abs() <= 1e-4);
        assert!(p.cost <= 0.9 + 1e-4);
        assert!(rdc_at(&m, 0.1, 0.7, TargetOptions::default()).is_err());
    }
}
