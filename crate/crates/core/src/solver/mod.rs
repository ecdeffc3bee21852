//! Rate-distortion-cost computation over a set of codetrees.
//!
//! The optimization variable is the conditional law of the codetree given
//! the source block. Everything is reduced to per-pair expectations
//! ([`PairMetrics`]), after which the problem is a classical two-multiplier
//! rate-distortion problem with the codetree set as reproduction alphabet.

mod ba;
mod brute;
mod joint;
mod reduce;
mod target;

use rayon::prelude::*;
use thiserror::Error;

use crate::codetree::{induced_metrics, CodetreeError, CodetreeSet};
use crate::problem::Problem;

pub use ba::{ba_solve, geometric_grid, rdc_surface, rdc_surface_with, BaOptions};
pub use brute::{brute_force_rdc, BruteForceBracket, BRUTE_MAX_ROWS, BRUTE_MAX_TREES};
pub use joint::estimate_joint;
pub use reduce::{reduce_support, Reduction, DRIFT_TOL};
pub use target::{midpoint_convexity_gap, rdc_at, TargetOptions};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("multipliers must be finite and nonnegative (got {0}, {1})")]
    BadMultiplier(f64, f64),
    #[error("non-finite value at iteration {iteration}; the metrics are degenerate")]
    NonFinite { iteration: usize },
    #[error("Lagrangian increased by {increase:e} at iteration {iteration}")]
    LagrangianIncrease { iteration: usize, increase: f64 },
    #[error("infeasible target: {0}")]
    Infeasible(String),
    #[error("inconsistent shapes: {0}")]
    Shape(String),
    #[error("instance too large for the grid oracle ({rows} source rows, {trees} codetrees)")]
    TooLarge { rows: usize, trees: usize },
    #[error("support reduction stalled at {support} atoms (bound {bound})")]
    ReductionStalled { support: usize, bound: usize },
    #[error("support reduction moved a preserved quantity by {0:e}")]
    ReductionDrift(f64),
    #[error(transparent)]
    Codetree(#[from] CodetreeError),
}

/// Expected block distortion and block cost for every (source row, codetree) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PairMetrics {
    block_len: usize,
    x_count: usize,
    rows: Vec<usize>,
    px: Vec<f64>,
    ordinals: Vec<u64>,
    d_bar: Vec<f64>,
    g_bar: Vec<f64>,
}

impl PairMetrics {
    /// Evaluates every pair; rows are the positive-probability source blocks.
    pub fn compute(problem: &Problem, set: &CodetreeSet) -> Result<Self, SolverError> {
        Self::compute_with(problem, set, true)
    }

    /// Same as [`PairMetrics::compute`]; `parallel` only changes scheduling.
    pub fn compute_with(
        problem: &Problem,
        set: &CodetreeSet,
        parallel: bool,
    ) -> Result<Self, SolverError> {
        if set.shape() != &crate::codetree::CodetreeShape::new(problem.alphabets()) {
            return Err(CodetreeError::ShapeMismatch.into());
        }
        let rows = problem.support().to_vec();
        let column = |j: usize| -> Result<Vec<(f64, f64)>, CodetreeError> {
            let tree = set.tree(j);
            rows.iter().map(|&x| induced_metrics(problem, &tree, x)).collect()
        };
        let columns: Vec<Vec<(f64, f64)>> = if parallel {
            (0..set.len()).into_par_iter().map(column).collect::<Result<_, _>>()?
        } else {
            (0..set.len()).map(column).collect::<Result<_, _>>()?
        };
        let (n, m) = (rows.len(), set.len());
        let mut d_bar = vec![0.0; n * m];
        let mut g_bar = vec![0.0; n * m];
        for (j, col) in columns.iter().enumerate() {
            for (r, &(d, g)) in col.iter().enumerate() {
                d_bar[r * m + j] = d;
                g_bar[r * m + j] = g;
            }
        }
        Ok(PairMetrics {
            block_len: problem.block_len(),
            x_count: problem.alphabets().x_count(),
            px: rows.iter().map(|&x| problem.px()[x]).collect(),
            rows,
            ordinals: (0..m).map(|j| set.ordinal(j)).collect(),
            d_bar,
            g_bar,
        })
    }

    /// Builds metrics directly from row-major tables (rows = source blocks).
    pub fn from_tables(
        block_len: usize,
        px: Vec<f64>,
        d_bar: Vec<f64>,
        g_bar: Vec<f64>,
    ) -> Result<Self, SolverError> {
        let n = px.len();
        if n == 0 || !d_bar.len().is_multiple_of(n) || d_bar.len() != g_bar.len() || d_bar.is_empty() {
            return Err(SolverError::Shape(format!(
                "{n} rows with {} / {} metric entries",
                d_bar.len(),
                g_bar.len()
            )));
        }
        if px.iter().any(|&p| p.is_nan() || p <= 0.0) || ((px.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(SolverError::Shape("row probabilities must be positive and sum to 1".into()));
        }
        if d_bar.iter().chain(&g_bar).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(SolverError::Shape("metrics must be finite and nonnegative".into()));
        }
        let m = d_bar.len() / n;
        Ok(PairMetrics {
            block_len,
            x_count: n,
            rows: (0..n).collect(),
            px,
            ordinals: (0..m as u64).collect(),
            d_bar,
            g_bar,
        })
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }
    /// `|X^L|` of the originating problem.
    pub fn x_count(&self) -> usize {
        self.x_count
    }
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }
    pub fn n_trees(&self) -> usize {
        self.ordinals.len()
    }
    /// Source block index of each row.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }
    pub fn px(&self) -> &[f64] {
        &self.px
    }
    /// Canonical ordinal of each column.
    pub fn ordinals(&self) -> &[u64] {
        &self.ordinals
    }
    pub fn d(&self, row: usize, tree: usize) -> f64 {
        self.d_bar[row * self.n_trees() + tree]
    }
    pub fn g(&self, row: usize, tree: usize) -> f64 {
        self.g_bar[row * self.n_trees() + tree]
    }
    pub fn d_row(&self, row: usize) -> &[f64] {
        let m = self.n_trees();
        &self.d_bar[row * m..(row + 1) * m]
    }
    pub fn g_row(&self, row: usize) -> &[f64] {
        let m = self.n_trees();
        &self.g_bar[row * m..(row + 1) * m]
    }

    /// Row position of source block `x`, if it has positive probability.
    pub fn row_of(&self, x: usize) -> Option<usize> {
        self.rows.binary_search(&x).ok()
    }

    /// Copy with every distortion multiplied by `c`.
    pub fn scale_distortion(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.d_bar.iter_mut().for_each(|d| *d *= c);
        out
    }

    /// Smallest achievable per-symbol distortion and cost (at unlimited rate).
    pub fn floors(&self) -> (f64, f64) {
        let l = self.block_len as f64;
        let mut d = 0.0;
        let mut g = 0.0;
        for r in 0..self.n_rows() {
            d += self.px[r] * self.d_row(r).iter().copied().fold(f64::INFINITY, f64::min);
            g += self.px[r] * self.g_row(r).iter().copied().fold(f64::INFINITY, f64::min);
        }
        (d / l, g / l)
    }
}

/// Dense row-stochastic table `P(tree | source row)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalTable {
    rows: usize,
    cols: usize,
    p: Vec<f64>,
}

impl ConditionalTable {
    pub fn new(rows: usize, cols: usize, p: Vec<f64>) -> Result<Self, SolverError> {
        if p.len() != rows * cols {
            return Err(SolverError::Shape(format!(
                "{} entries for a {rows}x{cols} table",
                p.len()
            )));
        }
        let t = ConditionalTable { rows, cols, p };
        for r in 0..rows {
            let s: f64 = t.row(r).iter().sum();
            if t.row(r).iter().any(|v| !v.is_finite() || *v < 0.0) || (s - 1.0).abs() > 1e-9 {
                return Err(SolverError::Shape(format!("row {r} sums to {s}")));
            }
        }
        Ok(t)
    }

    pub fn uniform(rows: usize, cols: usize) -> Self {
        ConditionalTable {
            rows,
            cols,
            p: vec![1.0 / cols as f64; rows * cols],
        }
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, p: Vec<f64>) -> Self {
        debug_assert_eq!(p.len(), rows * cols);
        ConditionalTable { rows, cols, p }
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }
    pub fn n_cols(&self) -> usize {
        self.cols
    }
    pub fn row(&self, r: usize) -> &[f64] {
        &self.p[r * self.cols..(r + 1) * self.cols]
    }
    pub fn get(&self, r: usize, j: usize) -> f64 {
        self.p[r * self.cols + j]
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    /// Marginal of the column variable under row weights `px`.
    pub fn marginal(&self, px: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.cols];
        for (r, &w) in px.iter().enumerate() {
            for (qj, &p) in q.iter_mut().zip(self.row(r)) {
                *qj += w * p;
            }
        }
        q
    }

    /// Columns carrying probability mass under `px`.
    pub fn support(&self, px: &[f64]) -> Vec<usize> {
        self.marginal(px)
            .iter()
            .enumerate()
            .filter(|(_, &q)| q > 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

/// Rate, distortion and cost of a conditional law, per source symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub rate: f64,
    pub distortion: f64,
    pub cost: f64,
    /// Codetree marginal.
    pub pj: Vec<f64>,
}

pub fn evaluate(metrics: &PairMetrics, cond: &ConditionalTable) -> Evaluation {
    let pj = cond.marginal(metrics.px());
    let (mut info, mut d, mut g) = (0.0, 0.0, 0.0);
    for r in 0..metrics.n_rows() {
        let w = metrics.px()[r];
        for (j, &p) in cond.row(r).iter().enumerate() {
            if p > 0.0 {
                if pj[j] > 0.0 {
                    info += w * p * (p / pj[j]).log2();
                }
                d += w * p * metrics.d(r, j);
                g += w * p * metrics.g(r, j);
            }
        }
    }
    let l = metrics.block_len() as f64;
    Evaluation {
        rate: info.max(0.0) / l,
        distortion: d / l,
        cost: g / l,
        pj,
    }
}

/// One solved operating point. Rate is in bits per source symbol; distortion
/// and cost are per source symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct RdcPoint {
    pub lambda_d: f64,
    pub lambda_g: f64,
    pub rate: f64,
    pub distortion: f64,
    pub cost: f64,
    pub pj_given_x: ConditionalTable,
    /// Marginal law of the codetree.
    pub pj: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl RdcPoint {
    pub(crate) fn from_table(
        metrics: &PairMetrics,
        cond: ConditionalTable,
        lambda_d: f64,
        lambda_g: f64,
        iterations: usize,
        converged: bool,
    ) -> Self {
        let e = evaluate(metrics, &cond);
        RdcPoint {
            lambda_d,
            lambda_g,
            rate: e.rate,
            distortion: e.distortion,
            cost: e.cost,
            pj_given_x: cond,
            pj: e.pj,
            iterations,
            converged,
        }
    }

    /// Time-sharing of two points: `theta * a + (1 - theta) * b` applied to
    /// the conditional laws.
    pub fn mix(metrics: &PairMetrics, a: &RdcPoint, b: &RdcPoint, theta: f64) -> RdcPoint {
        let p = a
            .pj_given_x
            .as_slice()
            .iter()
            .zip(b.pj_given_x.as_slice())
            .map(|(x, y)| theta * x + (1.0 - theta) * y)
            .collect();
        let cond = ConditionalTable::from_raw(a.pj_given_x.n_rows(), a.pj_given_x.n_cols(), p);
        RdcPoint::from_table(
            metrics,
            cond,
            theta * a.lambda_d + (1.0 - theta) * b.lambda_d,
            theta * a.lambda_g + (1.0 - theta) * b.lambda_g,
            a.iterations + b.iterations,
            a.converged && b.converged,
        )
    }

    /// Codetree positions with marginal mass above `threshold`.
    pub fn support_above(&self, threshold: f64) -> Vec<usize> {
        self.pj
            .iter()
            .enumerate()
            .filter(|(_, &q)| q > threshold)
            .map(|(j, _)| j)
            .collect()
    }
}


#[cfg(test)]
mod tests {
    use super::test_support::binary_metrics;
    use super::*;

    #[test]
    fn shape_checks() {
        assert!(PairMetrics::from_tables(1, vec![0.5, 0.5], vec![0.0; 3], vec![0.0; 3]).is_err());
        assert!(PairMetrics::from_tables(1, vec![0.5, 0.4], vec![0.0; 4], vec![0.0; 4]).is_err());
        assert!(PairMetrics::from_tables(1, vec![1.0], vec![-1.0], vec![0.0]).is_err());
        assert!(ConditionalTable::new(1, 2, vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn evaluate_deterministic_choice() {
        let m = binary_metrics(0.5);
        let cond = ConditionalTable::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let e = evaluate(&m, &cond);
        assert_eq!(e.rate, 1.0);
        assert_eq!(e.distortion, 0.0);
        let e = evaluate(&m, &ConditionalTable::uniform(2, 2));
        assert_eq!(e.rate, 0.0);
        assert_eq!(e.distortion, 0.5);
    }

    #[test]
    fn floors() {
        let m = binary_metrics(0.3);
        assert_eq!(m.floors(), (0.0, 0.0));
    }
}
