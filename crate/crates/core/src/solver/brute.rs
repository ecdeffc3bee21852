//! Grid oracle for tiny instances.
//!
//! A literal grid over every row of `P(j | x)` is far too large even at
//! 4 rows and 8 trees, so the oracle grids the codetree marginal `q` and the
//! multipliers instead. Each grid point gives
//!
//! * a feasible conditional law `P(j|x) ∝ q(j) 2^{-λ·e(x,j)}`, whose mutual
//!   information is an upper bound on the optimum, and
//! * a Lagrange dual value, which is a lower bound for every `q` and `λ ≥ 0`.
//!
//! The true minimum is therefore bracketed, and the bracket shrinks with the
//! grid resolution.

use rayon::prelude::*;

use super::{PairMetrics, SolverError};

pub const BRUTE_MAX_ROWS: usize = 4;
pub const BRUTE_MAX_TREES: usize = 8;

/// Most simplex points visited for `q`.
const MAX_Q_POINTS: u64 = 60_000;
const FEASIBILITY_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct BruteForceBracket {
    /// Smallest rate among feasible grid points (bits per symbol).
    pub upper: f64,
    /// Largest dual bound over the grid, clamped at 0 (bits per symbol).
    pub lower: f64,
    /// Subdivisions actually used for the codetree marginal.
    pub grid_steps: usize,
    pub multipliers: usize,
}

impl BruteForceBracket {
    pub fn contains(&self, rate: f64, slack: f64) -> bool {
        self.lower - slack <= rate && rate <= self.upper + slack
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// All compositions of `steps` into `parts` nonnegative parts.
fn compositions(steps: usize, parts: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0; parts];
    fn rec(i: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i + 1 == cur.len() {
            cur[i] = left;
            out.push(cur.clone());
            return;
        }
        for v in 0..=left {
            cur[i] = v;
            rec(i + 1, left - v, cur, out);
        }
    }
    rec(0, steps, &mut cur, &mut out);
    out
}

fn lambda_axis(active: bool, fine: bool) -> Vec<f64> {
    let mut v = vec![0.0];
    if active {
        if fine {
            v.extend((-24..=48).map(|k| (k as f64 / 4.0).exp2()));
        } else {
            v.extend((-12..=24).map(|k| (k as f64 / 2.0).exp2()));
        }
    }
    v
}

struct Outcome {
    upper: f64,
    lower: f64,
}

/// Brackets the minimum rate at per-symbol distortion `d_target` and cost
/// `g_target` between two certified bounds.
pub fn brute_force_rdc(
    metrics: &PairMetrics,
    d_target: f64,
    g_target: f64,
    grid_steps: usize,
) -> Result<BruteForceBracket, SolverError> {
    let (n, m) = (metrics.n_rows(), metrics.n_trees());
    if n > BRUTE_MAX_ROWS || m > BRUTE_MAX_TREES {
        return Err(SolverError::TooLarge { rows: n, trees: m });
    }
    if grid_steps == 0 {
        return Err(SolverError::Shape("grid_steps must be positive".into()));
    }
    let l = metrics.block_len() as f64;
    let (d_tot, g_tot) = (d_target * l, g_target * l);
    let (d_floor, g_floor) = metrics.floors();
    if d_target < d_floor - FEASIBILITY_SLACK || g_target < g_floor - FEASIBILITY_SLACK {
        return Err(SolverError::Infeasible(format!(
            "({d_target}, {g_target}) is below the floors ({d_floor}, {g_floor})"
        )));
    }
    let px = metrics.px();
    let worst = |row: fn(&PairMetrics, usize) -> &[f64]| -> f64 {
        (0..n)
            .map(|r| px[r] * row(metrics, r).iter().copied().fold(0.0, f64::max))
            .sum()
    };
    let d_active = worst(PairMetrics::d_row) > d_tot;
    let g_active = worst(PairMetrics::g_row) > g_tot;
    let fine = !(d_active && g_active);
    let mut lambdas = Vec::new();
    for &ld in &lambda_axis(d_active, fine) {
        for &lg in &lambda_axis(g_active, fine) {
            lambdas.push((ld, lg));
        }
    }

    let mut steps = 1;
    while steps < grid_steps && binomial((steps + m) as u64, (m - 1) as u64) <= MAX_Q_POINTS {
        steps += 1;
    }
    let qs: Vec<Vec<f64>> = compositions(steps, m)
        .into_iter()
        .map(|c| c.iter().map(|&v| v as f64 / steps as f64).collect())
        .collect();

    let best = lambdas
        .par_iter()
        .map(|&(ld, lg)| {
            // Row-shifted weights; shifts cancel in every ratio used below.
            let mut kernel = vec![0.0; n * m];
            let mut top = vec![0.0; n];
            for r in 0..n {
                let e: Vec<f64> = (0..m)
                    .map(|j| -ld * metrics.d(r, j) - lg * metrics.g(r, j))
                    .collect();
                top[r] = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                for j in 0..m {
                    kernel[r * m + j] = (e[j] - top[r]).exp2();
                }
            }
            let mut out = Outcome {
                upper: f64::INFINITY,
                lower: f64::NEG_INFINITY,
            };
            let mut cond = vec![0.0; n * m];
            'grid: for q in &qs {
                let mut dual = -ld * d_tot - lg * g_tot;
                let mut c = vec![0.0; m];
                let (mut d, mut g) = (0.0, 0.0);
                for r in 0..n {
                    let k = &kernel[r * m..(r + 1) * m];
                    let z: f64 = (0..m).map(|j| q[j] * k[j]).sum();
                    // An underflowed normalizer carries no usable bound.
                    if z < f64::MIN_POSITIVE {
                        continue 'grid;
                    }
                    dual += px[r] * (-top[r] - z.log2());
                    for j in 0..m {
                        c[j] += px[r] * k[j] / z;
                        let p = q[j] * k[j] / z;
                        cond[r * m + j] = p;
                        d += px[r] * p * metrics.d(r, j);
                        g += px[r] * p * metrics.g(r, j);
                    }
                }
                dual -= c.iter().copied().fold(0.0, f64::max).log2();
                out.lower = out.lower.max(dual);
                if d <= d_tot + FEASIBILITY_SLACK && g <= g_tot + FEASIBILITY_SLACK {
                    let mut marginal = vec![0.0; m];
                    for r in 0..n {
                        for j in 0..m {
                            marginal[j] += px[r] * cond[r * m + j];
                        }
                    }
                    let mut info = 0.0;
                    for r in 0..n {
                        for j in 0..m {
                            let p = cond[r * m + j];
                            if p > 0.0 {
                                info += px[r] * p * (p / marginal[j]).log2();
                            }
                        }
                    }
                    out.upper = out.upper.min(info.max(0.0));
                }
            }
            out
        })
        .reduce(
            || Outcome {
                upper: f64::INFINITY,
                lower: f64::NEG_INFINITY,
            },
            |a, b| Outcome {
                upper: a.upper.min(b.upper),
                lower: a.lower.max(b.lower),
            },
        );

    if !best.upper.is_finite() {
        return Err(SolverError::Infeasible(format!(
            "no grid point meets ({d_target}, {g_target}); refine the grid"
        )));
    }
    Ok(BruteForceBracket {
        upper: best.upper / l,
        lower: (best.lower / l).max(0.0).min(best.upper / l),
        grid_steps: steps,
        multipliers: lambdas.len(),
    })
}
