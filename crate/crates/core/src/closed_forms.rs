//! Analytic rates for special cases, and problem instances that embed them
//! into the general block model.

use thiserror::Error;

use crate::info::h2;
use crate::problem::{BlockAlphabets, Metrics, ProblemSpec, SideInfoLaw, SourceLaw};

#[derive(Debug, Error, PartialEq)]
pub enum ClosedFormError {
    #[error("{name} = {value} is outside {range}")]
    Domain {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
}

fn check(name: &'static str, value: f64, lo: f64, hi: f64, range: &'static str) -> Result<(), ClosedFormError> {
    if value.is_nan() || value < lo || value > hi {
        return Err(ClosedFormError::Domain { name, value, range });
    }
    Ok(())
}

/// Tolerance of the allocation search.
const SEARCH_TOL: f64 = 1e-10;

/// Rate per symbol for pairs `(X_1, X_1 xor Q)` with `X_1 ~ Bern(p)`,
/// `Q ~ Bern(q)`, where the decoder of the second symbol sees the first.
/// Hamming distortion averaged over the pair.
pub fn feedforward_example_rate(p: f64, q: f64, d: f64) -> Result<f64, ClosedFormError> {
    check("p", p, 0.0, 0.5, "[0, 0.5]")?;
    check("q", q, 0.0, 0.5, "[0, 0.5]")?;
    check("D", d, 0.0, f64::INFINITY, "[0, inf)")?;
    if d >= (p + q) / 2.0 {
        return Ok(0.0);
    }
    // The whole budget 2D is split between the two symbols; the objective
    // is convex in the first share.
    let budget = 2.0 * d;
    let objective = |d1: f64| 0.5 * (h2(p) - h2(d1) + h2(q) - h2(budget - d1));
    let (mut lo, mut hi) = ((budget - q).max(0.0), p.min(budget));
    while hi - lo > SEARCH_TOL {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if objective(m1) <= objective(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    Ok(objective(0.5 * (lo + hi)).max(0.0))
}

/// Rate per source symbol for a uniform binary source seen through an
/// erasure channel, with the option of a second independent look. Also
/// returns the expected cost (repeat probability) that suffices.
pub fn repeat_request_rate(epsilon: f64, d: f64) -> Result<(f64, f64), ClosedFormError> {
    check("epsilon", epsilon, 0.0, 1.0, "[0, 1]")?;
    check("D", d, 0.0, f64::INFINITY, "[0, inf)")?;
    let e2 = epsilon * epsilon;
    let rate = if e2 > 0.0 && d <= e2 / 2.0 {
        e2 * (1.0 - h2(d / e2))
    } else {
        0.0
    };
    Ok((rate, epsilon))
}

/// `H2(p) - H2(D)` below `p`, zero above.
pub fn classic_binary_rd(p: f64, d: f64) -> Result<f64, ClosedFormError> {
    check("p", p, 0.0, 0.5, "[0, 0.5]")?;
    check("D", d, 0.0, f64::INFINITY, "[0, inf)")?;
    Ok(if d < p { h2(p) - h2(d) } else { 0.0 })
}

fn hamming_sum(x: &[usize], xhat: &[usize]) -> f64 {
    x.iter().zip(xhat).filter(|(a, b)| a != b).count() as f64
}

/// Two-symbol blocks `(X_1, X_1 xor Q)`; nothing is observed before the
/// first symbol and `Y_2 = X_1` before the second. No actions, no cost.
pub fn feedforward_embedding(p: f64, q: f64) -> Result<ProblemSpec, ClosedFormError> {
    check("p", p, 0.0, 0.5, "[0, 0.5]")?;
    check("q", q, 0.0, 0.5, "[0, 0.5]")?;
    let alphabets = BlockAlphabets::new(vec![2, 2], vec![1, 1], vec![1, 2], vec![2, 2])
        .expect("fixed sizes");
    let bern = |r: f64, v: usize| if v == 1 { r } else { 1.0 - r };
    let mut px = vec![0.0; 4];
    let mut second = vec![0.0; 8];
    let mut distortion = vec![0.0; 16];
    for x1 in 0..2 {
        for x2 in 0..2 {
            let x = x1 * 2 + x2;
            px[x] = bern(p, x1) * bern(q, x1 ^ x2);
            second[x * 2 + x1] = 1.0;
            for xh in 0..4 {
                distortion[x * 4 + xh] = hamming_sum(&[x1, x2], &[xh / 2, xh % 2]);
            }
        }
    }
    Ok(ProblemSpec {
        alphabets,
        source: SourceLaw { px },
        side_info: SideInfoLaw::Kernel {
            tables: vec![vec![1.0; 4], second],
        },
        metrics: Metrics {
            distortion,
            cost: vec![0.0; 4],
        },
    })
}

/// Erasure symbol of [`repeat_request_embedding`].
pub const ERASURE: usize = 2;

/// A uniform bit observed through an erasure channel in the first slot; the
/// second slot carries no source symbol and its action asks (at a cost) for
/// another independent look. Distortion and cost are doubled so that
/// per-symbol values equal per-bit values.
pub fn repeat_request_embedding(epsilon: f64) -> Result<ProblemSpec, ClosedFormError> {
    check("epsilon", epsilon, 0.0, 1.0, "[0, 1]")?;
    let alphabets = BlockAlphabets::new(vec![2, 1], vec![1, 2], vec![3, 3], vec![1, 2])
        .expect("fixed sizes");
    let erasure = |x: usize| {
        let mut v = [0.0; 3];
        v[x] = 1.0 - epsilon;
        v[ERASURE] += epsilon;
        v
    };
    let mut first = Vec::new();
    for x in 0..2 {
        first.extend(erasure(x));
    }
    let mut second = Vec::new();
    for a2 in 0..2 {
        for x in 0..2 {
            if a2 == 1 {
                second.extend(erasure(x));
            } else {
                second.extend([0.0, 0.0, 1.0]);
            }
        }
    }
    let mut distortion = vec![0.0; 4];
    for x in 0..2 {
        for xh in 0..2 {
            distortion[x * 2 + xh] = if x == xh { 0.0 } else { 2.0 };
        }
    }
    Ok(ProblemSpec {
        alphabets,
        source: SourceLaw { px: vec![0.5, 0.5] },
        side_info: SideInfoLaw::Kernel {
            tables: vec![first, second],
        },
        metrics: Metrics {
            distortion,
            cost: vec![0.0, 0.0, 2.0, 2.0],
        },
    })
}
