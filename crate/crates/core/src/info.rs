//! Entropy, mutual information and directed information on finite tables.
//! All logarithms are base 2 and `0 log 0 = 0`.

use thiserror::Error;

use crate::radix::MixedRadix;

#[derive(Debug, Error, PartialEq)]
pub enum InfoError {
    #[error("{0} is not a probability")]
    Domain(f64),
    #[error("table has {len} entries but its dimensions need {expected}")]
    Shape { len: usize, expected: usize },
    #[error("entries must be nonnegative and sum to 1 (sum {0})")]
    NotNormalized(f64),
    #[error("expected {expected} axes, found {found}")]
    Axes { expected: usize, found: usize },
}

/// Tolerance on the total mass of a [`JointTable`].
pub const JOINT_TOL: f64 = 1e-10;

/// `-sum p log2 p`
pub fn entropy(p: &[f64]) -> f64 {
    let h: f64 = p
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| -v * v.log2())
        .sum();
    h.max(0.0)
}

pub fn binary_entropy(p: f64) -> Result<f64, InfoError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(InfoError::Domain(p));
    }
    Ok(entropy(&[p, 1.0 - p]))
}

/// Binary entropy with the argument clamped to `[0, 1]`.
pub(crate) fn h2(p: f64) -> f64 {
    entropy(&[p.clamp(0.0, 1.0), 1.0 - p.clamp(0.0, 1.0)])
}

/// A joint probability table in canonical mixed-radix order.
#[derive(Clone, Debug, PartialEq)]
pub struct JointTable {
    radix: MixedRadix,
    p: Vec<f64>,
}

impl JointTable {
    pub fn new(dims: &[usize], p: Vec<f64>) -> Result<Self, InfoError> {
        let radix = MixedRadix::new(dims).ok_or(InfoError::Shape {
            len: p.len(),
            expected: 0,
        })?;
        if radix.len() != p.len() {
            return Err(InfoError::Shape {
                len: p.len(),
                expected: radix.len(),
            });
        }
        let sum: f64 = p.iter().sum();
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) || (sum - 1.0).abs() > JOINT_TOL {
            return Err(InfoError::NotNormalized(sum));
        }
        Ok(JointTable { radix, p })
    }

    pub fn dims(&self) -> &[usize] {
        self.radix.radices()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    /// Marginal over the listed axes, kept in the listed order.
    pub fn marginal(&self, axes: &[usize]) -> JointTable {
        let dims: Vec<usize> = axes.iter().map(|&a| self.dims()[a]).collect();
        let out_radix = MixedRadix::new(&dims).expect("sub-product of a valid radix");
        let mut out = vec![0.0; out_radix.len()];
        let mut sub = vec![0; axes.len()];
        for (k, &v) in self.p.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let digits = self.radix.digits(k);
            for (s, &a) in sub.iter_mut().zip(axes) {
                *s = digits[a];
            }
            out[out_radix.index(&sub)] += v;
        }
        JointTable {
            radix: out_radix,
            p: out,
        }
    }

    /// Entropy of the marginal on `axes`.
    pub fn entropy_of(&self, axes: &[usize]) -> f64 {
        entropy(&self.marginal(axes).p)
    }

    /// Swaps the first `split` axes with the rest.
    pub fn transpose(&self, split: usize) -> JointTable {
        let n = self.dims().len();
        let order: Vec<usize> = (split..n).chain(0..split).collect();
        self.marginal(&order)
    }
}

/// `I(U; V)` for a table over `(U, V)`.
pub fn mutual_information(joint: &JointTable) -> Result<f64, InfoError> {
    if joint.dims().len() != 2 {
        return Err(InfoError::Axes {
            expected: 2,
            found: joint.dims().len(),
        });
    }
    Ok(mutual_information_between(joint, &[0], &[1]))
}

/// `I(U; V)` where `U` and `V` are groups of axes of `joint`.
pub fn mutual_information_between(joint: &JointTable, u: &[usize], v: &[usize]) -> f64 {
    let uv: Vec<usize> = u.iter().chain(v).copied().collect();
    clamp_tiny(joint.entropy_of(u) + joint.entropy_of(v) - joint.entropy_of(&uv))
}

fn clamp_tiny(v: f64) -> f64 {
    if v < 0.0 && v > -1e-12 {
        0.0
    } else {
        v
    }
}

/// `I(Xhat^L -> X^L) = sum_i I(X_i; Xhat^i | X^{i-1})` for a table whose axes
/// are `(X_1, ..., X_L, Xhat_1, ..., Xhat_L)`.
pub fn directed_information(joint: &JointTable, block_len: usize) -> Result<f64, InfoError> {
    if joint.dims().len() != 2 * block_len {
        return Err(InfoError::Axes {
            expected: 2 * block_len,
            found: joint.dims().len(),
        });
    }
    let mut total = 0.0;
    for i in 0..block_len {
        let x_past: Vec<usize> = (0..i).collect();
        let x_upto: Vec<usize> = (0..=i).collect();
        let xhat_upto: Vec<usize> = (block_len..=block_len + i).collect();
        let with = |a: &[usize], b: &[usize]| -> Vec<usize> { a.iter().chain(b).copied().collect() };
        // I(A; B | C) = H(A,C) + H(B,C) - H(A,B,C) - H(C)
        total += joint.entropy_of(&x_upto) + joint.entropy_of(&with(&x_past, &xhat_upto))
            - joint.entropy_of(&with(&x_upto, &xhat_upto))
            - joint.entropy_of(&x_past);
    }
    Ok(clamp_tiny(total))
}
