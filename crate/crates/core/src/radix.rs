//! Mixed-radix indexing for dense tables.
//!
//! Every flat table in the crate uses the same convention: a tuple
//! `(s_1, ..., s_k)` with radices `(r_1, ..., r_k)` lives at
//! `sum_j s_j * prod_{j' > j} r_{j'}`, so the first component is the most
//! significant digit.

/// A fixed list of radices.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MixedRadix {
    radices: Vec<usize>,
    len: usize,
}

impl MixedRadix {
    /// Returns `None` if any radix is zero or the product overflows.
    pub fn new(radices: &[usize]) -> Option<Self> {
        let mut len = 1usize;
        for &r in radices {
            if r == 0 {
                return None;
            }
            len = len.checked_mul(r)?;
        }
        Some(MixedRadix {
            radices: radices.to_vec(),
            len,
        })
    }

    pub fn radices(&self) -> &[usize] {
        &self.radices
    }

    /// Number of distinct tuples.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Flat index of `digits`. Panics in debug builds on out-of-range digits.
    pub fn index(&self, digits: &[usize]) -> usize {
        debug_assert_eq!(digits.len(), self.radices.len());
        digits
            .iter()
            .zip(&self.radices)
            .fold(0usize, |acc, (&d, &r)| {
                debug_assert!(d < r);
                acc * r + d
            })
    }

    /// Inverse of [`MixedRadix::index`].
    pub fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.radices.len()];
        for (slot, &r) in out.iter_mut().zip(&self.radices).rev() {
            *slot = index % r;
            index /= r;
        }
        out
    }

    pub fn contains(&self, digits: &[usize]) -> bool {
        digits.len() == self.radices.len() && digits.iter().zip(&self.radices).all(|(d, r)| d < r)
    }
}

/// Product of `sizes`, or `None` on overflow.
pub fn checked_product(sizes: &[usize]) -> Option<usize> {
    sizes.iter().try_fold(1usize, |acc, &s| acc.checked_mul(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_component_is_most_significant() {
        let r = MixedRadix::new(&[2, 3, 4]).unwrap();
        assert_eq!(r.len(), 24);
        assert_eq!(r.index(&[0, 0, 1]), 1);
        assert_eq!(r.index(&[0, 1, 0]), 4);
        assert_eq!(r.index(&[1, 0, 0]), 12);
        assert_eq!(r.index(&[1, 2, 3]), 23);
    }

    #[test]
    fn empty_tuple_has_one_index() {
        let r = MixedRadix::new(&[]).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.index(&[]), 0);
        assert!(r.digits(0).is_empty());
    }

    #[test]
    fn zero_radix_and_overflow_rejected() {
        assert!(MixedRadix::new(&[2, 0]).is_none());
        assert!(MixedRadix::new(&[usize::MAX, 2]).is_none());
    }

    proptest! {
        #[test]
        fn digits_inverts_index(radices in proptest::collection::vec(1usize..6, 0..5), seed in any::<usize>()) {
            let r = MixedRadix::new(&radices).unwrap();
            let idx = seed % r.len();
            let d = r.digits(idx);
            prop_assert!(r.contains(&d));
            prop_assert_eq!(r.index(&d), idx);
        }
    }
}
