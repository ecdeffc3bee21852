//! Joint codetrees: deterministic decoder strategies that pick each action
//! from the side-information prefix seen so far and each estimate from the
//! prefix including the current sample.
//!
//! A tree is stored densely, one entry per prefix. Trees are numbered by a
//! canonical ordinal: a mixed-radix number over all map entries, ordered
//! `action[1], estimate[1], action[2], ..., estimate[L]`, prefixes ascending
//! inside each map, first entry most significant.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use crate::problem::{BlockAlphabets, ModelError, Problem, SideInfoLaw};

/// Default limit on how many codetrees may be enumerated.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1 << 24;

#[derive(Debug, Error)]
pub enum CodetreeError {
    #[error("the number of codetrees does not fit in 64 bits")]
    Overflow,
    #[error("{count} codetrees exceed the enumeration cap {cap}; use a restricted codetree set")]
    CapExceeded { count: u64, cap: u64 },
    #[error("codetree ordinal {ordinal} is out of range (count {count})")]
    OrdinalOutOfRange { ordinal: u64, count: u64 },
    #[error("duplicate codetree ordinal {0}")]
    DuplicateOrdinal(u64),
    #[error("cannot parse codetree list line {line}: {text:?}")]
    BadOrdinalLine { line: usize, text: String },
    #[error("codetree does not match the problem's alphabets")]
    ShapeMismatch,
    #[error("nothing to concatenate")]
    EmptyConcatenation,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Entry counts and radices of every map of a codetree for given alphabets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodetreeShape {
    a_sizes: Vec<usize>,
    y_sizes: Vec<usize>,
    xhat_sizes: Vec<usize>,
    /// `action_entries[s] = prod_{k<s} |Y_k|`
    action_entries: Vec<usize>,
    /// `estimate_entries[s] = prod_{k<=s} |Y_k|`
    estimate_entries: Vec<usize>,
}

impl CodetreeShape {
    pub fn new(alphabets: &BlockAlphabets) -> Self {
        let big_l = alphabets.block_len();
        let action_entries = (0..big_l).map(|s| alphabets.y_prefix_count(s)).collect();
        let estimate_entries = (0..big_l)
            .map(|s| alphabets.y_prefix_count(s) * alphabets.y_sizes()[s])
            .collect();
        CodetreeShape {
            a_sizes: alphabets.a_sizes().to_vec(),
            y_sizes: alphabets.y_sizes().to_vec(),
            xhat_sizes: alphabets.xhat_sizes().to_vec(),
            action_entries,
            estimate_entries,
        }
    }

    pub fn block_len(&self) -> usize {
        self.a_sizes.len()
    }

    /// `(entries, radix)` of each map in canonical order.
    fn maps(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.block_len()).flat_map(move |s| {
            [
                (self.action_entries[s], self.a_sizes[s]),
                (self.estimate_entries[s], self.xhat_sizes[s]),
            ]
        })
    }

    /// Number of distinct codetrees.
    pub fn count(&self) -> Result<u64, CodetreeError> {
        let mut total = 1u64;
        for (entries, radix) in self.maps() {
            if radix == 1 {
                continue;
            }
            let exp = u32::try_from(entries).map_err(|_| CodetreeError::Overflow)?;
            let factor = (radix as u64)
                .checked_pow(exp)
                .ok_or(CodetreeError::Overflow)?;
            total = total.checked_mul(factor).ok_or(CodetreeError::Overflow)?;
        }
        Ok(total)
    }

    /// Radix of every map entry in canonical order (most significant first).
    pub fn entry_radices(&self) -> Vec<usize> {
        self.maps()
            .flat_map(|(entries, radix)| std::iter::repeat_n(radix, entries))
            .collect()
    }

    /// Builds a tree from its entries in canonical order.
    pub fn from_digits(&self, digits: &[usize]) -> JointCodetree {
        let mut it = digits.iter().copied();
        let mut actions = Vec::with_capacity(self.block_len());
        let mut estimates = Vec::with_capacity(self.block_len());
        for s in 0..self.block_len() {
            actions.push(it.by_ref().take(self.action_entries[s]).collect());
            estimates.push(it.by_ref().take(self.estimate_entries[s]).collect());
        }
        JointCodetree { actions, estimates }
    }

    pub fn digits(&self, tree: &JointCodetree) -> Vec<usize> {
        tree.actions
            .iter()
            .zip(&tree.estimates)
            .flat_map(|(a, e)| a.iter().chain(e.iter()).copied())
            .collect()
    }

    pub fn decode(&self, ordinal: u64) -> Result<JointCodetree, CodetreeError> {
        let count = self.count()?;
        if ordinal >= count {
            return Err(CodetreeError::OrdinalOutOfRange { ordinal, count });
        }
        let radices = self.entry_radices();
        let mut digits = vec![0; radices.len()];
        let mut rest = ordinal;
        for (d, &r) in digits.iter_mut().zip(&radices).rev() {
            *d = (rest % r as u64) as usize;
            rest /= r as u64;
        }
        Ok(self.from_digits(&digits))
    }

    pub fn encode(&self, tree: &JointCodetree) -> Result<u64, CodetreeError> {
        if !self.fits(tree) {
            return Err(CodetreeError::ShapeMismatch);
        }
        self.count()?;
        Ok(self
            .digits(tree)
            .iter()
            .zip(self.entry_radices())
            .fold(0u64, |acc, (&d, r)| acc * r as u64 + d as u64))
    }

    /// Whether `tree` has this shape and every entry is in its alphabet.
    pub fn fits(&self, tree: &JointCodetree) -> bool {
        let l = self.block_len();
        tree.actions.len() == l
            && tree.estimates.len() == l
            && (0..l).all(|s| {
                tree.actions[s].len() == self.action_entries[s]
                    && tree.estimates[s].len() == self.estimate_entries[s]
                    && tree.actions[s].iter().all(|&a| a < self.a_sizes[s])
                    && tree.estimates[s].iter().all(|&e| e < self.xhat_sizes[s])
            })
    }

    pub fn zeros(&self) -> JointCodetree {
        self.from_digits(&vec![0; self.entry_radices().len()])
    }
}

/// Number of codetrees for `alphabets`; errors if it overflows or exceeds `cap`.
pub fn count_codetrees(alphabets: &BlockAlphabets, cap: u64) -> Result<u64, CodetreeError> {
    let count = CodetreeShape::new(alphabets).count()?;
    if count > cap {
        return Err(CodetreeError::CapExceeded { count, cap });
    }
    Ok(count)
}

/// All codetrees in ordinal order.
pub fn enumerate_codetrees(
    alphabets: &BlockAlphabets,
    cap: u64,
) -> Result<CodetreeIter, CodetreeError> {
    let count = count_codetrees(alphabets, cap)?;
    let shape = CodetreeShape::new(alphabets);
    let radices = shape.entry_radices();
    Ok(CodetreeIter {
        digits: vec![0; radices.len()],
        radices,
        shape,
        remaining: count,
    })
}

/// Odometer over the canonical digits.
pub struct CodetreeIter {
    shape: CodetreeShape,
    radices: Vec<usize>,
    digits: Vec<usize>,
    remaining: u64,
}

impl Iterator for CodetreeIter {
    type Item = JointCodetree;

    fn next(&mut self) -> Option<JointCodetree> {
        if self.remaining == 0 {
            return None;
        }
        let tree = self.shape.from_digits(&self.digits);
        self.remaining -= 1;
        for (d, &r) in self.digits.iter_mut().zip(&self.radices).rev() {
            *d += 1;
            if *d < r {
                break;
            }
            *d = 0;
        }
        Some(tree)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = usize::try_from(self.remaining).unwrap_or(usize::MAX);
        (n, Some(n))
    }
}

/// `actions[s][p]` is the action of slot `s` after side-information prefix
/// `p = (y_1..y_s)`; `estimates[s][p]` the estimate after `p = (y_1..y_{s+1})`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct JointCodetree {
    pub actions: Vec<Vec<usize>>,
    pub estimates: Vec<Vec<usize>>,
}

impl JointCodetree {
    pub fn block_len(&self) -> usize {
        self.actions.len()
    }

    /// `|Y_slot|`, recovered from the map sizes.
    pub fn y_size(&self, slot: usize) -> usize {
        self.estimates[slot].len() / self.actions[slot].len()
    }

    pub fn action(&self, slot: usize, prefix: usize) -> usize {
        self.actions[slot][prefix]
    }

    pub fn estimate(&self, slot: usize, prefix: usize) -> usize {
        self.estimates[slot][prefix]
    }
}

impl fmt::Display for JointCodetree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[usize]| {
            v.iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        for s in 0..self.block_len() {
            writeln!(f, "a[{}]: {}", s + 1, join(&self.actions[s]))?;
            writeln!(f, "xhat[{}]: {}", s + 1, join(&self.estimates[s]))?;
        }
        Ok(())
    }
}

/// Executes `tree` on the side-information block `y`.
pub fn run_codetree(
    tree: &JointCodetree,
    y: &[usize],
) -> Result<(Vec<usize>, Vec<usize>), CodetreeError> {
    if y.len() != tree.block_len() {
        return Err(ModelError::OutOfAlphabet.into());
    }
    let mut a = Vec::with_capacity(y.len());
    let mut xhat = Vec::with_capacity(y.len());
    let mut prefix = 0;
    for (s, &ys) in y.iter().enumerate() {
        let ny = tree.y_size(s);
        if ys >= ny {
            return Err(ModelError::OutOfAlphabet.into());
        }
        a.push(tree.action(s, prefix));
        prefix = prefix * ny + ys;
        xhat.push(tree.estimate(s, prefix));
    }
    Ok((a, xhat))
}

fn check_row(problem: &Problem, x: usize, tree: &JointCodetree) -> Result<(), CodetreeError> {
    if x >= problem.px().len() || problem.px()[x] <= 0.0 {
        return Err(ModelError::ZeroProbability(x).into());
    }
    if !CodetreeShape::new(problem.alphabets()).fits(tree) {
        return Err(CodetreeError::ShapeMismatch);
    }
    Ok(())
}

/// Probability of the side-information block `y` when the source block is
/// `x` and the decoder follows `tree`.
pub fn codetree_path_law(
    problem: &Problem,
    x: usize,
    tree: &JointCodetree,
    y: &[usize],
) -> Result<f64, CodetreeError> {
    check_row(problem, x, tree)?;
    let (a, _) = run_codetree(tree, y)?;
    let a_sizes = problem.alphabets().a_sizes();
    let mut a_prefix = 0;
    match problem.side_info() {
        SideInfoLaw::Kernel { .. } => {
            let mut p = 1.0;
            for (s, &ys) in y.iter().enumerate() {
                a_prefix = a_prefix * a_sizes[s] + a[s];
                p *= problem.kernel_slice(s, a_prefix, x).expect("kernel")[ys];
            }
            Ok(p)
        }
        SideInfoLaw::Functional(law) => {
            let post = problem.posterior(x).expect("functional");
            let nz = law.z_size;
            let mut alive: Vec<bool> = post.iter().map(|&w| w > 0.0).collect();
            for (s, &ys) in y.iter().enumerate() {
                a_prefix = a_prefix * a_sizes[s] + a[s];
                let g = &law.g[s][a_prefix * nz..(a_prefix + 1) * nz];
                for (z, ok) in alive.iter_mut().enumerate() {
                    *ok &= g[z] == ys;
                }
            }
            Ok(post
                .iter()
                .zip(&alive)
                .filter(|(_, &ok)| ok)
                .map(|(w, _)| w)
                .sum())
        }
    }
}

/// One leaf of the side-information tree reachable with positive probability.
#[derive(Clone, Debug)]
pub struct PathOutcome<'a> {
    pub probability: f64,
    pub y: &'a [usize],
    /// Flat index into `A^L`.
    pub action_index: usize,
    /// Flat index into `Xhat^L`.
    pub estimate_index: usize,
}

enum Mass {
    Kernel(f64),
    /// `(z, P(z | x))` for the values of `z` consistent with the prefix.
    Functional(Vec<(usize, f64)>),
}

impl Mass {
    fn total(&self) -> f64 {
        match self {
            Mass::Kernel(p) => *p,
            Mass::Functional(zs) => zs.iter().map(|(_, w)| w).sum(),
        }
    }
}

struct Walker<'a, F> {
    problem: &'a Problem,
    tree: &'a JointCodetree,
    x: usize,
    y: Vec<usize>,
    visit: F,
}

impl<F: FnMut(PathOutcome<'_>)> Walker<'_, F> {
    fn descend(&mut self, slot: usize, prefix: usize, a_prefix: usize, xhat_prefix: usize, mass: Mass) {
        let al = self.problem.alphabets();
        if slot == al.block_len() {
            let probability = mass.total();
            (self.visit)(PathOutcome {
                probability,
                y: &self.y,
                action_index: a_prefix,
                estimate_index: xhat_prefix,
            });
            return;
        }
        let ny = al.y_sizes()[slot];
        let a_prefix = a_prefix * al.a_sizes()[slot] + self.tree.action(slot, prefix);
        for ys in 0..ny {
            let next = match &mass {
                Mass::Kernel(p) => {
                    let k = self.problem.kernel_slice(slot, a_prefix, self.x).expect("kernel")[ys];
                    if k == 0.0 {
                        continue;
                    }
                    Mass::Kernel(p * k)
                }
                Mass::Functional(zs) => {
                    let SideInfoLaw::Functional(law) = self.problem.side_info() else {
                        unreachable!()
                    };
                    let g = &law.g[slot][a_prefix * law.z_size..(a_prefix + 1) * law.z_size];
                    let kept: Vec<_> = zs.iter().copied().filter(|&(z, _)| g[z] == ys).collect();
                    if kept.is_empty() {
                        continue;
                    }
                    Mass::Functional(kept)
                }
            };
            let p = prefix * ny + ys;
            let xhat_prefix = xhat_prefix * al.xhat_sizes()[slot] + self.tree.estimate(slot, p);
            self.y.push(ys);
            self.descend(slot + 1, p, a_prefix, xhat_prefix, next);
            self.y.pop();
        }
    }
}

/// Visits every side-information block with positive probability under
/// `(x, tree)`, in ascending order of `y`.
pub fn for_each_path(
    problem: &Problem,
    x: usize,
    tree: &JointCodetree,
    visit: impl FnMut(PathOutcome<'_>),
) -> Result<(), CodetreeError> {
    check_row(problem, x, tree)?;
    let mass = match problem.side_info() {
        SideInfoLaw::Kernel { .. } => Mass::Kernel(1.0),
        SideInfoLaw::Functional(_) => Mass::Functional(
            problem
                .posterior(x)
                .expect("functional")
                .iter()
                .copied()
                .enumerate()
                .filter(|&(_, w)| w > 0.0)
                .collect(),
        ),
    };
    let mut walker = Walker {
        problem,
        tree,
        x,
        y: Vec::with_capacity(problem.block_len()),
        visit,
    };
    walker.descend(0, 0, 0, 0, mass);
    Ok(())
}

/// Expected block distortion and block cost of `tree` when the source block is `x`.
pub fn induced_metrics(
    problem: &Problem,
    tree: &JointCodetree,
    x: usize,
) -> Result<(f64, f64), CodetreeError> {
    let mut d_bar = 0.0;
    let mut g_bar = 0.0;
    for_each_path(problem, x, tree, |path| {
        d_bar += path.probability * problem.distortion(x, path.estimate_index);
        g_bar += path.probability * problem.cost(path.action_index, x);
    })?;
    Ok((d_bar, g_bar))
}

/// Action part of a joint codetree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionTree {
    pub maps: Vec<Vec<usize>>,
}

/// Estimate part of a joint codetree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EstimateTree {
    pub maps: Vec<Vec<usize>>,
}

impl ActionTree {
    /// Actions taken along `y`; only `y_1..y_{L-1}` are read.
    pub fn run(&self, y: &[usize]) -> Vec<usize> {
        let mut prefix = 0;
        let mut out = Vec::with_capacity(self.maps.len());
        for (s, map) in self.maps.iter().enumerate() {
            out.push(map[prefix]);
            if let Some(next) = self.maps.get(s + 1) {
                prefix = prefix * (next.len() / map.len()) + y[s];
            }
        }
        out
    }
}

impl EstimateTree {
    pub fn run(&self, y: &[usize]) -> Vec<usize> {
        let mut prefix = 0;
        let mut width = 1;
        self.maps
            .iter()
            .zip(y)
            .map(|(map, &ys)| {
                let ny = map.len() / width;
                width = map.len();
                prefix = prefix * ny + ys;
                map[prefix]
            })
            .collect()
    }
}

pub fn split_codetree(tree: &JointCodetree) -> (ActionTree, EstimateTree) {
    (
        ActionTree {
            maps: tree.actions.clone(),
        },
        EstimateTree {
            maps: tree.estimates.clone(),
        },
    )
}

pub fn merge_codetree(actions: ActionTree, estimates: EstimateTree) -> JointCodetree {
    JointCodetree {
        actions: actions.maps,
        estimates: estimates.maps,
    }
}

/// Codetree over `m` blocks: block `b` is driven only by the side
/// information of block `b`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConcatenatedCodetree {
    blocks: Vec<JointCodetree>,
    block_len: usize,
}

pub fn concatenate(blocks: Vec<JointCodetree>) -> Result<ConcatenatedCodetree, CodetreeError> {
    let first = blocks.first().ok_or(CodetreeError::EmptyConcatenation)?;
    let block_len = first.block_len();
    let same_shape = |t: &JointCodetree| {
        t.block_len() == block_len
            && (0..block_len).all(|s| {
                t.actions[s].len() == first.actions[s].len()
                    && t.estimates[s].len() == first.estimates[s].len()
            })
    };
    if !blocks.iter().all(same_shape) {
        return Err(CodetreeError::ShapeMismatch);
    }
    Ok(ConcatenatedCodetree { blocks, block_len })
}

impl ConcatenatedCodetree {
    pub fn len(&self) -> usize {
        self.blocks.len() * self.block_len
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[JointCodetree] {
        &self.blocks
    }

    fn local_prefix(&self, block: usize, y: &[usize]) -> usize {
        let tree = &self.blocks[block];
        y.iter()
            .enumerate()
            .fold(0, |acc, (s, &ys)| acc * tree.y_size(s) + ys)
    }

    /// Action of symbol `i` (0-based) given `y_prefix = y_1..y_i`.
    pub fn action_at(&self, i: usize, y_prefix: &[usize]) -> usize {
        let (b, s) = (i / self.block_len, i % self.block_len);
        let start = b * self.block_len;
        let prefix = self.local_prefix(b, &y_prefix[start..i]);
        self.blocks[b].action(s, prefix)
    }

    /// Estimate of symbol `i` (0-based) given `y_1..y_{i+1}`.
    pub fn estimate_at(&self, i: usize, y_upto: &[usize]) -> usize {
        let (b, s) = (i / self.block_len, i % self.block_len);
        let start = b * self.block_len;
        let prefix = self.local_prefix(b, &y_upto[start..=i]);
        self.blocks[b].estimate(s, prefix)
    }

    pub fn run(&self, y: &[usize]) -> (Vec<usize>, Vec<usize>) {
        assert_eq!(y.len(), self.len());
        (0..y.len())
            .map(|i| (self.action_at(i, &y[..i]), self.estimate_at(i, &y[..=i])))
            .unzip()
    }
}

/// The codetrees a solver may use: every tree, or a user-chosen list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CodetreeSet {
    All { shape: CodetreeShape, count: u64 },
    Restricted { shape: CodetreeShape, ordinals: Vec<u64> },
}

impl CodetreeSet {
    pub fn full(alphabets: &BlockAlphabets, cap: u64) -> Result<Self, CodetreeError> {
        let count = count_codetrees(alphabets, cap)?;
        Ok(CodetreeSet::All {
            shape: CodetreeShape::new(alphabets),
            count,
        })
    }

    pub fn restricted(alphabets: &BlockAlphabets, ordinals: Vec<u64>) -> Result<Self, CodetreeError> {
        let shape = CodetreeShape::new(alphabets);
        let count = shape.count()?;
        let mut seen = HashSet::new();
        for &o in &ordinals {
            if o >= count {
                return Err(CodetreeError::OrdinalOutOfRange { ordinal: o, count });
            }
            if !seen.insert(o) {
                return Err(CodetreeError::DuplicateOrdinal(o));
            }
        }
        Ok(CodetreeSet::Restricted { shape, ordinals })
    }

    /// Parses one ordinal per line; blank lines and `#` comments are skipped.
    pub fn parse_ordinals(text: &str) -> Result<Vec<u64>, CodetreeError> {
        text.lines()
            .enumerate()
            .filter_map(|(i, raw)| {
                let line = raw.split('#').next().unwrap_or("").trim();
                (!line.is_empty()).then(|| {
                    line.parse().map_err(|_| CodetreeError::BadOrdinalLine {
                        line: i + 1,
                        text: raw.to_string(),
                    })
                })
            })
            .collect()
    }

    pub fn shape(&self) -> &CodetreeShape {
        match self {
            CodetreeSet::All { shape, .. } | CodetreeSet::Restricted { shape, .. } => shape,
        }
    }

    pub fn is_restricted(&self) -> bool {
        matches!(self, CodetreeSet::Restricted { .. })
    }

    pub fn len(&self) -> usize {
        match self {
            CodetreeSet::All { count, .. } => *count as usize,
            CodetreeSet::Restricted { ordinals, .. } => ordinals.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Canonical ordinal of the tree at `position`.
    pub fn ordinal(&self, position: usize) -> u64 {
        match self {
            CodetreeSet::All { .. } => position as u64,
            CodetreeSet::Restricted { ordinals, .. } => ordinals[position],
        }
    }

    pub fn tree(&self, position: usize) -> JointCodetree {
        self.shape()
            .decode(self.ordinal(position))
            .expect("ordinals are checked on construction")
    }
}
