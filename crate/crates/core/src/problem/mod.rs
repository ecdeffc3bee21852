//! Problem model: block alphabets, the source law, the side-information
//! channel controlled by decoder actions, and the distortion/cost tables.
//!
//! [`ProblemSpec`] is plain data and may be malformed; [`validate`] reports
//! every violation. [`Problem`] is the checked form every downstream
//! operation consumes.

mod file;

use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::radix::{checked_product, MixedRadix};

pub use file::ProblemFile;

/// Tolerance for probability tables supplied by the user.
pub const INPUT_TOL: f64 = 1e-12;
/// Tolerance for equalities between derived quantities.
pub const DERIVED_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid alphabets: {0}")]
    Alphabets(String),
    #[error("problem has {} violation(s)", .0.len())]
    Invalid(Vec<Violation>),
    #[error("malformed functional side information: {0}")]
    Functional(String),
    #[error("cannot parse problem file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("source realization {0} has zero probability")]
    ZeroProbability(usize),
    #[error("side-information sequence is outside the alphabet")]
    OutOfAlphabet,
}

/// Slot of symbol `i` (1-based) inside its block: the remainder of `i - 1`
/// divided by `block_len`.
pub fn t_index(i: usize, block_len: usize) -> usize {
    assert!(i >= 1 && block_len >= 1, "t_index needs i >= 1 and L >= 1");
    (i - 1) % block_len
}

/// Per-slot alphabet sizes for one block of length `L`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockAlphabets {
    x: Vec<usize>,
    a: Vec<usize>,
    y: Vec<usize>,
    xhat: Vec<usize>,
    x_radix: MixedRadix,
    a_radix: MixedRadix,
    y_radix: MixedRadix,
    xhat_radix: MixedRadix,
}

impl BlockAlphabets {
    pub fn new(
        x: Vec<usize>,
        a: Vec<usize>,
        y: Vec<usize>,
        xhat: Vec<usize>,
    ) -> Result<Self, ModelError> {
        let len = x.len();
        if len == 0 {
            return Err(ModelError::Alphabets("block length must be at least 1".into()));
        }
        for (name, v) in [("A", &a), ("Y", &y), ("Xhat", &xhat)] {
            if v.len() != len {
                return Err(ModelError::Alphabets(format!(
                    "{name} has {} slots, X has {len}",
                    v.len()
                )));
            }
        }
        for (name, v) in [("X", &x), ("A", &a), ("Y", &y), ("Xhat", &xhat)] {
            if let Some(s) = v.iter().position(|&c| c == 0) {
                return Err(ModelError::Alphabets(format!("{name}[{s}] is empty")));
            }
        }
        let radix = |name: &str, v: &[usize]| {
            MixedRadix::new(v)
                .ok_or_else(|| ModelError::Alphabets(format!("|{name}^L| overflows")))
        };
        let alphabets = BlockAlphabets {
            x_radix: radix("X", &x)?,
            a_radix: radix("A", &a)?,
            y_radix: radix("Y", &y)?,
            xhat_radix: radix("Xhat", &xhat)?,
            x,
            a,
            y,
            xhat,
        };
        // Table sizes used downstream must also fit.
        let nx = alphabets.x_count();
        let overflow = |what: &str| ModelError::Alphabets(format!("{what} table size overflows"));
        nx.checked_mul(alphabets.xhat_count())
            .ok_or_else(|| overflow("distortion"))?;
        alphabets
            .a_count()
            .checked_mul(nx)
            .ok_or_else(|| overflow("cost"))?;
        alphabets
            .a_count()
            .checked_mul(nx)
            .and_then(|v| v.checked_mul(*alphabets.y.iter().max().unwrap()))
            .ok_or_else(|| overflow("kernel"))?;
        Ok(alphabets)
    }

    pub fn block_len(&self) -> usize {
        self.x.len()
    }
    pub fn x_sizes(&self) -> &[usize] {
        &self.x
    }
    pub fn a_sizes(&self) -> &[usize] {
        &self.a
    }
    pub fn y_sizes(&self) -> &[usize] {
        &self.y
    }
    pub fn xhat_sizes(&self) -> &[usize] {
        &self.xhat
    }
    pub fn x_radix(&self) -> &MixedRadix {
        &self.x_radix
    }
    pub fn a_radix(&self) -> &MixedRadix {
        &self.a_radix
    }
    pub fn y_radix(&self) -> &MixedRadix {
        &self.y_radix
    }
    pub fn xhat_radix(&self) -> &MixedRadix {
        &self.xhat_radix
    }
    /// `|X^L|`
    pub fn x_count(&self) -> usize {
        self.x_radix.len()
    }
    /// `|A^L|`
    pub fn a_count(&self) -> usize {
        self.a_radix.len()
    }
    /// `|Y^L|`
    pub fn y_count(&self) -> usize {
        self.y_radix.len()
    }
    /// `|Xhat^L|`
    pub fn xhat_count(&self) -> usize {
        self.xhat_radix.len()
    }
    /// Number of action prefixes `(a_1, ..., a_{slot+1})` (slot is 0-based).
    pub fn action_prefix_count(&self, slot: usize) -> usize {
        checked_product(&self.a[..=slot]).expect("checked at construction")
    }
    /// Number of side-information prefixes `(y_1, ..., y_slot)` (slot is 0-based).
    pub fn y_prefix_count(&self, slot: usize) -> usize {
        checked_product(&self.y[..slot]).expect("checked at construction")
    }
}

/// Probability table over `X^L`.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceLaw {
    pub px: Vec<f64>,
}

/// Side information generated as `Y_i = g_i(a_1..a_i, Z)` with `X_i = f_i(Z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalLaw {
    pub z_size: usize,
    pub pz: Vec<f64>,
    /// `f[i][z]` is the source symbol of slot `i`.
    pub f: Vec<Vec<usize>>,
    /// `g[i]` is indexed by `(a_1, ..., a_{i+1}, z)`.
    pub g: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SideInfoLaw {
    /// `tables[i]` holds `P(y_i | a_1..a_i, x^L)` indexed by `(a_1, ..., a_i, x^L, y_i)`.
    Kernel { tables: Vec<Vec<f64>> },
    Functional(FunctionalLaw),
}

/// Distortion over `(x^L, xhat^L)` and action cost over `(a^L, x^L)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub distortion: Vec<f64>,
    pub cost: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub alphabets: BlockAlphabets,
    pub source: SourceLaw,
    pub side_info: SideInfoLaw,
    pub metrics: Metrics,
}

/// One failed invariant, named by the field it concerns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl Violation {
    fn new(location: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            location: location.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

/// Output of [`compile_functional`].
#[derive(Clone, Debug, PartialEq)]
pub struct CompiledFunctional {
    pub source: SourceLaw,
    pub side_info: FunctionalLaw,
    /// `P(z | x^L)` indexed by `(x^L, z)`; rows listed in `null_rows` are zero.
    pub posterior: Vec<f64>,
    /// Source realizations with zero probability (posterior undefined there).
    pub null_rows: Vec<usize>,
}

/// Pushes `pz` through the maps `f` to get the block source law and the
/// posterior of `Z` given each block realization.
pub fn compile_functional(
    law: &FunctionalLaw,
    alphabets: &BlockAlphabets,
) -> Result<CompiledFunctional, ModelError> {
    let violations = functional_violations(law, alphabets);
    if let Some(v) = violations.into_iter().next() {
        return Err(ModelError::Functional(v.to_string()));
    }
    let nx = alphabets.x_count();
    let nz = law.z_size;
    let mut px = vec![0.0; nx];
    let mut joint = vec![0.0; nx * nz];
    for z in 0..nz {
        let x = functional_source_index(law, alphabets, z);
        px[x] += law.pz[z];
        joint[x * nz + z] += law.pz[z];
    }
    let mut null_rows = Vec::new();
    for x in 0..nx {
        if px[x] > 0.0 {
            for p in &mut joint[x * nz..(x + 1) * nz] {
                *p /= px[x];
            }
        } else {
            null_rows.push(x);
        }
    }
    Ok(CompiledFunctional {
        source: SourceLaw { px },
        side_info: law.clone(),
        posterior: joint,
        null_rows,
    })
}

fn functional_source_index(law: &FunctionalLaw, alphabets: &BlockAlphabets, z: usize) -> usize {
    let digits: Vec<usize> = law.f.iter().map(|fi| fi[z]).collect();
    alphabets.x_radix().index(&digits)
}

fn check_distribution(location: &str, p: &[f64], expected_len: usize, out: &mut Vec<Violation>) {
    if p.len() != expected_len {
        out.push(Violation::new(
            location,
            format!("has {} entries, expected {expected_len}", p.len()),
        ));
        return;
    }
    if let Some(k) = p.iter().position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0 + INPUT_TOL) {
        out.push(Violation::new(
            location,
            format!("entry {k} = {} is not a probability", p[k]),
        ));
        return;
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > INPUT_TOL {
        out.push(Violation::new(location, format!("sums to {sum}, expected 1")));
    }
}

fn check_nonnegative(location: &str, t: &[f64], expected_len: usize, out: &mut Vec<Violation>) {
    if t.len() != expected_len {
        out.push(Violation::new(
            location,
            format!("has {} entries, expected {expected_len}", t.len()),
        ));
        return;
    }
    let bad: Vec<usize> = (0..t.len())
        .filter(|&k| !t[k].is_finite() || t[k] < 0.0)
        .collect();
    if let Some(&k) = bad.first() {
        out.push(Violation::new(
            location,
            format!(
                "{} entr{} negative or non-finite (first at {k}: {})",
                bad.len(),
                if bad.len() == 1 { "y is" } else { "ies are" },
                t[k]
            ),
        ));
    }
}

fn functional_violations(law: &FunctionalLaw, alphabets: &BlockAlphabets) -> Vec<Violation> {
    let mut out = Vec::new();
    let big_l = alphabets.block_len();
    if law.z_size == 0 {
        out.push(Violation::new("vending.z_size", "must be at least 1"));
        return out;
    }
    check_distribution("vending.pz", &law.pz, law.z_size, &mut out);
    if law.f.len() != big_l {
        out.push(Violation::new(
            "vending.f",
            format!("has {} maps, expected {big_l}", law.f.len()),
        ));
    } else {
        for (i, fi) in law.f.iter().enumerate() {
            let loc = format!("vending.f[{i}]");
            if fi.len() != law.z_size {
                out.push(Violation::new(
                    loc,
                    format!("has {} entries, expected {}", fi.len(), law.z_size),
                ));
            } else if let Some(z) = fi.iter().position(|&v| v >= alphabets.x_sizes()[i]) {
                out.push(Violation::new(
                    loc,
                    format!("f({z}) = {} is outside X[{i}]", fi[z]),
                ));
            }
        }
    }
    if law.g.len() != big_l {
        out.push(Violation::new(
            "vending.g",
            format!("has {} maps, expected {big_l}", law.g.len()),
        ));
    } else {
        for (i, gi) in law.g.iter().enumerate() {
            let loc = format!("vending.g[{i}]");
            let expected = alphabets.action_prefix_count(i) * law.z_size;
            if gi.len() != expected {
                out.push(Violation::new(
                    loc,
                    format!("has {} entries, expected {expected}", gi.len()),
                ));
            } else if let Some(k) = gi.iter().position(|&v| v >= alphabets.y_sizes()[i]) {
                out.push(Violation::new(
                    loc,
                    format!("entry {k} = {} is outside Y[{i}]", gi[k]),
                ));
            }
        }
    }
    out
}

/// Checks every invariant of `spec`. The report order is fixed: source,
/// side information, distortion, cost.
pub fn validate(spec: &ProblemSpec) -> Vec<Violation> {
    let al = &spec.alphabets;
    let nx = al.x_count();
    let mut out = Vec::new();
    check_distribution("source.px", &spec.source.px, nx, &mut out);

    match &spec.side_info {
        SideInfoLaw::Kernel { tables } => {
            if tables.len() != al.block_len() {
                out.push(Violation::new(
                    "vending.kernels",
                    format!("has {} tables, expected {}", tables.len(), al.block_len()),
                ));
            } else {
                for (i, t) in tables.iter().enumerate() {
                    let ny = al.y_sizes()[i];
                    let slices = al.action_prefix_count(i) * nx;
                    let loc = format!("vending.kernels[{i}]");
                    if t.len() != slices * ny {
                        out.push(Violation::new(
                            loc,
                            format!("has {} entries, expected {}", t.len(), slices * ny),
                        ));
                        continue;
                    }
                    for s in 0..slices {
                        let slice = &t[s * ny..(s + 1) * ny];
                        check_distribution(&format!("{loc}[slice {s}]"), slice, ny, &mut out);
                    }
                }
            }
        }
        SideInfoLaw::Functional(law) => {
            let fv = functional_violations(law, al);
            if fv.is_empty() {
                let compiled = compile_functional(law, al).expect("checked above");
                if spec.source.px.len() == nx {
                    let gap = compiled
                        .source
                        .px
                        .iter()
                        .zip(&spec.source.px)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    if gap > DERIVED_TOL {
                        out.push(Violation::new(
                            "source.px",
                            format!("differs from the law induced by (pz, f) by {gap:e}"),
                        ));
                    }
                }
            }
            out.extend(fv);
        }
    }

    check_nonnegative(
        "distortion",
        &spec.metrics.distortion,
        nx * al.xhat_count(),
        &mut out,
    );
    check_nonnegative("cost", &spec.metrics.cost, al.a_count() * nx, &mut out);
    out
}

/// A validated problem with the quantities every solver needs precomputed.
#[derive(Clone, Debug)]
pub struct Problem {
    spec: ProblemSpec,
    support: Vec<usize>,
    /// Functional variant only: `P(z | x^L)` indexed by `(x^L, z)`.
    posterior: Option<Vec<f64>>,
}

impl Problem {
    pub fn new(spec: ProblemSpec) -> Result<Self, ModelError> {
        let violations = validate(&spec);
        if !violations.is_empty() {
            return Err(ModelError::Invalid(violations));
        }
        let support = (0..spec.alphabets.x_count())
            .filter(|&x| spec.source.px[x] > 0.0)
            .collect();
        let posterior = match &spec.side_info {
            SideInfoLaw::Kernel { .. } => None,
            SideInfoLaw::Functional(law) => {
                Some(compile_functional(law, &spec.alphabets)?.posterior)
            }
        };
        Ok(Problem {
            spec,
            support,
            posterior,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        Problem::new(ProblemSpec::from_json_str(text)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Problem::new(ProblemSpec::from_path(path)?)
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }
    pub fn alphabets(&self) -> &BlockAlphabets {
        &self.spec.alphabets
    }
    pub fn block_len(&self) -> usize {
        self.spec.alphabets.block_len()
    }
    pub fn px(&self) -> &[f64] {
        &self.spec.source.px
    }
    /// Source realizations with positive probability, ascending.
    pub fn support(&self) -> &[usize] {
        &self.support
    }
    pub fn side_info(&self) -> &SideInfoLaw {
        &self.spec.side_info
    }

    /// `P(z | x^L)` for the functional variant.
    pub fn posterior(&self, x: usize) -> Option<&[f64]> {
        let law = match &self.spec.side_info {
            SideInfoLaw::Functional(law) => law,
            SideInfoLaw::Kernel { .. } => return None,
        };
        let nz = law.z_size;
        self.posterior.as_ref().map(|p| &p[x * nz..(x + 1) * nz])
    }

    /// `P(y_slot = . | a_1..a_{slot+1}, x^L)` for the kernel variant.
    pub fn kernel_slice(&self, slot: usize, action_prefix: usize, x: usize) -> Option<&[f64]> {
        match &self.spec.side_info {
            SideInfoLaw::Kernel { tables } => {
                let ny = self.spec.alphabets.y_sizes()[slot];
                let nx = self.spec.alphabets.x_count();
                let start = (action_prefix * nx + x) * ny;
                Some(&tables[slot][start..start + ny])
            }
            SideInfoLaw::Functional(_) => None,
        }
    }

    pub fn distortion(&self, x: usize, xhat: usize) -> f64 {
        self.spec.metrics.distortion[x * self.spec.alphabets.xhat_count() + xhat]
    }

    pub fn cost(&self, a: usize, x: usize) -> f64 {
        self.spec.metrics.cost[a * self.spec.alphabets.x_count() + x]
    }

    pub fn distortion_range(&self) -> (f64, f64) {
        min_max(&self.spec.metrics.distortion)
    }

    pub fn cost_range(&self) -> (f64, f64) {
        min_max(&self.spec.metrics.cost)
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn binary_hamming() -> ProblemSpec {
        ProblemSpec {
            alphabets: BlockAlphabets::new(vec![2], vec![1], vec![1], vec![2]).unwrap(),
            source: SourceLaw { px: vec![0.5, 0.5] },
            side_info: SideInfoLaw::Kernel {
                tables: vec![vec![1.0, 1.0]],
            },
            metrics: Metrics {
                distortion: vec![0.0, 1.0, 1.0, 0.0],
                cost: vec![0.0, 0.0],
            },
        }
    }

    #[test]
    fn t_index_examples() {
        assert_eq!(t_index(1, 3), 0);
        assert_eq!(t_index(4, 3), 0);
        assert_eq!(t_index(5, 3), 1);
        assert_eq!(t_index(7, 1), 0);
    }

    #[test]
    fn alphabets_reject_mismatch_and_empty() {
        assert!(BlockAlphabets::new(vec![], vec![], vec![], vec![]).is_err());
        assert!(BlockAlphabets::new(vec![2, 2], vec![1], vec![1, 1], vec![2, 2]).is_err());
        assert!(BlockAlphabets::new(vec![2], vec![0], vec![1], vec![2]).is_err());
        let huge = vec![1 << 20; 4];
        assert!(BlockAlphabets::new(huge.clone(), huge.clone(), huge.clone(), huge).is_err());
    }

    #[test]
    fn prefix_counts() {
        let al = BlockAlphabets::new(vec![2, 2, 2], vec![2, 3, 1], vec![3, 2, 2], vec![2, 2, 2])
            .unwrap();
        assert_eq!(al.action_prefix_count(0), 2);
        assert_eq!(al.action_prefix_count(2), 6);
        assert_eq!(al.y_prefix_count(0), 1);
        assert_eq!(al.y_prefix_count(2), 6);
        assert_eq!(al.y_count(), 12);
    }

    #[test]
    fn well_formed_spec_is_valid() {
        assert!(validate(&binary_hamming()).is_empty());
    }

    #[test]
    fn px_summing_to_point_nine() {
        let mut s = binary_hamming();
        s.source.px = vec![0.45, 0.45];
        let v = validate(&s);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].location, "source.px");
    }

    #[test]
    fn kernel_slice_off_by_one_percent() {
        let mut s = binary_hamming();
        s.alphabets = BlockAlphabets::new(vec![2], vec![1], vec![2], vec![2]).unwrap();
        s.side_info = SideInfoLaw::Kernel {
            tables: vec![vec![0.9, 0.1, 0.2, 0.81]],
        };
        let v = validate(&s);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].location, "vending.kernels[0][slice 1]");
    }

    #[test]
    fn negative_distortion_and_short_cost() {
        let mut s = binary_hamming();
        s.metrics.distortion[2] = -1.0;
        s.metrics.cost = vec![0.0];
        let v = validate(&s);
        let locs: Vec<_> = v.iter().map(|v| v.location.as_str()).collect();
        assert_eq!(locs, ["distortion", "cost"]);
    }

    fn functional(z_size: usize, f: Vec<Vec<usize>>, x: Vec<usize>) -> CompiledFunctional {
        let l = x.len();
        let al = BlockAlphabets::new(x, vec![1; l], vec![1; l], vec![1; l]).unwrap();
        let law = FunctionalLaw {
            z_size,
            pz: vec![1.0 / z_size as f64; z_size],
            f,
            g: vec![vec![0; z_size]; l],
        };
        compile_functional(&law, &al).unwrap()
    }

    #[test]
    fn functional_identity_pushforward() {
        let c = functional(2, vec![vec![0, 1]], vec![2]);
        assert_eq!(c.source.px, vec![0.5, 0.5]);
        assert!(c.null_rows.is_empty());
    }

    #[test]
    fn functional_single_z_is_point_mass() {
        let c = functional(1, vec![vec![2], vec![1]], vec![3, 2]);
        let mut expected = vec![0.0; 6];
        expected[2 * 2 + 1] = 1.0;
        assert_eq!(c.source.px, expected);
        assert_eq!(c.null_rows, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn functional_two_bits_uniform() {
        let c = functional(4, vec![vec![0, 0, 1, 1], vec![0, 1, 0, 1]], vec![2, 2]);
        // Tally by enumeration of z.
        let mut tally = [0.0; 4];
        for z in 0..4 {
            tally[(z / 2) * 2 + z % 2] += 0.25;
        }
        assert_eq!(c.source.px, tally.to_vec());
        // Posterior is a point mass on the unique z.
        for x in 0..4 {
            assert_eq!(c.posterior[x * 4 + x], 1.0);
        }
    }

    #[test]
    fn functional_px_must_match_declared() {
        let al = BlockAlphabets::new(vec![2], vec![1], vec![2], vec![2]).unwrap();
        let law = FunctionalLaw {
            z_size: 2,
            pz: vec![0.5, 0.5],
            f: vec![vec![0, 1]],
            g: vec![vec![0, 1]],
        };
        let mut s = binary_hamming();
        s.alphabets = al;
        s.side_info = SideInfoLaw::Functional(law);
        assert!(validate(&s).is_empty());
        s.source.px = vec![0.4, 0.6];
        let v = validate(&s);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].location, "source.px");
    }

    #[test]
    fn functional_out_of_alphabet_reported() {
        let al = BlockAlphabets::new(vec![2], vec![1], vec![2], vec![2]).unwrap();
        let law = FunctionalLaw {
            z_size: 2,
            pz: vec![0.5, 0.5],
            f: vec![vec![0, 2]],
            g: vec![vec![0, 5]],
        };
        let mut s = binary_hamming();
        s.alphabets = al.clone();
        s.side_info = SideInfoLaw::Functional(law.clone());
        let locs: Vec<_> = validate(&s).into_iter().map(|v| v.location).collect();
        assert_eq!(locs, ["vending.f[0]", "vending.g[0]"]);
        assert!(compile_functional(&law, &al).is_err());
    }

    #[test]
    fn problem_support_drops_zero_rows() {
        let mut s = binary_hamming();
        s.source.px = vec![0.0, 1.0];
        let p = Problem::new(s).unwrap();
        assert_eq!(p.support(), &[1]);
    }
}
