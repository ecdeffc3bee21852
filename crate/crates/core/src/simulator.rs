//! Random-coding simulation.
//!
//! A codebook holds `2^ceil(nR)` messages; each message is a run of `m`
//! block codetrees drawn i.i.d. from a codetree law and executed back to
//! back. The encoder sees the source sequence only and picks the message
//! with the smallest expected distortion-plus-weighted-cost; the decoder then
//! runs the chosen codetrees against freshly sampled side information.
//!
//! Randomness is split into independent ChaCha streams derived from
//! `(seed, trial)`, so results do not depend on scheduling.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::codetree::{concatenate, CodetreeError, CodetreeShape};
use crate::problem::{Problem, SideInfoLaw};
use crate::solver::PairMetrics;

/// Largest codebook, in messages.
pub const DEFAULT_CODEBOOK_CAP: u64 = 1 << 20;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("codebook of 2^{bits} messages exceeds the cap of {cap}")]
    CapExceeded { bits: u64, cap: u64 },
    #[error("invalid codetree law: {0}")]
    BadLaw(String),
    #[error("invalid simulation parameter: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Codetree(#[from] CodetreeError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    pub rate: f64,
    pub m: usize,
    pub seed: u64,
    /// Codetree law the entries were drawn from, over the metric columns.
    pub pj: Vec<f64>,
    /// `entries[w][b]` is the column of the codetree used in block `b` of message `w`.
    pub entries: Vec<Vec<usize>>,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// `ceil(n R)` with a small allowance so that exact products are not bumped up.
pub fn codebook_bits(rate: f64, symbols: usize) -> u64 {
    (symbols as f64 * rate - 1e-9).ceil().max(0.0) as u64
}

fn weighted(p: &[f64], what: &str) -> Result<WeightedIndex<f64>, SimError> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(SimError::BadLaw(format!("{what} must be a probability vector (sum {sum})")));
    }
    WeightedIndex::new(p).map_err(|e| SimError::BadLaw(e.to_string()))
}

/// Draws a codebook for blocks of length `block_len`. Message `w` uses
/// stream `w` of the generator seeded with `seed`.
pub fn generate_codebook(
    pj: &[f64],
    rate: f64,
    m: usize,
    block_len: usize,
    seed: u64,
    cap: u64,
) -> Result<Codebook, SimError> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(SimError::BadParameter(format!("rate {rate}")));
    }
    if m == 0 {
        return Err(SimError::BadParameter("m must be at least 1".into()));
    }
    let dist = weighted(pj, "pj")?;
    let bits = codebook_bits(rate, m * block_len);
    if bits >= 64 || (1u64 << bits) > cap {
        return Err(SimError::CapExceeded { bits, cap });
    }
    let entries = (0..1u64 << bits)
        .map(|w| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(w);
            (0..m).map(|_| dist.sample(&mut rng)).collect()
        })
        .collect();
    Ok(Codebook {
        rate,
        m,
        seed,
        pj: pj.to_vec(),
        entries,
    })
}

/// Message minimizing `sum_b d_bar(x_b, j_b) + eta g_bar(x_b, j_b)`; ties go
/// to the smallest index. `rows` are metric rows of the source blocks.
pub fn encode(metrics: &PairMetrics, rows: &[usize], codebook: &Codebook, eta: f64) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (w, entry) in codebook.entries.iter().enumerate() {
        let score: f64 = rows
            .iter()
            .zip(entry)
            .map(|(&r, &j)| metrics.d(r, j) + eta * metrics.g(r, j))
            .sum();
        if score < best.0 {
            best = (score, w);
        }
    }
    best.1
}

/// Per-symbol distortion and cost of one run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialOutcome {
    pub distortion: f64,
    pub cost: f64,
}

/// Samples `m` source blocks, encodes them, and runs the decoder causally.
pub fn run_trial(
    problem: &Problem,
    metrics: &PairMetrics,
    codebook: &Codebook,
    eta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<TrialOutcome, SimError> {
    let al = problem.alphabets();
    let l = al.block_len();
    let m = codebook.m;
    // Source blocks, plus the hidden variable of each block for functional laws.
    let mut xs = Vec::with_capacity(m);
    let mut zs = Vec::with_capacity(m);
    match problem.side_info() {
        SideInfoLaw::Kernel { .. } => {
            let dist = weighted(problem.px(), "px")?;
            for _ in 0..m {
                xs.push(dist.sample(rng));
            }
        }
        SideInfoLaw::Functional(law) => {
            let dist = weighted(&law.pz, "pz")?;
            for _ in 0..m {
                let z = dist.sample(rng);
                let slots: Vec<usize> = (0..l).map(|s| law.f[s][z]).collect();
                xs.push(al.x_radix().index(&slots));
                zs.push(z);
            }
        }
    }
    let rows: Vec<usize> = xs
        .iter()
        .map(|&x| metrics.row_of(x).expect("sampled blocks have positive probability"))
        .collect();
    let w = encode(metrics, &rows, codebook, eta);

    let shape = CodetreeShape::new(al);
    let trees = codebook.entries[w]
        .iter()
        .map(|&j| shape.decode(metrics.ordinals()[j]))
        .collect::<Result<Vec<_>, _>>()?;
    let word = concatenate(trees)?;
    let mut y = Vec::with_capacity(m * l);
    let (mut d_total, mut c_total) = (0.0, 0.0);
    for b in 0..m {
        let x = xs[b];
        let (mut a_index, mut xhat_index) = (0, 0);
        for s in 0..l {
            let i = b * l + s;
            let a = word.action_at(i, &y);
            a_index = a_index * al.a_sizes()[s] + a;
            let ys = match problem.side_info() {
                SideInfoLaw::Kernel { .. } => {
                    let slice = problem.kernel_slice(s, a_index, x).expect("kernel");
                    sample_slice(slice, rng)
                }
                SideInfoLaw::Functional(law) => law.g[s][a_index * law.z_size + zs[b]],
            };
            y.push(ys);
            xhat_index = xhat_index * al.xhat_sizes()[s] + word.estimate_at(i, &y);
        }
        d_total += problem.distortion(x, xhat_index);
        c_total += problem.cost(a_index, x);
    }
    let n = (m * l) as f64;
    Ok(TrialOutcome {
        distortion: d_total / n,
        cost: c_total / n,
    })
}

fn sample_slice(p: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return k;
        }
    }
    // Rounding left a sliver above the cumulative sum: take the last
    // symbol with positive mass.
    p.iter().rposition(|&v| v > 0.0).unwrap_or(0)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of an independent substream labelled `label` under `parent`.
pub fn derive_seed(parent: u64, label: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ label)
}

const CODEBOOK_STREAM: u64 = 0;
const CHANNEL_STREAM: u64 = 1;

/// Codebook seed and source/side-information generator of trial `trial`.
pub fn trial_streams(seed: u64, trial: u64) -> (u64, ChaCha8Rng) {
    let t = derive_seed(seed, trial);
    (
        derive_seed(t, CODEBOOK_STREAM),
        ChaCha8Rng::seed_from_u64(derive_seed(t, CHANNEL_STREAM)),
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    pub rate: f64,
    pub m: usize,
    pub trials: usize,
    pub eta: f64,
    pub seed: u64,
    pub cap: u64,
}

impl SimConfig {
    pub fn new(rate: f64, m: usize, trials: usize, eta: f64, seed: u64) -> Self {
        SimConfig {
            rate,
            m,
            trials,
            eta,
            seed,
            cap: DEFAULT_CODEBOOK_CAP,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialReport {
    pub rate: f64,
    pub m: usize,
    pub trials: usize,
    pub eta: f64,
    pub seed: u64,
    pub empirical_distortion: f64,
    pub stderr_d: f64,
    pub empirical_cost: f64,
    pub stderr_c: f64,
}

/// Sum in a fixed binary tree shape, independent of evaluation order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

fn mean_and_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = pairwise_sum(v) / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs `cfg.trials` independent trials, each with a fresh codebook.
pub fn simulate(
    problem: &Problem,
    metrics: &PairMetrics,
    pj: &[f64],
    cfg: SimConfig,
    parallel: bool,
) -> Result<TrialReport, SimError> {
    if cfg.trials == 0 {
        return Err(SimError::BadParameter("trials must be at least 1".into()));
    }
    if !(cfg.eta >= 0.0 && cfg.eta.is_finite()) {
        return Err(SimError::BadParameter(format!("eta {}", cfg.eta)));
    }
    if pj.len() != metrics.n_trees() {
        return Err(SimError::BadLaw(format!(
            "{} weights for {} codetrees",
            pj.len(),
            metrics.n_trees()
        )));
    }
    let one = |t: usize| -> Result<TrialOutcome, SimError> {
        let (cb_seed, mut rng) = trial_streams(cfg.seed, t as u64);
        let cb = generate_codebook(pj, cfg.rate, cfg.m, problem.block_len(), cb_seed, cfg.cap)?;
        run_trial(problem, metrics, &cb, cfg.eta, &mut rng)
    };
    let outcomes: Vec<TrialOutcome> = if parallel {
        (0..cfg.trials).into_par_iter().map(one).collect::<Result<_, _>>()?
    } else {
        (0..cfg.trials).map(one).collect::<Result<_, _>>()?
    };
    let d: Vec<f64> = outcomes.iter().map(|o| o.distortion).collect();
    let c: Vec<f64> = outcomes.iter().map(|o| o.cost).collect();
    let (empirical_distortion, stderr_d) = mean_and_stderr(&d);
    let (empirical_cost, stderr_c) = mean_and_stderr(&c);
    Ok(TrialReport {
        rate: cfg.rate,
        m: cfg.m,
        trials: cfg.trials,
        eta: cfg.eta,
        seed: cfg.seed,
        empirical_distortion,
        stderr_d,
        empirical_cost,
        stderr_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_forms::repeat_request_embedding;
    use crate::codetree::CodetreeSet;
    use crate::problem::{BlockAlphabets, FunctionalLaw, Metrics, ProblemSpec, SourceLaw};

    fn binary() -> (Problem, PairMetrics) {
        let spec = ProblemSpec {
            alphabets: BlockAlphabets::new(vec![2], vec![1], vec![1], vec![2]).unwrap(),
            source: SourceLaw { px: vec![0.5, 0.5] },
            side_info: SideInfoLaw::Kernel {
                tables: vec![vec![1.0, 1.0]],
            },
            metrics: Metrics {
                distortion: vec![0.0, 1.0, 1.0, 0.0],
                cost: vec![0.0, 0.0],
            },
        };
        let p = Problem::new(spec).unwrap();
        let set = CodetreeSet::full(p.alphabets(), 16).unwrap();
        let m = PairMetrics::compute(&p, &set).unwrap();
        (p, m)
    }

    #[test]
    fn zero_rate_single_entry() {
        let cb = generate_codebook(&[0.5, 0.5], 0.0, 4, 1, 7, DEFAULT_CODEBOOK_CAP).unwrap();
        assert_eq!(cb.len(), 1);
        let (_, m) = binary();
        assert_eq!(encode(&m, &[0, 1, 1, 0], &cb, 0.0), 0);
    }

    #[test]
    fn codebook_size_and_cap() {
        let cb = generate_codebook(&[0.5, 0.5], 0.5, 8, 1, 1, DEFAULT_CODEBOOK_CAP).unwrap();
        assert_eq!(cb.len(), 16);
        assert!(matches!(
            generate_codebook(&[0.5, 0.5], 1.0, 21, 1, 1, DEFAULT_CODEBOOK_CAP),
            Err(SimError::CapExceeded { bits: 21, .. })
        ));
        assert!(generate_codebook(&[0.5, 0.6], 0.5, 8, 1, 1, DEFAULT_CODEBOOK_CAP).is_err());
    }

    #[test]
    fn point_mass_law_gives_identical_entries() {
        let cb = generate_codebook(&[0.0, 1.0, 0.0], 1.0, 5, 1, 3, DEFAULT_CODEBOOK_CAP).unwrap();
        assert!(cb.entries.iter().all(|e| e == &vec![1; 5]));
    }

    #[test]
    fn regeneration_is_identical() {
        let a = generate_codebook(&[0.2, 0.3, 0.5], 0.7, 6, 2, 99, DEFAULT_CODEBOOK_CAP).unwrap();
        let b = generate_codebook(&[0.2, 0.3, 0.5], 0.7, 6, 2, 99, DEFAULT_CODEBOOK_CAP).unwrap();
        assert_eq!(a, b);
        let c = generate_codebook(&[0.2, 0.3, 0.5], 0.7, 6, 2, 100, DEFAULT_CODEBOOK_CAP).unwrap();
        assert_ne!(a.entries, c.entries);
    }

    #[test]
    fn entry_frequencies_follow_law() {
        let pj = [0.1, 0.2, 0.3, 0.4];
        let cb = generate_codebook(&pj, 1.0, 12, 1, 5, DEFAULT_CODEBOOK_CAP).unwrap();
        assert_eq!(cb.len(), 4096);
        let total = (cb.len() * 12) as f64;
        for (j, &p) in pj.iter().enumerate() {
            let count = cb.entries.iter().flatten().filter(|&&e| e == j).count() as f64;
            let sd = (total * p * (1.0 - p)).sqrt();
            assert!((count - total * p).abs() <= 3.0 * sd, "atom {j}: {count}");
        }
    }

    #[test]
    fn encoder_finds_exact_entry() {
        let (_, m) = binary();
        // Column 0 estimates 0, column 1 estimates 1.
        let cb = Codebook {
            rate: 1.0,
            m: 2,
            seed: 0,
            pj: vec![0.5, 0.5],
            entries: vec![vec![1, 1], vec![0, 1], vec![0, 1], vec![0, 0]],
        };
        assert_eq!(encode(&m, &[0, 1], &cb, 0.0), 1);
        assert_eq!(encode(&m, &[1, 1], &cb, 0.0), 0);
    }

    #[test]
    fn deterministic_instance_is_exact() {
        let (p, _) = binary();
        let spec = ProblemSpec {
            source: SourceLaw { px: vec![0.0, 1.0] },
            ..p.spec().clone()
        };
        let p = Problem::new(spec).unwrap();
        let set = CodetreeSet::full(p.alphabets(), 16).unwrap();
        let m2 = PairMetrics::compute(&p, &set).unwrap();
        let cfg = SimConfig::new(0.0, 3, 5, 0.0, 11);
        let r = simulate(&p, &m2, &[1.0, 0.0], cfg, false).unwrap();
        assert_eq!(r.empirical_distortion, 1.0);
        assert_eq!(r.stderr_d, 0.0);
    }

    #[test]
    fn single_trial_matches_run_trial() {
        let (p, m) = binary();
        let cfg = SimConfig::new(0.5, 4, 1, 0.0, 21);
        let r = simulate(&p, &m, &[0.5, 0.5], cfg, true).unwrap();
        let (cb_seed, mut rng) = trial_streams(21, 0);
        let cb = generate_codebook(&[0.5, 0.5], 0.5, 4, 1, cb_seed, DEFAULT_CODEBOOK_CAP).unwrap();
        let o = run_trial(&p, &m, &cb, 0.0, &mut rng).unwrap();
        assert_eq!(r.empirical_distortion, o.distortion);
        assert_eq!(r.stderr_d, 0.0);
    }

    #[test]
    fn parallel_matches_sequential() {
        let (p, m) = binary();
        let cfg = SimConfig::new(0.4, 8, 64, 0.0, 5);
        let a = simulate(&p, &m, &[0.3, 0.7], cfg, true).unwrap();
        let b = simulate(&p, &m, &[0.3, 0.7], cfg, false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn point_mass_codebook_matches_induced_metrics() {
        let spec = repeat_request_embedding(0.5).unwrap();
        let p = Problem::new(spec).unwrap();
        let shape = CodetreeShape::new(p.alphabets());
        // Repeat only after an erasure, then report the surviving bit.
        let mut tree = shape.zeros();
        tree.actions[1] = vec![0, 0, 1];
        tree.estimates[1] = vec![0, 0, 0, 1, 1, 1, 0, 1, 0];
        let ord = shape.encode(&tree).unwrap();
        let set = CodetreeSet::restricted(p.alphabets(), vec![ord]).unwrap();
        let m = PairMetrics::compute(&p, &set).unwrap();
        let exact_d: f64 = (0..2).map(|r| m.px()[r] * m.d(r, 0)).sum::<f64>() / 2.0;
        let exact_c: f64 = (0..2).map(|r| m.px()[r] * m.g(r, 0)).sum::<f64>() / 2.0;
        assert!((exact_d - 0.125).abs() < 1e-12);
        assert!((exact_c - 0.5).abs() < 1e-12);
        let r = simulate(&p, &m, &[1.0], SimConfig::new(0.0, 4, 2000, 0.0, 8), true).unwrap();
        assert!((r.empirical_distortion - exact_d).abs() <= 3.0 * r.stderr_d);
        assert!((r.empirical_cost - exact_c).abs() <= 3.0 * r.stderr_c);
    }

    #[test]
    fn functional_side_information_matches_enumeration() {
        // Z uniform on 4 values; X_1 = Z / 2, X_2 = Z mod 2. The action
        // chooses whether Y_2 reveals X_2 (and costs 1).
        let law = FunctionalLaw {
            z_size: 4,
            pz: vec![0.25; 4],
            f: vec![vec![0, 0, 1, 1], vec![0, 1, 0, 1]],
            g: vec![vec![0, 0, 1, 1], vec![0, 0, 0, 0, 0, 1, 0, 1]],
        };
        let al = BlockAlphabets::new(vec![2, 2], vec![1, 2], vec![2, 2], vec![2, 2]).unwrap();
        let mut distortion = vec![0.0; 16];
        for x in 0..4 {
            for xh in 0..4 {
                distortion[x * 4 + xh] = ((x / 2 != xh / 2) as u8 + (x % 2 != xh % 2) as u8) as f64;
            }
        }
        let spec = ProblemSpec {
            alphabets: al,
            source: SourceLaw { px: vec![0.25; 4] },
            side_info: SideInfoLaw::Functional(law),
            metrics: Metrics {
                distortion,
                cost: vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0],
            },
        };
        let p = Problem::new(spec).unwrap();
        let set = CodetreeSet::full(p.alphabets(), 1 << 16).unwrap();
        let m = PairMetrics::compute(&p, &set).unwrap();
        let pj: Vec<f64> = vec![1.0 / set.len() as f64; set.len()];
        let exact_d: f64 = (0..4)
            .map(|r| (0..set.len()).map(|j| 0.25 * pj[j] * m.d(r, j)).sum::<f64>())
            .sum::<f64>()
            / 2.0;
        let r = simulate(&p, &m, &pj, SimConfig::new(0.0, 2, 4000, 0.0, 3), true).unwrap();
        assert!((r.empirical_distortion - exact_d).abs() <= 3.0 * r.stderr_d, "{r:?} {exact_d}");
    }

    #[test]
    fn pairwise_sum_is_exact_on_small_integers() {
        assert_eq!(pairwise_sum(&[1.0, 2.0, 3.0, 4.0, 5.0]), 15.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }
}
