//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid input, 2 resource cap exceeded,
//! 3 numerical non-convergence (results are still written).

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rdc_core::acceptance::{run_fast, ReferenceValues};
use rdc_core::closed_forms::{classic_binary_rd, feedforward_example_rate, repeat_request_rate};
use rdc_core::codetree::{CodetreeError, CodetreeSet, DEFAULT_ENUMERATION_CAP};
use rdc_core::problem::{ModelError, Problem};
use rdc_core::report::{rdc_csv, sig12, sim_csv};
use rdc_core::simulator::{simulate, SimConfig, SimError, DEFAULT_CODEBOOK_CAP};
use rdc_core::solver::{
    ba_solve, geometric_grid, rdc_at, rdc_surface, reduce_support, BaOptions, PairMetrics,
    RdcPoint, SolverError, TargetOptions,
};

#[derive(Parser)]
#[command(name = "rdc", version, about = "Rate-distortion-cost computation with action-dependent side information")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the number of codetrees of a problem.
    Count(ProblemArgs),
    /// Solve at fixed multipliers.
    Solve {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        lambda_d: f64,
        #[arg(long, default_value_t = 0.0)]
        lambda_g: f64,
    },
    /// Solve on a geometric grid of multipliers.
    Surface {
        #[command(flatten)]
        input: Input,
        /// START STOP COUNT; the first occurrence sets lambda_d, a second one lambda_g.
        #[arg(long, num_args = 3, value_names = ["START", "STOP", "COUNT"], action = clap::ArgAction::Append, required = true)]
        grid: Vec<f64>,
        /// lambda_g when only one grid is given.
        #[arg(long, default_value_t = 0.0)]
        lambda_g: f64,
    },
    /// Minimum rate at a distortion and cost target.
    Target {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        target: Targets,
    },
    /// Shrink the support of an optimal codetree law; prints `ordinal,mass`.
    Reduce {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        point: PointChoice,
        /// Support bound (default |X^L| + 3).
        #[arg(long)]
        bound: Option<usize>,
    },
    /// Evaluate an analytic formula.
    ClosedForm {
        formula: Formula,
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, default_value_t = 0.5)]
        q: f64,
        #[arg(long, default_value_t = 0.5)]
        epsilon: f64,
        #[arg(long)]
        d: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo run of random codebooks built from an optimal codetree law.
    Simulate {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        point: PointChoice,
        #[arg(long)]
        rate: f64,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        trials: usize,
        #[arg(long, default_value_t = 0.0)]
        eta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Largest codebook, in messages.
        #[arg(long, default_value_t = DEFAULT_CODEBOOK_CAP)]
        codebook_cap: u64,
    },
    /// Run the fast acceptance checks.
    Selftest,
}

#[derive(Clone, Copy, ValueEnum)]
enum Formula {
    FeedforwardExample,
    RepeatRequest,
    ClassicBinary,
}

#[derive(Args)]
struct ProblemArgs {
    /// Problem file (alternative to --problem).
    #[arg(value_name = "PROBLEM", conflicts_with = "problem")]
    path: Option<PathBuf>,
    #[arg(long)]
    problem: Option<PathBuf>,
    /// Enumeration cap on the number of codetrees.
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
    cap: u64,
    /// Restricted codetree set: one ordinal per line.
    #[arg(long)]
    codetrees: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Input {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
    /// Accepted gap to a distortion or cost target.
    #[arg(long, default_value_t = 1e-4)]
    tol_dg: f64,
}

#[derive(Args)]
struct Targets {
    #[arg(long, default_value_t = f64::INFINITY)]
    target_d: f64,
    #[arg(long, default_value_t = f64::INFINITY)]
    target_g: f64,
}

/// Either fixed multipliers or targets.
#[derive(Args)]
struct PointChoice {
    #[arg(long, conflicts_with_all = ["target_d", "target_g"])]
    lambda_d: Option<f64>,
    #[arg(long, conflicts_with_all = ["target_d", "target_g"])]
    lambda_g: Option<f64>,
    #[arg(long)]
    target_d: Option<f64>,
    #[arg(long)]
    target_g: Option<f64>,
}

enum Failure {
    Input(Vec<String>),
    Cap(String),
    NoConvergence(String),
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Invalid(v) => Failure::Input(v.iter().map(|v| v.to_string()).collect()),
            other => Failure::Input(vec![other.to_string()]),
        }
    }
}

impl From<CodetreeError> for Failure {
    fn from(e: CodetreeError) -> Self {
        match e {
            CodetreeError::CapExceeded { .. } | CodetreeError::Overflow => Failure::Cap(e.to_string()),
            CodetreeError::Model(m) => m.into(),
            other => Failure::Input(vec![other.to_string()]),
        }
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Codetree(c) => c.into(),
            SolverError::TooLarge { .. } => Failure::Cap(e.to_string()),
            SolverError::NonFinite { .. }
            | SolverError::LagrangianIncrease { .. }
            | SolverError::ReductionStalled { .. }
            | SolverError::ReductionDrift(_) => Failure::NoConvergence(e.to_string()),
            other => Failure::Input(vec![other.to_string()]),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::CapExceeded { .. } => Failure::Cap(e.to_string()),
            SimError::Codetree(c) => c.into(),
            other => Failure::Input(vec![other.to_string()]),
        }
    }
}

fn input_error(msg: impl Into<String>) -> Failure {
    Failure::Input(vec![msg.into()])
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| input_error(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| input_error(format!("cannot write output: {e}")))
        }
    }
}

struct Loaded {
    problem: Problem,
    set: CodetreeSet,
}

fn load(args: &ProblemArgs) -> Result<Loaded, Failure> {
    let path = args
        .path
        .as_ref()
        .or(args.problem.as_ref())
        .ok_or_else(|| input_error("a problem file is required (positional or --problem)"))?;
    let problem = Problem::from_path(path)?;
    let set = match &args.codetrees {
        Some(list) => {
            let text = fs::read_to_string(list)
                .map_err(|e| input_error(format!("cannot read {}: {e}", list.display())))?;
            CodetreeSet::restricted(problem.alphabets(), CodetreeSet::parse_ordinals(&text)?)?
        }
        None => CodetreeSet::full(problem.alphabets(), args.cap)?,
    };
    Ok(Loaded { problem, set })
}

fn ba_options(input: &Input) -> Result<BaOptions, Failure> {
    if input.tol.is_nan() || input.tol < 0.0 || input.max_iter == 0 {
        return Err(input_error("--tol must be nonnegative and --max-iter positive"));
    }
    Ok(BaOptions {
        tol: input.tol,
        max_iter: input.max_iter,
    })
}

fn target_options(input: &Input) -> Result<TargetOptions, Failure> {
    if input.tol_dg.is_nan() || input.tol_dg <= 0.0 {
        return Err(input_error("--tol-dg must be positive"));
    }
    Ok(TargetOptions {
        tol_dg: input.tol_dg,
        ba: ba_options(input)?,
        ..TargetOptions::default()
    })
}

fn check_multiplier(name: &str, v: f64) -> Result<(), Failure> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(input_error(format!("{name} must be finite and nonnegative")))
    }
}

fn solve_point(metrics: &PairMetrics, input: &Input, choice: &PointChoice) -> Result<RdcPoint, Failure> {
    if choice.target_d.is_some() || choice.target_g.is_some() {
        let d = choice.target_d.unwrap_or(f64::INFINITY);
        let g = choice.target_g.unwrap_or(f64::INFINITY);
        return Ok(rdc_at(metrics, d, g, target_options(input)?)?);
    }
    let ld = choice
        .lambda_d
        .ok_or_else(|| input_error("give --lambda-d/--lambda-g or --target-d/--target-g"))?;
    let lg = choice.lambda_g.unwrap_or(0.0);
    check_multiplier("--lambda-d", ld)?;
    check_multiplier("--lambda-g", lg)?;
    Ok(ba_solve(metrics, ld, lg, ba_options(input)?)?)
}

fn converged(points: &[RdcPoint]) -> Result<(), Failure> {
    match points.iter().filter(|p| !p.converged).count() {
        0 => Ok(()),
        n => Err(Failure::NoConvergence(format!("{n} point(s) did not converge"))),
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Count(args) => {
            let path = args.path.as_ref().or(args.problem.as_ref());
            let problem = Problem::from_path(
                path.ok_or_else(|| input_error("a problem file is required (positional or --problem)"))?,
            )?;
            let count = rdc_core::codetree::count_codetrees(problem.alphabets(), args.cap)?;
            emit(&args.out, &format!("{count}\n"))
        }
        Command::Solve {
            input,
            lambda_d,
            lambda_g,
        } => {
            check_multiplier("--lambda-d", lambda_d)?;
            check_multiplier("--lambda-g", lambda_g)?;
            let opts = ba_options(&input)?;
            let l = load(&input.problem)?;
            let metrics = PairMetrics::compute(&l.problem, &l.set)?;
            let p = ba_solve(&metrics, lambda_d, lambda_g, opts)?;
            emit(&input.problem.out, &rdc_csv([&p]))?;
            converged(&[p])
        }
        Command::Surface {
            input,
            grid,
            lambda_g,
        } => {
            let opts = ba_options(&input)?;
            check_multiplier("--lambda-g", lambda_g)?;
            let axes: Vec<Vec<f64>> = grid
                .chunks(3)
                .map(|g| {
                    let count = g[2];
                    if !(g[0] > 0.0 && g[1] > 0.0 && g[0].is_finite() && g[1].is_finite())
                        || count < 1.0
                        || count.fract() != 0.0
                    {
                        return Err(input_error(format!(
                            "--grid {} {} {}: endpoints must be positive and COUNT a positive integer",
                            g[0], g[1], g[2]
                        )));
                    }
                    Ok(geometric_grid(g[0], g[1], count as usize))
                })
                .collect::<Result<_, _>>()?;
            if axes.len() > 2 {
                return Err(input_error("--grid may be given at most twice"));
            }
            let lg_axis = axes.get(1).cloned().unwrap_or_else(|| vec![lambda_g]);
            let pairs: Vec<(f64, f64)> = axes[0]
                .iter()
                .flat_map(|&ld| lg_axis.iter().map(move |&lg| (ld, lg)))
                .collect();
            let l = load(&input.problem)?;
            let metrics = PairMetrics::compute(&l.problem, &l.set)?;
            let mut points = Vec::new();
            let mut failures = Vec::new();
            for ((ld, lg), r) in rdc_surface(&metrics, &pairs, opts) {
                match r {
                    Ok(p) => points.push(p),
                    Err(e) => failures.push(format!("({ld}, {lg}): {e}")),
                }
            }
            emit(&input.problem.out, &rdc_csv(&points))?;
            if !failures.is_empty() {
                return Err(Failure::NoConvergence(failures.join("\n")));
            }
            converged(&points)
        }
        Command::Target { input, target } => {
            let opts = target_options(&input)?;
            let l = load(&input.problem)?;
            let metrics = PairMetrics::compute(&l.problem, &l.set)?;
            let p = rdc_at(&metrics, target.target_d, target.target_g, opts)?;
            emit(&input.problem.out, &rdc_csv([&p]))?;
            converged(&[p])
        }
        Command::Reduce { input, point, bound } => {
            let l = load(&input.problem)?;
            let metrics = PairMetrics::compute(&l.problem, &l.set)?;
            let p = solve_point(&metrics, &input, &point)?;
            let r = reduce_support(&metrics, &p.pj_given_x, bound)?;
            let q = r.pj_given_x.marginal(metrics.px());
            let mut text = String::from("ordinal,mass\n");
            for (j, &mass) in q.iter().enumerate() {
                if mass > 0.0 {
                    text.push_str(&format!("{},{}\n", metrics.ordinals()[j], sig12(mass)));
                }
            }
            emit(&input.problem.out, &text)?;
            eprintln!(
                "support {} -> {}, rate {}, drift {:e}",
                r.support_before,
                r.support_after,
                sig12(p.rate),
                r.drift
            );
            converged(&[p])
        }
        Command::ClosedForm {
            formula,
            p,
            q,
            epsilon,
            d,
            out,
        } => {
            let text = match formula {
                Formula::FeedforwardExample => {
                    let r = feedforward_example_rate(p, q, d).map_err(|e| input_error(e.to_string()))?;
                    format!("rate_bits_per_symbol\n{}\n", sig12(r))
                }
                Formula::RepeatRequest => {
                    let (r, c) = repeat_request_rate(epsilon, d).map_err(|e| input_error(e.to_string()))?;
                    format!("rate_bits_per_symbol,min_sufficient_cost\n{},{}\n", sig12(r), sig12(c))
                }
                Formula::ClassicBinary => {
                    let r = classic_binary_rd(p, d).map_err(|e| input_error(e.to_string()))?;
                    format!("rate_bits_per_symbol\n{}\n", sig12(r))
                }
            };
            emit(&out, &text)
        }
        Command::Simulate {
            input,
            point,
            rate,
            m,
            trials,
            eta,
            seed,
            codebook_cap,
        } => {
            if !(rate >= 0.0 && rate.is_finite()) || m == 0 || trials == 0 || !(eta >= 0.0 && eta.is_finite()) {
                return Err(input_error(
                    "--rate and --eta must be finite and nonnegative, --m and --trials positive",
                ));
            }
            let l = load(&input.problem)?;
            let metrics = PairMetrics::compute(&l.problem, &l.set)?;
            let p = solve_point(&metrics, &input, &point)?;
            let cfg = SimConfig {
                cap: codebook_cap,
                ..SimConfig::new(rate, m, trials, eta, seed)
            };
            let report = simulate(&l.problem, &metrics, &p.pj, cfg, true)?;
            emit(&input.problem.out, &sim_csv(&report))?;
            converged(&[p])
        }
        Command::Selftest => {
            let results = run_fast(&ReferenceValues::default());
            for r in &results {
                println!("{}", r.line());
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            println!("{} of {} fast criteria passed", results.len() - failed, results.len());
            if failed > 0 {
                return Err(Failure::Input(vec![format!("{failed} criterion(s) failed")]));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(lines)) => {
            for line in lines {
                eprintln!("{line}");
            }
            ExitCode::from(1)
        }
        Err(Failure::Cap(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
        Err(Failure::NoConvergence(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(3)
        }
    }
}
