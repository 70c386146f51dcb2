//! Command-line surface.
//!
//! Exit codes: 0 success, 2 invalid model or argument, 3 distortion out of
//! range, 4 solver non-convergence.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::builtin::{self, AnyModel};
use crate::criticality::{
    check_thm2_independence, check_thm3a, check_thm3b, classify, discretize, lossless_f,
    minimal_coding_variance, CriticalityReport, IndependenceReport, Thm3bReport, Verdict,
    DEFAULT_EPSILON,
};
use crate::error::{Error, Result};
use crate::lagrangian::lambda_eval;
use crate::model::{is_uniform, ContinuousModel, DiscreteModel, STRUCT_TOL};
use crate::model_file::read_model;
use crate::numeric::LN_2;
use crate::rd_solver::{rd_curve, SolveOptions};
use crate::simulate::{clt_summary, sample_redundancy_paths, write_paths_csv, CltSummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_RANGE: i32 = 3;
pub const EXIT_CONVERGENCE: i32 = 4;

/// Tuples tried when searching for a dominance witness.
const WITNESS_SEARCH_TUPLES: usize = 1000;
const DEFAULT_LAMBDA_GRID: [f64; 4] = [-0.5, -1.0, -2.0, -4.0];

#[derive(Debug, Parser)]
#[command(
    name = "rdcrit",
    version,
    about = "Rate-distortion redundancy and critical-source analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve at one distortion and classify the source.
    Analyze(AnalyzeArgs),
    /// Tabulate R(D), the optimal slope, σ² and the verdict over a grid.
    Curve(CurveArgs),
    /// Sample the redundancy process and summarize its CLT scaling.
    Simulate(SimulateArgs),
    /// Run the continuous-source checks (dominance witness, permutation sums, rank).
    CheckContinuous(CheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Units {
    Bits,
    Nats,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// JSON model file.
    #[arg(long, conflicts_with = "example")]
    pub model: Option<PathBuf>,
    /// Built-in example: binary, five, lossless, mse2, l1three.
    #[arg(long)]
    pub example: Option<String>,
    /// P(1) for the binary example.
    #[arg(long)]
    pub p: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Target distortion (0 selects the lossless redundancy function).
    #[arg(short = 'D', long = "distortion", allow_hyphen_values = true)]
    pub distortion: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Units::Bits)]
    pub units: Units,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long = "d-min")]
    pub d_min: f64,
    #[arg(long = "d-max")]
    pub d_max: f64,
    /// Number of grid points, endpoints included.
    #[arg(long)]
    pub steps: usize,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// CSV output; a two-column `D R_bits` file is written next to it with
    /// extension `.dat`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(short = 'D', long = "distortion", allow_hyphen_values = true)]
    pub distortion: Option<f64>,
    /// Largest sample size.
    #[arg(short = 'n', default_value_t = 10_000)]
    pub n: u64,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Per-trial CSV (trial,n,S_n,lower,upper).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON summary; defaults to `<out>.summary.json` when `--out` is given.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated evaluation points x_0,...,x_k.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub points: Option<Vec<f64>>,
    /// Comma-separated negative slopes for the rank check.
    #[arg(
        long = "lambda-grid",
        value_delimiter = ',',
        allow_hyphen_values = true
    )]
    pub lambda_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 400)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// What a command did, for callers that drive the CLI in-process.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommandReport {
    pub command: String,
    pub inputs: serde_json::Value,
    pub outputs: Vec<PathBuf>,
    /// The line printed on stdout.
    pub stdout: String,
    pub exit_code: i32,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::OutOfRange { .. } | Error::RateZero { .. } | Error::Lossless(_) => EXIT_RANGE,
        Error::Convergence { .. } | Error::NotBracketed { .. } => EXIT_CONVERGENCE,
        _ => EXIT_INVALID,
    }
}

fn load(args: &ModelArgs) -> Result<(AnyModel, Option<String>)> {
    match (&args.model, &args.example) {
        (Some(path), None) => Ok((read_model(path)?, None)),
        (None, Some(name)) => Ok((builtin::by_name(name, args.p)?, Some(name.clone()))),
        _ => Err(Error::InvalidArgument(
            "give exactly one of --model or --example".into(),
        )),
    }
}

fn load_discrete(args: &ModelArgs) -> Result<(DiscreteModel, Option<String>)> {
    let (m, name) = load(args)?;
    Ok(match m {
        AnyModel::Discrete(d) => (d, name),
        AnyModel::Continuous(c) => (discretize(&c)?, name),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Distortion at which the `five` example is exactly critical: `Λ'(−1)` with `Q = P`.
pub fn five_critical_distortion() -> f64 {
    let m = builtin::five();
    lambda_eval(&m, m.pmf(), -1.0)
        .expect("valid certificate")
        .first_deriv
}

#[derive(Debug, Clone, Serialize)]
struct LosslessReport {
    #[serde(rename = "D")]
    d: f64,
    #[serde(rename = "R_bits")]
    r_bits: f64,
    f: Vec<f64>,
    sigma2: f64,
    verdict: Verdict,
    redundancy: &'static str,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
enum AnalyzeOutput {
    Lossy(Box<CriticalityReport>),
    Lossless(LosslessReport),
}

fn analyze(args: &AnalyzeArgs) -> Result<CommandReport> {
    let (model, name) = load_discrete(&args.model)?;
    let d = match (args.distortion, name.as_deref()) {
        (Some(d), _) => d,
        (None, Some("five")) => five_critical_distortion(),
        (None, Some("lossless")) => 0.0,
        (None, _) => return Err(Error::InvalidArgument("-D/--distortion is required".into())),
    };
    if !(args.epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon {} < 0",
            args.epsilon
        )));
    }
    let scale = match args.units {
        Units::Bits => 1.0,
        Units::Nats => LN_2,
    };
    let unit = match args.units {
        Units::Bits => "bits",
        Units::Nats => "nats",
    };
    let (output, line) = if d == 0.0 {
        let f = lossless_f(model.pmf());
        let h: f64 = model.pmf().iter().map(|p| -p * p.log2()).sum();
        let verdict = if is_uniform(model.pmf(), STRUCT_TOL) {
            Verdict::Critical
        } else {
            Verdict::Generic
        };
        let sigma2 = minimal_coding_variance(&model, &f);
        let line = format!(
            "{}  D=0 (lossless) R={:.6} {unit} sigma2={:.6} {unit}^2",
            verdict.banner(),
            h * scale,
            sigma2 * scale * scale
        );
        (
            AnalyzeOutput::Lossless(LosslessReport {
                d,
                r_bits: h,
                f,
                sigma2,
                verdict,
                redundancy: verdict.redundancy_order(),
            }),
            line,
        )
    } else {
        let rep = classify(&model, d, args.epsilon)?;
        let line = format!(
            "{}  D={} R={:.6} {unit} lambda*={:.6} sigma2={:.6} {unit}^2 spread={:.3e} bits",
            rep.verdict.banner(),
            d,
            rep.r_bits * scale,
            rep.lambda_star,
            rep.sigma2_bits2 * scale * scale,
            rep.spread
        );
        (AnalyzeOutput::Lossy(Box::new(rep)), line)
    };
    let mut outputs = Vec::new();
    if let Some(path) = &args.out {
        write_json(path, &output)?;
        outputs.push(path.clone());
    }
    Ok(CommandReport {
        command: "analyze".into(),
        inputs: serde_json::json!({
            "model": args.model.model, "example": args.model.example, "p": args.model.p,
            "D": d, "epsilon": args.epsilon,
        }),
        outputs,
        stdout: line,
        exit_code: EXIT_OK,
    })
}

fn curve(args: &CurveArgs) -> Result<CommandReport> {
    if args.steps == 0 {
        return Err(Error::InvalidArgument("--steps must be at least 1".into()));
    }
    if !(args.d_min <= args.d_max) {
        return Err(Error::InvalidArgument(
            "--d-min must not exceed --d-max".into(),
        ));
    }
    let (model, _) = load_discrete(&args.model)?;
    let grid: Vec<f64> = if args.steps == 1 {
        vec![args.d_min]
    } else {
        let h = (args.d_max - args.d_min) / (args.steps - 1) as f64;
        (0..args.steps).map(|i| args.d_min + i as f64 * h).collect()
    };
    let opts = SolveOptions {
        epsilon: args.epsilon,
        ..SolveOptions::default()
    };
    let rows = rd_curve(&model, &grid, &opts);

    let mut w = csv::Writer::from_path(&args.out)?;
    w.write_record(["D", "R_bits", "lambda_star", "sigma2", "verdict"])?;
    for r in &rows {
        let verdict = match (&r.verdict, &r.error) {
            (Some(v), _) => v.to_string(),
            (None, Some(e)) => format!("error: {e}"),
            (None, None) => String::new(),
        };
        w.write_record([
            r.d.to_string(),
            r.r_bits.to_string(),
            r.lambda_star.to_string(),
            r.sigma2.to_string(),
            verdict,
        ])?;
    }
    w.flush()?;
    let dat = args.out.with_extension("dat");
    let mut g = BufWriter::new(File::create(&dat)?);
    writeln!(g, "# D R_bits")?;
    for r in rows.iter().filter(|r| r.error.is_none()) {
        writeln!(g, "{} {}", r.d, r.r_bits)?;
    }
    g.flush()?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    let critical = rows
        .iter()
        .filter(|r| r.verdict == Some(Verdict::Critical))
        .count();
    Ok(CommandReport {
        command: "curve".into(),
        inputs: serde_json::json!({
            "model": args.model.model, "example": args.model.example, "p": args.model.p,
            "d_min": args.d_min, "d_max": args.d_max, "steps": args.steps,
        }),
        outputs: vec![args.out.clone(), dat],
        stdout: format!(
            "{} points: {critical} critical, {} generic, {failed} failed",
            rows.len(),
            rows.len() - critical - failed
        ),
        exit_code: EXIT_OK,
    })
}

/// Sample sizes 10, 100, … below `n`, then `n`.
pub fn default_n_grid(n: u64) -> Vec<u64> {
    let mut grid = Vec::new();
    let mut m = 10u64;
    while m < n {
        grid.push(m);
        m = m.saturating_mul(10);
    }
    grid.push(n);
    grid
}

#[derive(Debug, Clone, Serialize)]
struct SimulationSummary {
    #[serde(rename = "D")]
    d: f64,
    #[serde(rename = "R_bits")]
    r_bits: f64,
    verdict: Verdict,
    f: Vec<f64>,
    seed: u64,
    n_grid: Vec<u64>,
    scaled_stats: CltSummary,
}

fn simulate(args: &SimulateArgs) -> Result<CommandReport> {
    let (model, _) = load_discrete(&args.model)?;
    let d = args
        .distortion
        .ok_or_else(|| Error::InvalidArgument("-D/--distortion is required".into()))?;
    if args.n < 2 {
        return Err(Error::InvalidArgument("-n must be at least 2".into()));
    }
    let grid = default_n_grid(args.n);
    let res = sample_redundancy_paths(&model, d, &grid, args.trials, args.seed)?;
    let clt = clt_summary(&res, res.sigma2_bits2);
    let summary = SimulationSummary {
        d,
        r_bits: res.r_bits,
        verdict: res.verdict,
        f: res.f_bits.clone(),
        seed: args.seed,
        n_grid: grid,
        scaled_stats: clt.clone(),
    };
    let mut outputs = Vec::new();
    if let Some(out) = &args.out {
        let w = BufWriter::new(File::create(out)?);
        write_paths_csv(&res, w)?;
        outputs.push(out.clone());
    }
    let summary_path = args
        .summary
        .clone()
        .or_else(|| args.out.as_ref().map(|p| p.with_extension("summary.json")));
    if let Some(path) = summary_path {
        write_json(&path, &summary)?;
        outputs.push(path);
    }
    let var = clt
        .var_scaled
        .map_or_else(|| "absent".to_string(), |v| format!("{v:.6}"));
    Ok(CommandReport {
        command: "simulate".into(),
        inputs: serde_json::json!({
            "model": args.model.model, "example": args.model.example, "p": args.model.p,
            "D": d, "n": args.n, "trials": args.trials, "seed": args.seed,
        }),
        outputs,
        stdout: format!(
            "{}  n={} trials={} mean_scaled={:.6} var_scaled={var} sigma2={:.6}",
            res.verdict.banner(),
            args.n,
            args.trials,
            clt.mean_scaled,
            res.sigma2_bits2
        ),
        exit_code: EXIT_OK,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct WitnessReport {
    pub points: Option<Vec<f64>>,
    /// "given" or "search".
    pub source: &'static str,
    pub holds: bool,
    pub margin: Option<f64>,
    pub tuples_tried: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuousCheckReport {
    pub dominance: WitnessReport,
    pub permutation_sums: Option<Thm3bReport>,
    pub independence: Option<IndependenceReport>,
    pub conclusion: String,
}

/// Random search for points with `r_j(x_j) > r_j(x_i)`; deterministic for a seed.
pub fn search_dominance_witness(
    model: &ContinuousModel,
    tuples: usize,
    seed: u64,
) -> Option<(Vec<f64>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = model.interval();
    for _ in 0..tuples {
        let pts: Vec<f64> = (0..=model.k()).map(|_| rng.random_range(lo..=hi)).collect();
        if let Ok((true, margin)) = check_thm3a(&pts, model) {
            return Some((pts, margin));
        }
    }
    None
}

pub fn check_continuous_model(
    model: &ContinuousModel,
    points: Option<&[f64]>,
    lambda_grid: &[f64],
    samples: usize,
    seed: u64,
) -> Result<ContinuousCheckReport> {
    let dominance = match points {
        Some(p) => {
            let (holds, margin) = check_thm3a(p, model)?;
            WitnessReport {
                points: Some(p.to_vec()),
                source: "given",
                holds,
                margin: Some(margin),
                tuples_tried: 1,
            }
        }
        None => match search_dominance_witness(model, WITNESS_SEARCH_TUPLES, seed) {
            Some((p, margin)) => WitnessReport {
                points: Some(p),
                source: "search",
                holds: true,
                margin: Some(margin),
                tuples_tried: WITNESS_SEARCH_TUPLES,
            },
            None => WitnessReport {
                points: None,
                source: "search",
                holds: false,
                margin: None,
                tuples_tried: WITNESS_SEARCH_TUPLES,
            },
        },
    };
    let permutation_sums = match &dominance.points {
        Some(p) => Some(check_thm3b(p, model)?),
        None => None,
    };
    let independence = if dominance.holds && points.is_none() {
        None
    } else {
        Some(check_thm2_independence(model, lambda_grid, samples)?)
    };
    let conclusion = if independence.as_ref().is_some_and(|r| r.independent) {
        "functions exp(lambda r_j) linearly independent: f is never identically zero".to_string()
    } else if dominance.holds || permutation_sums.as_ref().is_some_and(|r| r.holds) {
        "dominance/permutation-sum witness found: f cannot vanish for D arbitrarily close to 0"
            .to_string()
    } else {
        "no sufficient condition established".to_string()
    };
    Ok(ContinuousCheckReport {
        dominance,
        permutation_sums,
        independence,
        conclusion,
    })
}

fn check_continuous(args: &CheckArgs) -> Result<CommandReport> {
    let (model, _) = load(&args.model)?;
    let AnyModel::Continuous(model) = model else {
        return Err(Error::InvalidArgument(
            "check-continuous needs a continuous model".into(),
        ));
    };
    let grid = args
        .lambda_grid
        .clone()
        .unwrap_or_else(|| DEFAULT_LAMBDA_GRID.to_vec());
    let rep = check_continuous_model(
        &model,
        args.points.as_deref(),
        &grid,
        args.samples,
        args.seed,
    )?;
    let mut outputs = Vec::new();
    if let Some(path) = &args.out {
        write_json(path, &rep)?;
        outputs.push(path.clone());
    }
    let mut line = String::new();
    if let Some(p) = rep
        .dominance
        .points
        .as_ref()
        .filter(|_| rep.dominance.holds)
    {
        let pts: Vec<String> = p.iter().map(|x| format!("{x}")).collect();
        line.push_str(&format!("DOMINANCE WITNESS ({})", pts.join(", ")));
    } else {
        line.push_str("NO DOMINANCE WITNESS");
    }
    if let Some(ind) = &rep.independence {
        line.push_str(&format!("; independent={}", ind.independent));
    }
    Ok(CommandReport {
        command: "check-continuous".into(),
        inputs: serde_json::json!({
            "model": args.model.model, "example": args.model.example,
            "points": args.points, "lambda_grid": grid, "samples": args.samples, "seed": args.seed,
        }),
        outputs,
        stdout: line,
        exit_code: EXIT_OK,
    })
}

/// Run a parsed command. Errors carry their exit code via [`exit_code`].
pub fn run(cli: &Cli) -> Result<CommandReport> {
    match &cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Curve(a) => curve(a),
        Command::Simulate(a) => simulate(a),
        Command::CheckContinuous(a) => check_continuous(a),
    }
}

/// Parse, run, and print; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
        }
    };
    match run(&cli) {
        Ok(rep) => {
            println!("{}", rep.stdout);
            rep.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
