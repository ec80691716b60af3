//! Command-line front end: solve single instances, benchmark algorithms on
//! one dataset, or sweep a grid of sparsity levels.

mod metrics;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use bestsubset::SolveStatus;
use metrics::predict_metrics;
use output::{write_table, write_trace_csv, ResultFile, BENCH_HEADER, TRANSITION_HEADER};
use run::{
    build_config, dataset_name, load, parse_algorithms, resolve_s, run_indexed, run_solver,
    LossKind, SolveSettings, SpectralKind,
};

#[derive(Parser)]
#[command(name = "bestsubset", version, about = "l0-constrained empirical risk minimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance with one algorithm
    Solve(SolveArgs),
    /// Run several algorithms on the same instance and tabulate costs
    Bench(BenchArgs),
    /// Sweep sparsity fractions across algorithms
    Transition(TransitionArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Training data in LIBSVM text format
    #[arg(long)]
    data: PathBuf,
    /// Test data in LIBSVM text format
    #[arg(long)]
    test: Option<PathBuf>,
    /// Hold out this fraction of training rows as the test set instead
    #[arg(long, conflicts_with = "test")]
    split_frac: Option<f64>,
    #[arg(long, value_enum)]
    loss: LossKind,
    /// Ridge weight for the logistic loss
    #[arg(long, default_value_t = 1e-10)]
    mu: f64,
    /// Seed for the held-out split
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TuningArgs {
    /// Residual tolerance of the stopping rule
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    /// Extrapolation step initialization
    #[arg(long, value_enum, default_value_t = SpectralKind::Exact)]
    spectral: SpectralKind,
    /// Fixed projected-gradient step size; default is 0.999 / estimated L
    #[arg(long)]
    lambda: Option<f64>,
}

impl TuningArgs {
    fn settings(&self) -> SolveSettings {
        SolveSettings { tolerance: self.tol, max_iter: self.max_iter, spectral: self.spectral }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    tuning: TuningArgs,
    /// Sparsity level as an absolute count
    #[arg(long)]
    s: Option<usize>,
    /// Sparsity level as a fraction of the training rows (rounded up)
    #[arg(long)]
    s_frac: Option<f64>,
    /// Algorithm: pg, apg, pg+, apg+
    #[arg(long)]
    alg: String,
    /// Write the per-iteration trace CSV here
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the JSON result summary here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    tuning: TuningArgs,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    s_frac: Option<f64>,
    /// Comma-separated algorithms, e.g. pg,apg,apg+
    #[arg(long, value_delimiter = ',')]
    alg: Vec<String>,
    /// Write the benchmark CSV here (stdout when omitted)
    #[arg(long)]
    table: Option<PathBuf>,
    /// Worker threads for independent runs
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct TransitionArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    tuning: TuningArgs,
    /// Comma-separated sparsity fractions, e.g. 0.2,0.4,0.6
    #[arg(long, value_delimiter = ',', required = true)]
    s_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    alg: Vec<String>,
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Transition(args) => cmd_transition(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn cmd_solve(args: SolveArgs) -> Result<ExitCode> {
    let algorithm = parse_algorithms(std::slice::from_ref(&args.alg))?[0];
    let loaded = load(
        &args.data.data,
        args.data.test.as_deref(),
        args.data.split_frac,
        args.data.loss,
        args.data.mu,
        args.data.seed,
        args.tuning.lambda,
    )?;
    let s = resolve_s(args.s, args.s_frac, loaded.model.samples())?;
    let config = build_config(algorithm, s, loaded.lambda, &args.tuning.settings());
    let result = run_solver(&loaded.model, &config)?;

    if let Some(path) = &args.trace {
        write_trace_csv(path, &result)?;
    }
    if let Some(path) = &args.out {
        ResultFile::from_result(&result, s).write(path)?;
    }

    println!("status {}", result.status.name());
    println!("f {}", result.f);
    println!("residual {}", result.residual);
    println!("iterations {}", result.iterations);
    println!("ge {}", result.ge);
    println!("cg {}", result.cg);
    println!("wall_time {:.6}", result.wall_time);
    println!("l_estimate_seconds {:.6}", loaded.l_seconds);
    if let Some(test) = &loaded.test {
        let metric = predict_metrics(&result.w, test, test.task)?;
        println!("{} {}", metric.label(), metric.value());
    }

    Ok(match result.status {
        SolveStatus::Converged => ExitCode::from(0),
        SolveStatus::MaxIter => ExitCode::from(2),
        SolveStatus::NumericError => ExitCode::from(1),
    })
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode> {
    let algorithms = parse_algorithms(&args.alg)?;
    let loaded = load(
        &args.data.data,
        args.data.test.as_deref(),
        args.data.split_frac,
        args.data.loss,
        args.data.mu,
        args.data.seed,
        args.tuning.lambda,
    )?;
    let s = resolve_s(args.s, args.s_frac, loaded.model.samples())?;
    let name = dataset_name(&args.data.data);
    let settings = args.tuning.settings();
    let threads = args.threads.unwrap_or(1);

    let rows = run_indexed(&algorithms, threads, |&algorithm| {
        let config = build_config(algorithm, s, loaded.lambda, &settings);
        match run_solver(&loaded.model, &config) {
            Ok(result) => {
                let eval_on = loaded.test.as_ref().unwrap_or(loaded.model.data());
                let metric = predict_metrics(&result.w, eval_on, eval_on.task)
                    .map_or(f64::NAN, |m| m.value());
                format!(
                    "{},{},{},{:.6},{},{},{},{}",
                    name,
                    algorithm.name(),
                    s,
                    result.wall_time,
                    result.ge,
                    result.cg,
                    metric,
                    result.status == SolveStatus::Converged
                )
            }
            Err(err) => {
                eprintln!("warning: {} failed: {err:#}", algorithm.name());
                format!("{},{},{},NaN,0,0,NaN,false", name, algorithm.name(), s)
            }
        }
    });

    write_table(args.table.as_deref(), BENCH_HEADER, &rows)?;
    Ok(ExitCode::from(0))
}

fn cmd_transition(args: TransitionArgs) -> Result<ExitCode> {
    let algorithms = parse_algorithms(&args.alg)?;
    if args.s_grid.is_empty() {
        bail!("at least one sparsity fraction is required");
    }
    let loaded = load(
        &args.data.data,
        args.data.test.as_deref(),
        args.data.split_frac,
        args.data.loss,
        args.data.mu,
        args.data.seed,
        args.tuning.lambda,
    )?;
    let m = loaded.model.samples();
    let n = loaded.model.dim();
    let settings = args.tuning.settings();
    let threads = args.threads.unwrap_or(1);

    let mut jobs = Vec::new();
    for &fraction in &args.s_grid {
        if !(fraction > 0.0 && fraction.is_finite()) {
            bail!("sparsity fraction {fraction} must be positive");
        }
        let wanted = ((fraction * m as f64).ceil() as usize).max(1);
        let s = wanted.min(n);
        if s < wanted {
            eprintln!("warning: fraction {fraction} wants s={wanted}; clamped to n={n}");
        }
        for &algorithm in &algorithms {
            jobs.push((fraction, s, algorithm));
        }
    }

    let rows = run_indexed(&jobs, threads, |&(fraction, s, algorithm)| {
        let config = build_config(algorithm, s, loaded.lambda, &settings);
        match run_solver(&loaded.model, &config) {
            Ok(result) => format!(
                "{},{},{},{:.6},{},{},{}",
                fraction,
                s,
                algorithm.name(),
                result.wall_time,
                result.ge,
                result.cg,
                result.status == SolveStatus::Converged
            ),
            Err(err) => {
                eprintln!("warning: {} at fraction {fraction} failed: {err:#}", algorithm.name());
                format!("{},{},{},NaN,0,0,false", fraction, s, algorithm.name())
            }
        }
    });

    write_table(args.table.as_deref(), TRANSITION_HEADER, &rows)?;
    Ok(ExitCode::from(0))
}
