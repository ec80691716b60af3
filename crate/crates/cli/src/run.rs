//! Data loading, run orchestration, and the worker pool shared by the
//! benchmark and transition commands.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use bestsubset::{
    parse_libsvm, solve, split_train_test, Algorithm, Dataset, LossSpec, Model, SolveResult,
    SolverConfig, SparseIterate, SpectralMode, StepSizeRule, Task,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum LossKind {
    /// Least squares regression
    Ls,
    /// Ridge-regularized logistic regression
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SpectralKind {
    Exact,
    Bb,
}

impl SpectralKind {
    pub fn mode(self) -> SpectralMode {
        match self {
            SpectralKind::Exact => SpectralMode::Exact,
            SpectralKind::Bb => SpectralMode::Bb,
        }
    }
}

pub struct Loaded {
    pub model: Model,
    pub test: Option<Dataset>,
    /// Resolved projected-gradient step size 0.999 / L (or the override).
    pub lambda: f64,
    /// Seconds spent estimating L; reported separately from solve time.
    pub l_seconds: f64,
}

/// Parses the training (and optional test) file, reconciles widths, applies
/// an optional held-out split, and validates the labels against the loss.
pub fn load(
    data_path: &Path,
    test_path: Option<&Path>,
    split_frac: Option<f64>,
    loss_kind: LossKind,
    mu: f64,
    seed: u64,
    lambda_override: Option<f64>,
) -> Result<Loaded> {
    let read = |path: &Path, min_width: usize| -> Result<Dataset> {
        let file =
            File::open(path).with_context(|| format!("opening data file {}", path.display()))?;
        parse_libsvm(BufReader::new(file), Task::Regression, min_width)
            .with_context(|| format!("parsing {}", path.display()))
    };
    let mut train = read(data_path, 0)?;
    let mut test = match test_path {
        Some(p) => {
            let t = read(p, train.cols())?;
            if t.cols() > train.cols() {
                train.x.widen_to(t.cols());
            }
            Some(t)
        }
        None => None,
    };
    if let Some(frac) = split_frac {
        let (a, b) = split_train_test(&train, frac, seed)?;
        train = a;
        test = Some(b);
    }

    let loss = match loss_kind {
        LossKind::Ls => LossSpec::LeastSquares,
        LossKind::Logistic => LossSpec::Logistic { mu },
    };
    // rebuild with the task implied by the loss; logistic requires the raw
    // labels to be exactly +-1, which catches task mismatches
    let retask = |ds: Dataset| -> Result<Dataset> {
        Dataset::new(ds.x, ds.y, loss.task()).map_err(Into::into)
    };
    let train = retask(train)?;
    let test = test.map(retask).transpose()?;

    let model = Model::new(train, loss)?;
    let started = std::time::Instant::now();
    let lambda = match lambda_override {
        Some(v) => v,
        None => 0.999 / model.lipschitz_estimate()?,
    };
    let l_seconds = started.elapsed().as_secs_f64();
    Ok(Loaded { model, test, lambda, l_seconds })
}

/// Resolves the sparsity level from either an absolute count or a fraction
/// of the training rows (rounded up, at least 1).
pub fn resolve_s(s: Option<usize>, s_frac: Option<f64>, rows: usize) -> Result<usize> {
    match (s, s_frac) {
        (Some(v), None) => {
            if v < 1 {
                bail!("sparsity level must be at least 1");
            }
            Ok(v)
        }
        (None, Some(f)) => {
            if !(f > 0.0 && f.is_finite()) {
                bail!("sparsity fraction must be positive");
            }
            Ok(((f * rows as f64).ceil() as usize).max(1))
        }
        (None, None) => bail!("one of --s or --s-frac is required"),
        (Some(_), Some(_)) => bail!("--s and --s-frac are mutually exclusive"),
    }
}

pub fn parse_algorithms(names: &[String]) -> Result<Vec<Algorithm>> {
    if names.is_empty() {
        bail!("at least one algorithm is required");
    }
    names
        .iter()
        .map(|name| {
            Algorithm::from_name(name)
                .ok_or_else(|| anyhow::anyhow!("unknown algorithm `{name}` (pg, apg, pg+, apg+)"))
        })
        .collect()
}

pub struct SolveSettings {
    pub tolerance: f64,
    pub max_iter: usize,
    pub spectral: SpectralKind,
}

pub fn build_config(
    algorithm: Algorithm,
    s: usize,
    lambda: f64,
    settings: &SolveSettings,
) -> SolverConfig {
    let mut config = SolverConfig::new(algorithm, s);
    config.step_size = StepSizeRule::Fixed(lambda);
    config.tolerance = settings.tolerance;
    config.max_iter = settings.max_iter;
    config.spectral_mode = settings.spectral.mode();
    config
}

pub fn run_solver(model: &Model, config: &SolverConfig) -> Result<SolveResult> {
    let w0 = SparseIterate::zeros(model.dim());
    Ok(solve(model, config, &w0)?)
}

/// Runs `work` over the jobs on up to `threads` workers; results come back
/// in job order regardless of completion order.
pub fn run_indexed<J, T, F>(jobs: &[J], threads: usize, work: F) -> Vec<T>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> T + Sync,
{
    let workers = threads.max(1).min(jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let out = work(&jobs[i]);
                *slots[i].lock().unwrap() = Some(out);
            });
        }
    });
    slots.into_iter().map(|slot| slot.into_inner().unwrap().expect("worker filled slot")).collect()
}

/// Dataset display name: the file stem of the training path.
pub fn dataset_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}
