//! Outer solvers: projected gradient, same-subspace extrapolated
//! acceleration, and the two-stage variants that switch to truncated Newton
//! steps once consecutive iterates keep activating the same subspace.
//!
//! All four algorithms run through one loop. Each outer iteration evaluates
//! exactly one full gradient (at the intermediate point z), reuses it for
//! both the stopping residual and the projected gradient step, and emits one
//! trace record. Extrapolation trials and Newton stages work on restricted
//! quantities only, so their cost never includes a pass over the whole
//! matrix.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::model::{EvalCounters, LinearState, Model};
use crate::newton::{ssn_steps, Damping, NewtonParams, SsnStatus};
use crate::sparsity::{
    gradient_step_dense, project_topk, residual_from_grad, same_support, SparseIterate, SupportSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Pg,
    Apg,
    PgPlus,
    ApgPlus,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Pg => "pg",
            Algorithm::Apg => "apg",
            Algorithm::PgPlus => "pg+",
            Algorithm::ApgPlus => "apg+",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "pg" => Some(Algorithm::Pg),
            "apg" => Some(Algorithm::Apg),
            "pg+" | "pg_plus" => Some(Algorithm::PgPlus),
            "apg+" | "apg_plus" => Some(Algorithm::ApgPlus),
            _ => None,
        }
    }

    fn extrapolates(self) -> bool {
        matches!(self, Algorithm::Apg | Algorithm::ApgPlus)
    }

    fn identifies(self) -> bool {
        matches!(self, Algorithm::PgPlus | Algorithm::ApgPlus)
    }
}

/// Projected-gradient step size: automatic (0.999 / L with L estimated from
/// the data) or a fixed override.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSizeRule {
    Auto,
    Fixed(f64),
}

/// Which curvature estimate initializes the extrapolation step: the
/// Barzilai-Borwein quotient from iterate and gradient differences, or the
/// exact directional curvature along the iterate difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralMode {
    Bb,
    Exact,
}

/// Every tunable of the solvers, with the implementation defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// Sparsity level s.
    pub sparsity: usize,
    pub step_size: StepSizeRule,
    /// Shrink factor for the extrapolation backtracking line search.
    pub backtrack_shrink: f64,
    /// Sufficient-decrease coefficient for accepting an extrapolation step.
    pub sufficient_decrease: f64,
    /// Minimum cosine between the iterate difference and the negative
    /// restricted gradient for extrapolation to proceed.
    pub min_alignment: f64,
    /// Safeguard clip interval for the spectral step, as multiples of the
    /// gradient-to-direction scale.
    pub step_clip_min: f64,
    pub step_clip_max: f64,
    /// Consecutive same-subspace iterations before the Newton stage engages.
    pub identify_after: usize,
    /// Newton steps taken per engagement.
    pub newton_steps: usize,
    /// Armijo parameters of the Newton line search.
    pub armijo_shrink: f64,
    pub armijo_slope: f64,
    /// Minimum Armijo step before the Newton stage reports failure.
    pub armijo_min_step: f64,
    /// Stopping threshold on the first-order residual.
    pub tolerance: f64,
    pub max_iter: usize,
    /// Extrapolation line-search trials before the step is rejected.
    pub max_backtracks: usize,
    pub spectral_mode: SpectralMode,
    pub damping: Option<Damping>,
    /// Chained O(m) extrapolation updates between from-scratch refreshes of
    /// the cached z vector.
    pub refresh_period: usize,
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm, sparsity: usize) -> Self {
        Self {
            algorithm,
            sparsity,
            step_size: StepSizeRule::Auto,
            backtrack_shrink: 0.5,
            sufficient_decrease: 0.05,
            min_alignment: 1e-20,
            step_clip_min: 1.0,
            step_clip_max: 100.0,
            identify_after: 5,
            newton_steps: 1,
            armijo_shrink: 0.5,
            armijo_slope: 0.001,
            armijo_min_step: 1e-10,
            tolerance: 1e-6,
            max_iter: 10_000,
            max_backtracks: 50,
            spectral_mode: SpectralMode::Exact,
            damping: None,
            refresh_period: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64, name: &str| -> Result<()> {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} must lie in (0, 1)")))
            }
        };
        if self.sparsity < 1 {
            return Err(Error::Config("sparsity level must be at least 1".into()));
        }
        unit(self.backtrack_shrink, "backtrack_shrink")?;
        unit(self.sufficient_decrease, "sufficient_decrease")?;
        unit(self.armijo_shrink, "armijo_shrink")?;
        unit(self.armijo_slope, "armijo_slope")?;
        if !(self.min_alignment > 0.0 && self.min_alignment < 1.0) {
            return Err(Error::Config("min_alignment must lie in (0, 1)".into()));
        }
        if !(self.step_clip_min > 0.0 && self.step_clip_max >= self.step_clip_min) {
            return Err(Error::Config("need step_clip_max >= step_clip_min > 0".into()));
        }
        if self.identify_after < 1 || self.newton_steps < 1 || self.refresh_period < 1 {
            return Err(Error::Config(
                "identify_after, newton_steps, and refresh_period must be at least 1".into(),
            ));
        }
        if !(self.armijo_min_step > 0.0) {
            return Err(Error::Config("armijo_min_step must be positive".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Config("tolerance must be nonnegative".into()));
        }
        if let StepSizeRule::Fixed(v) = self.step_size {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("fixed step size {v} must be positive")));
            }
        }
        Ok(())
    }

    fn newton_params(&self) -> NewtonParams {
        NewtonParams {
            t_steps: self.newton_steps,
            beta: self.armijo_shrink,
            sigma2: self.armijo_slope,
            max_cg: None,
            damping: self.damping,
            alpha_min_ls: self.armijo_min_step,
            exact_cg: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepType {
    Pg,
    Extrapolated,
    Newton,
    NewtonFailed,
}

impl StepType {
    pub fn name(self) -> &'static str {
        match self {
            StepType::Pg => "pg",
            StepType::Extrapolated => "extrapolated",
            StepType::Newton => "newton",
            StepType::NewtonFailed => "newton_failed",
        }
    }
}

/// One row of per-iteration telemetry.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub step_type: StepType,
    /// Objective after the iteration completed (the accepted iterate, or the
    /// final point on the stopping iteration).
    pub f: f64,
    /// First-order residual measured at the intermediate point z.
    pub residual: f64,
    /// Accepted extrapolation step length; 0 when no extrapolation happened.
    pub extrapolation_t: f64,
    /// Whether this iteration's projection selected a different subspace
    /// than the previous iterate's.
    pub support_changed: bool,
    pub ge_cum: u64,
    pub cg_cum: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    NumericError,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::NumericError => "numeric_error",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub w: SparseIterate,
    pub f: f64,
    pub residual: f64,
    /// Outer iterations executed; equals the gradient-evaluation count.
    pub iterations: u64,
    pub ge: u64,
    pub cg: u64,
    /// Instrumentation: passes over the entire design matrix during the
    /// solve. Stays equal to `ge` because only full gradients sweep the
    /// whole matrix.
    pub full_passes: u64,
    pub wall_time: f64,
    pub status: SolveStatus,
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateDecision {
    Pass { zeta: f64 },
    Skip,
}

/// Extrapolation gate: both iterates must activate the same subspace, the
/// iterate difference must be nonzero, and its cosine against the negative
/// restricted gradient must reach `min_alignment`. Degenerate denominators
/// skip rather than error.
pub fn extrapolation_gate(
    prev_selected: &SupportSet,
    cur_selected: &SupportSet,
    grad_j: &[f64],
    d: &[f64],
    min_alignment: f64,
) -> GateDecision {
    if !same_support(prev_selected, cur_selected) {
        return GateDecision::Skip;
    }
    let d_norm = dot(d, d).sqrt();
    let g_norm = dot(grad_j, grad_j).sqrt();
    if d_norm == 0.0 || g_norm == 0.0 {
        return GateDecision::Skip;
    }
    let zeta = -dot(d, grad_j) / (d_norm * g_norm);
    if zeta.is_finite() && zeta >= min_alignment {
        GateDecision::Pass { zeta }
    } else {
        GateDecision::Skip
    }
}

/// Barzilai-Borwein initialization for the extrapolation step: the spectral
/// quotient `<s,s>/<s,r>` scaled onto the direction `d`. Nonpositive
/// curvature `<s,r>` signals a skip.
pub fn spectral_step_bb(s_vec: &[f64], r_vec: &[f64], grad_j: &[f64], d: &[f64]) -> Option<f64> {
    let ss = dot(s_vec, s_vec);
    let sr = dot(s_vec, r_vec);
    if !(sr > 0.0) {
        return None;
    }
    let dd = dot(d, d);
    if dd == 0.0 {
        return None;
    }
    Some(-(ss / sr) * dot(grad_j, d) / dd)
}

/// Exact 1-D Newton step along `d`: minimizes the second-order expansion
/// using the directional curvature, available in O(m) from `Xd`. Vanishing
/// curvature signals a skip.
pub fn spectral_step_exact(
    model: &Model,
    state: &LinearState,
    xd: &[f64],
    grad_dot_d: f64,
    d_norm_sq: f64,
) -> Option<f64> {
    let curvature = model.directional_curvature(state, xd, d_norm_sq);
    if curvature <= 1e-300 {
        return None;
    }
    Some(-grad_dot_d / curvature)
}

/// Clips the proposed step into `[c a_min, c a_max]` where
/// `c = ||grad_j|| / (zeta ||d||)` rescales the clip interval to the local
/// gradient-to-direction ratio.
pub fn safeguard_step(
    t_hat: f64,
    grad_j: &[f64],
    d: &[f64],
    zeta: f64,
    config: &SolverConfig,
) -> f64 {
    let g_norm = dot(grad_j, grad_j).sqrt();
    let d_norm = dot(d, d).sqrt();
    let c = g_norm / (zeta * d_norm);
    t_hat.clamp(c * config.step_clip_min, c * config.step_clip_max)
}

/// Backtracks `t = shrink^i * t_hat` until the extrapolated point satisfies
/// `f(w + t d) <= f(w) - sigma t^2 ||d||^2`. Each trial costs O(m) through
/// the cached-state update and never touches the full matrix. Returns None
/// after `max_backtracks` failed trials; the caller then proceeds from w
/// unchanged.
pub fn backtrack_extrapolation(
    model: &Model,
    state_k: &LinearState,
    state_prev: &LinearState,
    d_norm_sq: f64,
    t_hat: f64,
    config: &SolverConfig,
) -> Option<(f64, LinearState)> {
    let f0 = state_k.objective();
    let mut t = t_hat;
    for _ in 0..config.max_backtracks {
        if let Ok(trial) = model.update_extrapolated(state_k, state_prev, t, config.refresh_period)
        {
            if trial.objective() <= f0 - config.sufficient_decrease * t * t * d_norm_sq {
                return Some((t, trial));
            }
        }
        t *= config.backtrack_shrink;
    }
    None
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Attempts the full extrapolation pipeline for one iteration: gate,
/// spectral initialization, safeguard, and sufficient-decrease backtracking.
fn try_extrapolation(
    model: &Model,
    state: &LinearState,
    prev_state: &LinearState,
    prev_selected: &SupportSet,
    cur_selected: &SupportSet,
    config: &SolverConfig,
) -> Option<(f64, LinearState)> {
    let cols = cur_selected.indices();
    let wk = state.w().values_on(cols);
    let wp = prev_state.w().values_on(cols);
    let d: Vec<f64> = wk.iter().zip(&wp).map(|(&a, &b)| a - b).collect();
    let grad_j = model.restricted_gradient(state, cols);
    let zeta = match extrapolation_gate(prev_selected, cur_selected, &grad_j, &d, config.min_alignment)
    {
        GateDecision::Pass { zeta } => zeta,
        GateDecision::Skip => return None,
    };
    let grad_dot_d = dot(&grad_j, &d);
    let d_norm_sq = dot(&d, &d);
    let t_hat = match config.spectral_mode {
        SpectralMode::Exact => {
            // Xd is the O(m) difference of the cached z vectors
            let xd: Vec<f64> =
                state.z().iter().zip(prev_state.z()).map(|(&zk, &zp)| zk - zp).collect();
            spectral_step_exact(model, state, &xd, grad_dot_d, d_norm_sq)?
        }
        SpectralMode::Bb => {
            let grad_j_prev = model.restricted_gradient(prev_state, cols);
            let r: Vec<f64> = grad_j.iter().zip(&grad_j_prev).map(|(&a, &b)| a - b).collect();
            spectral_step_bb(&d, &r, &grad_j, &d)?
        }
    };
    let t_safe = safeguard_step(t_hat, &grad_j, &d, zeta, config);
    backtrack_extrapolation(model, state, prev_state, d_norm_sq, t_safe, config)
}

/// Runs the configured algorithm from `w0` (feasible: at most s nonzeros).
///
/// Per iteration: choose the intermediate point z (plain, extrapolated, or
/// Newton), evaluate the gradient there, measure the stopping residual from
/// that same gradient and projection, then complete the projected gradient
/// step. Stops once the residual drops below the tolerance or the iteration
/// budget is exhausted, returning the point whose residual was measured.
pub fn solve(model: &Model, config: &SolverConfig, w0: &SparseIterate) -> Result<SolveResult> {
    config.validate()?;
    if w0.ambient_dim() != model.dim() {
        return Err(Error::Config("starting point dimension mismatch".into()));
    }
    if w0.nnz() > config.sparsity {
        return Err(Error::Config(format!(
            "starting point has {} nonzeros, above the sparsity level {}",
            w0.nnz(),
            config.sparsity
        )));
    }
    let lambda = match config.step_size {
        StepSizeRule::Fixed(v) => v,
        StepSizeRule::Auto => 0.999 / model.lipschitz_estimate()?,
    };
    let s = config.sparsity;
    let newton_params = config.newton_params();

    let mut counters = EvalCounters::default();
    let started = Instant::now();
    let mut trace: Vec<TraceRecord> = Vec::new();

    let numeric_failure = |w: &SparseIterate,
                           f: f64,
                           residual: f64,
                           counters: EvalCounters,
                           trace: Vec<TraceRecord>,
                           started: Instant| SolveResult {
        w: w.clone(),
        f,
        residual,
        iterations: counters.gradient_evals,
        ge: counters.gradient_evals,
        cg: counters.hvps,
        full_passes: counters.full_passes,
        wall_time: started.elapsed().as_secs_f64(),
        status: SolveStatus::NumericError,
        trace,
    };

    let mut state = match model.make_state(w0.clone()) {
        Ok(st) => st,
        Err(_) => {
            return Ok(numeric_failure(w0, f64::NAN, f64::NAN, counters, trace, started));
        }
    };
    // the subspace activated by the starting point
    let mut sel_cur = project_topk(&state.w().to_dense(), s).selected;
    let mut sel_prev: Option<SupportSet> = None;
    let mut prev_state: Option<LinearState> = None;
    let mut unchanged = 0usize;
    let max_records = config.max_iter.max(1);

    let mut k = 0usize;
    loop {
        let same = sel_prev.as_ref().is_some_and(|p| same_support(p, &sel_cur));
        if config.algorithm.identifies() && k > 0 {
            unchanged = if same { unchanged + 1 } else { 0 };
        }

        // intermediate point z for this iteration
        let mut step_type = StepType::Pg;
        let mut t_used = 0.0;
        let mut z_state: Option<LinearState> = None;
        if config.algorithm.identifies() && unchanged >= config.identify_after {
            match ssn_steps(model, &sel_cur, state.w(), &newton_params, &mut counters) {
                Ok(out) if out.status == SsnStatus::Succeeded => {
                    z_state = Some(out.state);
                    step_type = StepType::Newton;
                }
                _ => {
                    unchanged = 0;
                    step_type = StepType::NewtonFailed;
                }
            }
        } else if config.algorithm.extrapolates() && same {
            if let (Some(prev), Some(psel)) = (&prev_state, &sel_prev) {
                if let Some((t, st)) =
                    try_extrapolation(model, &state, prev, psel, &sel_cur, config)
                {
                    t_used = t;
                    z_state = Some(st);
                    step_type = StepType::Extrapolated;
                }
            }
        }
        let z_ref: &LinearState = z_state.as_ref().unwrap_or(&state);

        // one full gradient per iteration, shared by the residual and the step
        let grad = model.full_gradient(z_ref, &mut counters);
        let stepped = gradient_step_dense(z_ref.w(), &grad, lambda);
        let outcome = project_topk(&stepped, s);
        let res = residual_from_grad(z_ref.w(), &grad, &outcome, lambda);
        if !res.is_finite() {
            return Ok(numeric_failure(z_ref.w(), z_ref.objective(), res, counters, trace, started));
        }
        let support_changed = !same_support(&outcome.selected, &sel_cur);
        let converged = res < config.tolerance;
        let stopping = converged || k + 1 >= max_records;

        let record_f;
        let mut next_state = None;
        if stopping {
            record_f = z_ref.objective();
        } else {
            match model.make_state(outcome.point.clone()) {
                Ok(st) => {
                    record_f = st.objective();
                    next_state = Some(st);
                }
                Err(_) => {
                    return Ok(numeric_failure(
                        z_ref.w(),
                        z_ref.objective(),
                        res,
                        counters,
                        trace,
                        started,
                    ));
                }
            }
        }
        trace.push(TraceRecord {
            k,
            step_type,
            f: record_f,
            residual: res,
            extrapolation_t: t_used,
            support_changed,
            ge_cum: counters.gradient_evals,
            cg_cum: counters.hvps,
        });

        if stopping {
            let status = if converged { SolveStatus::Converged } else { SolveStatus::MaxIter };
            let final_state = z_state.unwrap_or(state);
            return Ok(SolveResult {
                w: final_state.w().clone(),
                f: final_state.objective(),
                residual: res,
                iterations: counters.gradient_evals,
                ge: counters.gradient_evals,
                cg: counters.hvps,
                full_passes: counters.full_passes,
                wall_time: started.elapsed().as_secs_f64(),
                status,
                trace,
            });
        }

        prev_state = Some(std::mem::replace(&mut state, next_state.unwrap()));
        sel_prev = Some(std::mem::replace(&mut sel_cur, outcome.selected));
        k += 1;
    }
}
