//! Inner smooth solver for an identified subspace: truncated Newton steps
//! obtained from preconditioned conjugate gradients with an adaptive
//! model-decrease termination rule, globalized by Armijo backtracking.
//! Optionally damps the operator to keep it positive definite.

use crate::dataio::{col_weighted_sqnorms, matvec_cols};
use crate::error::{Error, Result};
use crate::model::{EvalCounters, LinearState, Model};
use crate::sparsity::{SparseIterate, SupportSet};

/// Damping term `c ||grad||^rho I` added to the Newton operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Damping {
    pub c: f64,
    pub rho: f64,
}

/// Tunables of the Newton stage.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonParams {
    /// Newton steps taken per engagement.
    pub t_steps: usize,
    /// Armijo backtracking shrink factor.
    pub beta: f64,
    /// Armijo slope fraction.
    pub sigma2: f64,
    /// CG iteration cap; defaults to the subspace dimension.
    pub max_cg: Option<usize>,
    pub damping: Option<Damping>,
    /// Line search fails once the step drops below this.
    pub alpha_min_ls: f64,
    /// Run CG to the iteration cap, ignoring the adaptive rule. Used to
    /// validate directions against direct solves.
    pub exact_cg: bool,
}

impl Default for NewtonParams {
    fn default() -> Self {
        Self {
            t_steps: 1,
            beta: 0.5,
            sigma2: 0.001,
            max_cg: None,
            damping: None,
            alpha_min_ls: 1e-10,
            exact_cg: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgTermination {
    Rule,
    MaxIter,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub q_final: f64,
    pub terminated_by: CgTermination,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsnStatus {
    Succeeded,
    Failed,
}

/// Outcome of a Newton engagement. On failure the caller discards the state
/// and falls back to the plain iterate.
#[derive(Debug, Clone)]
pub struct SsnResult {
    pub state: LinearState,
    pub status: SsnStatus,
    pub cg_iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Approximately solves `H p = -g` by preconditioned conjugate gradients,
/// where `hvp` applies the (damped) operator and `precond_diag` holds its
/// diagonal (floored at 1e-12 to stay invertible).
///
/// Tracks the quadratic model `Q(p) = <g,p> + (1/2)<p,Hp>` through the
/// identity `Q = (<g,p> + <p, Hp+g>)/2`, which is free given the CG
/// residual, and stops either at the iteration cap or once
/// `(Q_i - Q_{i-1}) / (Q_i / i) <= min(0.5, sqrt(<g, M^-1 g>))`.
/// `Q_i = 0` makes the ratio +infinity, forcing continuation.
pub fn pcg_solve<F>(
    mut hvp: F,
    g: &[f64],
    precond_diag: &[f64],
    params: &NewtonParams,
) -> Result<(Vec<f64>, CgStats)>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let dim = g.len();
    let max_cg = params.max_cg.unwrap_or(dim).max(1);
    let minv: Vec<f64> = precond_diag.iter().map(|&d| 1.0 / d.max(1e-12)).collect();

    let mut p = vec![0.0; dim];
    // residual of Hp = -g at p = 0
    let mut r: Vec<f64> = g.iter().map(|&gi| -gi).collect();
    let gmg: f64 = g.iter().zip(&minv).map(|(&gi, &mi)| gi * gi * mi).sum();
    let threshold = 0.5f64.min(gmg.sqrt());

    let mut z: Vec<f64> = r.iter().zip(&minv).map(|(&ri, &mi)| ri * mi).collect();
    let mut rz = dot(&r, &z);
    let rz0 = rz;
    if !(rz > 0.0) {
        if !rz.is_finite() {
            return Err(Error::Numeric("non-finite gradient in PCG".into()));
        }
        // zero right-hand side: the Newton direction is zero
        return Ok((p, CgStats { iterations: 0, q_final: 0.0, terminated_by: CgTermination::Rule }));
    }
    let mut dir = z.clone();
    let mut q = 0.0f64;
    let mut q_prev = 0.0f64;

    for i in 1..=max_cg {
        let hd = hvp(&dir);
        let dhd = dot(&dir, &hd);
        if !dhd.is_finite() {
            return Err(Error::Numeric("non-finite curvature in PCG".into()));
        }
        if dhd <= 0.0 {
            // direction in the operator's nullspace; keep the current iterate
            return Ok((
                p,
                CgStats { iterations: i - 1, q_final: q, terminated_by: CgTermination::Rule },
            ));
        }
        let alpha = rz / dhd;
        axpy(alpha, &dir, &mut p);
        axpy(-alpha, &hd, &mut r);
        // Hp + g = -r, so Q(p) = (<g,p> - <p,r>)/2
        q = 0.5 * (dot(g, &p) - dot(&p, &r));
        if !q.is_finite() {
            return Err(Error::Numeric("non-finite model value in PCG".into()));
        }
        if !params.exact_cg {
            let ratio = if q == 0.0 { f64::INFINITY } else { (q - q_prev) / (q / i as f64) };
            if ratio <= threshold {
                return Ok((
                    p,
                    CgStats { iterations: i, q_final: q, terminated_by: CgTermination::Rule },
                ));
            }
        }
        q_prev = q;
        for (zi, (&ri, &mi)) in z.iter_mut().zip(r.iter().zip(&minv)) {
            *zi = ri * mi;
        }
        let rz_next = dot(&r, &z);
        if rz_next <= 1e-32 * rz0 {
            // solved to the numerical floor
            return Ok((
                p,
                CgStats { iterations: i, q_final: q, terminated_by: CgTermination::Rule },
            ));
        }
        let beta = rz_next / rz;
        for (di, &zi) in dir.iter_mut().zip(&z) {
            *di = zi + beta * *di;
        }
        rz = rz_next;
    }
    Ok((p, CgStats { iterations: max_cg, q_final: q, terminated_by: CgTermination::MaxIter }))
}

/// Armijo backtracking along `p` from the restricted point held by `state`
/// (whose support is the active subspace). Returns the accepted step and the
/// updated state, or None when `p` is not a descent direction or the step
/// shrinks below `alpha_min_ls`.
pub fn armijo_search(
    model: &Model,
    state: &LinearState,
    p: &[f64],
    grad_j: &[f64],
    params: &NewtonParams,
) -> Option<(f64, LinearState)> {
    let cols = state.w().support();
    assert_eq!(p.len(), cols.len(), "direction length must match the subspace");
    let slope = dot(grad_j, p);
    if !(slope < 0.0) {
        return None;
    }
    let xp = matvec_cols(&model.data().x, cols, p);
    let f0 = state.objective();
    let mu = model.loss().mu();
    let y = &model.data().y;

    let mut step = 1.0;
    while step >= params.alpha_min_ls {
        let vals: Vec<f64> =
            state.w().values().iter().zip(p).map(|(&wv, &pv)| wv + step * pv).collect();
        let zt: Vec<f64> = state.z().iter().zip(&xp).map(|(&zi, &xi)| zi + step * xi).collect();
        let mut ft: f64 =
            zt.iter().zip(y).map(|(&zi, &yi)| model.loss().eval_elem(zi, yi).0).sum();
        ft += 0.5 * mu * vals.iter().map(|v| v * v).sum::<f64>();
        if ft.is_finite() && ft <= f0 + params.sigma2 * step * slope {
            let w = SparseIterate::new(cols.to_vec(), vals, state.w().ambient_dim());
            let next = model
                .state_from_z(w, zt, state.updates_since_refresh() + 1)
                .ok()?;
            return Some((step, next));
        }
        step *= params.beta;
    }
    None
}

/// Runs `t_steps` truncated Newton steps on the restriction to `subspace`,
/// starting from `w_start` (whose support must lie inside the subspace).
/// Coordinates outside the subspace stay exactly zero. Each Hessian-vector
/// product increments the global CG counter. A failed line search or a
/// non-finite intermediate reports `Failed`; the caller then discards the
/// result.
pub fn ssn_steps(
    model: &Model,
    subspace: &SupportSet,
    w_start: &SparseIterate,
    params: &NewtonParams,
    counters: &mut EvalCounters,
) -> Result<SsnResult> {
    let cols = subspace.indices();
    debug_assert!(
        w_start.support().iter().all(|j| cols.binary_search(j).is_ok()),
        "starting support must lie inside the subspace"
    );
    let embedded = SparseIterate::new(cols.to_vec(), w_start.values_on(cols), w_start.ambient_dim());
    let mut state = model.make_state(embedded)?;
    let mut cg_total = 0usize;

    for _ in 0..params.t_steps {
        let grad_j = model.restricted_gradient(&state, cols);
        let gnorm = dot(&grad_j, &grad_j).sqrt();
        if gnorm == 0.0 {
            break;
        }
        if !gnorm.is_finite() {
            return Ok(SsnResult { state, status: SsnStatus::Failed, cg_iterations: cg_total });
        }
        let delta = params.damping.map_or(0.0, |d| d.c * gnorm.powf(d.rho));
        let mut precond = col_weighted_sqnorms(&model.data().x, cols, state.gsecond());
        let shift = model.loss().mu() + delta;
        for d in precond.iter_mut() {
            *d += shift;
        }
        let solved = {
            let op = |v: &[f64]| {
                let mut h = model.hvp_restricted(&state, cols, v, counters);
                if delta > 0.0 {
                    axpy(delta, v, &mut h);
                }
                h
            };
            pcg_solve(op, &grad_j, &precond, params)
        };
        let (p, stats) = match solved {
            Ok(out) => out,
            Err(_) => {
                return Ok(SsnResult { state, status: SsnStatus::Failed, cg_iterations: cg_total })
            }
        };
        cg_total += stats.iterations;
        if p.iter().all(|&v| v == 0.0) {
            break;
        }
        match armijo_search(model, &state, &p, &grad_j, params) {
            Some((_, next)) => state = next,
            None => {
                return Ok(SsnResult { state, status: SsnStatus::Failed, cg_iterations: cg_total })
            }
        }
    }
    Ok(SsnResult { state, status: SsnStatus::Succeeded, cg_iterations: cg_total })
}
