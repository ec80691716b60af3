//! The sparsity set: hard-thresholding projection with deterministic tie
//! breaking, support bookkeeping, the scaled fixed-point residual used as the
//! stopping rule, and a brute-force best-subset oracle for tests.

use crate::error::{Error, Result};
use crate::model::{EvalCounters, LinearState, Model};

/// A sparse point: sorted support indices with matching values inside an
/// ambient dimension. Values may be zero; indices are strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseIterate {
    support: Vec<usize>,
    values: Vec<f64>,
    ambient_dim: usize,
}

impl SparseIterate {
    pub fn new(support: Vec<usize>, values: Vec<f64>, ambient_dim: usize) -> Self {
        assert_eq!(support.len(), values.len(), "support and values must have equal length");
        assert!(
            support.windows(2).all(|w| w[0] < w[1]),
            "support indices must be strictly increasing"
        );
        assert!(support.last().is_none_or(|&j| j < ambient_dim), "index out of range");
        Self { support, values, ambient_dim }
    }

    pub fn zeros(ambient_dim: usize) -> Self {
        Self { support: Vec::new(), values: Vec::new(), ambient_dim }
    }

    /// Keeps only the nonzero entries of a dense vector.
    pub fn from_dense(dense: &[f64]) -> Self {
        let mut support = Vec::new();
        let mut values = Vec::new();
        for (j, &v) in dense.iter().enumerate() {
            if v != 0.0 {
                support.push(j);
                values.push(v);
            }
        }
        Self { support, values, ambient_dim: dense.len() }
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn nnz(&self) -> usize {
        self.support.len()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.ambient_dim];
        for (&j, &v) in self.support.iter().zip(&self.values) {
            out[j] = v;
        }
        out
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Values embedded on the listed (sorted) index set; indices outside the
    /// support contribute zero.
    pub fn values_on(&self, cols: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; cols.len()];
        let mut k = 0;
        for (&j, &v) in self.support.iter().zip(&self.values) {
            while k < cols.len() && cols[k] < j {
                k += 1;
            }
            if k == cols.len() {
                break;
            }
            if cols[k] == j {
                out[k] = v;
            }
        }
        out
    }

    /// Dense difference `self - other`.
    pub fn sub_dense(&self, other: &SparseIterate) -> Vec<f64> {
        assert_eq!(self.ambient_dim, other.ambient_dim);
        let mut out = self.to_dense();
        for (&j, &v) in other.support.iter().zip(&other.values) {
            out[j] -= v;
        }
        out
    }

    /// `self + t (self - prev)` over the merged supports, dropping exact
    /// zeros. Both points are expected to live in one subspace.
    pub(crate) fn combine_extrapolated(&self, prev: &SparseIterate, t: f64) -> SparseIterate {
        let mut support = Vec::with_capacity(self.support.len().max(prev.support.len()));
        let mut values = Vec::with_capacity(support.capacity());
        let (mut a, mut b) = (0usize, 0usize);
        let mut push = |j: usize, cur: f64, old: f64| {
            let v = cur + t * (cur - old);
            if v != 0.0 {
                support.push(j);
                values.push(v);
            }
        };
        while a < self.support.len() || b < prev.support.len() {
            match (self.support.get(a), prev.support.get(b)) {
                (Some(&ja), Some(&jb)) if ja == jb => {
                    push(ja, self.values[a], prev.values[b]);
                    a += 1;
                    b += 1;
                }
                (Some(&ja), Some(&jb)) if ja < jb => {
                    push(ja, self.values[a], 0.0);
                    a += 1;
                }
                (Some(_), Some(_)) | (None, Some(_)) => {
                    push(prev.support[b], 0.0, prev.values[b]);
                    b += 1;
                }
                (Some(&ja), None) => {
                    push(ja, self.values[a], 0.0);
                    a += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        SparseIterate { support, values, ambient_dim: self.ambient_dim }
    }

    /// Squared distance to another sparse point over the merged supports.
    pub fn dist_sq(&self, other: &SparseIterate) -> f64 {
        assert_eq!(self.ambient_dim, other.ambient_dim);
        let mut sum = 0.0;
        let (mut a, mut b) = (0usize, 0usize);
        while a < self.support.len() || b < other.support.len() {
            let d = match (self.support.get(a), other.support.get(b)) {
                (Some(&ja), Some(&jb)) if ja == jb => {
                    let d = self.values[a] - other.values[b];
                    a += 1;
                    b += 1;
                    d
                }
                (Some(&ja), Some(&jb)) if ja < jb => {
                    let d = self.values[a];
                    a += 1;
                    d
                }
                (Some(_), Some(_)) | (None, Some(_)) => {
                    let d = -other.values[b];
                    b += 1;
                    d
                }
                (Some(_), None) => {
                    let d = self.values[a];
                    a += 1;
                    d
                }
                (None, None) => unreachable!(),
            };
            sum += d * d;
        }
        sum
    }
}

/// A sorted set of retained coordinate indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportSet {
    indices: Vec<usize>,
}

impl SupportSet {
    pub fn new(indices: Vec<usize>) -> Self {
        assert!(indices.windows(2).all(|w| w[0] < w[1]), "indices must be sorted and unique");
        Self { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// True iff both sets retain exactly the same coordinates.
pub fn same_support(a: &SupportSet, b: &SupportSet) -> bool {
    a.indices == b.indices
}

/// Result of projecting onto the sparsity set: the projected point, the
/// full s-element set of retained coordinates (kept at size min(s, n) even
/// when some retained values are zero, so consecutive selections can be
/// compared as equal-size sets), and whether the projection was unique
/// (strict gap between the s-th and (s+1)-th largest magnitudes).
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionOutcome {
    pub point: SparseIterate,
    pub selected: SupportSet,
    pub unique: bool,
}

/// Euclidean projection onto `{w : ||w||_0 <= s}`: keeps the s entries of
/// largest magnitude and zeroes the rest. Magnitude ties break toward the
/// lower index, which makes the projection a deterministic single-valued
/// map.
pub fn project_topk(v: &[f64], s: usize) -> ProjectionOutcome {
    assert!(s >= 1, "sparsity level must be at least 1");
    let n = v.len();
    let k = s.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    // descending magnitude, ties toward the lower index
    let cmp = |a: &usize, b: &usize| {
        v[*b].abs().total_cmp(&v[*a].abs()).then_with(|| a.cmp(b))
    };
    let unique = if k == n {
        true
    } else {
        let (_, boundary, rest) = order.select_nth_unstable_by(k - 1, cmp);
        let boundary_mag = v[*boundary].abs();
        let rest_max = rest.iter().map(|&i| v[i].abs()).fold(0.0f64, f64::max);
        boundary_mag > rest_max
    };
    let mut selected = order[..k].to_vec();
    selected.sort_unstable();
    let mut support = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);
    for &j in &selected {
        if v[j] != 0.0 {
            support.push(j);
            values.push(v[j]);
        }
    }
    ProjectionOutcome {
        point: SparseIterate::new(support, values, n),
        selected: SupportSet::new(selected),
        unique,
    }
}

/// Dense gradient step `w - lambda * grad`.
pub(crate) fn gradient_step_dense(w: &SparseIterate, grad: &[f64], lambda: f64) -> Vec<f64> {
    let mut out: Vec<f64> = grad.iter().map(|&g| -lambda * g).collect();
    for (&j, &v) in w.support().iter().zip(w.values()) {
        out[j] += v;
    }
    out
}

/// Scaled fixed-point gap given the pieces the caller already has:
/// `||w - P(w - lambda grad)|| / (1 + ||w|| + lambda ||grad||)`.
pub fn residual_from_grad(
    w: &SparseIterate,
    grad: &[f64],
    projected: &ProjectionOutcome,
    lambda: f64,
) -> f64 {
    let gap = w.dist_sq(&projected.point).sqrt();
    let wnorm = w.norm_sq().sqrt();
    let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    gap / (1.0 + wnorm + lambda * gnorm)
}

/// One projected gradient step `P(w - lambda grad f(w))`, returning the new
/// state (built from scratch) and the projection outcome. Costs one full
/// gradient evaluation.
pub fn pg_step(
    model: &Model,
    state: &LinearState,
    lambda: f64,
    s: usize,
    counters: &mut EvalCounters,
) -> Result<(LinearState, ProjectionOutcome)> {
    let grad = model.full_gradient(state, counters);
    let stepped = gradient_step_dense(state.w(), &grad, lambda);
    let outcome = project_topk(&stepped, s);
    let new_state = model.make_state(outcome.point.clone())?;
    Ok((new_state, outcome))
}

/// First-order optimality residual at the state's point. Evaluates one full
/// gradient; solvers instead reuse the gradient already computed for the
/// step via [`residual_from_grad`].
pub fn residual(
    model: &Model,
    state: &LinearState,
    lambda: f64,
    s: usize,
    counters: &mut EvalCounters,
) -> f64 {
    let grad = model.full_gradient(state, counters);
    let stepped = gradient_step_dense(state.w(), &grad, lambda);
    let outcome = project_topk(&stepped, s);
    residual_from_grad(state.w(), &grad, &outcome, lambda)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k.min(n));
    let mut out: u128 = 1;
    for i in 0..k {
        out = out.saturating_mul((n - i) as u128) / (i as u128 + 1);
        if out > u128::MAX / 2 {
            return u128::MAX;
        }
    }
    out
}

/// Exhaustive best-subset oracle: enumerates every support of size s,
/// minimizes the restricted convex objective by damped Newton iteration to
/// gradient norm 1e-12, and returns the best. Dense linear algebra
/// throughout, independent of the sparse solver path. Guarded to
/// C(n, s) <= 1e5.
pub fn brute_force_best_subset(
    model: &Model,
    s: usize,
) -> Result<(SupportSet, SparseIterate, f64)> {
    let n = model.dim();
    let s = s.min(n);
    if s == 0 {
        return Err(Error::Config("sparsity level must be at least 1".into()));
    }
    if binomial(n, s) > 100_000 {
        return Err(Error::Config(format!(
            "refusing exhaustive search over C({n}, {s}) > 1e5 subsets"
        )));
    }

    let mut best: Option<(Vec<usize>, Vec<f64>, f64)> = None;
    let mut subset: Vec<usize> = (0..s).collect();
    loop {
        let (w, f) = minimize_on_subset(model, &subset);
        if best.as_ref().is_none_or(|(_, _, fb)| f < *fb) {
            best = Some((subset.clone(), w, f));
        }
        // lexicographically next combination
        let mut i = s;
        loop {
            if i == 0 {
                let (j, w, f) = best.unwrap();
                let iterate = SparseIterate::new(j.clone(), w, n);
                return Ok((SupportSet::new(j), iterate, f));
            }
            i -= 1;
            if subset[i] != i + n - s {
                break;
            }
        }
        subset[i] += 1;
        for k in i + 1..s {
            subset[k] = subset[k - 1] + 1;
        }
    }
}

/// Dense Newton minimization of the objective restricted to `cols`,
/// returning the restricted minimizer and its objective value.
fn minimize_on_subset(model: &Model, cols: &[usize]) -> (Vec<f64>, f64) {
    let m = model.samples();
    let s = cols.len();
    let x = &model.data().x;
    let y = &model.data().y;
    let loss = model.loss();
    let mu = loss.mu();
    let a: Vec<Vec<f64>> = cols
        .iter()
        .map(|&j| {
            let mut col = vec![0.0; m];
            let (idx, vals) = x.column(j);
            for (&r, &v) in idx.iter().zip(vals) {
                col[r] = v;
            }
            col
        })
        .collect();

    let objective = |w: &[f64]| -> (f64, Vec<f64>) {
        let mut z = vec![0.0; m];
        for (col, &wk) in a.iter().zip(w) {
            for (zi, &ci) in z.iter_mut().zip(col) {
                *zi += ci * wk;
            }
        }
        let mut f: f64 = z.iter().zip(y).map(|(&zi, &yi)| loss.eval_elem(zi, yi).0).sum();
        f += 0.5 * mu * w.iter().map(|v| v * v).sum::<f64>();
        (f, z)
    };

    let mut w = vec![0.0; s];
    let (mut f, mut z) = objective(&w);
    for _ in 0..100 {
        let mut d1 = vec![0.0; m];
        let mut d2 = vec![0.0; m];
        for i in 0..m {
            let (_, g1, g2) = loss.eval_elem(z[i], y[i]);
            d1[i] = g1;
            d2[i] = g2;
        }
        let grad: Vec<f64> = a
            .iter()
            .zip(&w)
            .map(|(col, &wk)| col.iter().zip(&d1).map(|(&c, &g)| c * g).sum::<f64>() + mu * wk)
            .collect();
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm <= 1e-12 {
            break;
        }
        let mut h = vec![vec![0.0; s]; s];
        for k in 0..s {
            for l in k..s {
                let v: f64 = (0..m).map(|i| d2[i] * a[k][i] * a[l][i]).sum();
                h[k][l] = v;
                h[l][k] = v;
            }
        }
        for k in 0..s {
            h[k][k] += mu;
        }
        let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
        let p = match solve_dense(&h, &rhs) {
            Some(p) => p,
            None => {
                // singular restricted Hessian: jitter the diagonal
                let trace: f64 = (0..s).map(|k| h[k][k]).sum();
                let jitter = 1e-10 * (1.0 + trace / s as f64);
                for (k, row) in h.iter_mut().enumerate() {
                    row[k] += jitter;
                }
                match solve_dense(&h, &rhs) {
                    Some(p) => p,
                    None => rhs.clone(),
                }
            }
        };
        let gp: f64 = grad.iter().zip(&p).map(|(g, pk)| g * pk).sum();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let wt: Vec<f64> = w.iter().zip(&p).map(|(&wk, &pk)| wk + t * pk).collect();
            let (ft, zt) = objective(&wt);
            if ft <= f + 1e-4 * t * gp {
                w = wt;
                f = ft;
                z = zt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (w, f)
}

/// Gaussian elimination with partial pivoting; None on a singular pivot.
fn solve_dense(h: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let s = rhs.len();
    let mut aug: Vec<Vec<f64>> = h
        .iter()
        .zip(rhs)
        .map(|(row, &b)| {
            let mut r = row.clone();
            r.push(b);
            r
        })
        .collect();
    let scale = aug
        .iter()
        .flat_map(|r| r.iter().take(s))
        .fold(0.0f64, |acc, &v| acc.max(v.abs()));
    for col in 0..s {
        let pivot_row = (col..s)
            .max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs()))
            .unwrap();
        if aug[pivot_row][col].abs() <= 1e-14 * (1.0 + scale) {
            return None;
        }
        aug.swap(col, pivot_row);
        for row in col + 1..s {
            let factor = aug[row][col] / aug[col][col];
            for k in col..=s {
                aug[row][k] -= factor * aug[col][k];
            }
        }
    }
    let mut sol = vec![0.0; s];
    for col in (0..s).rev() {
        let mut v = aug[col][s];
        for k in col + 1..s {
            v -= aug[col][k] * sol[k];
        }
        sol[col] = v / aug[col][col];
    }
    Some(sol)
}
