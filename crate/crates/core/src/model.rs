//! Loss models over the linear empirical risk `f(w) = sum_i g_i((Xw)_i) +
//! (mu/2) ||w||^2`, with the cached per-row state that lets extrapolated
//! points be evaluated in O(m) by recycling `Xw` from previous iterates.

use crate::dataio::{matvec_cols, transpose_matvec_cols, Dataset, Task};
use crate::error::{Error, Result};
use crate::sparsity::SparseIterate;

/// Loss family. The logistic variant carries the ridge weight `mu` that
/// makes the loss coercive; least squares is unregularized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossSpec {
    LeastSquares,
    Logistic { mu: f64 },
}

impl LossSpec {
    pub fn mu(&self) -> f64 {
        match *self {
            LossSpec::LeastSquares => 0.0,
            LossSpec::Logistic { mu } => mu,
        }
    }

    pub fn task(&self) -> Task {
        match self {
            LossSpec::LeastSquares => Task::Regression,
            LossSpec::Logistic { .. } => Task::Classification,
        }
    }

    /// Upper bound on the per-element second derivative: 1 for least
    /// squares, 1/4 for logistic.
    pub fn curvature_bound(&self) -> f64 {
        match self {
            LossSpec::LeastSquares => 1.0,
            LossSpec::Logistic { .. } => 0.25,
        }
    }

    /// Per-element value and first two derivatives of `g_i` at `z`.
    ///
    /// Least squares: `(z - y)^2 / 2`. Logistic: `log(1 + exp(-y z))`
    /// evaluated in the overflow-safe branch form.
    pub(crate) fn eval_elem(&self, z: f64, y: f64) -> (f64, f64, f64) {
        match self {
            LossSpec::LeastSquares => {
                let r = z - y;
                (0.5 * r * r, r, 1.0)
            }
            LossSpec::Logistic { .. } => {
                let a = y * z;
                let value = (-a).max(0.0) + (-a.abs()).exp().ln_1p();
                // sigmoid(-a), stable on both branches
                let sig = if a >= 0.0 {
                    let e = (-a).exp();
                    e / (1.0 + e)
                } else {
                    1.0 / (1.0 + a.exp())
                };
                (value, -y * sig, sig * (1.0 - sig))
            }
        }
    }
}

/// Counters for the cost metrics reported by the solvers: full gradient
/// evaluations, Hessian-vector products, and passes over the entire design
/// matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalCounters {
    pub gradient_evals: u64,
    pub hvps: u64,
    pub full_passes: u64,
}

/// Cached evaluation of the model at a sparse iterate: `z = Xw`, the
/// objective, and the per-row first and second loss derivatives at `z`.
#[derive(Debug, Clone)]
pub struct LinearState {
    w: SparseIterate,
    z: Vec<f64>,
    f: f64,
    gprime: Vec<f64>,
    gsecond: Vec<f64>,
    updates_since_refresh: usize,
}

impl LinearState {
    pub fn w(&self) -> &SparseIterate {
        &self.w
    }

    pub fn objective(&self) -> f64 {
        self.f
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub(crate) fn gsecond(&self) -> &[f64] {
        &self.gsecond
    }

    pub fn updates_since_refresh(&self) -> usize {
        self.updates_since_refresh
    }
}

/// An immutable dataset paired with a loss; the objective being minimized.
#[derive(Debug, Clone)]
pub struct Model {
    data: Dataset,
    loss: LossSpec,
}

impl Model {
    /// The dataset task must match the loss (logistic needs +-1 labels).
    pub fn new(data: Dataset, loss: LossSpec) -> Result<Self> {
        let mu = loss.mu();
        if !mu.is_finite() || mu < 0.0 {
            return Err(Error::Config(format!("ridge weight {mu} must be finite and nonnegative")));
        }
        if data.task != loss.task() {
            return Err(Error::Config(
                "dataset task does not match the loss (logistic <-> classification)".into(),
            ));
        }
        Ok(Self { data, loss })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn loss(&self) -> &LossSpec {
        &self.loss
    }

    /// Number of features n.
    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    /// Number of training rows m.
    pub fn samples(&self) -> usize {
        self.data.rows()
    }

    /// Evaluates the model at `w` from scratch: one restricted product for
    /// `z = Xw`, then O(m) for the objective and derivative caches.
    pub fn make_state(&self, w: SparseIterate) -> Result<LinearState> {
        assert_eq!(w.ambient_dim(), self.dim(), "iterate dimension mismatch");
        let z = matvec_cols(&self.data.x, w.support(), w.values());
        self.state_from_z(w, z, 0)
    }

    /// Rebuilds the objective and derivative caches from a given `z`, which
    /// the caller guarantees equals `Xw` (up to the documented refresh
    /// drift). Fails if the objective is not finite.
    pub(crate) fn state_from_z(
        &self,
        w: SparseIterate,
        z: Vec<f64>,
        updates_since_refresh: usize,
    ) -> Result<LinearState> {
        let y = &self.data.y;
        let mut f = 0.0;
        let mut gprime = Vec::with_capacity(z.len());
        let mut gsecond = Vec::with_capacity(z.len());
        for (zi, yi) in z.iter().zip(y) {
            let (v, d1, d2) = self.loss.eval_elem(*zi, *yi);
            f += v;
            gprime.push(d1);
            gsecond.push(d2);
        }
        f += 0.5 * self.loss.mu() * w.norm_sq();
        if !f.is_finite() {
            return Err(Error::Numeric("objective is not finite".into()));
        }
        Ok(LinearState { w, z, f, gprime, gsecond, updates_since_refresh })
    }

    /// Full gradient `X^T g'(z) + mu w`. One pass over the whole matrix;
    /// increments the gradient-evaluation counter.
    pub fn full_gradient(&self, state: &LinearState, counters: &mut EvalCounters) -> Vec<f64> {
        counters.gradient_evals += 1;
        counters.full_passes += 1;
        let x = &self.data.x;
        let mut out = Vec::with_capacity(x.cols());
        for j in 0..x.cols() {
            let (idx, vals) = x.column(j);
            let dot: f64 = idx.iter().zip(vals).map(|(&r, &xv)| xv * state.gprime[r]).sum();
            out.push(dot);
        }
        let mu = self.loss.mu();
        if mu > 0.0 {
            for (&j, &v) in state.w.support().iter().zip(state.w.values()) {
                out[j] += mu * v;
            }
        }
        out
    }

    /// Gradient restricted to the listed columns, computed without forming
    /// the full gradient. Cost proportional to the nonzeros of those columns.
    pub fn restricted_gradient(&self, state: &LinearState, cols: &[usize]) -> Vec<f64> {
        let mut out = transpose_matvec_cols(&self.data.x, cols, &state.gprime);
        let mu = self.loss.mu();
        if mu > 0.0 {
            add_sparse_on(cols, state.w.support(), state.w.values(), mu, &mut out);
        }
        out
    }

    /// Generalized-Hessian-vector product of the restriction to `cols`:
    /// `(X^T diag(g'') X)[cols, cols] v + mu v`. Increments the HVP counter.
    pub fn hvp_restricted(
        &self,
        state: &LinearState,
        cols: &[usize],
        v: &[f64],
        counters: &mut EvalCounters,
    ) -> Vec<f64> {
        counters.hvps += 1;
        let mut u = matvec_cols(&self.data.x, cols, v);
        for (ui, di) in u.iter_mut().zip(&state.gsecond) {
            *ui *= di;
        }
        let mut out = transpose_matvec_cols(&self.data.x, cols, &u);
        let mu = self.loss.mu();
        if mu > 0.0 {
            for (o, &vk) in out.iter_mut().zip(v) {
                *o += mu * vk;
            }
        }
        out
    }

    /// Curvature `<H d, d> = sum_i g''_i (Xd)_i^2 + mu ||d||^2` along a
    /// direction whose image `Xd` is already available (for consecutive
    /// iterates it is the O(m) difference of cached `z` vectors).
    pub fn directional_curvature(&self, state: &LinearState, xd: &[f64], d_norm_sq: f64) -> f64 {
        let quad: f64 = xd.iter().zip(&state.gsecond).map(|(&v, &d2)| d2 * v * v).sum();
        quad + self.loss.mu() * d_norm_sq
    }

    /// State at the extrapolated point `w_k + t (w_k - w_prev)`, with the
    /// `z` vector formed as the same linear combination of the cached ones,
    /// so the whole update is O(m). Both iterates must live in the same
    /// subspace. Every `refresh_period` chained updates, `z` is recomputed
    /// from scratch to bound floating-point drift.
    pub fn update_extrapolated(
        &self,
        state_k: &LinearState,
        state_prev: &LinearState,
        t: f64,
        refresh_period: usize,
    ) -> Result<LinearState> {
        let wk = &state_k.w;
        let wp = &state_prev.w;
        assert_eq!(wk.ambient_dim(), wp.ambient_dim(), "iterate dimension mismatch");
        let w = wk.combine_extrapolated(wp, t);
        let mut updates = state_k.updates_since_refresh + 1;
        let z = if updates > refresh_period {
            updates = 0;
            matvec_cols(&self.data.x, w.support(), w.values())
        } else {
            state_k
                .z
                .iter()
                .zip(&state_prev.z)
                .map(|(&zk, &zp)| zk + t * (zk - zp))
                .collect()
        };
        self.state_from_z(w, z, updates)
    }

    /// Step-size bound `L = lambda_max(X X^T) B + mu`, with `B` the loss
    /// curvature bound. The leading eigenvalue comes from power iteration on
    /// `v -> X(X^T v)` with relative tolerance 1e-3 (at most 500 rounds,
    /// deterministic all-ones start); the result carries a 1.001 safety
    /// factor to offset underestimation.
    pub fn lipschitz_estimate(&self) -> Result<f64> {
        let x = &self.data.x;
        if x.nnz() == 0 {
            return Err(Error::Numeric("cannot estimate L for an all-zero matrix".into()));
        }
        let m = x.rows();
        let all: Vec<usize> = (0..x.cols()).collect();
        let mut v = vec![1.0 / (m as f64).sqrt(); m];
        // All-ones can be orthogonal to the range; fall back to a unit vector
        // on the first occupied row.
        let probe = matvec_cols(x, &all, &transpose_matvec_cols(x, &all, &v));
        if probe.iter().all(|&p| p == 0.0) {
            let r0 = (0..x.cols())
                .find_map(|j| x.column(j).0.first().copied())
                .expect("nnz > 0");
            v = vec![0.0; m];
            v[r0] = 1.0;
        }
        let mut lambda = 0.0f64;
        for _ in 0..500 {
            let u = transpose_matvec_cols(x, &all, &v);
            let xv = matvec_cols(x, &all, &u);
            let next: f64 = v.iter().zip(&xv).map(|(a, b)| a * b).sum();
            let norm = xv.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            for (vi, &xi) in v.iter_mut().zip(&xv) {
                *vi = xi / norm;
            }
            if (next - lambda).abs() <= 1e-3 * next.abs() {
                lambda = next;
                break;
            }
            lambda = next;
        }
        Ok((lambda * self.loss.curvature_bound() + self.loss.mu()) * 1.001)
    }
}

/// out[k] += scale * value for every support index that appears in `cols`.
/// Both lists are sorted, so one merge pass suffices.
fn add_sparse_on(cols: &[usize], support: &[usize], values: &[f64], scale: f64, out: &mut [f64]) {
    let mut k = 0;
    for (&j, &v) in support.iter().zip(values) {
        while k < cols.len() && cols[k] < j {
            k += 1;
        }
        if k == cols.len() {
            break;
        }
        if cols[k] == j {
            out[k] += scale * v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::DesignMatrix;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn identity2_ls(y: [f64; 2]) -> Model {
        let x = DesignMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]).unwrap();
        let ds = Dataset::new(x, y.to_vec(), Task::Regression).unwrap();
        Model::new(ds, LossSpec::LeastSquares).unwrap()
    }

    fn random_model(seed: u64, m: usize, n: usize, loss: LossSpec) -> Model {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = Vec::new();
        for r in 0..m {
            for c in 0..n {
                if rng.gen_bool(0.6) {
                    entries.push((r, c, rng.gen_range(-2.0..2.0)));
                }
            }
        }
        let x = DesignMatrix::from_triplets(m, n, &entries).unwrap();
        let y: Vec<f64> = match loss.task() {
            Task::Regression => (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect(),
            Task::Classification => (0..m).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect(),
        };
        Model::new(Dataset::new(x, y, loss.task()).unwrap(), loss).unwrap()
    }

    fn random_iterate(rng: &mut ChaCha8Rng, n: usize, nnz: usize) -> SparseIterate {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        let mut idx: Vec<usize> = idx.into_iter().take(nnz).collect();
        idx.sort_unstable();
        let vals: Vec<f64> = idx.iter().map(|_| rng.gen_range(-1.5..1.5)).collect();
        SparseIterate::new(idx, vals, n)
    }

    #[test]
    fn make_state_examples() {
        let model = identity2_ls([1.0, 2.0]);
        let st = model.make_state(SparseIterate::zeros(2)).unwrap();
        assert_eq!(st.objective(), 2.5);
        assert_eq!(st.z(), &[0.0, 0.0]);

        let model = identity2_ls([3.0, 1.0]);
        let w = SparseIterate::new(vec![0], vec![3.0], 2);
        assert_eq!(model.make_state(w).unwrap().objective(), 0.5);
    }

    #[test]
    fn make_state_logistic_at_zero() {
        let model = random_model(3, 7, 4, LossSpec::Logistic { mu: 0.0 });
        let st = model.make_state(SparseIterate::zeros(4)).unwrap();
        assert_relative_eq!(st.objective(), 7.0 * 2f64.ln(), max_relative = 1e-15);
    }

    #[test]
    fn full_gradient_examples() {
        let model = identity2_ls([1.0, 2.0]);
        let st = model.make_state(SparseIterate::zeros(2)).unwrap();
        let mut c = EvalCounters::default();
        assert_eq!(model.full_gradient(&st, &mut c), vec![-1.0, -2.0]);
        assert_eq!(c.gradient_evals, 1);

        // logistic at zero: g'(0) = -y/2, so the gradient is -X^T y / 2
        let model = random_model(5, 6, 5, LossSpec::Logistic { mu: 0.0 });
        let st = model.make_state(SparseIterate::zeros(5)).unwrap();
        let g = model.full_gradient(&st, &mut c);
        let all: Vec<usize> = (0..5).collect();
        let xty = transpose_matvec_cols(&model.data().x, &all, &model.data().y);
        for (gj, xj) in g.iter().zip(&xty) {
            assert_relative_eq!(*gj, -0.5 * xj, max_relative = 1e-14);
        }
    }

    #[test]
    fn gradient_vanishes_at_dense_ls_minimizer() {
        // Normal-equation solve as the reference: X (2x2) invertible.
        let x = DesignMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 1, 3.0)]).unwrap();
        let y = vec![5.0, 6.0];
        // Solve X w = y by hand: w1 = 2, w0 = (5 - 2)/2 = 1.5
        let ds = Dataset::new(x, y, Task::Regression).unwrap();
        let model = Model::new(ds, LossSpec::LeastSquares).unwrap();
        let w = SparseIterate::new(vec![0, 1], vec![1.5, 2.0], 2);
        let st = model.make_state(w).unwrap();
        let mut c = EvalCounters::default();
        let g = model.full_gradient(&st, &mut c);
        assert!(g.iter().all(|v| v.abs() < 1e-10), "gradient {g:?} should vanish");
    }

    #[test]
    fn restricted_gradient_matches_full() {
        for (seed, loss) in [(11, LossSpec::LeastSquares), (12, LossSpec::Logistic { mu: 1e-3 })] {
            let model = random_model(seed, 12, 9, loss);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let w = random_iterate(&mut rng, 9, 4);
            let st = model.make_state(w).unwrap();
            let mut c = EvalCounters::default();
            let full = model.full_gradient(&st, &mut c);
            let cols = vec![1, 4, 8];
            let restricted = model.restricted_gradient(&st, &cols);
            for (k, &j) in cols.iter().enumerate() {
                assert_relative_eq!(restricted[k], full[j], max_relative = 1e-14);
            }
            let all: Vec<usize> = (0..9).collect();
            let whole = model.restricted_gradient(&st, &all);
            for (a, b) in whole.iter().zip(&full) {
                assert_relative_eq!(*a, *b, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn hvp_examples_and_finite_difference() {
        let model = identity2_ls([1.0, 2.0]);
        let st = model.make_state(SparseIterate::zeros(2)).unwrap();
        let mut c = EvalCounters::default();
        assert_eq!(model.hvp_restricted(&st, &[0], &[1.0], &mut c), vec![1.0]);
        assert_eq!(model.hvp_restricted(&st, &[0, 1], &[0.0, 0.0], &mut c), vec![0.0, 0.0]);
        assert_eq!(c.hvps, 2);

        // central finite differences of the restricted gradient
        let model = random_model(21, 14, 10, LossSpec::Logistic { mu: 1e-4 });
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let w = random_iterate(&mut rng, 10, 5);
        let cols = w.support().to_vec();
        let st = model.make_state(w.clone()).unwrap();
        let v: Vec<f64> = cols.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let hv = model.hvp_restricted(&st, &cols, &v, &mut c);
        let h = 1e-6;
        let shift = |s: f64| -> Vec<f64> {
            let vals: Vec<f64> =
                w.values().iter().zip(&v).map(|(&wv, &vv)| wv + s * h * vv).collect();
            let ws = SparseIterate::new(cols.clone(), vals, 10);
            let sts = model.make_state(ws).unwrap();
            model.restricted_gradient(&sts, &cols)
        };
        let gp = shift(1.0);
        let gm = shift(-1.0);
        for k in 0..cols.len() {
            let fd = (gp[k] - gm[k]) / (2.0 * h);
            assert_relative_eq!(hv[k], fd, max_relative = 1e-5, epsilon = 1e-8);
        }
    }

    #[test]
    fn directional_curvature_consistency() {
        let model = random_model(31, 10, 8, LossSpec::Logistic { mu: 1e-6 });
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let w = random_iterate(&mut rng, 8, 3);
        let cols = w.support().to_vec();
        let st = model.make_state(w).unwrap();
        let d: Vec<f64> = cols.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let xd = matvec_cols(&model.data().x, &cols, &d);
        let d_norm_sq: f64 = d.iter().map(|a| a * a).sum();
        let curv = model.directional_curvature(&st, &xd, d_norm_sq);
        let mut c = EvalCounters::default();
        let hd = model.hvp_restricted(&st, &cols, &d, &mut c);
        let dhd: f64 = d.iter().zip(&hd).map(|(a, b)| a * b).sum();
        assert_relative_eq!(curv, dhd, max_relative = 1e-12);
        assert!(curv >= 0.0);

        // least squares along a direction: exactly ||Xd||^2
        let model = identity2_ls([0.0, 0.0]);
        let st = model.make_state(SparseIterate::zeros(2)).unwrap();
        assert_eq!(model.directional_curvature(&st, &[3.0, 4.0], 25.0), 25.0);
        assert_eq!(model.directional_curvature(&st, &[0.0, 0.0], 1.0), 0.0);
    }

    #[test]
    fn extrapolated_state_matches_scratch() {
        let model = random_model(41, 12, 7, LossSpec::Logistic { mu: 1e-8 });
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let support = vec![1, 3, 6];
        let vk: Vec<f64> = support.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let vp: Vec<f64> = support.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sk = model.make_state(SparseIterate::new(support.clone(), vk.clone(), 7)).unwrap();
        let sp = model.make_state(SparseIterate::new(support.clone(), vp.clone(), 7)).unwrap();

        let same = model.update_extrapolated(&sk, &sp, 0.0, 100).unwrap();
        assert_eq!(same.objective(), sk.objective());
        assert_eq!(same.z(), sk.z());

        let t = 1.0;
        let ext = model.update_extrapolated(&sk, &sp, t, 100).unwrap();
        for ((ze, &zk), &zp) in ext.z().iter().zip(sk.z()).zip(sp.z()) {
            assert_relative_eq!(*ze, 2.0 * zk - zp, max_relative = 1e-15, epsilon = 1e-15);
        }
        let vals: Vec<f64> = vk.iter().zip(&vp).map(|(&a, &b)| a + t * (a - b)).collect();
        let scratch = model.make_state(SparseIterate::new(support, vals, 7)).unwrap();
        assert_relative_eq!(ext.objective(), scratch.objective(), max_relative = 1e-10);
    }

    #[test]
    fn extrapolated_chain_refreshes() {
        let model = random_model(51, 9, 5, LossSpec::LeastSquares);
        let support = vec![0, 2];
        let mut cur = model.make_state(SparseIterate::new(support.clone(), vec![0.5, -0.3], 5)).unwrap();
        let mut prev = model.make_state(SparseIterate::new(support, vec![0.2, 0.1], 5)).unwrap();
        for _ in 0..100 {
            let next = model.update_extrapolated(&cur, &prev, 0.01, 100).unwrap();
            prev = cur;
            cur = next;
        }
        let scratch = model.make_state(cur.w().clone()).unwrap();
        assert_relative_eq!(cur.objective(), scratch.objective(), max_relative = 1e-8);
        for (a, b) in cur.z().iter().zip(scratch.z()) {
            assert_relative_eq!(*a, *b, epsilon = 1e-8);
        }
        // the refresh itself resets the counter
        let refreshed = model.update_extrapolated(&cur, &prev, 0.01, 0).unwrap();
        assert_eq!(refreshed.updates_since_refresh(), 0);
        let scratch2 = model.make_state(refreshed.w().clone()).unwrap();
        assert_eq!(refreshed.z(), scratch2.z());
    }

    #[test]
    fn lipschitz_examples() {
        let x = DesignMatrix::from_triplets(1, 1, &[(0, 0, 3.0)]).unwrap();
        let model =
            Model::new(Dataset::new(x, vec![0.0], Task::Regression).unwrap(), LossSpec::LeastSquares)
                .unwrap();
        assert_relative_eq!(model.lipschitz_estimate().unwrap(), 9.0 * 1.001, max_relative = 2e-3);

        let eye = DesignMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]).unwrap();
        let model = Model::new(
            Dataset::new(eye, vec![1.0, -1.0], Task::Classification).unwrap(),
            LossSpec::Logistic { mu: 0.0 },
        )
        .unwrap();
        assert_relative_eq!(model.lipschitz_estimate().unwrap(), 0.25 * 1.001, max_relative = 2e-3);

        let diag = DesignMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 2.0)]).unwrap();
        let model = Model::new(
            Dataset::new(diag, vec![0.0, 0.0], Task::Regression).unwrap(),
            LossSpec::LeastSquares,
        )
        .unwrap();
        assert_relative_eq!(model.lipschitz_estimate().unwrap(), 4.0 * 1.001, max_relative = 2e-3);

        let zero = DesignMatrix::from_triplets(2, 2, &[]).unwrap();
        let model = Model::new(
            Dataset::new(zero, vec![0.0, 0.0], Task::Regression).unwrap(),
            LossSpec::LeastSquares,
        )
        .unwrap();
        assert!(model.lipschitz_estimate().is_err());
    }

    #[test]
    fn descent_lemma_holds_with_estimated_l() {
        for (seed, loss) in [(61, LossSpec::LeastSquares), (62, LossSpec::Logistic { mu: 1e-6 })] {
            let model = random_model(seed, 15, 10, loss);
            let l = model.lipschitz_estimate().unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..25 {
                let a = random_iterate(&mut rng, 10, 6);
                let b = random_iterate(&mut rng, 10, 6);
                let sa = model.make_state(a.clone()).unwrap();
                let sb = model.make_state(b.clone()).unwrap();
                let mut c = EvalCounters::default();
                let ga = model.full_gradient(&sa, &mut c);
                let diff = b.sub_dense(&a);
                let lin: f64 = diff.iter().enumerate().map(|(j, &d)| ga[j] * d).sum();
                let sq: f64 = diff.iter().map(|d| d * d).sum();
                let bound = sa.objective() + lin + 0.5 * l * sq;
                assert!(
                    sb.objective() <= bound + 1e-9 * (1.0 + bound.abs()),
                    "descent lemma violated: f'={} bound={}",
                    sb.objective(),
                    bound
                );
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for (seed, loss) in [(71, LossSpec::LeastSquares), (72, LossSpec::Logistic { mu: 1e-4 })] {
            let model = random_model(seed, 12, 8, loss);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 9);
            let w = random_iterate(&mut rng, 8, 5);
            let st = model.make_state(w.clone()).unwrap();
            let mut c = EvalCounters::default();
            let g = model.full_gradient(&st, &mut c);
            let h = 1e-6;
            for j in 0..8 {
                let probe = |s: f64| {
                    let mut dense = w.to_dense();
                    dense[j] += s * h;
                    let ws = SparseIterate::from_dense(&dense);
                    model.make_state(ws).unwrap().objective()
                };
                let fd = (probe(1.0) - probe(-1.0)) / (2.0 * h);
                assert_relative_eq!(g[j], fd, max_relative = 1e-6, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn hvp_symmetric_and_psd() {
        let model = random_model(81, 13, 9, LossSpec::Logistic { mu: 1e-5 });
        let mut rng = ChaCha8Rng::seed_from_u64(82);
        let w = random_iterate(&mut rng, 9, 4);
        let cols = w.support().to_vec();
        let st = model.make_state(w).unwrap();
        let mut c = EvalCounters::default();
        for _ in 0..20 {
            let u: Vec<f64> = cols.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v: Vec<f64> = cols.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
            let hu = model.hvp_restricted(&st, &cols, &u, &mut c);
            let hv = model.hvp_restricted(&st, &cols, &v, &mut c);
            let uhv: f64 = u.iter().zip(&hv).map(|(a, b)| a * b).sum();
            let vhu: f64 = v.iter().zip(&hu).map(|(a, b)| a * b).sum();
            assert_relative_eq!(uhv, vhu, epsilon = 1e-12, max_relative = 1e-12);
            let vhv: f64 = v.iter().zip(&hv).map(|(a, b)| a * b).sum();
            assert!(vhv >= -1e-12);
        }
    }
}
