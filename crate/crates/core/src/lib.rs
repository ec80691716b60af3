//! Solvers for best subset selection: minimizing a smooth convex empirical
//! risk under an l0-norm constraint.
//!
//! The library provides the projected gradient method (iterative hard
//! thresholding), a same-subspace extrapolated variant with spectral step
//! initialization, and two-stage variants that detect when the iterates have
//! settled into a single subspace and switch to truncated Newton steps
//! there. Datasets load from LIBSVM text into compressed-column storage;
//! solvers report per-iteration traces with gradient-evaluation and
//! Hessian-vector-product counts.

pub mod dataio;
mod error;
pub mod model;
pub mod newton;
pub mod solvers;
pub mod sparsity;

pub use error::{Error, Result};

pub use dataio::{
    col_weighted_sqnorms, matvec_cols, parse_libsvm, split_train_test, transpose_matvec_cols,
    write_libsvm, Dataset, DesignMatrix, Task,
};
pub use model::{EvalCounters, LinearState, LossSpec, Model};
pub use newton::{
    armijo_search, pcg_solve, ssn_steps, CgStats, CgTermination, Damping, NewtonParams, SsnResult,
    SsnStatus,
};
pub use solvers::{
    backtrack_extrapolation, extrapolation_gate, safeguard_step, solve, spectral_step_bb,
    spectral_step_exact, Algorithm, GateDecision, SolveResult, SolveStatus, SolverConfig,
    SpectralMode, StepSizeRule, StepType, TraceRecord,
};
pub use sparsity::{
    brute_force_best_subset, pg_step, project_topk, residual, residual_from_grad, same_support,
    ProjectionOutcome, SparseIterate, SupportSet,
};
