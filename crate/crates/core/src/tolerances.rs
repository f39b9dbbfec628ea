//! Central numeric thresholds. Values are fixed here instead of being
//! scattered through call sites so reports stay reproducible.

/// Relative cutoff for rank decisions on matrices with integer or
/// rational entries (singular values below `RANK_REL_TOL * sigma_max`
/// count as zero).
pub const RANK_REL_TOL: f64 = 1e-10;

/// Relative tolerance for ellipticity zero decisions, measured against
/// the largest symbol singular value `kappa2`.
pub const ELLIPTIC_REL_TOL: f64 = 1e-6;

/// Coefficients of kernel polynomials below this magnitude after
/// orthonormalization are pruned to exact zeros.
pub const COEFF_PRUNE: f64 = 1e-12;

/// Residual bound for the symbolic check `A p == 0` on kernel fields.
pub const KERNEL_RESIDUAL: f64 = 1e-10;

/// Orthonormality defect allowed in kernel-basis Gram matrices.
pub const GRAM_TOL: f64 = 1e-8;

/// Denominator threshold triggering the flagged "kernel" marker in
/// Poincare ratios (relative to the input norm).
pub const DEGENERATE_REL: f64 = 1e-9;

/// Relative tolerance on the last per-level L1 difference used to
/// declare trace convergence.
pub const TRACE_CONVERGED_REL: f64 = 1e-3;

/// Partition-of-unity defect allowed at sample points of a cover.
pub const PARTITION_TOL: f64 = 1e-8;

/// Relative energy change over the stall window that stops the solver.
pub const SOLVER_STALL_REL: f64 = 1e-7;

/// Iterations the solver energy may stall before stopping.
pub const SOLVER_STALL_WINDOW: usize = 50;

/// Hard cap on primal-dual iterations.
pub const SOLVER_ITER_CAP: usize = 50_000;
