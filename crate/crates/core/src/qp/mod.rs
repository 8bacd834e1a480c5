//! Quadratic programs for piecewise-polynomial trajectories: cost and
//! constraint assembly plus a dense primal active-set solver.
//!
//! Each flat dimension's spline is the solution of
//! `min c^T Q c  s.t.  A c = b,  y <= G c <= z`, where `Q` stacks
//! per-segment Gram matrices of the cost-order derivative, `A` pins
//! boundary derivatives and enforces continuity, and the box rows carry
//! inequality constraints such as impact-velocity windows.
//!
//! Segment polynomials are expressed in local time normalized by segment
//! duration; the raw-basis rows produced by the contract functions are
//! diagonally rescaled during assembly and the solved coefficients are
//! polynomials in normalized local time (de-normalization happens when
//! derivatives are evaluated, dividing by powers of the duration).

mod active_set;
mod assemble;

pub use assemble::{assemble_group, group_dims, solve_flat_problem, GroupQp};

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

/// Regularization added to the cost diagonal before factorization.
pub const COST_REGULARIZATION: f64 = 1e-12;

/// Errors from QP construction and assembly.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QpError {
    #[error("polynomial order {poly_order} below cost/derivative order {order}")]
    OrderTooLow { poly_order: usize, order: usize },
    #[error("polynomial order {0} exceeds the supported maximum")]
    OrderTooHigh(usize),
    #[error("segment durations must be positive and finite")]
    InvalidDuration,
    #[error("duplicate derivative order {0} in endpoint rows")]
    DuplicateOrder(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
    #[error("knots must be strictly increasing")]
    InvalidKnots,
    #[error("constraint time {0} outside the knot span")]
    TimeOutOfRange(f64),
    #[error("a constraint row couples yaw with translation, which no solve group supports")]
    UnsupportedCoupling,
    #[error("constraint values must be finite")]
    NonFinite,
    #[error("constraints unsatisfiable: best residual {residual} in problem units")]
    Infeasible { residual: f64 },
    #[error("active-set iteration cap reached")]
    MaxIterations,
}

/// Boxed-inequality quadratic program `min c^T Q c` subject to
/// `A c = b` and `y <= G c <= z` (entries of `y`/`z` may be infinite).
#[derive(Debug, Clone)]
pub struct QpProblem {
    /// Symmetric positive-semidefinite cost matrix `Q`.
    pub cost: DMatrix<f64>,
    /// Equality rows `A`.
    pub eq_mat: DMatrix<f64>,
    /// Equality right-hand side `b`.
    pub eq_rhs: DVector<f64>,
    /// Inequality rows `G`.
    pub ineq_mat: DMatrix<f64>,
    /// Lower bounds `y`.
    pub lower: DVector<f64>,
    /// Upper bounds `z`.
    pub upper: DVector<f64>,
}

impl QpProblem {
    /// Equality-only problem.
    pub fn equality(cost: DMatrix<f64>, eq_mat: DMatrix<f64>, eq_rhs: DVector<f64>) -> Self {
        let n = cost.ncols();
        QpProblem {
            cost,
            eq_mat,
            eq_rhs,
            ineq_mat: DMatrix::zeros(0, n),
            lower: DVector::zeros(0),
            upper: DVector::zeros(0),
        }
    }
}

/// Outcome of a solve.
#[derive(Debug, Clone, PartialEq)]
pub enum QpStatus {
    /// First-order optimal; equality and box residuals within
    /// `1e-7 * (1 + ||b||_inf)`.
    Solved,
    /// No point satisfies the constraints; `residual` is the maximum
    /// violation of the original rows at the least-violating point
    /// found, in problem units.
    Infeasible { residual: f64 },
    /// Iteration cap reached before optimality.
    MaxIterations,
}

/// Solver result. `coeffs` and `objective` hold the last iterate even for
/// non-solved statuses.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub coeffs: DVector<f64>,
    pub objective: f64,
    pub status: QpStatus,
}

impl QpSolution {
    pub fn is_solved(&self) -> bool {
        self.status == QpStatus::Solved
    }
}

/// Solves the boxed QP with a primal active-set method over the
/// inequality rows and a dense KKT subproblem for each working set.
///
/// Degenerate boxes (`upper - lower` within 1e-12 absolute/relative) fold
/// into equalities; linearly dependent equality rows are reduced away
/// first (inconsistent rows yield `Infeasible`). A feasible interior
/// start, when the pure equality solution violates a box, comes from an
/// exact-penalty elastic phase. Deterministic: identical inputs take
/// identical paths.
pub fn solve(problem: &QpProblem) -> Result<QpSolution, QpError> {
    active_set::solve(problem)
}

/// Falling factorial `n (n-1) ... (n-k+1)` as f64, the coefficient
/// produced by differentiating `t^n` exactly `k` times.
fn falling_factorial(n: usize, k: usize) -> f64 {
    (n + 1 - k..=n).map(|v| v as f64).product()
}

/// Row of the `order`-th derivative of the monomial basis
/// `{1, t, ..., t^N}` evaluated at local time `t`.
fn derivative_basis_row(poly_order: usize, order: usize, t: f64) -> Vec<f64> {
    (0..=poly_order)
        .map(|n| {
            if n < order {
                0.0
            } else {
                falling_factorial(n, order) * powi(t, n - order)
            }
        })
        .collect()
}

fn powi(base: f64, exp: usize) -> f64 {
    let mut acc = 1.0;
    for _ in 0..exp {
        acc *= base;
    }
    acc
}

/// Gram matrix of the `cost_order`-th derivative of the monomial basis on
/// `[0, duration]`: entry `(m, n)` is the integral of
/// `d^j t^m/dt^j * d^j t^n/dt^j`, zero when either index is below the
/// cost order.
pub fn snap_cost_block(
    duration: f64,
    poly_order: usize,
    cost_order: usize,
) -> Result<DMatrix<f64>, QpError> {
    if poly_order < cost_order {
        return Err(QpError::OrderTooLow {
            poly_order,
            order: cost_order,
        });
    }
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(QpError::InvalidDuration);
    }
    let size = poly_order + 1;
    let j = cost_order;
    let mut q = DMatrix::zeros(size, size);
    for m in j..size {
        for n in j..size {
            let power = m + n - 2 * j + 1;
            q[(m, n)] =
                falling_factorial(m, j) * falling_factorial(n, j) * powi(duration, power)
                    / power as f64;
        }
    }
    Ok(q)
}

/// Equality rows fixing derivative values at a knot, in raw local time:
/// one row per `(order, value)` pair, evaluated at `knot_time`.
pub fn endpoint_rows(
    knot_time: f64,
    fixed: &[(usize, f64)],
    poly_order: usize,
) -> Result<(DMatrix<f64>, DVector<f64>), QpError> {
    let mut seen = [false; 64];
    for &(order, value) in fixed {
        if order > poly_order {
            return Err(QpError::OrderTooLow {
                poly_order,
                order,
            });
        }
        if order < seen.len() && core::mem::replace(&mut seen[order], true) {
            return Err(QpError::DuplicateOrder(order));
        }
        if !value.is_finite() {
            return Err(QpError::NonFinite);
        }
    }
    let mut rows = DMatrix::zeros(fixed.len(), poly_order + 1);
    let mut rhs = DVector::zeros(fixed.len());
    for (r, &(order, value)) in fixed.iter().enumerate() {
        let basis = derivative_basis_row(poly_order, order, knot_time);
        for (c, v) in basis.iter().enumerate() {
            rows[(r, c)] = *v;
        }
        rhs[r] = value;
    }
    Ok((rows, rhs))
}

/// Continuity rows through `max_deriv` at every interior knot of a
/// segment chain, in raw local time over the stacked per-segment
/// coefficients of one dimension: value and derivatives at the end of
/// each segment match the start of the next (right-hand side zero).
pub fn continuity_rows(
    durations: &[f64],
    poly_order: usize,
    max_deriv: usize,
) -> Result<DMatrix<f64>, QpError> {
    if max_deriv > poly_order {
        return Err(QpError::OrderTooLow {
            poly_order,
            order: max_deriv,
        });
    }
    if durations.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
        return Err(QpError::InvalidDuration);
    }
    let f = durations.len();
    let size = poly_order + 1;
    let orders = max_deriv + 1;
    let interior = f.saturating_sub(1);
    let mut rows = DMatrix::zeros(interior * orders, f * size);
    for i in 1..f {
        for k in 0..=max_deriv {
            let r = (i - 1) * orders + k;
            let left = derivative_basis_row(poly_order, k, durations[i - 1]);
            let right = derivative_basis_row(poly_order, k, 0.0);
            for c in 0..size {
                rows[(r, (i - 1) * size + c)] = left[c];
                rows[(r, i * size + c)] = -right[c];
            }
        }
    }
    Ok(rows)
}
