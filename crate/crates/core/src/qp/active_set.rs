//! Dense primal active-set solver for boxed QPs.
//!
//! Pipeline: fold degenerate boxes into equalities, drop linearly
//! dependent (but consistent) equality rows, solve the pure equality
//! problem through a regularized KKT system, restore box feasibility with
//! an exact-penalty elastic subproblem when needed, then iterate the
//! primal active-set method until every working-set multiplier has an
//! admissible sign.

use alloc::{vec, vec::Vec};
use nalgebra::{DMatrix, DVector};
#[cfg_attr(feature = "std", allow(unused_imports))]
use num_traits::Float;

use super::{QpError, QpProblem, QpSolution, QpStatus, COST_REGULARIZATION};

/// Relative feasibility tolerance; the public contract promises 1e-7.
const FEAS_TOL: f64 = 1e-9;
/// Boxes tighter than this (relative to bound magnitude) fold into
/// equalities at the midpoint.
const FOLD_TOL: f64 = 1e-12;
/// Steps shorter than this (relative to iterate size) count as zero.
const STEP_TOL: f64 = 1e-11;
/// Multiplier sign violations below this (relative to gradient size) are
/// noise, not grounds for dropping a working-set row.
const MULT_TOL: f64 = 1e-9;

/// Which bound of a box row the working set holds active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Lower,
    Upper,
}

pub(super) fn solve(problem: &QpProblem) -> Result<QpSolution, QpError> {
    let n = problem.cost.ncols();
    if problem.cost.nrows() != n {
        return Err(QpError::DimensionMismatch("cost matrix must be square"));
    }
    if problem.eq_mat.ncols() != n && problem.eq_mat.nrows() > 0 {
        return Err(QpError::DimensionMismatch("equality columns != cost size"));
    }
    if problem.eq_mat.nrows() != problem.eq_rhs.len() {
        return Err(QpError::DimensionMismatch("equality rows != rhs length"));
    }
    if problem.ineq_mat.ncols() != n && problem.ineq_mat.nrows() > 0 {
        return Err(QpError::DimensionMismatch("inequality columns != cost size"));
    }
    if problem.ineq_mat.nrows() != problem.lower.len()
        || problem.ineq_mat.nrows() != problem.upper.len()
    {
        return Err(QpError::DimensionMismatch("inequality rows != bound length"));
    }
    if !problem.cost.iter().all(|v| v.is_finite())
        || !problem.eq_mat.iter().all(|v| v.is_finite())
        || !problem.eq_rhs.iter().all(|v| v.is_finite())
        || !problem.ineq_mat.iter().all(|v| v.is_finite())
    {
        return Err(QpError::NonFinite);
    }
    // bounds may be infinite but never NaN
    if problem.lower.iter().chain(problem.upper.iter()).any(|v| v.is_nan()) {
        return Err(QpError::NonFinite);
    }

    // Crossed bounds make the box empty regardless of G.
    for i in 0..problem.lower.len() {
        if problem.lower[i] > problem.upper[i] {
            return Ok(QpSolution {
                coeffs: DVector::zeros(n),
                objective: 0.0,
                status: QpStatus::Infeasible {
                    residual: problem.lower[i] - problem.upper[i],
                },
            });
        }
    }

    // Fold near-degenerate boxes into equalities, then equilibrate every
    // row to unit max-norm. Trajectory bases produce rows whose norms
    // span several orders of magnitude; without equilibration the
    // attainable KKT residual on the large rows dwarfs any fixed
    // tolerance. Original rows are kept for the final contract check.
    let mut eq_orig: Vec<DVector<f64>> = (0..problem.eq_mat.nrows())
        .map(|r| problem.eq_mat.row(r).transpose())
        .collect();
    let mut eq_rhs_orig: Vec<f64> = problem.eq_rhs.iter().copied().collect();
    let mut box_rows: Vec<usize> = Vec::new();
    for i in 0..problem.ineq_mat.nrows() {
        let (l, u) = (problem.lower[i], problem.upper[i]);
        let near = l.is_finite()
            && u.is_finite()
            && u - l <= FOLD_TOL * 1.0_f64.max(l.abs().max(u.abs()));
        if near {
            eq_orig.push(problem.ineq_mat.row(i).transpose());
            eq_rhs_orig.push(0.5 * (l + u));
        } else {
            box_rows.push(i);
        }
    }

    // Hessian of c^T Q c, normalized to unit scale (the argmin is
    // invariant; multipliers and the objective are reconstructed from
    // the originals).
    let p_scale = problem
        .cost
        .diagonal()
        .amax()
        .max(problem.cost.amax())
        .max(1e-300);
    let mut p_mat = (&problem.cost + problem.cost.transpose()) / p_scale;

    // Symmetric Jacobi scaling: solve in variables y with x = S y,
    // S = diag(1/sqrt(P_kk)). Derivative-energy Hessians have diagonals
    // spanning many orders of magnitude (the k-th basis function's
    // derivative energy grows polynomially in k), and this brings the
    // KKT condition number down from ~1e9 to near 1. Zero-curvature
    // columns inherit the smallest genuine scale.
    let diag_max = p_mat.diagonal().amax().max(f64::MIN_POSITIVE);
    let genuine_floor = (0..n)
        .map(|k| p_mat[(k, k)])
        .filter(|d| *d > diag_max * 1e-13)
        .fold(diag_max, f64::min)
        .max(diag_max * 1e-10);
    let col_scale =
        DVector::from_fn(n, |k, _| 1.0 / p_mat[(k, k)].max(genuine_floor).sqrt());
    for i in 0..n {
        for j in 0..n {
            p_mat[(i, j)] *= col_scale[i] * col_scale[j];
        }
    }
    for i in 0..n {
        p_mat[(i, i)] += 2.0 * COST_REGULARIZATION;
    }
    let q_lin = DVector::zeros(n);
    let to_original = |y: &DVector<f64>| y.component_mul(&col_scale);

    // Worst violation of the original constraints at a candidate point,
    // for honest infeasibility reports in problem units.
    let original_violation = |x: &DVector<f64>| -> f64 {
        let mut worst = 0.0_f64;
        for (row, rhs) in eq_orig.iter().zip(eq_rhs_orig.iter()) {
            worst = worst.max((row.dot(x) - rhs).abs());
        }
        for i in 0..problem.ineq_mat.nrows() {
            let v = problem.ineq_mat.row(i).transpose().dot(x);
            worst = worst
                .max(problem.lower[i] - v)
                .max(v - problem.upper[i]);
        }
        worst
    };

    // Constraint rows move to y-space, then equilibrate to unit
    // max-norm; original rows are kept for the final contract check.
    let mut eq_rows: Vec<DVector<f64>> = eq_orig
        .iter()
        .map(|row| row.component_mul(&col_scale))
        .collect();
    let mut eq_rhs = eq_rhs_orig.clone();
    for (row, rhs) in eq_rows.iter_mut().zip(eq_rhs.iter_mut()) {
        let norm = row.amax();
        if norm > 0.0 {
            *row /= norm;
            *rhs /= norm;
        }
    }

    let b_scale = 1.0 + eq_rhs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let feas_tol = FEAS_TOL * b_scale;

    // Keep a maximal independent subset of the equality rows. On
    // inconsistency, report the least-squares residual of the ORIGINAL
    // rows so the caller sees the conflict in problem units.
    let kept = match independent_rows(&eq_rows, &eq_rhs, n, feas_tol) {
        Ok(kept) => kept,
        Err(_) => {
            let m = eq_orig.len();
            let mut a_full = DMatrix::zeros(m, n);
            let mut b_full = DVector::zeros(m);
            for (r, (row, rhs)) in eq_orig.iter().zip(eq_rhs_orig.iter()).enumerate() {
                a_full.row_mut(r).copy_from(&row.transpose());
                b_full[r] = *rhs;
            }
            let svd = a_full.clone().svd(true, true);
            let eps = 1e-12 * svd.singular_values.amax().max(f64::MIN_POSITIVE);
            let residual = match svd.solve(&b_full, eps) {
                Ok(x_ls) => (a_full * x_ls - b_full).amax(),
                Err(_) => f64::INFINITY,
            };
            return Ok(QpSolution {
                coeffs: DVector::zeros(n),
                objective: 0.0,
                status: QpStatus::Infeasible { residual },
            });
        }
    };
    let m_e = kept.len();
    let mut a_red = DMatrix::zeros(m_e, n);
    let mut b_red = DVector::zeros(m_e);
    for (r, &src) in kept.iter().enumerate() {
        a_red.row_mut(r).copy_from(&eq_rows[src].transpose());
        b_red[r] = eq_rhs[src];
    }

    // Equality-only optimum as the starting point.
    let y0 = match kkt_solve(&p_mat, &a_red, &(-&q_lin), &b_red) {
        Some((y, _)) => y,
        None => {
            return Ok(QpSolution {
                coeffs: DVector::zeros(n),
                objective: 0.0,
                status: QpStatus::Infeasible { residual: f64::INFINITY },
            })
        }
    };
    let eq_resid = max_residual(&a_red, &b_red, &y0);
    if eq_resid > feas_tol {
        let residual = original_violation(&to_original(&y0));
        return Ok(QpSolution {
            coeffs: DVector::zeros(n),
            objective: 0.0,
            status: QpStatus::Infeasible { residual },
        });
    }

    // Active boxes: rows of G restricted to the non-folded set, also
    // moved to y-space and equilibrated (positive scaling keeps the
    // bound order).
    let m_b = box_rows.len();
    let mut g_mat = DMatrix::zeros(m_b, n);
    let mut lower = DVector::zeros(m_b);
    let mut upper = DVector::zeros(m_b);
    for (r, &src) in box_rows.iter().enumerate() {
        let scaled = problem.ineq_mat.row(src).transpose().component_mul(&col_scale);
        let norm = scaled.amax().max(f64::MIN_POSITIVE);
        g_mat.row_mut(r).copy_from(&(scaled / norm).transpose());
        lower[r] = problem.lower[src] / norm;
        upper[r] = problem.upper[src] / norm;
    }
    let box_scale =
        1.0 + lower
            .iter()
            .chain(upper.iter())
            .filter(|v| v.is_finite())
            .fold(0.0_f64, |m, v| m.max(v.abs()));
    let box_tol = FEAS_TOL * box_scale;

    let y_start = if box_violation(&g_mat, &lower, &upper, &y0) > box_tol {
        match elastic_start(&p_mat, &a_red, &b_red, &g_mat, &lower, &upper, &y0) {
            Some(y) => {
                let viol = box_violation(&g_mat, &lower, &upper, &y);
                if viol > box_tol || max_residual(&a_red, &b_red, &y) > feas_tol {
                    let x = to_original(&y);
                    return Ok(QpSolution {
                        status: QpStatus::Infeasible {
                            residual: original_violation(&x),
                        },
                        objective: quad_objective(&problem.cost, &x),
                        coeffs: x,
                    });
                }
                y
            }
            None => {
                let x = to_original(&y0);
                return Ok(QpSolution {
                    objective: quad_objective(&problem.cost, &x),
                    coeffs: x,
                    status: QpStatus::Infeasible { residual: f64::INFINITY },
                })
            }
        }
    } else {
        y0
    };

    let max_iters = 50 * (n + m_e + m_b) + 100;
    let (y, status) = active_set_loop(
        &p_mat, &q_lin, &a_red, &b_red, &g_mat, &lower, &upper, y_start, max_iters,
    );
    let x = to_original(&y);

    // Report honestly: a "solved" point must satisfy the ORIGINAL
    // (unequilibrated) constraints at the promised tolerance.
    let status = if status == QpStatus::Solved {
        let mut resid = 0.0_f64;
        for (row, rhs) in eq_orig.iter().zip(eq_rhs_orig.iter()) {
            resid = resid.max((row.dot(&x) - rhs).abs());
        }
        for &src in &box_rows {
            let v = problem.ineq_mat.row(src).transpose().dot(&x);
            resid = resid
                .max(problem.lower[src] - v)
                .max(v - problem.upper[src]);
        }
        let orig_scale = 1.0
            + eq_rhs_orig
                .iter()
                .chain(problem.lower.iter())
                .chain(problem.upper.iter())
                .filter(|v| v.is_finite())
                .fold(0.0_f64, |m, v| m.max(v.abs()));
        if resid > 1e-7 * orig_scale {
            QpStatus::MaxIterations
        } else {
            QpStatus::Solved
        }
    } else {
        status
    };

    Ok(QpSolution {
        objective: quad_objective(&problem.cost, &x),
        coeffs: x,
        status,
    })
}

fn quad_objective(cost: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    (x.transpose() * cost * x)[(0, 0)]
}

fn max_residual(a: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    (a * x - b).amax()
}

fn box_violation(
    g: &DMatrix<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    x: &DVector<f64>,
) -> f64 {
    let mut worst = 0.0_f64;
    if g.nrows() == 0 {
        return worst;
    }
    let vals = g * x;
    for i in 0..vals.len() {
        worst = worst.max(lower[i] - vals[i]).max(vals[i] - upper[i]);
    }
    worst
}

/// Gaussian elimination with partial pivoting over a copy of the rows,
/// returning indices of a maximal independent subset (in ascending
/// order). Dependent rows must be consistent: a residual right-hand side
/// beyond `tol` aborts with that residual.
fn independent_rows(
    rows: &[DVector<f64>],
    rhs: &[f64],
    n: usize,
    tol: f64,
) -> Result<Vec<usize>, f64> {
    let m = rows.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    let mut work: Vec<DVector<f64>> = rows.to_vec();
    let mut wrhs: Vec<f64> = rhs.to_vec();
    let scale = rows
        .iter()
        .fold(0.0_f64, |acc, r| acc.max(r.amax()))
        .max(f64::MIN_POSITIVE);
    let pivot_tol = 1e-12 * scale;

    let mut kept: Vec<usize> = Vec::new();
    let mut used = vec![false; m];
    for col in 0..n {
        // most stable pivot among unused rows, lowest index on ties
        let mut best: Option<(usize, f64)> = None;
        for (r, row) in work.iter().enumerate() {
            if used[r] {
                continue;
            }
            let v = row[col].abs();
            if v > pivot_tol && best.map_or(true, |(_, bv)| v > bv) {
                best = Some((r, v));
            }
        }
        let Some((pr, _)) = best else { continue };
        used[pr] = true;
        kept.push(pr);
        let (pivot_row, pivot_rhs) = (work[pr].clone(), wrhs[pr]);
        let pv = pivot_row[col];
        for r in 0..m {
            if used[r] {
                continue;
            }
            let factor = work[r][col] / pv;
            if factor != 0.0 {
                work[r] -= &pivot_row * factor;
                work[r][col] = 0.0;
                wrhs[r] -= pivot_rhs * factor;
            }
        }
        if kept.len() == n {
            break;
        }
    }
    // unused rows are numerically zero combinations; their rhs must be too
    for r in 0..m {
        if !used[r] {
            let resid = wrhs[r].abs();
            if resid > tol {
                return Err(resid);
            }
        }
    }
    kept.sort_unstable();
    Ok(kept)
}

/// Solves the KKT system `[[P, N^T], [N, 0]] [x; lambda] = [top; bot]`
/// with LU plus two iterative-refinement passes, falling back to an SVD
/// least-squares solve when the factorization is singular.
fn kkt_solve(
    p: &DMatrix<f64>,
    n_mat: &DMatrix<f64>,
    top: &DVector<f64>,
    bot: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = p.ncols();
    let m = n_mat.nrows();
    let size = n + m;
    let mut k = DMatrix::zeros(size, size);
    k.view_mut((0, 0), (n, n)).copy_from(p);
    if m > 0 {
        k.view_mut((0, n), (n, m)).copy_from(&n_mat.transpose());
        k.view_mut((n, 0), (m, n)).copy_from(n_mat);
    }
    let mut rhs = DVector::zeros(size);
    rhs.rows_mut(0, n).copy_from(top);
    if m > 0 {
        rhs.rows_mut(n, m).copy_from(bot);
    }

    let lu = k.clone().lu();
    let mut z = match lu.solve(&rhs) {
        Some(z) => z,
        None => {
            let svd = k.clone().svd(true, true);
            let eps = 1e-12 * svd.singular_values.amax().max(f64::MIN_POSITIVE);
            svd.solve(&rhs, eps).ok()?
        }
    };
    for _ in 0..2 {
        let r = &rhs - &k * &z;
        if let Some(dz) = lu.solve(&r) {
            z += dz;
        }
    }
    if !z.iter().all(|v| v.is_finite()) {
        return None;
    }
    let x = z.rows(0, n).into_owned();
    let lambda = z.rows(n, m).into_owned();
    Some((x, lambda))
}

/// Exact-penalty elastic subproblem for a feasible start: minimize
/// `M * sum(s) + (delta/2)||s||^2 + (mu/2)||x - x0||^2` subject to the
/// reduced equalities, `g_i x + s_i >= l_i`, `g_i x - s_i <= u_i`, and
/// `s >= 0`. The linear penalty drives every slack exactly to zero
/// whenever the original box is reachable.
#[allow(clippy::too_many_arguments)]
fn elastic_start(
    p_mat: &DMatrix<f64>,
    a_red: &DMatrix<f64>,
    b_red: &DVector<f64>,
    g_mat: &DMatrix<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    x0: &DVector<f64>,
) -> Option<DVector<f64>> {
    let n = p_mat.ncols();
    let m_b = g_mat.nrows();
    let m_e = a_red.nrows();
    let nv = n + m_b;

    // The tether only has to make the x block positive definite; its
    // weight is otherwise arbitrary, and anything much weaker than this
    // pushes the subproblem's KKT condition number high enough that
    // solve noise exceeds the zero-step threshold.
    let p_scale = 1.0 + p_mat.diagonal().amax();
    let mu = 1e-6 * p_scale;
    let delta = 1e-4 * p_scale;
    let m_pen = p_scale;

    let mut p1 = DMatrix::zeros(nv, nv);
    for i in 0..n {
        p1[(i, i)] = mu;
    }
    for i in 0..m_b {
        p1[(n + i, n + i)] = delta;
    }
    let mut q1 = DVector::zeros(nv);
    for i in 0..n {
        q1[i] = -mu * x0[i];
    }
    for i in 0..m_b {
        q1[n + i] = m_pen;
    }

    let mut a1 = DMatrix::zeros(m_e, nv);
    a1.view_mut((0, 0), (m_e, n)).copy_from(a_red);

    // rows: [g, +e_i] in [l_i, inf); [g, -e_i] in (-inf, u_i]; [0, e_i] in [0, inf)
    let mut c_rows: Vec<DVector<f64>> = Vec::new();
    let mut c_lower: Vec<f64> = Vec::new();
    let mut c_upper: Vec<f64> = Vec::new();
    for i in 0..m_b {
        if lower[i].is_finite() {
            let mut row = DVector::zeros(nv);
            row.rows_mut(0, n).copy_from(&g_mat.row(i).transpose());
            row[n + i] = 1.0;
            c_rows.push(row);
            c_lower.push(lower[i]);
            c_upper.push(f64::INFINITY);
        }
        if upper[i].is_finite() {
            let mut row = DVector::zeros(nv);
            row.rows_mut(0, n).copy_from(&g_mat.row(i).transpose());
            row[n + i] = -1.0;
            c_rows.push(row);
            c_lower.push(f64::NEG_INFINITY);
            c_upper.push(upper[i]);
        }
        let mut srow = DVector::zeros(nv);
        srow[n + i] = 1.0;
        c_rows.push(srow);
        c_lower.push(0.0);
        c_upper.push(f64::INFINITY);
    }
    let m_c = c_rows.len();
    let mut c_mat = DMatrix::zeros(m_c, nv);
    for (r, row) in c_rows.iter().enumerate() {
        c_mat.row_mut(r).copy_from(&row.transpose());
    }
    let c_l = DVector::from_vec(c_lower);
    let c_u = DVector::from_vec(c_upper);

    // start: x0 with slacks comfortably above each row's violation
    let mut z0 = DVector::zeros(nv);
    z0.rows_mut(0, n).copy_from(x0);
    let g_x0 = if m_b > 0 { g_mat * x0 } else { DVector::zeros(0) };
    for i in 0..m_b {
        let mut need = 0.0_f64;
        if lower[i].is_finite() {
            need = need.max(lower[i] - g_x0[i]);
        }
        if upper[i].is_finite() {
            need = need.max(g_x0[i] - upper[i]);
        }
        z0[n + i] = need + 1.0;
    }

    let max_iters = 50 * (nv + m_e + m_c) + 100;
    let (z, status) = active_set_loop(
        &p1, &q1, &a1, b_red, &c_mat, &c_l, &c_u, z0, max_iters,
    );
    if status == QpStatus::MaxIterations {
        return None;
    }
    Some(z.rows(0, n).into_owned())
}

/// Primal active-set iteration from a feasible point. Minimizes
/// `0.5 x^T P x + q^T x` subject to `A x = b` (always in the working set)
/// and the boxes on rows of `C`. Ties break on the lowest row index, so
/// the path is deterministic.
#[allow(clippy::too_many_arguments)]
fn active_set_loop(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    a_red: &DMatrix<f64>,
    b_red: &DVector<f64>,
    c_mat: &DMatrix<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    mut x: DVector<f64>,
    max_iters: usize,
) -> (DVector<f64>, QpStatus) {
    let n = p.ncols();
    let m_e = a_red.nrows();
    let m_b = c_mat.nrows();
    let mut working: Vec<(usize, Side)> = Vec::new();

    for _ in 0..max_iters {
        let m_w = working.len();
        let mut n_mat = DMatrix::zeros(m_e + m_w, n);
        if m_e > 0 {
            n_mat.view_mut((0, 0), (m_e, n)).copy_from(a_red);
        }
        for (k, &(row, _)) in working.iter().enumerate() {
            n_mat.row_mut(m_e + k).copy_from(&c_mat.row(row));
        }

        let grad = p * &x + q;
        // bottom block restores any accumulated drift off the working
        // constraints instead of freezing the current residual in
        let mut bot = DVector::zeros(m_e + m_w);
        if m_e > 0 {
            bot.rows_mut(0, m_e).copy_from(&(b_red - a_red * &x));
        }
        for (k, &(row, side)) in working.iter().enumerate() {
            let bound = match side {
                Side::Lower => lower[row],
                Side::Upper => upper[row],
            };
            bot[m_e + k] = bound - (c_mat.row(row) * &x)[(0, 0)];
        }
        let Some((step, lambda)) = kkt_solve(p, &n_mat, &(-&grad), &bot) else {
            return (x, QpStatus::MaxIterations);
        };

        // A meaningful step runs the ratio test; a blocked step adds the
        // blocking row and resolves.
        let step_small = step.amax() <= STEP_TOL * (1.0 + x.amax());
        if !step_small {
            let mut alpha = 1.0_f64;
            let mut blocker: Option<(usize, Side)> = None;
            if m_b > 0 {
                let c_step = c_mat * &step;
                let c_x = c_mat * &x;
                for row in 0..m_b {
                    if working.iter().any(|&(r, _)| r == row) {
                        continue;
                    }
                    let d = c_step[row];
                    let scale = 1e-12 * (1.0 + c_x[row].abs() + d.abs());
                    if d > scale && upper[row].is_finite() {
                        let room = upper[row] - c_x[row];
                        let a = (room / d).max(0.0);
                        if a < alpha {
                            alpha = a;
                            blocker = Some((row, Side::Upper));
                        }
                    } else if d < -scale && lower[row].is_finite() {
                        let room = lower[row] - c_x[row];
                        let a = (room / d).max(0.0);
                        if a < alpha {
                            alpha = a;
                            blocker = Some((row, Side::Lower));
                        }
                    }
                }
            }
            x += &step * alpha;
            if let Some(b) = blocker {
                if alpha < 1.0 {
                    working.push(b);
                    continue;
                }
            }
            // Full step: x is now the current working set's optimum, and
            // the solve's multipliers are the multipliers there. Fall
            // through to the sign check instead of waiting for the next
            // solve to produce a numerically zero step; near-singular
            // subproblems jitter by more than any zero-step threshold
            // and would churn forever.
        }

        // At the working-set optimum: every multiplier with an
        // inadmissible sign marks a bound worth leaving; drop the worst
        // offender, or stop when none remains.
        let g_scale = 1.0 + grad.amax();
        let tol = MULT_TOL * g_scale;
        let mut worst: Option<(usize, f64)> = None;
        for (k, &(_, side)) in working.iter().enumerate() {
            let lam = lambda[m_e + k];
            let bad = match side {
                Side::Upper => -lam, // needs lam >= 0
                Side::Lower => lam,  // needs lam <= 0
            };
            if bad > tol && worst.map_or(true, |(_, wv)| bad > wv) {
                worst = Some((k, bad));
            }
        }
        match worst {
            None => return (x, QpStatus::Solved),
            Some((k, _)) => working.remove(k),
        };
    }
    (x, QpStatus::MaxIterations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn identity_cost(n: usize) -> DMatrix<f64> {
        DMatrix::identity(n, n)
    }

    #[test]
    fn equality_only_projects_onto_constraint() {
        // min x^T x with x0 + x1 = 2 -> x = (1, 1)
        let problem = QpProblem::equality(
            identity_cost(2),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_vec(vec![2.0]),
        );
        let sol = solve(&problem).unwrap();
        assert!(sol.is_solved());
        assert_relative_eq!(sol.coeffs[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(sol.coeffs[1], 1.0, epsilon = 1e-9);
        assert_relative_eq!(sol.objective, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn duplicate_consistent_equalities_are_reduced() {
        let problem = QpProblem::equality(
            identity_cost(2),
            DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0]),
            DVector::from_vec(vec![2.0, 4.0, 2.0]),
        );
        let sol = solve(&problem).unwrap();
        assert!(sol.is_solved());
        assert_relative_eq!(sol.coeffs[0], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn inconsistent_equalities_report_infeasible() {
        let problem = QpProblem::equality(
            identity_cost(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
            DVector::from_vec(vec![2.0, 3.0]),
        );
        let sol = solve(&problem).unwrap();
        match sol.status {
            QpStatus::Infeasible { residual } => assert!(residual > 0.1),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn active_upper_bound_is_attained() {
        // min (x - 3)^2 via equality-free form: cost (x-3)^2 = x^2 - 6x + 9
        // not expressible (no linear term); instead: min x^T x with x0 >= 2
        let problem = QpProblem {
            cost: identity_cost(1),
            eq_mat: DMatrix::zeros(0, 1),
            eq_rhs: DVector::zeros(0),
            ineq_mat: DMatrix::from_row_slice(1, 1, &[1.0]),
            lower: DVector::from_vec(vec![2.0]),
            upper: DVector::from_vec(vec![f64::INFINITY]),
        };
        let sol = solve(&problem).unwrap();
        assert!(sol.is_solved());
        assert_relative_eq!(sol.coeffs[0], 2.0, epsilon = 1e-8);
    }

    #[test]
    fn interior_box_stays_inactive() {
        let problem = QpProblem {
            cost: identity_cost(2),
            eq_mat: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            eq_rhs: DVector::from_vec(vec![2.0]),
            ineq_mat: DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            lower: DVector::from_vec(vec![-5.0]),
            upper: DVector::from_vec(vec![5.0]),
        };
        let sol = solve(&problem).unwrap();
        assert!(sol.is_solved());
        assert_relative_eq!(sol.coeffs[0], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn violated_box_pulls_solution_onto_bound() {
        // min x^T x, x0 + x1 = 2, x0 - x1 in [1, 3]
        // unconstrained eq optimum (1,1) violates the lower bound ->
        // optimum at x0 - x1 = 1: x = (1.5, 0.5)
        let problem = QpProblem {
            cost: identity_cost(2),
            eq_mat: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            eq_rhs: DVector::from_vec(vec![2.0]),
            ineq_mat: DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            lower: DVector::from_vec(vec![1.0]),
            upper: DVector::from_vec(vec![3.0]),
        };
        let sol = solve(&problem).unwrap();
        assert!(sol.is_solved());
        assert_relative_eq!(sol.coeffs[0], 1.5, epsilon = 1e-8);
        assert_relative_eq!(sol.coeffs[1], 0.5, epsilon = 1e-8);
    }

    #[test]
    fn degenerate_box_folds_to_equality() {
        let problem = QpProblem {
            cost: identity_cost(2),
            eq_mat: DMatrix::zeros(0, 2),
            eq_rhs: DVector::zeros(0),
            ineq_mat: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            lower: DVector::from_vec(vec![1.0]),
            upper: DVector::from_vec(vec![1.0]),
        };
        let sol = solve(&problem).unwrap();
        assert!(sol.is_solved());
        assert_relative_eq!(sol.coeffs[0], 1.0, epsilon = 1e-10);
        assert_relative_eq!(sol.coeffs[1], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn conflicting_boxes_report_infeasible() {
        // x0 >= 1 and x0 <= -1 cannot both hold
        let problem = QpProblem {
            cost: identity_cost(1),
            eq_mat: DMatrix::zeros(0, 1),
            eq_rhs: DVector::zeros(0),
            ineq_mat: DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            lower: DVector::from_vec(vec![1.0, f64::NEG_INFINITY]),
            upper: DVector::from_vec(vec![f64::INFINITY, -1.0]),
        };
        let sol = solve(&problem).unwrap();
        match sol.status {
            QpStatus::Infeasible { residual } => assert!(residual > 0.5),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn crossed_bounds_are_infeasible_immediately() {
        let problem = QpProblem {
            cost: identity_cost(1),
            eq_mat: DMatrix::zeros(0, 1),
            eq_rhs: DVector::zeros(0),
            ineq_mat: DMatrix::from_row_slice(1, 1, &[1.0]),
            lower: DVector::from_vec(vec![2.0]),
            upper: DVector::from_vec(vec![1.0]),
        };
        let sol = solve(&problem).unwrap();
        assert!(matches!(sol.status, QpStatus::Infeasible { .. }));
    }

    #[test]
    fn solve_is_bitwise_deterministic() {
        let problem = QpProblem {
            cost: identity_cost(3),
            eq_mat: DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]),
            eq_rhs: DVector::from_vec(vec![3.0]),
            ineq_mat: DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 0.0, 0.0, 1.0, -1.0]),
            lower: DVector::from_vec(vec![0.5, f64::NEG_INFINITY]),
            upper: DVector::from_vec(vec![f64::INFINITY, 0.25]),
        };
        let a = solve(&problem).unwrap();
        let b = solve(&problem).unwrap();
        assert_eq!(a.coeffs.as_slice(), b.coeffs.as_slice());
        assert_eq!(a.objective, b.objective);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let problem = QpProblem {
            cost: identity_cost(2),
            eq_mat: DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]),
            eq_rhs: DVector::from_vec(vec![1.0]),
            ineq_mat: DMatrix::zeros(0, 2),
            lower: DVector::zeros(0),
            upper: DVector::zeros(0),
        };
        assert!(matches!(solve(&problem), Err(QpError::DimensionMismatch(_))));
    }
}
