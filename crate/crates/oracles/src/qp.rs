//! Reference solvers for small quadratic programs.
//!
//! These take deliberately different algorithmic routes from the core
//! solver: SVD nullspace elimination instead of KKT factorization, and
//! exhaustive active-set enumeration instead of a primal iteration.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Rank tolerance relative to the largest singular value.
const RANK_TOL: f64 = 1e-10;

/// Full SVD of `a` obtained by zero-padding to at least `n` rows so the
/// right factor spans all of R^n, returning the particular least-squares
/// solution of `a x = b` and an orthonormal nullspace basis.
fn particular_and_nullspace(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let n = a.ncols();
    let rows = a.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let mut b_pad = DVector::zeros(rows);
    b_pad.rows_mut(0, b.len()).copy_from(b);

    let svd = padded.svd(true, true);
    let sigma_max = svd.singular_values.amax().max(f64::MIN_POSITIVE);
    let eps = RANK_TOL * sigma_max;
    let x_p = svd.solve(&b_pad, eps).ok()?;

    let v_t = svd.v_t.as_ref()?;
    let rank = svd.singular_values.iter().filter(|s| **s > eps).count();
    let z = v_t.rows(rank, n - rank).transpose();
    Some((x_p, z))
}

/// Minimizer of `x^T Q x` subject to `A x = b` by nullspace reduction:
/// `x = x_p + Z y` with the reduced system solved through another SVD.
/// Returns `None` when the equalities are inconsistent.
pub fn equality_qp_nullspace(
    q: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Option<DVector<f64>> {
    let (x_p, z) = particular_and_nullspace(a, b)?;
    if a.nrows() > 0 {
        let resid = (a * &x_p - b).amax();
        let scale = 1.0 + b.amax();
        if resid > 1e-8 * scale {
            return None;
        }
    }
    if z.ncols() == 0 {
        return Some(x_p);
    }
    let h = q + q.transpose();
    let mut reduced = z.transpose() * &h * &z;
    for i in 0..reduced.nrows() {
        reduced[(i, i)] += 1e-12 * (1.0 + reduced[(i, i)].abs());
    }
    let rhs = -(z.transpose() * &h * &x_p);
    let svd = reduced.svd(true, true);
    let eps = RANK_TOL * svd.singular_values.amax().max(f64::MIN_POSITIVE);
    let y = svd.solve(&rhs, eps).ok()?;
    Some(x_p + z * y)
}

/// Objective `x^T Q x`.
pub fn objective(q: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    (x.transpose() * q * x)[(0, 0)]
}

/// Exhaustive solve of `min x^T Q x` with `A x = b` and boxed rows
/// `l <= G x <= u`: every assignment of each row to free / at-lower /
/// at-upper is tried as an equality-constrained subproblem, kept when it
/// is primal feasible with correctly signed multipliers, and the lowest
/// objective wins. Exponential in the row count, so only for small
/// problems. Returns `None` if no assignment is consistent.
pub fn boxed_qp_enumerate(
    q: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    g: &DMatrix<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> Option<DVector<f64>> {
    let n = q.ncols();
    let m_e = a.nrows();
    let m_b = g.nrows();
    assert!(m_b <= 12, "enumeration oracle is exponential in box rows");

    let scale = 1.0
        + b.amax().max(
            lower
                .iter()
                .chain(upper.iter())
                .filter(|v| v.is_finite())
                .fold(0.0_f64, |m, v| m.max(v.abs())),
        );
    let feas_tol = 1e-7 * scale;

    let mut best: Option<(f64, DVector<f64>)> = None;
    let patterns = 3usize.pow(m_b as u32);
    'outer: for code in 0..patterns {
        // decode: 0 = free, 1 = at lower, 2 = at upper
        let mut state = Vec::with_capacity(m_b);
        let mut c = code;
        for _ in 0..m_b {
            state.push(c % 3);
            c /= 3;
        }
        for (i, s) in state.iter().enumerate() {
            if *s == 1 && !lower[i].is_finite() {
                continue 'outer;
            }
            if *s == 2 && !upper[i].is_finite() {
                continue 'outer;
            }
        }

        let active: Vec<usize> = (0..m_b).filter(|i| state[*i] != 0).collect();
        let mut a_full = DMatrix::zeros(m_e + active.len(), n);
        let mut b_full = DVector::zeros(m_e + active.len());
        a_full.view_mut((0, 0), (m_e, n)).copy_from(a);
        b_full.rows_mut(0, m_e).copy_from(b);
        for (k, &i) in active.iter().enumerate() {
            a_full.row_mut(m_e + k).copy_from(&g.row(i));
            b_full[m_e + k] = if state[i] == 1 { lower[i] } else { upper[i] };
        }

        let Some(x) = equality_qp_nullspace(q, &a_full, &b_full) else {
            continue;
        };
        if m_e > 0 && (a * &x - b).amax() > feas_tol {
            continue;
        }
        if m_b > 0 {
            let vals = g * &x;
            for i in 0..m_b {
                if vals[i] < lower[i] - feas_tol || vals[i] > upper[i] + feas_tol {
                    continue 'outer;
                }
            }
        }

        // stationarity multipliers by least squares; reject wrong signs
        let h = q + q.transpose();
        let grad = &h * &x;
        if !active.is_empty() || m_e > 0 {
            let mt = a_full.transpose();
            let svd = mt.clone().svd(true, true);
            let eps = RANK_TOL * svd.singular_values.amax().max(f64::MIN_POSITIVE);
            let Ok(mults) = svd.solve(&(-&grad), eps) else {
                continue;
            };
            let resid = (&mt * &mults + &grad).amax();
            if resid > 1e-6 * (1.0 + grad.amax()) {
                continue;
            }
            let mult_tol = 1e-7 * (1.0 + grad.amax());
            for (k, &i) in active.iter().enumerate() {
                let lam = mults[m_e + k];
                let bad = if state[i] == 2 { -lam } else { lam };
                if bad > mult_tol {
                    continue 'outer;
                }
            }
        } else if grad.amax() > 1e-6 * (1.0 + grad.amax()) {
            // unconstrained pattern must be a stationary point
            continue;
        }

        let f = objective(q, &x);
        if best.as_ref().map_or(true, |(bf, _)| f < *bf) {
            best = Some((f, x));
        }
    }
    best.map(|(_, x)| x)
}

/// Gram-matrix entry of the `j`-th basis-derivative product by Simpson
/// quadrature on `[0, duration]`.
pub fn gram_entry_quadrature(duration: f64, m: usize, n: usize, j: usize, panels: usize) -> f64 {
    fn ff(n: usize, k: usize) -> f64 {
        (n + 1 - k..=n).map(|v| v as f64).product()
    }
    if m < j || n < j {
        return 0.0;
    }
    let f = |t: f64| {
        ff(m, j) * t.powi((m - j) as i32) * ff(n, j) * t.powi((n - j) as i32)
    };
    crate::simpson(f, 0.0, duration, panels)
}

/// Unit directions in the nullspace of `active` (feasible perturbation
/// directions for equality-constrained problems). Empty when the
/// nullspace is trivial.
pub fn nullspace_directions<R: Rng>(
    active: &DMatrix<f64>,
    rng: &mut R,
    count: usize,
) -> Vec<DVector<f64>> {
    let zero_b = DVector::zeros(active.nrows());
    let Some((_, z)) = particular_and_nullspace(active, &zero_b) else {
        return Vec::new();
    };
    if z.ncols() == 0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let y = DVector::from_fn(z.ncols(), |_, _| rng.random_range(-1.0..=1.0));
        let d = &z * y;
        let norm = d.norm();
        if norm > 1e-12 {
            out.push(d / norm);
        }
    }
    out
}
