//! Assembly of flat trajectory problems into boxed QPs.
//!
//! Solver variables are orthonormal shifted-Legendre coefficients of
//! each segment in duration-normalized local time, stacked
//! dimension-major: at order 14 the monomials `s^12..s^14` are
//! numerically collinear on [0, 1], which makes monomial KKT systems
//! singular to working precision, while the Legendre Gram stays well
//! conditioned. Everything is built natively in that basis — the cost
//! from powers of the (positive, sparse) derivative operator, constraint
//! rows from stable value recurrences — because conjugating monomial
//! matrices through the change of basis cancels catastrophically at this
//! order. Real-time derivative rows carry a `T^-order` factor; the cost
//! block scales by `T^(1 - 2 j)`. Solutions convert to monomial
//! coefficients once at the end with compensated dot products.
//!
//! Dimensions are solved together only when a constraint row couples
//! them; otherwise each gets its own smaller QP.

use alloc::{vec, vec::Vec};
use nalgebra::{DMatrix, DVector};
#[cfg_attr(feature = "std", allow(unused_imports))]
use num_traits::Float;

use super::{QpError, QpProblem, QpStatus};
use crate::polyalg::Polynomial;
use crate::trajectory::{
    LinearRow, PiecewiseTrajectory, TrajectoryProblem, DIM_YAW, FLAT_DIMS,
};

/// Highest supported polynomial order: the exact-integer binomial
/// products in the basis conversion stay below 2^53 through this order.
pub const MAX_POLY_ORDER: usize = 28;

/// One solve group: the flat dimensions it owns and the assembled QP.
///
/// Problem variables are orthonormal shifted-Legendre coefficients per
/// segment, dimension-major; [`GroupQp::to_monomial`] converts a solution
/// vector's blocks to normalized-local-time monomial coefficients.
#[derive(Debug, Clone)]
pub struct GroupQp {
    pub dims: Vec<usize>,
    pub problem: QpProblem,
    n_segments: usize,
    block: usize,
}

impl GroupQp {
    /// Monomial coefficients (normalized local time) of one segment of
    /// one group dimension from a solution vector.
    pub fn to_monomial(&self, solution: &DVector<f64>, group_dim: usize, seg: usize) -> Vec<f64> {
        let basis = legendre_basis_matrix(self.block);
        let base = (group_dim * self.n_segments + seg) * self.block;
        let a: Vec<f64> = solution.as_slice()[base..base + self.block].to_vec();
        (0..self.block)
            .map(|m| {
                let row: Vec<f64> = (0..self.block).map(|k| basis[(m, k)]).collect();
                dd_dot(&row, &a)
            })
            .collect()
    }
}

/// Exact binomial coefficient as f64 (inputs small enough to stay
/// integer-exact).
fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 1..=k {
        c = c * (n - k + i) as u128 / i as u128;
    }
    c as f64
}

/// Change of basis on [0, 1]: column `k` holds the monomial coefficients
/// of `sqrt(2k + 1) * P_k(2s - 1)` from the closed form
/// `P_k(2s - 1) = sum_m (-1)^(k - m) C(k, m) C(k + m, m) s^m`, whose
/// integer products are exactly representable.
fn legendre_basis_matrix(size: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(size, size);
    for k in 0..size {
        let norm = ((2 * k + 1) as f64).sqrt();
        for m in 0..=k {
            let sign = if (k - m) % 2 == 0 { 1.0 } else { -1.0 };
            out[(m, k)] = sign * binomial(k, m) * binomial(k + m, m) * norm;
        }
    }
    out
}

/// Derivative operator in the orthonormal shifted-Legendre basis:
/// column `k` expands `phi_k'` as `sum_j 2 sqrt((2k+1)(2j+1)) phi_j`
/// over `j = k-1, k-3, ...`. Entries are positive, so powers of this
/// matrix accumulate no cancellation.
fn legendre_derivative_operator(size: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(size, size);
    for k in 1..size {
        let mut j = k - 1;
        loop {
            d[(j, k)] = 2.0 * (((2 * k + 1) * (2 * j + 1)) as f64).sqrt();
            if j < 2 {
                break;
            }
            j -= 2;
        }
    }
    d
}

/// Values `phi_j(s)` for `j < size` by the stable three-term recurrence.
fn legendre_values(size: usize, s: f64) -> DVector<f64> {
    let u = 2.0 * s - 1.0;
    let mut vals = DVector::zeros(size);
    let mut prev = 1.0;
    let mut cur = u;
    for k in 0..size {
        let p = match k {
            0 => 1.0,
            1 => u,
            _ => {
                let next = (((2 * k - 1) as f64) * u * cur - (k - 1) as f64 * prev)
                    / k as f64;
                prev = cur;
                cur = next;
                next
            }
        };
        vals[k] = p * ((2 * k + 1) as f64).sqrt();
    }
    vals
}

/// Row of `order`-th derivatives of the orthonormal Legendre basis at
/// local `s`: entry `k` is `phi_k^(order)(s)`, computed by pulling the
/// value vector back through the derivative operator.
fn legendre_deriv_row(d_op: &DMatrix<f64>, order: usize, s: f64) -> DVector<f64> {
    let mut v = legendre_values(d_op.nrows(), s);
    for _ in 0..order {
        v = d_op.transpose() * v;
    }
    v
}

/// Dot product with FMA-compensated products and Neumaier summation:
/// accurate to about one ulp of the true result even when large terms
/// cancel, which they do when converting high-order Legendre
/// coefficients to monomial form.
fn dd_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for (x, y) in a.iter().zip(b.iter()) {
        let p = x * y;
        let p_err = Float::mul_add(*x, *y, -p);
        let t = sum + p;
        let s_err = if sum.abs() >= p.abs() {
            (sum - t) + p
        } else {
            (p - t) + sum
        };
        sum = t;
        comp += s_err + p_err;
    }
    sum + comp
}

fn validate(tp: &TrajectoryProblem) -> Result<(), QpError> {
    if tp.knots.len() < 2
        || tp.knots.iter().any(|k| !k.is_finite())
        || tp.knots.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(QpError::InvalidKnots);
    }
    if tp.poly_order > MAX_POLY_ORDER {
        return Err(QpError::OrderTooHigh(tp.poly_order));
    }
    if tp.poly_order < tp.cost_order {
        return Err(QpError::OrderTooLow {
            poly_order: tp.poly_order,
            order: tp.cost_order,
        });
    }
    if tp.poly_order < tp.continuity_order {
        return Err(QpError::OrderTooLow {
            poly_order: tp.poly_order,
            order: tp.continuity_order,
        });
    }
    for pin in &tp.pins {
        if pin.knot >= tp.knots.len() || pin.dim >= FLAT_DIMS {
            return Err(QpError::DimensionMismatch("pin knot or dimension out of range"));
        }
        if pin.order > tp.poly_order {
            return Err(QpError::OrderTooLow {
                poly_order: tp.poly_order,
                order: pin.order,
            });
        }
        if !pin.value.is_finite() {
            return Err(QpError::NonFinite);
        }
    }
    let (t0, tf) = (tp.knots[0], *tp.knots.last().unwrap());
    for row in &tp.rows {
        if !(row.time >= t0 && row.time <= tf) {
            return Err(QpError::TimeOutOfRange(row.time));
        }
        if row.order > tp.poly_order {
            return Err(QpError::OrderTooLow {
                poly_order: tp.poly_order,
                order: row.order,
            });
        }
        if row.weights.iter().any(|w| !w.is_finite())
            || row.lower.is_nan()
            || row.upper.is_nan()
        {
            return Err(QpError::NonFinite);
        }
        let translation = row.weights[..DIM_YAW].iter().any(|w| *w != 0.0);
        if translation && row.weights[DIM_YAW] != 0.0 {
            return Err(QpError::UnsupportedCoupling);
        }
    }
    Ok(())
}

/// Partition of the flat dimensions into solve groups: dimensions merge
/// exactly when some constraint row gives both a nonzero weight. Groups
/// come out sorted, as do the dimensions within each.
pub fn group_dims(tp: &TrajectoryProblem) -> Result<Vec<Vec<usize>>, QpError> {
    validate(tp)?;
    let mut parent: [usize; FLAT_DIMS] = [0, 1, 2, 3];
    fn find(parent: &mut [usize; FLAT_DIMS], i: usize) -> usize {
        let mut root = i;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = i;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for row in &tp.rows {
        let active: Vec<usize> = (0..FLAT_DIMS).filter(|d| row.weights[*d] != 0.0).collect();
        for pair in active.windows(2) {
            let (a, b) = (find(&mut parent, pair[0]), find(&mut parent, pair[1]));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for d in 0..FLAT_DIMS {
        let root = find(&mut parent, d);
        if root == d {
            groups.push(vec![d]);
        } else {
            groups
                .iter_mut()
                .find(|g| g[0] == root)
                .expect("root precedes member")
                .push(d);
        }
    }
    Ok(groups)
}

struct Layout<'a> {
    knots: &'a [f64],
    durations: Vec<f64>,
    size: usize,
    dims: Vec<usize>,
}

impl Layout<'_> {
    fn n_segments(&self) -> usize {
        self.durations.len()
    }

    fn n_vars(&self) -> usize {
        self.dims.len() * self.n_segments() * self.size
    }

    fn col(&self, group_dim: usize, seg: usize, coeff: usize) -> usize {
        (group_dim * self.n_segments() + seg) * self.size + coeff
    }

    /// Segment owning time `t` plus the normalized local offset;
    /// interior knots resolve to the segment ending there.
    fn locate(&self, t: f64) -> (usize, f64) {
        let below = self.knots.partition_point(|k| *k < t);
        let seg = below.saturating_sub(1).min(self.n_segments() - 1);
        let s = ((t - self.knots[seg]) / self.durations[seg]).clamp(0.0, 1.0);
        (seg, s)
    }
}

/// Assembles the QP for one solve group of a validated problem.
pub fn assemble_group(tp: &TrajectoryProblem, dims: &[usize]) -> Result<GroupQp, QpError> {
    validate(tp)?;
    if dims.is_empty() || dims.iter().any(|d| *d >= FLAT_DIMS) {
        return Err(QpError::DimensionMismatch("bad group dimension list"));
    }
    let layout = Layout {
        knots: &tp.knots,
        durations: tp.knots.windows(2).map(|w| w[1] - w[0]).collect(),
        size: tp.poly_order + 1,
        dims: dims.to_vec(),
    };
    let nseg = layout.n_segments();
    let n = layout.n_vars();
    let j = tp.cost_order as i32;
    let d_op = legendre_derivative_operator(layout.size);

    // Cost: Gram of the j-th basis derivative on [0, 1]. With an
    // orthonormal basis this is (D^j)^T D^j exactly, all summands
    // positive; per segment it scales by T^(1-2j).
    let mut d_pow = DMatrix::identity(layout.size, layout.size);
    for _ in 0..tp.cost_order {
        d_pow = &d_op * d_pow;
    }
    let q_unit = d_pow.transpose() * &d_pow;
    let mut cost = DMatrix::zeros(n, n);
    for gd in 0..dims.len() {
        for (seg, duration) in layout.durations.iter().enumerate() {
            let w = duration.powi(1 - 2 * j);
            let base = layout.col(gd, seg, 0);
            cost.view_mut((base, base), (layout.size, layout.size))
                .copy_from(&(&q_unit * w));
        }
    }

    let pins: Vec<_> = tp
        .pins
        .iter()
        .filter(|p| dims.contains(&p.dim))
        .collect();
    let eq_inline: Vec<&LinearRow> = tp
        .rows
        .iter()
        .filter(|r| row_in_group(r, dims) && r.lower == r.upper)
        .collect();
    let boxes: Vec<&LinearRow> = tp
        .rows
        .iter()
        .filter(|r| row_in_group(r, dims) && r.lower != r.upper)
        .collect();

    // Equalities: continuity through the configured order at interior
    // knots (per dimension), then pins, then inline equality rows.
    let orders = tp.continuity_order + 1;
    let cont_rows = (nseg - 1) * orders;
    let m_e = dims.len() * cont_rows + pins.len() + eq_inline.len();
    let mut eq_mat = DMatrix::zeros(m_e, n);
    let mut eq_rhs = DVector::zeros(m_e);
    let mut next = 0;

    for gd in 0..dims.len() {
        for knot in 1..nseg {
            for k in 0..orders {
                let t_left = layout.durations[knot - 1];
                let t_right = layout.durations[knot];
                let left = legendre_deriv_row(&d_op, k, 1.0) * t_left.powi(-(k as i32));
                let right = legendre_deriv_row(&d_op, k, 0.0) * t_right.powi(-(k as i32));
                for c in 0..layout.size {
                    eq_mat[(next, layout.col(gd, knot - 1, c))] = left[c];
                    eq_mat[(next, layout.col(gd, knot, c))] = -right[c];
                }
                next += 1;
            }
        }
    }

    for pin in pins {
        let gd = dims.iter().position(|d| *d == pin.dim).unwrap();
        let (seg, s) = if pin.knot == 0 {
            (0, 0.0)
        } else {
            (pin.knot - 1, 1.0)
        };
        let row = legendre_deriv_row(&d_op, pin.order, s)
            * layout.durations[seg].powi(-(pin.order as i32));
        for c in 0..layout.size {
            eq_mat[(next, layout.col(gd, seg, c))] = row[c];
        }
        eq_rhs[next] = pin.value;
        next += 1;
    }

    for row in &eq_inline {
        fill_linear_row(&layout, &d_op, row, &mut eq_mat, next);
        eq_rhs[next] = row.lower;
        next += 1;
    }
    debug_assert_eq!(next, m_e);

    let m_b = boxes.len();
    let mut ineq_mat = DMatrix::zeros(m_b, n);
    let mut lower = DVector::zeros(m_b);
    let mut upper = DVector::zeros(m_b);
    for (r, row) in boxes.iter().enumerate() {
        fill_linear_row(&layout, &d_op, row, &mut ineq_mat, r);
        lower[r] = row.lower;
        upper[r] = row.upper;
    }

    Ok(GroupQp {
        dims: dims.to_vec(),
        problem: QpProblem {
            cost,
            eq_mat,
            eq_rhs,
            ineq_mat,
            lower,
            upper,
        },
        n_segments: nseg,
        block: layout.size,
    })
}

fn row_in_group(row: &LinearRow, dims: &[usize]) -> bool {
    (0..FLAT_DIMS).any(|d| row.weights[d] != 0.0 && dims.contains(&d))
}

fn fill_linear_row(
    layout: &Layout<'_>,
    d_op: &DMatrix<f64>,
    row: &LinearRow,
    out: &mut DMatrix<f64>,
    out_row: usize,
) {
    let (seg, s) = layout.locate(row.time);
    let t_seg = layout.durations[seg];
    let basis = legendre_deriv_row(d_op, row.order, s) * t_seg.powi(-(row.order as i32));
    for (gd, dim) in layout.dims.iter().enumerate() {
        let w = row.weights[*dim];
        if w == 0.0 {
            continue;
        }
        for c in 0..layout.size {
            out[(out_row, layout.col(gd, seg, c))] = w * basis[c];
        }
    }
}

/// Solves a flat trajectory problem group by group and reassembles the
/// piecewise trajectory. Any non-solved group status becomes an error.
pub fn solve_flat_problem(tp: &TrajectoryProblem) -> Result<PiecewiseTrajectory, QpError> {
    let groups = group_dims(tp)?;
    let nseg = tp.knots.len() - 1;
    let mut dims_out: [Vec<Polynomial>; FLAT_DIMS] =
        [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    for group in &groups {
        let assembled = assemble_group(tp, group)?;
        let solution = super::solve(&assembled.problem)?;
        match solution.status {
            QpStatus::Solved => {}
            QpStatus::Infeasible { residual } => {
                return Err(QpError::Infeasible { residual })
            }
            QpStatus::MaxIterations => return Err(QpError::MaxIterations),
        }
        for (gd, dim) in group.iter().enumerate() {
            for seg in 0..nseg {
                let coeffs = assembled.to_monomial(&solution.coeffs, gd, seg);
                dims_out[*dim].push(Polynomial::new(coeffs));
            }
        }
    }
    PiecewiseTrajectory::new(tp.knots.clone(), dims_out)
        .map_err(|_| QpError::DimensionMismatch("solved coefficients malformed"))
}
