//! Brute-force reference implementations for testing the core crate.
//!
//! Everything here prefers transparency over speed: dense grids,
//! bisection, quadrature, and direct transcriptions of the defining
//! formulas. Tests compare the fast implementations in `perch-core`
//! against these.

pub mod qp;

use perch_core::polyalg::Polynomial;
use rand::Rng;

/// Random polynomial of exactly `degree` with coefficients uniform in
/// [-1, 1] and the leading coefficient kept away from the trim threshold.
pub fn random_unit_poly<R: Rng>(rng: &mut R, degree: usize) -> Polynomial {
    let mut coeffs: Vec<f64> = (0..=degree).map(|_| rng.random_range(-1.0..=1.0)).collect();
    while coeffs[degree].abs() < 1e-3 {
        coeffs[degree] = rng.random_range(-1.0..=1.0);
    }
    Polynomial::new(coeffs)
}

/// Counts roots of `p` on `(t0, tf]` with the scan oracle, returning
/// `None` when the result cannot be trusted at this grid resolution:
/// a root within `endpoint_margin` of either endpoint, two roots closer
/// than ten grid steps, or a near-tangency (a critical point where `|p|`
/// is tiny, which hides root pairs below the grid resolution). Callers
/// resample rejected polynomials; the filter bounds the oracle's validity,
/// not the implementation under test.
pub fn trusted_root_count(
    p: &Polynomial,
    t0: f64,
    tf: f64,
    points: usize,
    endpoint_margin: f64,
) -> Option<usize> {
    let step = (tf - t0) / points as f64;
    let roots = scan_roots(p, t0, tf, points);
    for r in &roots {
        if (r - t0).abs() < endpoint_margin || (r - tf).abs() < endpoint_margin {
            return None;
        }
    }
    for pair in roots.windows(2) {
        if pair[1] - pair[0] < 10.0 * step {
            return None;
        }
    }
    let scale = p.max_abs_coeff().max(1.0);
    for c in scan_roots(&p.derivative(), t0, tf, points) {
        if p.eval(c).abs() < 1e-6 * scale {
            return None;
        }
    }
    Some(roots.len())
}

/// Roots of `p` on `[t0, tf]` located by a dense sign-change scan over
/// `points` intervals followed by bisection refinement of each bracket.
/// Grid nodes that are exact zeros are included as-is. Roots closer
/// together than the grid spacing are not resolved.
pub fn scan_roots(p: &Polynomial, t0: f64, tf: f64, points: usize) -> Vec<f64> {
    assert!(t0 < tf && points >= 2);
    let step = (tf - t0) / points as f64;
    let value_at = |i: usize| -> (f64, f64) {
        let t = if i == points { tf } else { t0 + i as f64 * step };
        (t, p.eval(t))
    };
    let mut roots = Vec::new();
    let (mut ta, mut va) = value_at(0);
    for i in 1..=points {
        let (tb, vb) = value_at(i);
        if va == 0.0 {
            roots.push(ta);
        } else if vb != 0.0 && va.signum() != vb.signum() {
            roots.push(bisect(p, ta, tb, va));
        }
        ta = tb;
        va = vb;
    }
    if va == 0.0 {
        roots.push(ta);
    }
    roots
}

fn bisect(p: &Polynomial, mut a: f64, mut b: f64, va: f64) -> f64 {
    let mut sa = va.signum();
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let vm = p.eval(m);
        if vm == 0.0 {
            return m;
        }
        if vm.signum() == sa {
            a = m;
            sa = vm.signum();
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Number of sign-change roots found by [`scan_roots`].
pub fn count_roots_scan(p: &Polynomial, t0: f64, tf: f64, points: usize) -> usize {
    scan_roots(p, t0, tf, points).len()
}

/// Maximum of `p` over a dense grid of `points` intervals on `[t0, tf]`.
pub fn dense_max(p: &Polynomial, t0: f64, tf: f64, points: usize) -> f64 {
    assert!(t0 < tf && points >= 1);
    let step = (tf - t0) / points as f64;
    let mut m = f64::NEG_INFINITY;
    for i in 0..=points {
        let t = if i == points { tf } else { t0 + i as f64 * step };
        m = m.max(p.eval(t));
    }
    m
}

/// Composite Simpson quadrature with `panels` panels (doubled internally
/// when odd).
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = if panels % 2 == 0 { panels } else { panels + 1 };
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}
