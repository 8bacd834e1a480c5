//! Dense univariate polynomials over `f64`, Sturm-sequence root counting,
//! and the global bound certificate used to certify thrust limits.

use alloc::vec;
use alloc::vec::Vec;

/// Relative tolerance for [`Polynomial::trim_relative`] as used by the
/// Euclidean chain algorithms: a trailing coefficient at or below this
/// fraction of the largest coefficient magnitude counts as a numerical
/// degree collapse.
pub const LEADING_COEFF_TOL: f64 = 1e-12;

/// Relative tolerance below which a remainder in a Euclidean chain counts
/// as numerically zero and terminates the chain.
const CHAIN_ZERO_TOL: f64 = 1e-12;

/// Relative tolerance below which a chain value at an evaluation point is
/// skipped in the sign-variation count.
const SIGN_ZERO_TOL: f64 = 1e-12;


/// Errors from polynomial algebra.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolyError {
    /// The operation requires a nonzero polynomial. Raised in particular
    /// when a bound certificate is asked about a polynomial identically
    /// equal to its bound.
    #[error("operation requires a nonzero polynomial")]
    ZeroPolynomial,
    /// Interval endpoints must satisfy `t0 < tf`.
    #[error("invalid interval: require t0 < tf, got [{t0}, {tf}]")]
    InvalidInterval { t0: f64, tf: f64 },
    /// A coefficient or bound was NaN or infinite.
    #[error("coefficients and bounds must be finite")]
    NonFinite,
}

/// Dense polynomial with `coeffs[i]` multiplying `t^i`.
///
/// The zero polynomial is the empty coefficient vector; construction
/// strips exactly-zero trailing coefficients and nothing else, so a small
/// but genuine leading coefficient survives no matter how large the other
/// coefficients are. Numerical degree collapse is an explicit decision
/// via [`Polynomial::trim_relative`].
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    /// Builds a polynomial, stripping exactly-zero trailing coefficients.
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Polynomial { coeffs }
    }

    pub fn zero() -> Self {
        Polynomial { coeffs: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    /// Drops trailing coefficients at or below `rel_tol` times the
    /// largest coefficient magnitude. Euclidean remainder chains need
    /// this: cancellation leaves garbage leading coefficients that would
    /// otherwise poison the next division.
    pub fn trim_relative(mut self, rel_tol: f64) -> Polynomial {
        let scale = self.max_abs_coeff();
        if scale == 0.0 || !scale.is_finite() {
            return self;
        }
        let tol = rel_tol * scale;
        while let Some(&last) = self.coeffs.last() {
            if last.abs() <= tol {
                self.coeffs.pop();
            } else {
                break;
            }
        }
        self
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient of `t^i`, zero beyond the stored degree.
    pub fn coeff(&self, i: usize) -> f64 {
        self.coeffs.get(i).copied().unwrap_or(0.0)
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// Horner evaluation.
    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() <= 1 {
            return Polynomial::zero();
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(n, c)| c * n as f64)
            .collect();
        Polynomial::new(coeffs)
    }

    /// `order`-th derivative.
    pub fn differentiate(&self, order: usize) -> Polynomial {
        let mut p = self.clone();
        for _ in 0..order {
            if p.is_zero() {
                break;
            }
            p = p.derivative();
        }
        p
    }

    pub fn scale(&self, factor: f64) -> Polynomial {
        Polynomial::new(self.coeffs.iter().map(|c| c * factor).collect())
    }

    /// Rescales to unit max-norm; identity for the zero polynomial.
    fn normalized(&self) -> Polynomial {
        let scale = self.max_abs_coeff();
        if scale == 0.0 {
            Polynomial::zero()
        } else {
            self.scale(1.0 / scale)
        }
    }

    /// Euclidean division: returns `(quotient, remainder)` with
    /// `self = quotient * divisor + remainder` and
    /// `degree(remainder) < degree(divisor)`.
    pub fn divmod(&self, divisor: &Polynomial) -> Result<(Polynomial, Polynomial), PolyError> {
        let db = divisor.degree().ok_or(PolyError::ZeroPolynomial)?;
        let da = match self.degree() {
            Some(da) if da >= db => da,
            _ => return Ok((Polynomial::zero(), self.clone())),
        };
        let lead = divisor.coeffs[db];
        let mut rem = self.coeffs.clone();
        let mut quot = vec![0.0; da - db + 1];
        for k in (0..=da - db).rev() {
            let c = rem[db + k] / lead;
            quot[k] = c;
            for (i, &bc) in divisor.coeffs.iter().enumerate() {
                rem[i + k] -= c * bc;
            }
        }
        rem.truncate(db);
        Ok((Polynomial::new(quot), Polynomial::new(rem)))
    }
}

impl core::ops::Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        Polynomial::new(self.coeffs.iter().map(|c| -c).collect())
    }
}

impl core::ops::Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let coeffs = (0..n).map(|i| self.coeff(i) + rhs.coeff(i)).collect();
        Polynomial::new(coeffs)
    }
}

impl core::ops::Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let coeffs = (0..n).map(|i| self.coeff(i) - rhs.coeff(i)).collect();
        Polynomial::new(coeffs)
    }
}

impl core::ops::Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        if self.is_zero() || rhs.is_zero() {
            return Polynomial::zero();
        }
        let mut coeffs = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        Polynomial::new(coeffs)
    }
}

/// Remainder of the Euclidean division of `a` by `b`.
pub fn remainder(a: &Polynomial, b: &Polynomial) -> Result<Polynomial, PolyError> {
    Ok(a.divmod(b)?.1)
}

/// Greatest common divisor up to scaling, by the Euclidean remainder chain.
/// Each iterate is rescaled to unit max-norm; the chain terminates when a
/// remainder is numerically zero relative to its operands.
fn poly_gcd(a: &Polynomial, b: &Polynomial) -> Polynomial {
    let mut f = a.normalized();
    let mut g = b.normalized();
    if f.is_zero() {
        return g;
    }
    while !g.is_zero() {
        let r = match remainder(&f, &g) {
            Ok(r) => r.trim_relative(LEADING_COEFF_TOL),
            Err(_) => break,
        };
        let next = if r.max_abs_coeff() <= CHAIN_ZERO_TOL * f.max_abs_coeff().max(g.max_abs_coeff())
        {
            Polynomial::zero()
        } else {
            r.normalized()
        };
        f = g;
        g = next;
    }
    f
}

/// Removes repeated roots: returns `p / gcd(p, p')`, leaving a polynomial
/// with the same root set, each root simple.
fn squarefree_part(p: &Polynomial) -> Polynomial {
    let g = poly_gcd(p, &p.derivative());
    match g.degree() {
        Some(d) if d >= 1 => match p.divmod(&g) {
            Ok((q, _)) if !q.is_zero() => q.trim_relative(LEADING_COEFF_TOL),
            _ => p.clone(),
        },
        _ => p.clone(),
    }
}

/// Sturm chain of a squarefree polynomial.
///
/// `chain[0]` is the input, `chain[1]` its derivative, and each later
/// entry a positive multiple of the negated remainder of the two
/// preceding entries. Rescaling every entry to unit max-norm keeps the
/// chain's values on comparable scales (so the relative zero tolerance in
/// the sign-variation count is meaningful) and leaves every sign
/// variation unchanged.
#[derive(Debug, Clone)]
pub struct SturmSequence {
    chain: Vec<Polynomial>,
}

impl SturmSequence {
    pub fn build(p: &Polynomial) -> Result<Self, PolyError> {
        if p.is_zero() {
            return Err(PolyError::ZeroPolynomial);
        }
        if !p.is_finite() {
            return Err(PolyError::NonFinite);
        }
        let mut chain = vec![p.clone()];
        let d = p.derivative();
        if d.is_zero() {
            return Ok(SturmSequence { chain });
        }
        chain.push(d);
        loop {
            let n = chain.len();
            let (prev, last) = (&chain[n - 2], &chain[n - 1]);
            if last.degree() == Some(0) {
                break;
            }
            let r = remainder(prev, last)?.trim_relative(LEADING_COEFF_TOL);
            if r.max_abs_coeff()
                <= CHAIN_ZERO_TOL * prev.max_abs_coeff().max(last.max_abs_coeff())
            {
                break;
            }
            chain.push((-&r).normalized());
        }
        Ok(SturmSequence { chain })
    }

    pub fn chain(&self) -> &[Polynomial] {
        &self.chain
    }

    /// Sign variations of the chain at `t`. Values below [`SIGN_ZERO_TOL`]
    /// relative to the largest chain value at `t` count as zero and are
    /// skipped.
    pub fn sign_variations(&self, t: f64) -> usize {
        let values: Vec<f64> = self.chain.iter().map(|p| p.eval(t)).collect();
        let vmax = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if vmax == 0.0 {
            return 0;
        }
        let tol = SIGN_ZERO_TOL * vmax;
        let mut variations = 0;
        let mut prev_sign = 0i8;
        for v in values {
            if v.abs() < tol {
                continue;
            }
            let sign = if v > 0.0 { 1 } else { -1 };
            if prev_sign != 0 && sign != prev_sign {
                variations += 1;
            }
            prev_sign = sign;
        }
        variations
    }

    /// Number of distinct real roots in `(t0, tf]`, as the difference of
    /// sign variations at the endpoints.
    pub fn count_roots(&self, t0: f64, tf: f64) -> Result<usize, PolyError> {
        if !(t0 < tf) || !t0.is_finite() || !tf.is_finite() {
            return Err(PolyError::InvalidInterval { t0, tf });
        }
        Ok(self.sign_variations(t0).saturating_sub(self.sign_variations(tf)))
    }
}

/// Counts the distinct real roots of `p` in `(t0, tf]`.
///
/// The input is reduced to its squarefree part first, so repeated roots
/// count once. Requires a nonzero polynomial and `t0 < tf`.
pub fn sturm_count_roots(p: &Polynomial, t0: f64, tf: f64) -> Result<usize, PolyError> {
    if p.is_zero() {
        return Err(PolyError::ZeroPolynomial);
    }
    if !p.is_finite() {
        return Err(PolyError::NonFinite);
    }
    if !(t0 < tf) || !t0.is_finite() || !tf.is_finite() {
        return Err(PolyError::InvalidInterval { t0, tf });
    }
    let sf = squarefree_part(p).normalized();
    if sf.degree() == Some(0) {
        return Ok(0);
    }
    SturmSequence::build(&sf)?.count_roots(t0, tf)
}

/// Global bound certificate: decides whether `h(t) <= b` holds for every
/// `t` in `[t0, tf]`.
///
/// Checks the endpoints first (values up to a zero tolerance above `b`
/// pass, so touching the bound at an endpoint is saturation, not
/// violation), then counts roots of `h - b` on the interval: with both
/// endpoint values at or below the bound, any interior crossing implies a
/// violation by the intermediate value theorem, and no crossing implies
/// the bound holds globally.
///
/// When `h` is identically equal to `b` the shifted polynomial is zero and
/// the zero-polynomial error propagates out of the root count; callers
/// needing a verdict should treat that degeneracy as "not certified".
pub fn gbc(h: &Polynomial, b: f64, t0: f64, tf: f64) -> Result<bool, PolyError> {
    if !b.is_finite() || !h.is_finite() {
        return Err(PolyError::NonFinite);
    }
    if !(t0 < tf) || !t0.is_finite() || !tf.is_finite() {
        return Err(PolyError::InvalidInterval { t0, tf });
    }
    let shifted = h - &Polynomial::constant(b);
    let zero_tol = LEADING_COEFF_TOL * b.abs().max(1.0);
    if shifted.eval(t0) > zero_tol || shifted.eval(tf) > zero_tol {
        return Ok(false);
    }
    Ok(sturm_count_roots(&shifted, t0, tf)? == 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn poly(coeffs: &[f64]) -> Polynomial {
        Polynomial::new(coeffs.to_vec())
    }

    #[test]
    fn degree_and_trimming_conventions() {
        assert_eq!(Polynomial::zero().degree(), None);
        assert_eq!(poly(&[0.0]).degree(), None);
        assert_eq!(poly(&[0.0, 0.0, 0.0]).degree(), None);
        assert_eq!(poly(&[1.0, 0.0]).degree(), Some(0));
        // construction keeps small but genuine leading coefficients
        assert_eq!(poly(&[1.0, 1e-15]).degree(), Some(1));
        assert_eq!(poly(&[0.0, 0.0, 3.0]).degree(), Some(2));
        assert_eq!(poly(&[0.0, 0.0, 1e-18]).degree(), Some(2));
        // relative trimming is the explicit degree-collapse operation
        assert_eq!(
            poly(&[1.0, 1e-15]).trim_relative(LEADING_COEFF_TOL).degree(),
            Some(0)
        );
        // a uniformly tiny polynomial keeps its degree: the tolerance is
        // relative to the polynomial's own scale
        assert_eq!(
            poly(&[0.0, 0.0, 1e-18]).trim_relative(LEADING_COEFF_TOL).degree(),
            Some(2)
        );
    }

    #[test]
    fn evaluates_by_horner() {
        let p = poly(&[1.0, 0.0, 3.0]); // 3t^2 + 1
        assert_relative_eq!(p.eval(2.0), 13.0);
        assert_relative_eq!(p.eval(-1.0), 4.0);
        assert_eq!(Polynomial::zero().eval(5.0), 0.0);
    }

    #[test]
    fn differentiates_3t2_plus_1_to_6t() {
        let p = poly(&[1.0, 0.0, 3.0]);
        assert_eq!(p.derivative(), poly(&[0.0, 6.0]));
        assert_eq!(p.differentiate(2), poly(&[6.0]));
        assert_eq!(p.differentiate(3), Polynomial::zero());
        assert_eq!(Polynomial::zero().derivative(), Polynomial::zero());
    }

    #[test]
    fn divmod_reconstructs_dividend() {
        // (t-1)(t-2)(t-3) = t^3 - 6t^2 + 11t - 6
        let a = poly(&[-6.0, 11.0, -6.0, 1.0]);
        let b = poly(&[-1.0, 1.0]); // t - 1
        let (q, r) = a.divmod(&b).unwrap();
        assert_eq!(q, poly(&[6.0, -5.0, 1.0]));
        assert!(r.is_zero());

        let b2 = poly(&[1.0, 0.0, 2.0]);
        let (q2, r2) = a.divmod(&b2).unwrap();
        for &t in &[-1.3, 0.0, 0.7, 2.9] {
            assert_relative_eq!(
                a.eval(t),
                q2.eval(t) * b2.eval(t) + r2.eval(t),
                max_relative = 1e-12,
                epsilon = 1e-12
            );
        }
        assert!(r2.degree().unwrap() < b2.degree().unwrap());
    }

    #[test]
    fn divmod_by_zero_is_an_error() {
        let a = poly(&[1.0, 1.0]);
        assert_eq!(
            a.divmod(&Polynomial::zero()).unwrap_err(),
            PolyError::ZeroPolynomial
        );
    }

    #[test]
    fn divmod_low_degree_dividend_is_pure_remainder() {
        let a = poly(&[3.0, 1.0]);
        let b = poly(&[0.0, 0.0, 1.0]);
        let (q, r) = a.divmod(&b).unwrap();
        assert!(q.is_zero());
        assert_eq!(r, a);
    }

    #[test]
    fn sturm_counts_simple_cubic_roots() {
        // roots 1, 2, 3
        let p = poly(&[-6.0, 11.0, -6.0, 1.0]);
        assert_eq!(sturm_count_roots(&p, 0.0, 2.5).unwrap(), 2);
        assert_eq!(sturm_count_roots(&p, 0.0, 4.0).unwrap(), 3);
        assert_eq!(sturm_count_roots(&p, 3.5, 9.0).unwrap(), 0);
        // right-closed: root exactly at tf counts, root at t0 does not
        assert_eq!(sturm_count_roots(&p, 1.0, 2.0).unwrap(), 1);
    }

    #[test]
    fn sturm_counts_repeated_roots_once() {
        // (t-1)^2 (t+2)
        let a = poly(&[-1.0, 1.0]);
        let b = poly(&[2.0, 1.0]);
        let p = &(&a * &a) * &b;
        assert_eq!(sturm_count_roots(&p, -3.0, 2.0).unwrap(), 2);
    }

    #[test]
    fn sturm_edge_inputs() {
        assert_eq!(
            sturm_count_roots(&Polynomial::zero(), 0.0, 1.0).unwrap_err(),
            PolyError::ZeroPolynomial
        );
        assert_eq!(sturm_count_roots(&poly(&[4.0]), -1.0, 1.0).unwrap(), 0);
        assert_eq!(sturm_count_roots(&poly(&[-1.0, 2.0]), 0.0, 1.0).unwrap(), 1);
        assert!(matches!(
            sturm_count_roots(&poly(&[1.0, 1.0]), 1.0, 1.0),
            Err(PolyError::InvalidInterval { .. })
        ));
        assert!(matches!(
            sturm_count_roots(&poly(&[1.0, 1.0]), 2.0, 1.0),
            Err(PolyError::InvalidInterval { .. })
        ));
    }

    #[test]
    fn sturm_chain_structure() {
        let p = poly(&[-6.0, 11.0, -6.0, 1.0]);
        let s = SturmSequence::build(&p).unwrap();
        let chain = s.chain();
        assert_eq!(chain[0], p);
        assert_eq!(chain[1], p.derivative());
        for i in 2..chain.len() {
            // each entry is a positive multiple of the negated remainder
            // of the two preceding entries
            let neg_rem = -&remainder(&chain[i - 2], &chain[i - 1]).unwrap();
            let ratio = chain[i].max_abs_coeff() / neg_rem.max_abs_coeff();
            assert!(ratio > 0.0);
            for (a, b) in chain[i].coeffs().iter().zip(neg_rem.coeffs()) {
                assert_relative_eq!(*a, ratio * b, max_relative = 1e-12, epsilon = 1e-12);
            }
        }
        assert_eq!(chain.last().unwrap().degree(), Some(0));
    }

    #[test]
    fn gbc_certifies_simple_bounds() {
        let h = poly(&[0.0, 0.0, 1.0]); // t^2, max 1 on [-1, 1]
        assert!(gbc(&h, 2.0, -1.0, 1.0).unwrap());
        assert!(!gbc(&h, 0.5, -1.0, 1.0).unwrap());
        // endpoint violation short-circuits
        assert!(!gbc(&h, 3.0, -1.0, 2.5).unwrap());
        // touching the bound exactly at an endpoint passes the endpoint
        // test; the interior crossing count still decides
        assert!(gbc(&poly(&[0.0, 1.0]), 1.0, 0.0, 1.0).is_ok());
    }

    #[test]
    fn gbc_on_constant_at_bound_propagates_zero_poly() {
        let h = poly(&[2.0]);
        assert_eq!(gbc(&h, 2.0, 0.0, 1.0).unwrap_err(), PolyError::ZeroPolynomial);
        assert!(gbc(&h, 2.1, 0.0, 1.0).unwrap());
        assert!(!gbc(&h, 1.9, 0.0, 1.0).unwrap());
    }

    #[test]
    fn gbc_rejects_non_finite_bounds() {
        let h = poly(&[0.0, 1.0]);
        assert_eq!(gbc(&h, f64::INFINITY, 0.0, 1.0).unwrap_err(), PolyError::NonFinite);
        assert_eq!(gbc(&h, f64::NAN, 0.0, 1.0).unwrap_err(), PolyError::NonFinite);
    }
}
