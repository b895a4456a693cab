//! Exact Laurent polynomials in the residue cardinality `q`.
//!
//! Counting results in this crate (volumes, coset indices, orbital values)
//! are rationals for each prime separately but follow one Laurent
//! polynomial in `q` across primes.  [`QPolynomial`] stores such a
//! polynomial with exact rational coefficients; [`fit_laurent`] recovers it
//! from per-prime values by exact linear algebra, searching the smallest
//! contiguous exponent window that reproduces every input point and
//! insisting on at least one surplus point beyond the unknowns so the fit
//! is validated, never merely interpolated.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::Error;
use crate::Result;

/// Default exponent window for fitting.
pub const DEFAULT_FIT_WINDOW: (i64, i64) = (-8, 8);

fn rat_int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// `q^e` for an exact positive base.
fn power(q: u64, e: i64) -> BigRational {
    let base = BigInt::from(q);
    if e >= 0 {
        BigRational::from_integer(base.pow(e as u32))
    } else {
        BigRational::new(BigInt::one(), base.pow((-e) as u32))
    }
}

/// A Laurent polynomial `Σ c_e q^e` with exact rational coefficients.
///
/// The zero polynomial has an empty coefficient map; stored coefficients
/// are never zero.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QPolynomial {
    coeffs: BTreeMap<i64, BigRational>,
}

impl QPolynomial {
    pub fn zero() -> Self {
        QPolynomial::default()
    }

    pub fn one() -> Self {
        QPolynomial::monomial(0, rat_int(1))
    }

    pub fn constant(c: BigRational) -> Self {
        QPolynomial::monomial(0, c)
    }

    pub fn monomial(exponent: i64, coefficient: BigRational) -> Self {
        let mut p = QPolynomial::zero();
        if !coefficient.is_zero() {
            p.coeffs.insert(exponent, coefficient);
        }
        p
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (i64, BigRational)>) -> Self {
        let mut p = QPolynomial::zero();
        for (e, c) in terms {
            p.add_term(e, c);
        }
        p
    }

    fn add_term(&mut self, e: i64, c: BigRational) {
        if c.is_zero() {
            return;
        }
        let slot = self.coeffs.entry(e).or_insert_with(BigRational::zero);
        *slot += c;
        if slot.is_zero() {
            self.coeffs.remove(&e);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coefficient(&self, exponent: i64) -> BigRational {
        self.coeffs.get(&exponent).cloned().unwrap_or_else(BigRational::zero)
    }

    /// Ascending (exponent, coefficient) pairs.
    pub fn terms(&self) -> impl Iterator<Item = (i64, &BigRational)> {
        self.coeffs.iter().map(|(&e, c)| (e, c))
    }

    /// Smallest and largest exponent carrying a nonzero coefficient.
    pub fn support(&self) -> Option<(i64, i64)> {
        let lo = self.coeffs.keys().next()?;
        let hi = self.coeffs.keys().next_back()?;
        Some((*lo, *hi))
    }

    pub fn add(&self, rhs: &QPolynomial) -> QPolynomial {
        let mut out = self.clone();
        for (&e, c) in &rhs.coeffs {
            out.add_term(e, c.clone());
        }
        out
    }

    pub fn neg(&self) -> QPolynomial {
        QPolynomial {
            coeffs: self.coeffs.iter().map(|(&e, c)| (e, -c.clone())).collect(),
        }
    }

    pub fn sub(&self, rhs: &QPolynomial) -> QPolynomial {
        self.add(&rhs.neg())
    }

    pub fn mul(&self, rhs: &QPolynomial) -> QPolynomial {
        let mut out = QPolynomial::zero();
        for (&e1, c1) in &self.coeffs {
            for (&e2, c2) in &rhs.coeffs {
                out.add_term(e1 + e2, c1 * c2);
            }
        }
        out
    }

    pub fn scale(&self, factor: &BigRational) -> QPolynomial {
        if factor.is_zero() {
            return QPolynomial::zero();
        }
        QPolynomial {
            coeffs: self.coeffs.iter().map(|(&e, c)| (e, c * factor)).collect(),
        }
    }

    /// Multiplies by `q^k`.
    pub fn shift(&self, k: i64) -> QPolynomial {
        QPolynomial {
            coeffs: self.coeffs.iter().map(|(&e, c)| (e + k, c.clone())).collect(),
        }
    }

    /// Exact value at a positive integer `q`.
    pub fn eval_at(&self, q: u64) -> Result<BigRational> {
        if q == 0 {
            return Err(Error::invalid("cannot evaluate a Laurent polynomial at q = 0"));
        }
        let mut total = BigRational::zero();
        for (&e, c) in &self.coeffs {
            total += c * power(q, e);
        }
        Ok(total)
    }
}

impl std::ops::Add for &QPolynomial {
    type Output = QPolynomial;
    fn add(self, rhs: &QPolynomial) -> QPolynomial {
        QPolynomial::add(self, rhs)
    }
}

impl std::ops::Sub for &QPolynomial {
    type Output = QPolynomial;
    fn sub(self, rhs: &QPolynomial) -> QPolynomial {
        QPolynomial::sub(self, rhs)
    }
}

impl std::ops::Mul for &QPolynomial {
    type Output = QPolynomial;
    fn mul(self, rhs: &QPolynomial) -> QPolynomial {
        QPolynomial::mul(self, rhs)
    }
}

impl std::fmt::Display for QPolynomial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.coeffs.is_empty() {
            return f.write_str("0");
        }
        let mut first = true;
        for (&e, c) in self.coeffs.iter().rev() {
            let negative = c.is_negative();
            if first {
                if negative {
                    f.write_str("-")?;
                }
                first = false;
            } else if negative {
                f.write_str(" - ")?;
            } else {
                f.write_str(" + ")?;
            }
            let mag = c.abs();
            if e == 0 {
                write!(f, "{mag}")?;
            } else {
                if !mag.is_one() {
                    write!(f, "{mag}*")?;
                }
                if e == 1 {
                    f.write_str("q")?;
                } else {
                    write!(f, "q^{e}")?;
                }
            }
        }
        Ok(())
    }
}

/// Solves the square interpolation system for exponents `exps` through the
/// first `exps.len()` points by Gaussian elimination over exact rationals.
/// The matrix is a generalized Vandermonde in distinct positive bases, so
/// it is nonsingular.
fn solve_window(points: &[(u64, BigRational)], exps: &[i64]) -> QPolynomial {
    let k = exps.len();
    let mut m: Vec<Vec<BigRational>> = Vec::with_capacity(k);
    for (q, y) in points.iter().take(k) {
        let mut row: Vec<BigRational> = exps.iter().map(|&e| power(*q, e)).collect();
        row.push(y.clone());
        m.push(row);
    }
    for col in 0..k {
        let pivot = (col..k)
            .find(|&r| !m[r][col].is_zero())
            .expect("generalized Vandermonde is nonsingular");
        m.swap(col, pivot);
        let inv = m[col][col].clone();
        for j in col..=k {
            m[col][j] = &m[col][j] / &inv;
        }
        for r in 0..k {
            if r != col && !m[r][col].is_zero() {
                let factor = m[r][col].clone();
                for j in col..=k {
                    let delta = &factor * &m[col][j];
                    m[r][j] = &m[r][j] - &delta;
                }
            }
        }
    }
    QPolynomial::from_terms(exps.iter().enumerate().map(|(i, &e)| (e, m[i][k].clone())))
}

fn mismatches(p: &QPolynomial, points: &[(u64, BigRational)]) -> Vec<(u64, BigRational, BigRational)> {
    let mut out = Vec::new();
    for (q, y) in points {
        let got = p.eval_at(*q).expect("q >= 2");
        if got != *y {
            out.push((*q, y.clone(), got));
        }
    }
    out
}

/// Fits one Laurent polynomial through all points, searching contiguous
/// exponent sub-windows of `window` from narrowest to widest.
///
/// With `n` points, at most `n − 1` unknown coefficients are allowed, so a
/// successful fit is always confirmed on at least one point it was not
/// solved from.  If two different polynomials of the minimal width fit,
/// the data are ambiguous; if none fits at any width, the residuals of the
/// closest attempt are reported.
pub fn fit_laurent(points: &[(u64, BigRational)], window: (i64, i64)) -> Result<QPolynomial> {
    let (lo, hi) = window;
    if lo > hi {
        return Err(Error::invalid(format!("empty exponent window [{lo}, {hi}]")));
    }
    if points.len() < 2 {
        return Err(Error::invalid(
            "fitting needs at least two points (one more than the unknowns)",
        ));
    }
    let mut seen = std::collections::BTreeSet::new();
    for (q, _) in points {
        if *q < 2 {
            return Err(Error::invalid(format!("evaluation point q = {q} (need q >= 2)")));
        }
        if !seen.insert(*q) {
            return Err(Error::invalid(format!("duplicate evaluation point q = {q}")));
        }
    }

    let span = (hi - lo + 1) as usize;
    let max_unknowns = span.min(points.len() - 1);
    let mut best: Option<(QPolynomial, Vec<(u64, BigRational, BigRational)>)> = None;
    for k in 1..=max_unknowns {
        let mut fits: Vec<QPolynomial> = Vec::new();
        for a in lo..=(hi - k as i64 + 1) {
            let exps: Vec<i64> = (a..a + k as i64).collect();
            let candidate = solve_window(points, &exps);
            let bad = mismatches(&candidate, points);
            if bad.is_empty() {
                if !fits.contains(&candidate) {
                    fits.push(candidate);
                }
            } else if best.as_ref().map_or(true, |(_, b)| bad.len() < b.len()) {
                best = Some((candidate, bad));
            }
        }
        match fits.len() {
            0 => {}
            1 => return Ok(fits.pop().expect("checked length")),
            _ => {
                let listing =
                    fits.iter().map(|p| p.to_string()).collect::<Vec<_>>().join("  vs  ");
                return Err(Error::FitAmbiguous(format!(
                    "{} distinct width-{k} polynomials fit all {} points: {listing}",
                    fits.len(),
                    points.len()
                )));
            }
        }
    }
    let detail = match best {
        Some((candidate, bad)) => {
            let rows = bad
                .iter()
                .map(|(q, want, got)| format!("q={q}: expected {want}, fitted {got}"))
                .collect::<Vec<_>>()
                .join("; ");
            format!("closest attempt {candidate} leaves residuals: {rows}")
        }
        None => "window narrower than any attempted fit".to_string(),
    };
    Err(Error::FitFailed(format!(
        "no Laurent polynomial with exponents in [{lo}, {hi}] passes through all {} points; {detail}",
        points.len()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(raw: &[(u64, i64, i64)]) -> Vec<(u64, BigRational)> {
        raw.iter()
            .map(|&(q, n, d)| (q, BigRational::new(BigInt::from(n), BigInt::from(d))))
            .collect()
    }

    #[test]
    fn linear_fit_through_three_points() {
        let p = fit_laurent(&pts(&[(3, 4, 1), (5, 6, 1), (7, 8, 1)]), DEFAULT_FIT_WINDOW)
            .unwrap();
        assert_eq!(p.to_string(), "q + 1");
        assert_eq!(p.eval_at(11).unwrap(), rat_int(12));
    }

    #[test]
    fn quadratic_fit_with_validation_point() {
        let p = fit_laurent(
            &pts(&[(3, 12, 1), (5, 30, 1), (7, 56, 1), (11, 132, 1)]),
            DEFAULT_FIT_WINDOW,
        )
        .unwrap();
        assert_eq!(p.to_string(), "q^2 + q");
    }

    #[test]
    fn negative_exponent_fit_recovers_unit_group_volume() {
        // (1 − q^{−1})(1 − q^{−2}) sampled at five primes.
        let closed = QPolynomial::one()
            .sub(&QPolynomial::monomial(-1, rat_int(1)))
            .mul(&QPolynomial::one().sub(&QPolynomial::monomial(-2, rat_int(1))));
        let points: Vec<(u64, BigRational)> =
            [3u64, 5, 7, 11, 13].iter().map(|&q| (q, closed.eval_at(q).unwrap())).collect();
        let p = fit_laurent(&points, DEFAULT_FIT_WINDOW).unwrap();
        assert_eq!(p, closed);
        assert_eq!(
            p.eval_at(3).unwrap(),
            BigRational::new(BigInt::from(16), BigInt::from(27))
        );
    }

    #[test]
    fn ambiguous_data_is_reported() {
        // -31q + 30 and q^3 - 10q^2 agree at q = 2, 3, 5.
        let points = pts(&[(2, -32, 1), (3, -63, 1), (5, -125, 1)]);
        match fit_laurent(&points, (0, 3)) {
            Err(Error::FitAmbiguous(msg)) => assert!(msg.contains("width-2"), "{msg}"),
            other => panic!("expected ambiguity, got {other:?}"),
        }
    }

    #[test]
    fn exponential_data_fails_with_residuals() {
        let points = pts(&[(2, 4, 1), (3, 8, 1), (5, 32, 1), (7, 128, 1)]);
        match fit_laurent(&points, (-2, 2)) {
            Err(Error::FitFailed(msg)) => assert!(msg.contains("residuals"), "{msg}"),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(fit_laurent(&pts(&[(3, 1, 1)]), DEFAULT_FIT_WINDOW).is_err());
        assert!(fit_laurent(&pts(&[(3, 1, 1), (3, 2, 1)]), DEFAULT_FIT_WINDOW).is_err());
        assert!(fit_laurent(&pts(&[(1, 1, 1), (3, 2, 1)]), DEFAULT_FIT_WINDOW).is_err());
    }

    #[test]
    fn display_format() {
        let p = QPolynomial::from_terms([
            (2, rat_int(1)),
            (1, rat_int(1)),
            (0, rat_int(-2)),
            (-1, rat_int(3)),
        ]);
        assert_eq!(p.to_string(), "q^2 + q - 2 + 3*q^-1");
        assert_eq!(QPolynomial::zero().to_string(), "0");
        assert_eq!(QPolynomial::monomial(0, rat_int(-5)).to_string(), "-5");
        assert_eq!(
            QPolynomial::monomial(3, BigRational::new(1.into(), 2.into())).to_string(),
            "1/2*q^3"
        );
    }

    #[test]
    fn arithmetic_identities() {
        let a = QPolynomial::from_terms([(1, rat_int(1)), (0, rat_int(1))]);
        let b = QPolynomial::from_terms([(1, rat_int(1)), (0, rat_int(-1))]);
        assert_eq!((&a * &b).to_string(), "q^2 - 1");
        assert_eq!((&a - &a), QPolynomial::zero());
        assert_eq!(a.shift(-1).to_string(), "1 + q^-1");
        assert!((&a - &a).is_zero());
        let q31 = a.eval_at(31).unwrap();
        assert_eq!(q31, rat_int(32));
    }
}
