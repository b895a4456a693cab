//! Truncated elements of Z_p and F_p[[t]], with precision-tracking
//! arithmetic.
//!
//! An element is one of three kinds:
//!
//! * exactly zero (valuation +∞);
//! * `π^v · u` with `u` a unit known to `len` base-p digits, the leading
//!   digit nonzero — valuation exactly `v`, angular component the leading
//!   digit;
//! * `O(π^v)` — nothing known beyond membership in `π^v · O`, the state that
//!   arises when every known digit cancels.
//!
//! Arithmetic narrows the known window rather than guessing: the sum of two
//! elements known to k digits is known to at most k digits from the smaller
//! valuation onward, and leading-digit cancellation converts survivors into
//! `O(π^v)` states.  Base-p carrying applies in the p-adic model; the
//! Laurent model works coefficientwise in characteristic p.  Under this
//! discipline a reported digit is always a digit of the true value, which is
//! what makes three-valued formula evaluation sound.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero as _};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::fp::is_prime;
use super::ModelTag;
use crate::error::Error;
use crate::Result;

/// Width of the digit window; valuations may exceed it, known digits may not.
pub const MAX_DIGITS: usize = 8;

/// Largest admissible prime: p^{2·MAX_DIGITS} must fit in u128.
const MAX_PRIME: u64 = 251;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum Kind {
    Zero,
    Unit {
        val: i64,
        len: u8,
        /// Base-p digits of the unit part; entries at and beyond `len` are 0.
        digits: [u64; MAX_DIGITS],
    },
    BigO {
        val: i64,
    },
}

/// What is known about the valuation of a truncated element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrdBound {
    Exact(i64),
    AtLeast(i64),
    Infinite,
}

/// A truncated p-adic integer or Laurent series coefficientwise mod p.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TruncatedElement {
    model: ModelTag,
    p: u64,
    pub(crate) kind: Kind,
}

fn check_prime(p: u64) -> Result<()> {
    if !is_prime(p) {
        return Err(Error::BadModulus(p as i64));
    }
    if p > MAX_PRIME {
        return Err(Error::Invalid(format!(
            "prime {p} exceeds the truncated-arithmetic range (max {MAX_PRIME})"
        )));
    }
    Ok(())
}

fn pow_u128(p: u64, k: usize) -> u128 {
    (0..k).fold(1u128, |acc, _| acc * p as u128)
}

fn digits_of(mut u: u128, p: u64, len: usize) -> [u64; MAX_DIGITS] {
    let mut out = [0u64; MAX_DIGITS];
    for slot in out.iter_mut().take(len) {
        *slot = (u % p as u128) as u64;
        u /= p as u128;
    }
    out
}

fn value_of(digits: &[u64], p: u64) -> u128 {
    digits
        .iter()
        .rev()
        .fold(0u128, |acc, &d| acc * p as u128 + d as u128)
}

/// Inverse of `a` modulo `m` for gcd(a, m) = 1, by extended Euclid.
fn inv_mod(a: u128, m: u128) -> u128 {
    let (mut r0, mut r1) = (m as i128, (a % m) as i128);
    let (mut s0, mut s1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
    }
    debug_assert_eq!(r0, 1, "inverse of a non-unit");
    s0.rem_euclid(m as i128) as u128
}

impl TruncatedElement {
    pub fn zero(model: ModelTag, p: u64) -> Result<Self> {
        check_prime(p)?;
        Ok(TruncatedElement { model, p, kind: Kind::Zero })
    }

    pub fn one(model: ModelTag, p: u64) -> Result<Self> {
        Self::pi_pow(model, p, 0)
    }

    /// The element `π^k`, known to the full digit window.
    pub fn pi_pow(model: ModelTag, p: u64, k: i64) -> Result<Self> {
        check_prime(p)?;
        let mut digits = [0u64; MAX_DIGITS];
        digits[0] = 1;
        Ok(TruncatedElement {
            model,
            p,
            kind: Kind::Unit { val: k, len: MAX_DIGITS as u8, digits },
        })
    }

    /// An unknown element of `π^k · O`.
    pub fn big_o(model: ModelTag, p: u64, k: i64) -> Result<Self> {
        check_prime(p)?;
        Ok(TruncatedElement { model, p, kind: Kind::BigO { val: k } })
    }

    /// The residue class `d_0 + d_1 π + ⋯ + d_{N−1} π^{N−1} + O(π^N)`.
    ///
    /// This is how exhaustive counting and sampling name the classes of
    /// `O/π^N O`.
    pub fn from_digit_block(model: ModelTag, p: u64, block: &[u64]) -> Result<Self> {
        check_prime(p)?;
        if block.is_empty() || block.len() > MAX_DIGITS {
            return Err(Error::Precision(format!(
                "digit block of length {} (supported: 1..={MAX_DIGITS})",
                block.len()
            )));
        }
        if let Some(&d) = block.iter().find(|&&d| d >= p) {
            return Err(Error::Invalid(format!("digit {d} out of range for prime {p}")));
        }
        match block.iter().position(|&d| d != 0) {
            None => Ok(TruncatedElement {
                model,
                p,
                kind: Kind::BigO { val: block.len() as i64 },
            }),
            Some(i) => {
                let mut digits = [0u64; MAX_DIGITS];
                digits[..block.len() - i].copy_from_slice(&block[i..]);
                Ok(TruncatedElement {
                    model,
                    p,
                    kind: Kind::Unit {
                        val: i as i64,
                        len: (block.len() - i) as u8,
                        digits,
                    },
                })
            }
        }
    }

    pub fn from_int(model: ModelTag, p: u64, n: i64) -> Result<Self> {
        Self::from_rational(model, p, &BigRational::from_integer(BigInt::from(n)))
    }

    /// Embeds a rational constant.
    ///
    /// In the p-adic model any rational embeds (negative valuation allowed).
    /// In the Laurent model the embedding factors through F_p, so a
    /// denominator divisible by p has no image and is reported as a bad
    /// constant for that prime — the exclusion-ledger situation.
    pub fn from_rational(model: ModelTag, p: u64, r: &BigRational) -> Result<Self> {
        check_prime(p)?;
        if r.is_zero() {
            return Ok(TruncatedElement { model, p, kind: Kind::Zero });
        }
        match model {
            ModelTag::Laurent => {
                let c = super::fp::rational_mod(r, p)?;
                if c == 0 {
                    return Ok(TruncatedElement { model, p, kind: Kind::Zero });
                }
                let mut digits = [0u64; MAX_DIGITS];
                digits[0] = c;
                Ok(TruncatedElement {
                    model,
                    p,
                    kind: Kind::Unit { val: 0, len: MAX_DIGITS as u8, digits },
                })
            }
            ModelTag::Padic => {
                let big_p = BigInt::from(p);
                let strip = |x: &BigInt| -> (i64, BigInt) {
                    let mut v = 0i64;
                    let mut u = x.clone();
                    while (&u % &big_p).is_zero() {
                        u /= &big_p;
                        v += 1;
                    }
                    (v, u)
                };
                let (vn, un) = strip(r.numer());
                let (vd, ud) = strip(r.denom());
                let window = BigInt::from(pow_u128(p, MAX_DIGITS));
                let num_mod = un.mod_floor(&window).to_u128().expect("fits window");
                let den_mod = ud.mod_floor(&window).to_u128().expect("fits window");
                let u = num_mod * inv_mod(den_mod, pow_u128(p, MAX_DIGITS)) % pow_u128(p, MAX_DIGITS);
                Ok(TruncatedElement {
                    model,
                    p,
                    kind: Kind::Unit {
                        val: vn - vd,
                        len: MAX_DIGITS as u8,
                        digits: digits_of(u, p, MAX_DIGITS),
                    },
                })
            }
        }
    }

    pub fn model(&self) -> ModelTag {
        self.model
    }

    pub fn prime(&self) -> u64 {
        self.p
    }

    pub fn is_exact_zero(&self) -> bool {
        self.kind == Kind::Zero
    }

    /// Valuation knowledge: exact for units and zero, a lower bound for O-states.
    pub fn ord(&self) -> OrdBound {
        match self.kind {
            Kind::Zero => OrdBound::Infinite,
            Kind::Unit { val, .. } => OrdBound::Exact(val),
            Kind::BigO { val } => OrdBound::AtLeast(val),
        }
    }

    /// Angular component in F_p, when the truncation determines it.
    pub fn ac(&self) -> Option<u64> {
        match self.kind {
            Kind::Zero => Some(0),
            Kind::Unit { digits, .. } => Some(digits[0]),
            Kind::BigO { .. } => None,
        }
    }

    /// Number of trusted digits, `None` for exact zero.
    pub fn known_digits(&self) -> Option<u8> {
        match self.kind {
            Kind::Zero => None,
            Kind::Unit { len, .. } => Some(len),
            Kind::BigO { .. } => Some(0),
        }
    }

    /// The digit at `π^pos` if the truncation pins it down.
    pub fn digit(&self, pos: i64) -> Option<u64> {
        match self.kind {
            Kind::Zero => Some(0),
            Kind::Unit { val, len, digits } => {
                if pos < val {
                    Some(0)
                } else if pos < val + len as i64 {
                    Some(digits[(pos - val) as usize])
                } else {
                    None
                }
            }
            Kind::BigO { val } => {
                if pos < val {
                    Some(0)
                } else {
                    None
                }
            }
        }
    }

    /// Forgets digits beyond the first `keep`, modelling a coarser truncation.
    pub fn truncate(&self, keep: u8) -> Self {
        match self.kind {
            Kind::Zero | Kind::BigO { .. } => *self,
            Kind::Unit { val, len, digits } => {
                if keep == 0 {
                    TruncatedElement { model: self.model, p: self.p, kind: Kind::BigO { val } }
                } else if keep >= len {
                    *self
                } else {
                    let mut d = [0u64; MAX_DIGITS];
                    d[..keep as usize].copy_from_slice(&digits[..keep as usize]);
                    TruncatedElement {
                        model: self.model,
                        p: self.p,
                        kind: Kind::Unit { val, len: keep, digits: d },
                    }
                }
            }
        }
    }

    fn compatible(&self, rhs: &Self) {
        debug_assert_eq!(self.model, rhs.model, "mixed models");
        debug_assert_eq!(self.p, rhs.p, "mixed primes");
    }

    /// Builds a normalized element from a known digit window starting at `val`.
    fn from_window(model: ModelTag, p: u64, val: i64, window: &[u64]) -> Self {
        match window.iter().position(|&d| d != 0) {
            None => TruncatedElement {
                model,
                p,
                kind: Kind::BigO { val: val + window.len() as i64 },
            },
            Some(i) => {
                let mut digits = [0u64; MAX_DIGITS];
                digits[..window.len() - i].copy_from_slice(&window[i..]);
                TruncatedElement {
                    model,
                    p,
                    kind: Kind::Unit {
                        val: val + i as i64,
                        len: (window.len() - i) as u8,
                        digits,
                    },
                }
            }
        }
    }

    pub fn add(&self, rhs: &Self) -> Self {
        self.compatible(rhs);
        let (model, p) = (self.model, self.p);
        match (self.kind, rhs.kind) {
            (Kind::Zero, _) => *rhs,
            (_, Kind::Zero) => *self,
            (Kind::BigO { val: a }, Kind::BigO { val: b }) => {
                TruncatedElement { model, p, kind: Kind::BigO { val: a.min(b) } }
            }
            (Kind::BigO { val: a }, Kind::Unit { val, len, digits })
            | (Kind::Unit { val, len, digits }, Kind::BigO { val: a }) => {
                if a <= val {
                    TruncatedElement { model, p, kind: Kind::BigO { val: a } }
                } else {
                    let keep = ((a - val) as u64).min(len as u64) as u8;
                    TruncatedElement { model, p, kind: Kind::Unit { val, len, digits } }
                        .truncate(keep)
                }
            }
            (
                Kind::Unit { val: v1, len: l1, digits: d1 },
                Kind::Unit { val: v2, len: l2, digits: d2 },
            ) => {
                let base = v1.min(v2);
                let cut = (v1 + l1 as i64).min(v2 + l2 as i64);
                let width = (cut - base) as usize;
                debug_assert!((1..=MAX_DIGITS).contains(&width));
                let mut window = [0u64; MAX_DIGITS];
                match model {
                    ModelTag::Padic => {
                        let modulus = pow_u128(p, width);
                        // A summand whose window starts at or beyond the cut
                        // contributes nothing visible.
                        let shifted = |v: i64, d: &[u64; MAX_DIGITS]| -> u128 {
                            if v - base >= width as i64 {
                                0
                            } else {
                                value_of(d, p) * pow_u128(p, (v - base) as usize) % modulus
                            }
                        };
                        window =
                            digits_of((shifted(v1, &d1) + shifted(v2, &d2)) % modulus, p, width);
                    }
                    ModelTag::Laurent => {
                        for (i, slot) in window.iter_mut().enumerate().take(width) {
                            let at = base + i as i64;
                            let a = if at >= v1 && at < v1 + l1 as i64 {
                                d1[(at - v1) as usize]
                            } else {
                                0
                            };
                            let b = if at >= v2 && at < v2 + l2 as i64 {
                                d2[(at - v2) as usize]
                            } else {
                                0
                            };
                            *slot = (a + b) % p;
                        }
                    }
                }
                Self::from_window(model, p, base, &window[..width])
            }
        }
    }

    pub fn neg(&self) -> Self {
        let (model, p) = (self.model, self.p);
        match self.kind {
            Kind::Zero | Kind::BigO { .. } => *self,
            Kind::Unit { val, len, digits } => {
                let mut out = [0u64; MAX_DIGITS];
                match model {
                    ModelTag::Padic => {
                        let modulus = pow_u128(p, len as usize);
                        let u = value_of(&digits, p) % modulus;
                        out = digits_of(modulus - u, p, len as usize);
                    }
                    ModelTag::Laurent => {
                        for i in 0..len as usize {
                            out[i] = (p - digits[i]) % p;
                        }
                    }
                }
                TruncatedElement { model, p, kind: Kind::Unit { val, len, digits: out } }
            }
        }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.add(&rhs.neg())
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        self.compatible(rhs);
        let (model, p) = (self.model, self.p);
        match (self.kind, rhs.kind) {
            (Kind::Zero, _) | (_, Kind::Zero) => TruncatedElement { model, p, kind: Kind::Zero },
            (Kind::BigO { val: a }, Kind::BigO { val: b }) => TruncatedElement {
                model,
                p,
                kind: Kind::BigO { val: a.saturating_add(b) },
            },
            (Kind::BigO { val: a }, Kind::Unit { val, .. })
            | (Kind::Unit { val, .. }, Kind::BigO { val: a }) => TruncatedElement {
                model,
                p,
                kind: Kind::BigO { val: a.saturating_add(val) },
            },
            (
                Kind::Unit { val: v1, len: l1, digits: d1 },
                Kind::Unit { val: v2, len: l2, digits: d2 },
            ) => {
                let len = l1.min(l2);
                let mut out = [0u64; MAX_DIGITS];
                match model {
                    ModelTag::Padic => {
                        let modulus = pow_u128(p, len as usize);
                        let u = (value_of(&d1, p) % modulus) * (value_of(&d2, p) % modulus)
                            % modulus;
                        out = digits_of(u, p, len as usize);
                    }
                    ModelTag::Laurent => {
                        for k in 0..len as usize {
                            let mut acc = 0u128;
                            for i in 0..=k {
                                acc += d1[i] as u128 * d2[k - i] as u128;
                            }
                            out[k] = (acc % p as u128) as u64;
                        }
                    }
                }
                TruncatedElement {
                    model,
                    p,
                    kind: Kind::Unit { val: v1.saturating_add(v2), len, digits: out },
                }
            }
        }
    }

    /// Multiplicative inverse, defined for elements of exactly known valuation.
    pub fn inv(&self) -> Result<Self> {
        let (model, p) = (self.model, self.p);
        match self.kind {
            Kind::Zero => Err(Error::DivisionByZero("inverse of exact zero")),
            Kind::BigO { val } => Err(Error::Precision(format!(
                "cannot invert an element known only as O(pi^{val})"
            ))),
            Kind::Unit { val, len, digits } => {
                let mut out = [0u64; MAX_DIGITS];
                match model {
                    ModelTag::Padic => {
                        let modulus = pow_u128(p, len as usize);
                        let u = value_of(&digits, p) % modulus;
                        out = digits_of(inv_mod(u, modulus), p, len as usize);
                    }
                    ModelTag::Laurent => {
                        // Power-series inversion: e_0 = d_0^{-1},
                        // e_k = -d_0^{-1} Σ_{i=1..k} d_i e_{k-i}.
                        let inv0 = inv_mod(digits[0] as u128, p as u128) as u64;
                        out[0] = inv0;
                        for k in 1..len as usize {
                            let mut acc = 0u128;
                            for i in 1..=k {
                                acc += digits[i] as u128 * out[k - i] as u128;
                            }
                            let s = (acc % p as u128) as u64;
                            out[k] = (inv0 as u128 * ((p - s) % p) as u128 % p as u128) as u64;
                        }
                    }
                }
                Ok(TruncatedElement {
                    model,
                    p,
                    kind: Kind::Unit { val: -val, len, digits: out },
                })
            }
        }
    }

    pub fn div(&self, rhs: &Self) -> Result<Self> {
        Ok(self.mul(&rhs.inv()?))
    }
}

impl std::fmt::Display for TruncatedElement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            Kind::Zero => write!(f, "0"),
            Kind::BigO { val } => write!(f, "O(pi^{val})"),
            Kind::Unit { val, len, digits } => {
                let mut first = true;
                for (i, &d) in digits.iter().enumerate().take(len as usize) {
                    if d == 0 {
                        continue;
                    }
                    if !first {
                        write!(f, " + ")?;
                    }
                    first = false;
                    match val + i as i64 {
                        0 => write!(f, "{d}")?,
                        1 => {
                            if d == 1 {
                                write!(f, "pi")?
                            } else {
                                write!(f, "{d}*pi")?
                            }
                        }
                        k => {
                            if d == 1 {
                                write!(f, "pi^{k}")?
                            } else {
                                write!(f, "{d}*pi^{k}")?
                            }
                        }
                    }
                }
                if !first {
                    write!(f, " + ")?;
                }
                write!(f, "O(pi^{})", val + len as i64)
            }
        }
    }
}

/// Draws `count` residue classes of `O/π^N O` uniformly, reproducibly.
pub fn sample_elements(
    model: ModelTag,
    p: u64,
    precision: u8,
    count: usize,
    seed: u64,
) -> Result<Vec<TruncatedElement>> {
    check_prime(p)?;
    if precision == 0 || precision as usize > MAX_DIGITS {
        return Err(Error::Precision(format!(
            "precision {precision} (supported: 1..={MAX_DIGITS})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut block = vec![0u64; precision as usize];
    for _ in 0..count {
        for d in block.iter_mut() {
            *d = rng.gen_range(0..p);
        }
        out.push(TruncatedElement::from_digit_block(model, p, &block)?);
    }
    Ok(out)
}
