//! Exact evaluation of residue-sort formulas over the prime field F_p.
//!
//! The residue fragment has equality as its only predicate and `+`, `-`, `*`
//! as its only operations, so every closed formula is decided exactly by
//! exhausting assignments; nothing here is three-valued.  Quantifier depth is
//! what it is — each binder multiplies work by p — which is affordable at
//! desk-scale primes and keeps the semantics beyond doubt.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive};

use crate::ast::{CmpOp, Formula, Sort, Term};
use crate::error::Error;
use crate::Result;

/// Assignment budget for [`count_residue`] (p^k points).
const COUNT_CAP: u128 = 100_000_000;

/// Deterministic primality by trial division; ample for desk-scale moduli.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    if n % 3 == 0 {
        return n == 3;
    }
    let mut d = 5u64;
    while d.saturating_mul(d) <= n {
        if n % d == 0 || n % (d + 2) == 0 {
            return false;
        }
        d += 6;
    }
    true
}

/// An element of F_p in canonical representative form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FiniteFieldElement {
    p: u64,
    value: u64,
}

impl FiniteFieldElement {
    pub fn new(p: u64, value: i64) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::BadModulus(p as i64));
        }
        Ok(FiniteFieldElement {
            p,
            value: value.rem_euclid(p as i64) as u64,
        })
    }

    pub fn prime(&self) -> u64 {
        self.p
    }

    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn add(self, rhs: Self) -> Self {
        debug_assert_eq!(self.p, rhs.p);
        FiniteFieldElement {
            p: self.p,
            value: ((self.value as u128 + rhs.value as u128) % self.p as u128) as u64,
        }
    }

    pub fn sub(self, rhs: Self) -> Self {
        self.add(rhs.neg())
    }

    pub fn mul(self, rhs: Self) -> Self {
        debug_assert_eq!(self.p, rhs.p);
        FiniteFieldElement {
            p: self.p,
            value: ((self.value as u128 * rhs.value as u128) % self.p as u128) as u64,
        }
    }

    pub fn neg(self) -> Self {
        FiniteFieldElement {
            p: self.p,
            value: if self.value == 0 { 0 } else { self.p - self.value },
        }
    }

    pub fn pow(self, mut e: u64) -> Self {
        let mut base = self;
        let mut acc = FiniteFieldElement { p: self.p, value: 1 % self.p };
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(base);
            }
            base = base.mul(base);
            e >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat; fails on zero.
    pub fn inv(self) -> Result<Self> {
        if self.value == 0 {
            return Err(Error::DivisionByZero("inverse of 0 in F_p"));
        }
        Ok(self.pow(self.p - 2))
    }
}

impl std::fmt::Display for FiniteFieldElement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.value)
    }
}

fn bigint_mod(n: &BigInt, p: u64) -> u64 {
    let m = n % BigInt::from(p);
    let m = if m.is_negative() { m + BigInt::from(p) } else { m };
    m.to_u64().expect("residue fits u64")
}

/// Reduces a rational constant modulo p, or reports the bad prime.
pub(crate) fn rational_mod(r: &num_rational::BigRational, p: u64) -> Result<u64> {
    let den = bigint_mod(r.denom(), p);
    if den == 0 {
        return Err(Error::BadConstant(r.to_string(), p));
    }
    let num = bigint_mod(r.numer(), p);
    let inv = FiniteFieldElement { p, value: den }.inv()?;
    Ok(FiniteFieldElement { p, value: num }.mul(inv).value)
}

fn eval_term(t: &Term, p: u64, env: &BTreeMap<String, u64>) -> Result<u64> {
    match t {
        Term::Var(name, Sort::ResidueField) => env
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnboundVariable(name.clone())),
        Term::Var(name, _) => Err(Error::OutOfFragment(format!(
            "variable `{name}` is not of residue sort"
        ))),
        Term::Residue(r) => rational_mod(r, p),
        Term::Int(n) => Ok(n.rem_euclid(p as i64) as u64),
        Term::Rat(r) => rational_mod(r, p),
        Term::Add(a, b) => Ok(((eval_term(a, p, env)? as u128 + eval_term(b, p, env)? as u128)
            % p as u128) as u64),
        Term::Sub(a, b) => {
            let x = eval_term(a, p, env)?;
            let y = eval_term(b, p, env)?;
            Ok(((x as u128 + (p - y % p) as u128) % p as u128) as u64)
        }
        Term::Mul(a, b) => Ok(((eval_term(a, p, env)? as u128 * eval_term(b, p, env)? as u128)
            % p as u128) as u64),
        Term::Neg(a) => {
            let x = eval_term(a, p, env)?;
            Ok(if x == 0 { 0 } else { p - x })
        }
        Term::PlusInf | Term::PiPow(_) | Term::Ord(_) | Term::Ac(_) => Err(Error::OutOfFragment(
            "valued-field material in residue evaluation; run sort separation first".into(),
        )),
    }
}

/// Evaluates a residue-sort formula under an explicit assignment.
pub(crate) fn eval_residue_env(
    f: &Formula,
    p: u64,
    env: &mut BTreeMap<String, u64>,
) -> Result<bool> {
    match f {
        Formula::True => Ok(true),
        Formula::False => Ok(false),
        Formula::Cmp(op, a, b) => {
            let x = eval_term(a, p, env)?;
            let y = eval_term(b, p, env)?;
            match op {
                CmpOp::Eq => Ok(x == y),
                CmpOp::Ne => Ok(x != y),
                _ => Err(Error::OutOfFragment(
                    "order comparison in the residue sort".into(),
                )),
            }
        }
        Formula::Divides(..) => Err(Error::OutOfFragment(
            "divisibility constraint in the residue sort".into(),
        )),
        Formula::Not(g) => Ok(!eval_residue_env(g, p, env)?),
        Formula::And(a, b) => Ok(eval_residue_env(a, p, env)? && eval_residue_env(b, p, env)?),
        Formula::Or(a, b) => Ok(eval_residue_env(a, p, env)? || eval_residue_env(b, p, env)?),
        Formula::Implies(a, b) => Ok(!eval_residue_env(a, p, env)? || eval_residue_env(b, p, env)?),
        Formula::Exists(name, Sort::ResidueField, body) => {
            let saved = env.get(name).copied();
            for v in 0..p {
                env.insert(name.clone(), v);
                if eval_residue_env(body, p, env)? {
                    restore(env, name, saved);
                    return Ok(true);
                }
            }
            restore(env, name, saved);
            Ok(false)
        }
        Formula::Forall(name, Sort::ResidueField, body) => {
            let saved = env.get(name).copied();
            for v in 0..p {
                env.insert(name.clone(), v);
                if !eval_residue_env(body, p, env)? {
                    restore(env, name, saved);
                    return Ok(false);
                }
            }
            restore(env, name, saved);
            Ok(true)
        }
        Formula::Exists(_, s, _) | Formula::Forall(_, s, _) => Err(Error::OutOfFragment(format!(
            "quantifier over the {s} sort in residue evaluation"
        ))),
    }
}

fn restore(env: &mut BTreeMap<String, u64>, name: &str, saved: Option<u64>) {
    match saved {
        Some(v) => {
            env.insert(name.to_string(), v);
        }
        None => {
            env.remove(name);
        }
    }
}

/// Decides a closed residue-sort formula over F_p by exhaustive search.
pub fn eval_residue(f: &Formula, p: u64) -> Result<bool> {
    if !is_prime(p) {
        return Err(Error::BadModulus(p as i64));
    }
    let free = f.free_variables();
    if let Some((name, _)) = free.iter().next() {
        return Err(Error::UnboundVariable(name.clone()));
    }
    eval_residue_env(f, p, &mut BTreeMap::new())
}

/// Counts the satisfying F_p assignments to the free residue variables.
pub fn count_residue(f: &Formula, p: u64) -> Result<u64> {
    if !is_prime(p) {
        return Err(Error::BadModulus(p as i64));
    }
    let mut names = Vec::new();
    for (name, sort) in f.free_variables() {
        if sort != Sort::ResidueField {
            return Err(Error::OutOfFragment(format!(
                "free variable `{name}` of sort {sort} in residue counting"
            )));
        }
        names.push(name);
    }
    let total: u128 = (p as u128)
        .checked_pow(names.len() as u32)
        .ok_or(Error::Overflow("residue assignment space"))?;
    if total > COUNT_CAP {
        return Err(Error::BudgetExceeded {
            needed: total,
            budget: COUNT_CAP,
        });
    }
    let mut env: BTreeMap<String, u64> = names.iter().map(|n| (n.clone(), 0)).collect();
    let mut count = 0u64;
    let mut digits = vec![0u64; names.len()];
    loop {
        if eval_residue_env(f, p, &mut env)? {
            count += 1;
        }
        // Odometer over assignments, last variable fastest.
        let mut i = names.len();
        loop {
            if i == 0 {
                return Ok(count);
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < p {
                env.insert(names[i].clone(), digits[i]);
                break;
            }
            digits[i] = 0;
            env.insert(names[i].clone(), 0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    #[test]
    fn squares_in_f5() {
        let f = parse("rf xi; exists rf eta. eta*eta = xi").unwrap();
        assert_eq!(count_residue(&f, 5).unwrap(), 3);
    }

    #[test]
    fn fermat_cube_identity_holds_only_in_f3() {
        let f = parse("forall rf x. x*x*x = x").unwrap();
        assert!(eval_residue(&f, 3).unwrap());
        assert!(!eval_residue(&f, 5).unwrap());
    }

    #[test]
    fn three_is_not_a_square_mod_seven() {
        let f = parse("exists rf xi. xi*xi = 3").unwrap();
        assert!(!eval_residue(&f, 7).unwrap());
        let g = parse("exists rf xi. xi*xi = 2").unwrap();
        assert!(eval_residue(&g, 7).unwrap());
    }

    #[test]
    fn composite_modulus_rejected() {
        let f = parse("exists rf xi. xi = 0").unwrap();
        assert!(matches!(eval_residue(&f, 6), Err(Error::BadModulus(6))));
    }

    #[test]
    fn denominator_divisible_by_p_is_reported() {
        let f = parse("exists rf xi. xi = 1/3").unwrap();
        assert!(matches!(
            eval_residue(&f, 3),
            Err(Error::BadConstant(_, 3))
        ));
        assert!(eval_residue(&f, 5).unwrap());
    }

    #[test]
    fn affine_line_has_p_points() {
        let f = parse("rf x, y; x + y = 1").unwrap();
        assert_eq!(count_residue(&f, 5).unwrap(), 5);
        assert_eq!(count_residue(&f, 7).unwrap(), 7);
    }

    #[test]
    fn field_element_arithmetic() {
        let a = FiniteFieldElement::new(7, 3).unwrap();
        let b = FiniteFieldElement::new(7, -2).unwrap();
        assert_eq!(b.value(), 5);
        assert_eq!(a.add(b).value(), 1);
        assert_eq!(a.mul(b).value(), 1);
        assert_eq!(a.inv().unwrap().value(), 5);
        assert_eq!(a.pow(6).value(), 1);
    }

    #[test]
    fn primality_table() {
        let primes: Vec<u64> = (0..60).filter(|&n| is_prime(n)).collect();
        assert_eq!(primes, vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59]);
    }
}
