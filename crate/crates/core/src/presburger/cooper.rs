//! Cooper-style quantifier elimination over the integers.
//!
//! An innermost existential is removed from each DNF clause by virtual
//! substitution. Writing the clause's literals with the bound variable `x`
//! scaled to coefficient ±1 (via `z = λx`, compensated by the constraint
//! `λ | z`), and `δ` for the least common multiple of all divisibility
//! moduli mentioning `z`, the clause satisfies
//!
//! ```text
//! ∃z φ(z)  ⟺  ⋁_{j=1..δ} φ_{-∞}[z:=j]  ∨  ⋁_{b∈B} ⋁_{j=1..δ} φ[z:=b+j]
//! ```
//!
//! where `B` collects the lower-bound terms (`z > b`) together with the
//! points excluded by inequations (`z ≠ c` contributes `c`), and `φ_{-∞}`
//! keeps only the literals whose truth persists as `z → -∞`. Universal
//! quantifiers reduce to `¬∃¬`. A clause containing an equality on `z`
//! avoids the disjunction entirely: the equality pins `z` and is
//! substituted directly.

use std::collections::BTreeMap;

use num_integer::Integer;

use crate::ast::{CmpOp, Formula, Sort, Term};
use crate::error::Error;
use crate::transform::{canonicalize_dnf, dnf, formula_from_dnf, simplify, to_nnf};
use crate::Result;

/// Cap on `δ` (and on emitted disjunct counts) to fail fast on
/// coefficient blow-ups instead of looping for hours.
const DELTA_CAP: u128 = 1_000_000;

fn overflow() -> Error {
    Error::Overflow("Presburger linear arithmetic")
}

/// Integer-linear form `Σ coeffs[v]·v + constant`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) struct Lin {
    coeffs: BTreeMap<String, i128>,
    constant: i128,
}

impl Lin {
    fn con(c: i128) -> Lin {
        Lin { coeffs: BTreeMap::new(), constant: c }
    }

    fn var(name: &str) -> Lin {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(name.to_string(), 1);
        Lin { coeffs, constant: 0 }
    }

    fn add(&self, other: &Lin) -> Result<Lin> {
        let mut out = self.clone();
        for (v, k) in &other.coeffs {
            let e = out.coeffs.entry(v.clone()).or_insert(0);
            *e = e.checked_add(*k).ok_or_else(overflow)?;
        }
        out.constant = out.constant.checked_add(other.constant).ok_or_else(overflow)?;
        out.coeffs.retain(|_, k| *k != 0);
        Ok(out)
    }

    fn neg(&self) -> Result<Lin> {
        self.scale(-1)
    }

    fn sub(&self, other: &Lin) -> Result<Lin> {
        self.add(&other.neg()?)
    }

    fn scale(&self, k: i128) -> Result<Lin> {
        if k == 0 {
            return Ok(Lin::con(0));
        }
        let mut out = self.clone();
        for c in out.coeffs.values_mut() {
            *c = c.checked_mul(k).ok_or_else(overflow)?;
        }
        out.constant = out.constant.checked_mul(k).ok_or_else(overflow)?;
        Ok(out)
    }

    fn add_const(&self, c: i128) -> Result<Lin> {
        let mut out = self.clone();
        out.constant = out.constant.checked_add(c).ok_or_else(overflow)?;
        Ok(out)
    }

    pub(crate) fn coeff(&self, v: &str) -> i128 {
        self.coeffs.get(v).copied().unwrap_or(0)
    }

    pub(crate) fn constant(&self) -> i128 {
        self.constant
    }

    fn drop_var(&self, v: &str) -> Lin {
        let mut out = self.clone();
        out.coeffs.remove(v);
        out
    }

    /// `self[v := repl]`.
    fn subst(&self, v: &str, repl: &Lin) -> Result<Lin> {
        let a = self.coeff(v);
        if a == 0 {
            return Ok(self.clone());
        }
        self.drop_var(v).add(&repl.scale(a)?)
    }

    fn is_const(&self) -> Option<i128> {
        if self.coeffs.is_empty() {
            Some(self.constant)
        } else {
            None
        }
    }

    fn eval(&self, env: &BTreeMap<String, i64>) -> Result<i128> {
        let mut acc = self.constant;
        for (v, k) in &self.coeffs {
            let x = *env
                .get(v)
                .ok_or_else(|| Error::UnboundVariable(v.clone()))? as i128;
            acc = k
                .checked_mul(x)
                .and_then(|t| acc.checked_add(t))
                .ok_or_else(overflow)?;
        }
        Ok(acc)
    }

    fn to_term(&self) -> Result<Term> {
        let to_i64 = |k: i128| i64::try_from(k).map_err(|_| overflow());
        let mut acc: Option<Term> = None;
        for (v, k) in &self.coeffs {
            let var = Term::var(v.clone(), Sort::ValueGroup);
            let part = match *k {
                1 => var,
                -1 => var.neg(),
                k => Term::int(to_i64(k)?).mul(var),
            };
            acc = Some(match acc {
                None => part,
                Some(t) => t.add(part),
            });
        }
        let c = to_i64(self.constant)?;
        Ok(match acc {
            None => Term::int(c),
            Some(t) if c == 0 => t,
            Some(t) if c < 0 => t.sub(Term::int(c.checked_neg().ok_or_else(overflow)?)),
            Some(t) => t.add(Term::int(c)),
        })
    }
}

fn eval_ground_i128(t: &Term) -> Result<i128> {
    match t {
        Term::Int(n) => Ok(*n as i128),
        Term::Add(a, b) => eval_ground_i128(a)?
            .checked_add(eval_ground_i128(b)?)
            .ok_or_else(overflow),
        Term::Sub(a, b) => eval_ground_i128(a)?
            .checked_sub(eval_ground_i128(b)?)
            .ok_or_else(overflow),
        Term::Mul(a, b) => eval_ground_i128(a)?
            .checked_mul(eval_ground_i128(b)?)
            .ok_or_else(overflow),
        Term::Neg(a) => eval_ground_i128(a)?.checked_neg().ok_or_else(overflow),
        other => Err(Error::IllFormedTerm(format!(
            "expected a ground integer, found {other:?}"
        ))),
    }
}

fn linearize(t: &Term) -> Result<Lin> {
    match t {
        Term::Var(n, Sort::ValueGroup) => Ok(Lin::var(n)),
        Term::Var(n, s) => Err(Error::OutOfFragment(format!(
            "variable `{n}` of sort {s} in a Presburger term"
        ))),
        Term::Int(n) => Ok(Lin::con(*n as i128)),
        Term::PlusInf => Err(Error::OutOfFragment(
            "+inf must be eliminated before Presburger elimination (run sort separation)"
                .to_string(),
        )),
        Term::Add(a, b) => linearize(a)?.add(&linearize(b)?),
        Term::Sub(a, b) => linearize(a)?.sub(&linearize(b)?),
        Term::Neg(a) => linearize(a)?.neg(),
        Term::Mul(a, b) => {
            if a.is_ground_int() {
                linearize(b)?.scale(eval_ground_i128(a)?)
            } else if b.is_ground_int() {
                linearize(a)?.scale(eval_ground_i128(b)?)
            } else {
                Err(Error::Nonlinear(format!("{t:?}")))
            }
        }
        Term::Ord(_) | Term::Ac(_) => Err(Error::OutOfFragment(
            "ord/ac must be rewritten before Presburger elimination (run sort separation)"
                .to_string(),
        )),
        Term::Rat(_) | Term::Residue(_) | Term::PiPow(_) => Err(Error::OutOfFragment(format!(
            "field constant {t:?} in a Presburger term"
        ))),
    }
}

/// Normalized Presburger literal. `Lt(l)` means `l < 0`, `Eq(l)` means
/// `l = 0`, `Dvd(k, l)` means `k | l`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum Lit {
    Lt(Lin),
    Eq(Lin),
    Ne(Lin),
    Dvd(u128, Lin),
    NotDvd(u128, Lin),
}

impl Lit {
    pub(crate) fn from_atom(f: &Formula) -> Result<Lit> {
        match f {
            Formula::Cmp(op, a, b) => {
                let l = linearize(a)?.sub(&linearize(b)?)?;
                Ok(match op {
                    CmpOp::Eq => Lit::Eq(l),
                    CmpOp::Ne => Lit::Ne(l),
                    CmpOp::Lt => Lit::Lt(l),
                    CmpOp::Le => Lit::Lt(l.add_const(-1)?),
                    CmpOp::Gt => Lit::Lt(l.neg()?),
                    CmpOp::Ge => Lit::Lt(l.neg()?.add_const(-1)?),
                })
            }
            Formula::Divides(k, t) => {
                if *k == 0 {
                    return Err(Error::BadModulus(0));
                }
                Ok(Lit::Dvd(*k as u128, linearize(t)?))
            }
            Formula::Not(inner) => match Lit::from_atom(inner)? {
                Lit::Dvd(k, l) => Ok(Lit::NotDvd(k, l)),
                Lit::NotDvd(k, l) => Ok(Lit::Dvd(k, l)),
                Lit::Eq(l) => Ok(Lit::Ne(l)),
                Lit::Ne(l) => Ok(Lit::Eq(l)),
                // ¬(l < 0) ⟺ l ≥ 0 ⟺ -l - 1 < 0
                Lit::Lt(l) => Ok(Lit::Lt(l.neg()?.add_const(-1)?)),
            },
            other => Err(Error::OutOfFragment(format!(
                "expected a Presburger literal, found {other:?}"
            ))),
        }
    }

    pub(crate) fn lin(&self) -> &Lin {
        match self {
            Lit::Lt(l) | Lit::Eq(l) | Lit::Ne(l) | Lit::Dvd(_, l) | Lit::NotDvd(_, l) => l,
        }
    }

    fn mentions(&self, v: &str) -> bool {
        self.lin().coeff(v) != 0
    }

    fn subst(&self, v: &str, repl: &Lin) -> Result<Lit> {
        Ok(match self {
            Lit::Lt(l) => Lit::Lt(l.subst(v, repl)?),
            Lit::Eq(l) => Lit::Eq(l.subst(v, repl)?),
            Lit::Ne(l) => Lit::Ne(l.subst(v, repl)?),
            Lit::Dvd(k, l) => Lit::Dvd(*k, l.subst(v, repl)?),
            Lit::NotDvd(k, l) => Lit::NotDvd(*k, l.subst(v, repl)?),
        })
    }

    /// Truth value when the linear form is constant.
    fn fold(&self) -> Option<bool> {
        let c = self.lin().is_const()?;
        Some(match self {
            Lit::Lt(_) => c < 0,
            Lit::Eq(_) => c == 0,
            Lit::Ne(_) => c != 0,
            Lit::Dvd(k, _) => c.rem_euclid(*k as i128) == 0,
            Lit::NotDvd(k, _) => c.rem_euclid(*k as i128) != 0,
        })
    }

    pub(crate) fn eval(&self, env: &BTreeMap<String, i64>) -> Result<bool> {
        let c = self.lin().eval(env)?;
        Ok(match self {
            Lit::Lt(_) => c < 0,
            Lit::Eq(_) => c == 0,
            Lit::Ne(_) => c != 0,
            Lit::Dvd(k, _) => c.rem_euclid(*k as i128) == 0,
            Lit::NotDvd(k, _) => c.rem_euclid(*k as i128) != 0,
        })
    }

    fn to_formula(&self) -> Result<Formula> {
        Ok(match self {
            Lit::Lt(l) => Formula::lt(l.to_term()?, Term::int(0)),
            Lit::Eq(l) => Formula::eq(l.to_term()?, Term::int(0)),
            Lit::Ne(l) => Formula::ne(l.to_term()?, Term::int(0)),
            Lit::Dvd(k, l) => {
                let k = u64::try_from(*k).map_err(|_| overflow())?;
                Formula::divides(k, l.to_term()?)
            }
            Lit::NotDvd(k, l) => {
                let k = u64::try_from(*k).map_err(|_| overflow())?;
                Formula::not(Formula::divides(k, l.to_term()?))
            }
        })
    }
}

/// Collects variable breakpoints and divisor data; shared with the
/// boundedness analysis.
pub(crate) fn literals_of(f: &Formula, out: &mut Vec<Lit>) -> Result<()> {
    match f {
        Formula::True | Formula::False => Ok(()),
        Formula::Cmp(..) | Formula::Divides(..) => {
            out.push(Lit::from_atom(f)?);
            Ok(())
        }
        Formula::Not(a) => match &**a {
            Formula::Cmp(..) | Formula::Divides(..) => {
                out.push(Lit::from_atom(f)?);
                Ok(())
            }
            inner => literals_of(inner, out),
        },
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            literals_of(a, out)?;
            literals_of(b, out)
        }
        Formula::Exists(..) | Formula::Forall(..) => Err(Error::OutOfFragment(
            "literal scan expects a quantifier-free formula".to_string(),
        )),
    }
}

fn lcm_i128(a: i128, b: i128) -> Result<i128> {
    if a == 0 || b == 0 {
        return Err(overflow());
    }
    let g = a.gcd(&b);
    a.checked_div(g)
        .and_then(|q| q.checked_mul(b))
        .map(|v| v.abs())
        .ok_or_else(overflow)
}

fn lcm_u128(a: u128, b: u128) -> Result<u128> {
    let g = a.gcd(&b);
    (a / g).checked_mul(b).ok_or_else(overflow)
}

/// Scales a literal mentioning `v` so the coefficient of `v` becomes
/// `±lambda`, then renames `lambda·v` to a unit-coefficient variable and
/// normalizes every shape except `Lt` to coefficient `+1`.
fn scale_literal(lit: &Lit, v: &str, lambda: i128) -> Result<Lit> {
    let a = lit.lin().coeff(v);
    debug_assert!(a != 0);
    let s = lambda / a.abs();
    let rescale = |l: &Lin| -> Result<Lin> {
        // Multiply through by the positive factor s, then set the
        // v-coefficient to ±1: the literal is now about z = λv.
        let scaled = l.scale(s)?;
        let sign = if scaled.coeff(v) > 0 { 1 } else { -1 };
        let mut z = scaled.drop_var(v);
        z.coeffs.insert(v.to_string(), sign);
        Ok(z)
    };
    Ok(match lit {
        Lit::Lt(l) => Lit::Lt(rescale(l)?),
        Lit::Eq(l) => {
            let z = rescale(l)?;
            Lit::Eq(if z.coeff(v) < 0 { z.neg()? } else { z })
        }
        Lit::Ne(l) => {
            let z = rescale(l)?;
            Lit::Ne(if z.coeff(v) < 0 { z.neg()? } else { z })
        }
        Lit::Dvd(k, l) => {
            let k = k.checked_mul(s as u128).ok_or_else(overflow)?;
            let z = rescale(l)?;
            Lit::Dvd(k, if z.coeff(v) < 0 { z.neg()? } else { z })
        }
        Lit::NotDvd(k, l) => {
            let k = k.checked_mul(s as u128).ok_or_else(overflow)?;
            let z = rescale(l)?;
            Lit::NotDvd(k, if z.coeff(v) < 0 { z.neg()? } else { z })
        }
    })
}

/// Drops constant-true literals; `None` when the clause is unsatisfiable.
fn fold_clause(lits: Vec<Lit>) -> Option<Vec<Lit>> {
    let mut out = Vec::with_capacity(lits.len());
    for lit in lits {
        match lit.fold() {
            Some(true) => {}
            Some(false) => return None,
            None => out.push(lit),
        }
    }
    out.sort();
    out.dedup();
    Some(out)
}

/// Eliminates `∃v` from one conjunction of literals.
fn cooper_clause(v: &str, lits: Vec<Lit>) -> Result<Vec<Vec<Lit>>> {
    let (with_v, without): (Vec<_>, Vec<_>) = lits.into_iter().partition(|l| l.mentions(v));
    if with_v.is_empty() {
        return Ok(fold_clause(without).into_iter().collect());
    }

    let mut lambda: i128 = 1;
    for lit in &with_v {
        lambda = lcm_i128(lambda, lit.lin().coeff(v))?;
    }
    let mut zlits: Vec<Lit> = with_v
        .iter()
        .map(|l| scale_literal(l, v, lambda))
        .collect::<Result<_>>()?;
    zlits.push(Lit::Dvd(lambda as u128, Lin::var(v)));

    // Equality fast path: z is pinned, substitute it everywhere.
    if let Some(idx) = zlits.iter().position(|l| matches!(l, Lit::Eq(_))) {
        let pinned = match &zlits[idx] {
            Lit::Eq(l) => l.drop_var(v).neg()?,
            _ => unreachable!(),
        };
        let mut clause = Vec::with_capacity(zlits.len() + without.len());
        for (i, lit) in zlits.iter().enumerate() {
            if i != idx {
                clause.push(lit.subst(v, &pinned)?);
            }
        }
        clause.extend(without);
        return Ok(fold_clause(clause).into_iter().collect());
    }

    let mut delta: u128 = 1;
    for lit in &zlits {
        if let Lit::Dvd(k, _) | Lit::NotDvd(k, _) = lit {
            delta = lcm_u128(delta, *k)?;
        }
    }
    if delta > DELTA_CAP {
        return Err(Error::BudgetExceeded { needed: delta, budget: DELTA_CAP });
    }

    // B-set: lower-bound terms, plus every point excluded by an
    // inequation.  A least witness z₀ has z₀ − δ failing some literal:
    // an upper bound or (not-)divisibility cannot fail there, so either a
    // lower bound b forces z₀ ≤ b + δ, or z₀ − δ is a forbidden point c
    // and z₀ = c + δ.  Dropping the `Ne` points loses such witnesses.
    let mut lowers: Vec<Lin> = Vec::new();
    for l in &zlits {
        match l {
            // -z + r < 0 ⟺ z > r
            Lit::Lt(lin) if lin.coeff(v) < 0 => lowers.push(lin.drop_var(v)),
            // z + r ≠ 0 forbids exactly z = -r
            Lit::Ne(lin) => lowers.push(lin.drop_var(v).neg()?),
            _ => {}
        }
    }
    lowers.sort();
    lowers.dedup();

    let estimated = (lowers.len() as u128 + 1).checked_mul(delta).ok_or_else(overflow)?;
    if estimated > DELTA_CAP {
        return Err(Error::BudgetExceeded { needed: estimated, budget: DELTA_CAP });
    }

    let mut out: Vec<Vec<Lit>> = Vec::new();

    // φ_{-∞}: meaningful only when no literal forces z upward.
    let minus_inf_alive = zlits
        .iter()
        .all(|l| !matches!(l, Lit::Eq(_)) && !matches!(l, Lit::Lt(lin) if lin.coeff(v) < 0));
    if minus_inf_alive {
        for j in 1..=delta {
            let repl = Lin::con(j as i128);
            let mut clause = Vec::new();
            for lit in &zlits {
                match lit {
                    Lit::Lt(lin) if lin.coeff(v) > 0 => {} // true at -∞
                    Lit::Ne(_) => {}                       // true at -∞
                    Lit::Dvd(..) | Lit::NotDvd(..) => clause.push(lit.subst(v, &repl)?),
                    _ => unreachable!("upward-forcing literal in φ_-∞"),
                }
            }
            clause.extend(without.iter().cloned());
            if let Some(c) = fold_clause(clause) {
                out.push(c);
            }
        }
    }

    for b in &lowers {
        for j in 1..=delta {
            let repl = b.add_const(j as i128)?;
            let mut clause = Vec::with_capacity(zlits.len() + without.len());
            for lit in &zlits {
                clause.push(lit.subst(v, &repl)?);
            }
            clause.extend(without.iter().cloned());
            if let Some(c) = fold_clause(clause) {
                out.push(c);
            }
        }
    }
    Ok(out)
}

/// Validates that every atom of a quantifier-free formula is a Presburger
/// literal.
fn validate_atoms(f: &Formula) -> Result<()> {
    let mut sink = Vec::new();
    literals_of(f, &mut sink).map(|_| ())
}

fn eliminate_exists(v: &str, body: Formula) -> Result<Formula> {
    let phi = to_nnf(&simplify(&body));
    if !phi
        .free_variables()
        .contains(&(v.to_string(), Sort::ValueGroup))
    {
        return Ok(phi);
    }
    let clauses = dnf(&phi)?;
    let mut out_clauses: Vec<Vec<Formula>> = Vec::new();
    for clause in clauses {
        let lits: Vec<Lit> = clause
            .iter()
            .map(Lit::from_atom)
            .collect::<Result<_>>()?;
        for produced in cooper_clause(v, lits)? {
            let formulas: Vec<Formula> = produced
                .iter()
                .map(Lit::to_formula)
                .collect::<Result<_>>()?;
            out_clauses.push(formulas);
        }
    }
    canonicalize_dnf(&mut out_clauses);
    Ok(simplify(&formula_from_dnf(&out_clauses)))
}

/// Removes every quantifier, innermost first. The result is equivalent
/// over `Z` and quantifier-free; divisibility moduli grow at most to the
/// lcm of input moduli and coefficients.
pub fn eliminate_quantifiers(f: &Formula) -> Result<Formula> {
    match f {
        Formula::True | Formula::False => Ok(f.clone()),
        Formula::Cmp(..) | Formula::Divides(..) => {
            Lit::from_atom(f)?;
            Ok(f.clone())
        }
        Formula::Not(a) => Ok(Formula::not(eliminate_quantifiers(a)?)),
        Formula::And(a, b) => Ok(eliminate_quantifiers(a)?.and(eliminate_quantifiers(b)?)),
        Formula::Or(a, b) => Ok(eliminate_quantifiers(a)?.or(eliminate_quantifiers(b)?)),
        Formula::Implies(a, b) => {
            Ok(eliminate_quantifiers(a)?.implies(eliminate_quantifiers(b)?))
        }
        Formula::Exists(n, Sort::ValueGroup, body) => {
            let inner = eliminate_quantifiers(body)?;
            eliminate_exists(n, inner)
        }
        Formula::Forall(n, Sort::ValueGroup, body) => {
            let inner = eliminate_quantifiers(body)?;
            let negated = to_nnf(&Formula::not(inner));
            validate_atoms(&negated)?;
            let projected = eliminate_exists(n, negated)?;
            Ok(simplify(&to_nnf(&Formula::not(projected))))
        }
        Formula::Exists(n, s, _) | Formula::Forall(n, s, _) => Err(Error::OutOfFragment(format!(
            "cannot eliminate quantifier over `{n}` of sort {s}; only value-group \
             quantifiers are Presburger"
        ))),
    }
}
