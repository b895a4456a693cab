//! Valued-field elimination for formulas whose valued-field content is
//! constant.
//!
//! A formula with no valued-field quantifiers and no free valued-field
//! variables mentions the valued field only through constant terms — Laurent
//! polynomials in the uniformizer with rational coefficients.  Outside the
//! finitely many primes dividing a coefficient's numerator or denominator,
//! such a constant `c = c₀·π^{k₀} + (higher order)` is pinned down uniformly
//! in every model: `ord(c) = k₀` and `ac(c) = c₀` read in the residue field,
//! while `ord(0) = +∞` and `ac(0) = 0` hold definitionally.  Substituting
//! these values removes every `ord`/`ac`/valued-field symbol; the excluded
//! primes are recorded with reasons in an [`ExclusionLedger`].
//!
//! The remaining formula splits, per disjunct of its disjunctive normal
//! form, into a residue-sort part ψ and a value-group part L — the
//! [`SortSeparatedForm`].  Residue-sort quantifiers stay inside ψ literals
//! and value-group quantifiers inside L literals; a quantifier whose body
//! mixes the two sorts has no such split and is rejected.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::ast::{Formula, Sort, Term};
use crate::error::Error;
use crate::transform;
use crate::Result;

/// Primes a separation had to exclude, each with its justifications.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExclusionLedger {
    reasons: BTreeMap<u64, BTreeSet<String>>,
}

impl ExclusionLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn exclude(&mut self, prime: u64, reason: impl Into<String>) {
        self.reasons.entry(prime).or_default().insert(reason.into());
    }

    pub fn contains(&self, prime: u64) -> bool {
        self.reasons.contains_key(&prime)
    }

    pub fn primes(&self) -> impl Iterator<Item = u64> + '_ {
        self.reasons.keys().copied()
    }

    pub fn reasons_for(&self, prime: u64) -> impl Iterator<Item = &str> {
        self.reasons.get(&prime).into_iter().flatten().map(String::as_str)
    }

    pub fn merge(&mut self, other: &ExclusionLedger) {
        for (&p, rs) in &other.reasons {
            self.reasons.entry(p).or_default().extend(rs.iter().cloned());
        }
    }

    pub fn is_empty(&self) -> bool {
        self.reasons.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &BTreeSet<String>)> {
        self.reasons.iter().map(|(&p, rs)| (p, rs))
    }
}

impl std::fmt::Display for ExclusionLedger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.reasons.is_empty() {
            return write!(f, "(no excluded primes)");
        }
        for (p, rs) in &self.reasons {
            writeln!(f, "p = {p}:")?;
            for r in rs {
                writeln!(f, "  - {r}")?;
            }
        }
        Ok(())
    }
}

/// Disjuncts (ψ_i, L_i): residue-sort condition and value-group condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortSeparatedForm {
    pub disjuncts: Vec<(Formula, Formula)>,
}

impl SortSeparatedForm {
    /// Reassembles ⋁_i (ψ_i ∧ L_i).
    pub fn to_formula(&self) -> Formula {
        if self.disjuncts.is_empty() {
            return Formula::False;
        }
        self.disjuncts
            .iter()
            .map(|(psi, l)| match (psi, l) {
                (Formula::True, l) => l.clone(),
                (psi, Formula::True) => psi.clone(),
                (psi, l) => psi.clone().and(l.clone()),
            })
            .reduce(Formula::or)
            .expect("nonempty disjunct list")
    }
}

/// A valued-field constant folded into Σ c_k π^k with exact rational c_k.
#[derive(Debug, Clone, Default)]
struct PiConst {
    coeffs: BTreeMap<i64, BigRational>,
}

impl PiConst {
    fn constant(r: BigRational) -> Self {
        let mut c = PiConst::default();
        if !r.is_zero() {
            c.coeffs.insert(0, r);
        }
        c
    }

    fn pi_pow(k: i64) -> Self {
        let mut c = PiConst::default();
        c.coeffs.insert(k, BigRational::from_integer(1.into()));
        c
    }

    fn add(mut self, rhs: &PiConst, sign: i32) -> Self {
        for (&k, v) in &rhs.coeffs {
            let slot = self.coeffs.entry(k).or_insert_with(|| BigRational::from_integer(0.into()));
            if sign >= 0 {
                *slot += v;
            } else {
                *slot -= v;
            }
        }
        self.coeffs.retain(|_, v| !v.is_zero());
        self
    }

    fn mul(&self, rhs: &PiConst) -> Result<Self> {
        let mut out = PiConst::default();
        for (&i, a) in &self.coeffs {
            for (&j, b) in &rhs.coeffs {
                let k = i.checked_add(j).ok_or(Error::Overflow("uniformizer exponent"))?;
                let slot =
                    out.coeffs.entry(k).or_insert_with(|| BigRational::from_integer(0.into()));
                *slot += a * b;
            }
        }
        out.coeffs.retain(|_, v| !v.is_zero());
        Ok(out)
    }

    fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Leading (lowest-π-power) exponent and coefficient.
    fn leading(&self) -> Option<(i64, &BigRational)> {
        self.coeffs.iter().next().map(|(&k, c)| (k, c))
    }

    fn display(&self) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        self.coeffs
            .iter()
            .map(|(&k, c)| match k {
                0 => c.to_string(),
                1 => format!("{c}*pi"),
                _ => format!("{c}*pi^{k}"),
            })
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

fn fold_vf_const(t: &Term) -> Result<PiConst> {
    match t {
        Term::Rat(r) => Ok(PiConst::constant(r.clone())),
        Term::PiPow(k) => Ok(PiConst::pi_pow(*k)),
        Term::Add(a, b) => Ok(fold_vf_const(a)?.add(&fold_vf_const(b)?, 1)),
        Term::Sub(a, b) => Ok(fold_vf_const(a)?.add(&fold_vf_const(b)?, -1)),
        Term::Mul(a, b) => fold_vf_const(a)?.mul(&fold_vf_const(b)?),
        Term::Neg(a) => Ok(PiConst::default().add(&fold_vf_const(a)?, -1)),
        Term::Var(name, _) => Err(Error::OutOfFragment(format!(
            "valued-field variable `{name}`; separation handles constant terms only"
        ))),
        other => Err(Error::IllFormedTerm(format!(
            "`{other:?}` inside a valued-field constant"
        ))),
    }
}

/// Prime factors of |n|, by trial division after narrowing to u128.
fn prime_factors(n: &BigInt) -> Result<BTreeSet<u64>> {
    let mut m = n
        .abs()
        .to_u128()
        .ok_or(Error::Overflow("constant too large to factor"))?;
    let mut out = BTreeSet::new();
    let mut d = 2u128;
    while d * d <= m {
        if m % d == 0 {
            out.insert(d as u64);
            while m % d == 0 {
                m /= d;
            }
        }
        d += 1;
    }
    if m > 1 {
        out.insert(m.try_into().map_err(|_| Error::Overflow("prime factor exceeds u64"))?);
    }
    Ok(out)
}

/// Excludes every prime at which some coefficient of `c` fails to be a unit.
fn exclude_coefficient_primes(c: &PiConst, ledger: &mut ExclusionLedger) -> Result<()> {
    for coeff in c.coeffs.values() {
        for p in prime_factors(coeff.numer())? {
            ledger.exclude(
                p,
                format!("constant {} must be a unit (p divides a numerator)", c.display()),
            );
        }
        for p in prime_factors(coeff.denom())? {
            ledger.exclude(
                p,
                format!("constant {} must be a unit (p divides a denominator)", c.display()),
            );
        }
    }
    Ok(())
}

/// Replaces `ord(c)` and `ac(c)` over constant `c`, recording exclusions.
fn rewrite_term(t: &Term, ledger: &mut ExclusionLedger) -> Result<Term> {
    match t {
        Term::Ord(inner) => {
            let c = fold_vf_const(inner)?;
            if c.is_zero() {
                // ord(0) = +∞ definitionally; no exclusion needed.
                Ok(Term::PlusInf)
            } else {
                let (k, _) = c.leading().expect("nonzero");
                exclude_coefficient_primes(&c, ledger)?;
                Ok(Term::Int(k))
            }
        }
        Term::Ac(inner) => {
            let c = fold_vf_const(inner)?;
            if c.is_zero() {
                // ac(0) = 0 definitionally.
                Ok(Term::Residue(BigRational::from_integer(0.into())))
            } else {
                let (_, c0) = c.leading().expect("nonzero");
                let c0 = c0.clone();
                exclude_coefficient_primes(&c, ledger)?;
                Ok(Term::Residue(c0))
            }
        }
        Term::Var(..) | Term::Int(_) | Term::PlusInf | Term::Residue(_) => Ok(t.clone()),
        Term::Rat(_) | Term::PiPow(_) => Err(Error::OutOfFragment(
            "bare valued-field constant outside ord/ac/equality".into(),
        )),
        Term::Add(a, b) => Ok(rewrite_term(a, ledger)?.add(rewrite_term(b, ledger)?)),
        Term::Sub(a, b) => Ok(rewrite_term(a, ledger)?.sub(rewrite_term(b, ledger)?)),
        Term::Mul(a, b) => Ok(rewrite_term(a, ledger)?.mul(rewrite_term(b, ledger)?)),
        Term::Neg(a) => Ok(rewrite_term(a, ledger)?.neg()),
    }
}

fn rewrite_formula(f: &Formula, ledger: &mut ExclusionLedger) -> Result<Formula> {
    match f {
        Formula::True | Formula::False => Ok(f.clone()),
        Formula::Cmp(op, a, b) => {
            let sort = a.sort().or_else(|_| b.sort())?;
            if sort == Sort::ValuedField {
                // a ▷ b over constants: decided by whether a − b vanishes as
                // an exact Laurent polynomial; nonzero survives every
                // admissible model once its coefficients are units.
                let d = fold_vf_const(a)?.add(&fold_vf_const(b)?, -1);
                let equal = d.is_zero();
                if !equal {
                    exclude_coefficient_primes(&d, ledger)?;
                }
                let truth = |b: bool| if b { Formula::True } else { Formula::False };
                return match op {
                    crate::ast::CmpOp::Eq => Ok(truth(equal)),
                    crate::ast::CmpOp::Ne => Ok(truth(!equal)),
                    _ => Err(Error::OutOfFragment(
                        "order comparison on the valued-field sort".into(),
                    )),
                };
            }
            Ok(Formula::cmp(*op, rewrite_term(a, ledger)?, rewrite_term(b, ledger)?))
        }
        Formula::Divides(k, t) => Ok(Formula::Divides(*k, rewrite_term(t, ledger)?)),
        Formula::Not(g) => Ok(rewrite_formula(g, ledger)?.not()),
        Formula::And(a, b) => Ok(rewrite_formula(a, ledger)?.and(rewrite_formula(b, ledger)?)),
        Formula::Or(a, b) => Ok(rewrite_formula(a, ledger)?.or(rewrite_formula(b, ledger)?)),
        Formula::Implies(a, b) => {
            Ok(rewrite_formula(a, ledger)?.implies(rewrite_formula(b, ledger)?))
        }
        Formula::Exists(name, sort, body) => {
            if *sort == Sort::ValuedField {
                return Err(Error::OutOfFragment(format!(
                    "valued-field quantifier over `{name}`; use the model-evaluation \
                     enumeration path in the measure engine"
                )));
            }
            Ok(Formula::Exists(name.clone(), *sort, Box::new(rewrite_formula(body, ledger)?)))
        }
        Formula::Forall(name, sort, body) => {
            if *sort == Sort::ValuedField {
                return Err(Error::OutOfFragment(format!(
                    "valued-field quantifier over `{name}`; use the model-evaluation \
                     enumeration path in the measure engine"
                )));
            }
            Ok(Formula::Forall(name.clone(), *sort, Box::new(rewrite_formula(body, ledger)?)))
        }
    }
}

/// Which sort's material a separated literal touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Neutral,
    Residue,
    Group,
    Mixed,
}

impl Side {
    fn join(self, other: Side) -> Side {
        match (self, other) {
            (Side::Neutral, s) | (s, Side::Neutral) => s,
            (a, b) if a == b => a,
            _ => Side::Mixed,
        }
    }
}

fn term_side(t: &Term) -> Side {
    match t {
        Term::Var(_, Sort::ResidueField) | Term::Residue(_) => Side::Residue,
        Term::Var(_, Sort::ValueGroup) | Term::Int(_) | Term::PlusInf | Term::Ord(_) => {
            Side::Group
        }
        Term::Var(_, Sort::ValuedField) | Term::Rat(_) | Term::PiPow(_) | Term::Ac(_) => {
            // Post-rewrite these are gone; classify defensively.
            Side::Mixed
        }
        Term::Add(a, b) | Term::Sub(a, b) | Term::Mul(a, b) => term_side(a).join(term_side(b)),
        Term::Neg(a) => term_side(a),
    }
}

fn formula_side(f: &Formula) -> Side {
    match f {
        Formula::True | Formula::False => Side::Neutral,
        Formula::Cmp(_, a, b) => term_side(a).join(term_side(b)),
        Formula::Divides(_, t) => Side::Group.join(term_side(t)),
        Formula::Not(g) => formula_side(g),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            formula_side(a).join(formula_side(b))
        }
        Formula::Exists(_, Sort::ResidueField, body) | Formula::Forall(_, Sort::ResidueField, body) => {
            Side::Residue.join(formula_side(body))
        }
        Formula::Exists(_, Sort::ValueGroup, body) | Formula::Forall(_, Sort::ValueGroup, body) => {
            Side::Group.join(formula_side(body))
        }
        Formula::Exists(..) | Formula::Forall(..) => Side::Mixed,
    }
}

/// Eliminates valued-field material from `theta` and splits each disjunct
/// into a residue part and a value-group part.
///
/// Requires `theta` to have no valued-field quantifiers and no free
/// valued-field variables; every valued-field term must be constant.  The
/// result is equivalent to `theta` in every model whose residue
/// characteristic avoids the returned ledger.
pub fn separate(theta: &Formula) -> Result<(SortSeparatedForm, ExclusionLedger)> {
    theta.check()?;
    for (name, sort) in theta.free_variables() {
        if sort == Sort::ValuedField {
            return Err(Error::OutOfFragment(format!(
                "free valued-field variable `{name}`; separation needs constant \
                 valued-field terms only"
            )));
        }
    }
    let mut ledger = ExclusionLedger::new();
    let rewritten = rewrite_formula(theta, &mut ledger)?;
    let simplified = transform::simplify(&rewritten);

    // Quantified one-sorted subformulas count as literals for the split.
    let nnf = transform::to_nnf(&simplified);
    let mut clauses = dnf_with_opaque_literals(&nnf)?;
    transform::canonicalize_dnf(&mut clauses);

    let mut disjuncts = Vec::new();
    for clause in &clauses {
        let mut psi = Vec::new();
        let mut l = Vec::new();
        for lit in clause {
            match formula_side(lit) {
                Side::Residue => psi.push(lit.clone()),
                Side::Group => l.push(lit.clone()),
                Side::Neutral => {
                    // simplify() left only True/False at fold points.
                    if *lit == Formula::False {
                        psi.clear();
                        l.clear();
                        psi.push(Formula::False);
                        break;
                    }
                }
                Side::Mixed => {
                    return Err(Error::OutOfFragment(format!(
                        "literal mixes residue and value-group material: `{}`",
                        crate::parser::serialize_body(lit)
                    )))
                }
            }
        }
        if psi.first() == Some(&Formula::False) {
            continue;
        }
        disjuncts.push((Formula::conj(psi), Formula::conj(l)));
    }
    Ok((SortSeparatedForm { disjuncts }, ledger))
}

/// DNF that treats quantified subformulas (and atoms) as opaque literals.
fn dnf_with_opaque_literals(f: &Formula) -> Result<Vec<Vec<Formula>>> {
    match f {
        Formula::And(a, b) => {
            let left = dnf_with_opaque_literals(a)?;
            let right = dnf_with_opaque_literals(b)?;
            let mut out = Vec::new();
            for x in &left {
                for y in &right {
                    let mut clause = x.clone();
                    clause.extend(y.iter().cloned());
                    out.push(clause);
                    if out.len() > (1 << 20) {
                        return Err(Error::BudgetExceeded {
                            needed: out.len() as u128,
                            budget: 1 << 20,
                        });
                    }
                }
            }
            Ok(out)
        }
        Formula::Or(a, b) => {
            let mut out = dnf_with_opaque_literals(a)?;
            out.extend(dnf_with_opaque_literals(b)?);
            Ok(out)
        }
        other => Ok(vec![vec![other.clone()]]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{eval_valued, ModelTag, TriBool, Value};
    use crate::parser::parse;

    fn separated(text: &str) -> (SortSeparatedForm, ExclusionLedger) {
        separate(&parse(text).unwrap()).unwrap()
    }

    #[test]
    fn unit_valuation_constant_becomes_group_atom() {
        let (form, ledger) = separated("vg m; ord(2) = m");
        assert_eq!(
            crate::parser::serialize_body(&form.to_formula()),
            "0 = m"
        );
        assert_eq!(ledger.primes().collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn valuation_of_zero_is_plus_infinity() {
        let (form, ledger) = separated("ord(0) = +inf");
        assert_eq!(form.to_formula(), Formula::True);
        assert!(ledger.is_empty());
    }

    #[test]
    fn angular_component_becomes_residue_constant() {
        let (form, ledger) = separated("rf xi; ac(3) = xi");
        assert_eq!(
            crate::parser::serialize_body(&form.to_formula()),
            "3 = xi"
        );
        assert_eq!(ledger.primes().collect::<Vec<_>>(), vec![3]);
    }

    #[test]
    fn composite_rational_excludes_numerator_and_denominator_primes() {
        let (_, ledger) = separated("vg m; ord(10/21) >= m");
        assert_eq!(ledger.primes().collect::<Vec<_>>(), vec![2, 3, 5, 7]);
    }

    #[test]
    fn leading_term_of_pi_polynomial_wins() {
        // 2 + 3·π: ord 0, ac 2, excluding 2 and 3.
        let (form, ledger) = separated("vg m; ord(2 + 3*pi) = m and ac(2 + 3*pi) = 2");
        let text = crate::parser::serialize_body(&form.to_formula());
        assert!(text.contains("0 = m"), "{text}");
        assert_eq!(ledger.primes().collect::<Vec<_>>(), vec![2, 3]);
    }

    #[test]
    fn constant_equality_is_decided_exactly() {
        let (form, _) = separated("pi + pi = 2*pi");
        assert_eq!(form.to_formula(), Formula::True);
        let (form, ledger) = separated("2 = pi");
        assert_eq!(form.to_formula(), Formula::False);
        // 2 − π vanishes at p = 2, so deciding 2 ≠ π costs that prime.
        assert!(ledger.contains(2));
    }

    #[test]
    fn valued_field_quantifier_is_redirected() {
        let err = separate(&parse("exists vf x. ord(x) >= 0").unwrap()).unwrap_err();
        match err {
            Error::OutOfFragment(msg) => assert!(msg.contains("measure engine"), "{msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn free_valued_field_variable_is_rejected() {
        assert!(matches!(
            separate(&parse("vf x; ord(x) >= 0").unwrap()),
            Err(Error::OutOfFragment(_))
        ));
    }

    #[test]
    fn disjuncts_split_by_sort() {
        let (form, _) = separated(
            "vg m; (exists rf xi. xi*xi = ac(3)) and (0 <= m and m <= 2) or ord(5) = m",
        );
        assert_eq!(form.disjuncts.len(), 2);
        for (psi, l) in &form.disjuncts {
            assert!(formula_side(psi) != Side::Group);
            assert!(formula_side(l) != Side::Residue);
        }
    }

    #[test]
    fn mixed_sort_quantified_literal_is_rejected() {
        // A residue quantifier over a body that also constrains m cannot be
        // split into (ψ, L) pairs.
        let err =
            separate(&parse("vg m; exists rf xi. (xi = 0 or m = 1)").unwrap()).unwrap_err();
        assert!(matches!(err, Error::OutOfFragment(_)));
    }

    #[test]
    fn separated_form_agrees_with_original_in_admissible_models() {
        let cases = [
            "vg m; ord(2) = m",
            "vg m; ord(10/21) >= m",
            "vg m; ord(2 + 3*pi) = m",
            "rf xi; ac(3) = xi",
            "vg m; ord(0) = +inf and m = m",
            "vg m; (ord(4) <= m and m <= 3) or ac(7) = 1",
        ];
        for text in cases {
            let theta = parse(text).unwrap();
            let (form, ledger) = separate(&theta).unwrap();
            let sep = form.to_formula();
            for p in [2u64, 3, 5, 7, 11] {
                if ledger.contains(p) {
                    continue;
                }
                for m in -3i64..=3 {
                    for xi in 0..p.min(5) {
                        let mut env = std::collections::BTreeMap::new();
                        env.insert("m".to_string(), Value::Group(m));
                        env.insert("xi".to_string(), Value::Residue(xi));
                        let a = eval_valued(&theta, ModelTag::Padic, p, 8, &env).unwrap();
                        let b = eval_valued(&sep, ModelTag::Padic, p, 8, &env).unwrap();
                        assert_ne!(a, TriBool::Unknown, "{text} must be decided exactly");
                        assert_eq!(a, b, "{text} at p={p}, m={m}, xi={xi}");
                    }
                }
            }
        }
    }

    #[test]
    fn excluding_two_for_ord_two_is_necessary() {
        // Minimality spot check: at the excluded prime the separated form
        // and the original genuinely disagree.
        let theta = parse("vg m; ord(2) = m").unwrap();
        let (form, ledger) = separate(&theta).unwrap();
        assert!(ledger.contains(2));
        let sep = form.to_formula();
        let mut env = std::collections::BTreeMap::new();
        env.insert("m".to_string(), Value::Group(1));
        // At p = 2: ord(2) = 1, so the original holds at m = 1 …
        assert_eq!(
            eval_valued(&theta, ModelTag::Padic, 2, 8, &env).unwrap(),
            TriBool::True
        );
        // … but the separated form `m = 0` does not.
        assert_eq!(
            eval_valued(&sep, ModelTag::Padic, 2, 8, &env).unwrap(),
            TriBool::False
        );
    }
}
