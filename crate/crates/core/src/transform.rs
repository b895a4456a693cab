//! Structural formula transformations: substitution, negation normal form,
//! disjunctive normal form, and ground-atom simplification.
//!
//! In negation normal form produced here, `Not` survives only directly
//! around divisibility atoms; every other negation is absorbed by dual
//! operators or by the comparison operators, and quantifiers commute with
//! negation via `forall = not exists not`.

use std::collections::BTreeSet;

use crate::ast::{CmpOp, Formula, Sort, Term};
use crate::error::Error;
use crate::Result;

/// Upper bound on the number of conjuncts a DNF expansion may produce.
const DNF_CAP: usize = 1 << 20;

/// Returns a variable name based on `base` that avoids everything in `avoid`.
pub fn fresh_name(base: &str, avoid: &BTreeSet<String>) -> String {
    if !avoid.contains(base) {
        return base.to_string();
    }
    for k in 0u64.. {
        let cand = format!("{base}#{k}");
        if !avoid.contains(&cand) {
            return cand;
        }
    }
    unreachable!()
}

fn term_substitute(t: &Term, name: &str, sort: Sort, replacement: &Term) -> Term {
    match t {
        Term::Var(n, s) if n == name && *s == sort => replacement.clone(),
        Term::Var(..)
        | Term::Int(_)
        | Term::PlusInf
        | Term::Rat(_)
        | Term::PiPow(_)
        | Term::Residue(_) => t.clone(),
        Term::Add(a, b) => Term::Add(
            Box::new(term_substitute(a, name, sort, replacement)),
            Box::new(term_substitute(b, name, sort, replacement)),
        ),
        Term::Sub(a, b) => Term::Sub(
            Box::new(term_substitute(a, name, sort, replacement)),
            Box::new(term_substitute(b, name, sort, replacement)),
        ),
        Term::Mul(a, b) => Term::Mul(
            Box::new(term_substitute(a, name, sort, replacement)),
            Box::new(term_substitute(b, name, sort, replacement)),
        ),
        Term::Neg(a) => Term::Neg(Box::new(term_substitute(a, name, sort, replacement))),
        Term::Ord(a) => Term::Ord(Box::new(term_substitute(a, name, sort, replacement))),
        Term::Ac(a) => Term::Ac(Box::new(term_substitute(a, name, sort, replacement))),
    }
}

/// Replaces free occurrences of `(name, sort)` by `replacement`,
/// alpha-renaming binders that would capture variables of the replacement.
pub fn substitute(f: &Formula, name: &str, sort: Sort, replacement: &Term) -> Formula {
    match f {
        Formula::True | Formula::False => f.clone(),
        Formula::Cmp(op, a, b) => Formula::Cmp(
            *op,
            term_substitute(a, name, sort, replacement),
            term_substitute(b, name, sort, replacement),
        ),
        Formula::Divides(k, t) => Formula::Divides(*k, term_substitute(t, name, sort, replacement)),
        Formula::Not(a) => Formula::Not(Box::new(substitute(a, name, sort, replacement))),
        Formula::And(a, b) => Formula::And(
            Box::new(substitute(a, name, sort, replacement)),
            Box::new(substitute(b, name, sort, replacement)),
        ),
        Formula::Or(a, b) => Formula::Or(
            Box::new(substitute(a, name, sort, replacement)),
            Box::new(substitute(b, name, sort, replacement)),
        ),
        Formula::Implies(a, b) => Formula::Implies(
            Box::new(substitute(a, name, sort, replacement)),
            Box::new(substitute(b, name, sort, replacement)),
        ),
        Formula::Exists(n, s, body) | Formula::Forall(n, s, body) => {
            let is_forall = matches!(f, Formula::Forall(..));
            if n == name && *s == sort {
                // Bound occurrences are untouched.
                return f.clone();
            }
            let mut repl_vars = BTreeSet::new();
            replacement.collect_vars(&mut repl_vars);
            let captured = repl_vars.contains(&(n.clone(), *s));
            let (n2, body2) = if captured {
                let mut avoid: BTreeSet<String> =
                    repl_vars.iter().map(|(v, _)| v.clone()).collect();
                avoid.insert(name.to_string());
                for (v, _) in body.free_variables() {
                    avoid.insert(v);
                }
                let fresh = fresh_name(n, &avoid);
                let renamed = substitute(body, n, *s, &Term::Var(fresh.clone(), *s));
                (fresh, renamed)
            } else {
                (n.clone(), (**body).clone())
            };
            let inner = substitute(&body2, name, sort, replacement);
            if is_forall {
                Formula::Forall(n2, *s, Box::new(inner))
            } else {
                Formula::Exists(n2, *s, Box::new(inner))
            }
        }
    }
}

/// Negation normal form. Implications are expanded, negations pushed to the
/// atoms; negated comparisons flip their operator, negated divisibilities
/// remain as `Not(Divides(..))` literals.
pub fn to_nnf(f: &Formula) -> Formula {
    nnf(f, false)
}

fn nnf(f: &Formula, negate: bool) -> Formula {
    match f {
        Formula::True => {
            if negate {
                Formula::False
            } else {
                Formula::True
            }
        }
        Formula::False => {
            if negate {
                Formula::True
            } else {
                Formula::False
            }
        }
        Formula::Cmp(op, a, b) => {
            let op = if negate { op.negate() } else { *op };
            Formula::Cmp(op, a.clone(), b.clone())
        }
        Formula::Divides(..) => {
            if negate {
                Formula::Not(Box::new(f.clone()))
            } else {
                f.clone()
            }
        }
        Formula::Not(a) => nnf(a, !negate),
        Formula::And(a, b) => {
            let fa = nnf(a, negate);
            let fb = nnf(b, negate);
            if negate {
                Formula::Or(Box::new(fa), Box::new(fb))
            } else {
                Formula::And(Box::new(fa), Box::new(fb))
            }
        }
        Formula::Or(a, b) => {
            let fa = nnf(a, negate);
            let fb = nnf(b, negate);
            if negate {
                Formula::And(Box::new(fa), Box::new(fb))
            } else {
                Formula::Or(Box::new(fa), Box::new(fb))
            }
        }
        Formula::Implies(a, b) => {
            // a -> b == not a or b
            let fa = nnf(a, !negate);
            let fb = nnf(b, negate);
            if negate {
                // not (a -> b) == a and not b
                Formula::And(Box::new(fa), Box::new(fb))
            } else {
                Formula::Or(Box::new(fa), Box::new(fb))
            }
        }
        Formula::Exists(n, s, body) => {
            let inner = nnf(body, negate);
            if negate {
                Formula::Forall(n.clone(), *s, Box::new(inner))
            } else {
                Formula::Exists(n.clone(), *s, Box::new(inner))
            }
        }
        Formula::Forall(n, s, body) => {
            let inner = nnf(body, negate);
            if negate {
                Formula::Exists(n.clone(), *s, Box::new(inner))
            } else {
                Formula::Forall(n.clone(), *s, Box::new(inner))
            }
        }
    }
}

/// Disjunctive normal form of a quantifier-free formula already in NNF:
/// a list of conjuncts, each a list of literals. Fails when the expansion
/// exceeds an internal size cap.
pub fn dnf(f: &Formula) -> Result<Vec<Vec<Formula>>> {
    let out = dnf_rec(f)?;
    Ok(out)
}

fn dnf_rec(f: &Formula) -> Result<Vec<Vec<Formula>>> {
    match f {
        Formula::True => Ok(vec![vec![]]),
        Formula::False => Ok(vec![]),
        Formula::Cmp(..) | Formula::Divides(..) | Formula::Not(_) => Ok(vec![vec![f.clone()]]),
        Formula::Or(a, b) => {
            let mut left = dnf_rec(a)?;
            let right = dnf_rec(b)?;
            left.extend(right);
            if left.len() > DNF_CAP {
                return Err(Error::BudgetExceeded {
                    needed: left.len() as u128,
                    budget: DNF_CAP as u128,
                });
            }
            Ok(left)
        }
        Formula::And(a, b) => {
            let left = dnf_rec(a)?;
            let right = dnf_rec(b)?;
            let total = left.len().saturating_mul(right.len());
            if total > DNF_CAP {
                return Err(Error::BudgetExceeded {
                    needed: total as u128,
                    budget: DNF_CAP as u128,
                });
            }
            let mut out = Vec::with_capacity(total);
            for l in &left {
                for r in &right {
                    let mut conj = l.clone();
                    conj.extend(r.iter().cloned());
                    out.push(conj);
                }
            }
            Ok(out)
        }
        Formula::Implies(..) | Formula::Exists(..) | Formula::Forall(..) => Err(
            Error::OutOfFragment(format!("dnf expects quantifier-free NNF input, got {f:?}")),
        ),
    }
}

/// Rebuilds a formula from DNF clauses.
pub fn formula_from_dnf(clauses: &[Vec<Formula>]) -> Formula {
    Formula::disj(
        clauses
            .iter()
            .map(|c| Formula::conj(c.iter().cloned())),
    )
}

/// Orders literals within each clause and the clauses themselves
/// lexicographically by their serialized text, deduplicating both levels,
/// so DNF output is reproducible across runs.
pub fn canonicalize_dnf(clauses: &mut Vec<Vec<Formula>>) {
    for clause in clauses.iter_mut() {
        clause.sort_by_cached_key(crate::parser::serialize_body);
        clause.dedup();
    }
    clauses.sort_by_cached_key(|c| {
        c.iter().map(crate::parser::serialize_body).collect::<Vec<_>>().join(" and ")
    });
    clauses.dedup();
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum GroundVg {
    Fin(i64),
    PInf,
}

fn ground_vg(t: &Term) -> Option<GroundVg> {
    if matches!(t, Term::PlusInf) {
        return Some(GroundVg::PInf);
    }
    if t.is_ground_int() {
        return t.eval_ground_int().ok().map(GroundVg::Fin);
    }
    None
}

fn fold_cmp(op: CmpOp, a: GroundVg, b: GroundVg) -> bool {
    use GroundVg::*;
    match (a, b) {
        (Fin(x), Fin(y)) => match op {
            CmpOp::Eq => x == y,
            CmpOp::Ne => x != y,
            CmpOp::Le => x <= y,
            CmpOp::Lt => x < y,
            CmpOp::Ge => x >= y,
            CmpOp::Gt => x > y,
        },
        (PInf, PInf) => matches!(op, CmpOp::Eq | CmpOp::Le | CmpOp::Ge),
        (Fin(_), PInf) => matches!(op, CmpOp::Ne | CmpOp::Le | CmpOp::Lt),
        (PInf, Fin(_)) => matches!(op, CmpOp::Ne | CmpOp::Ge | CmpOp::Gt),
    }
}

/// Bottom-up simplification: folds ground value-group atoms (including the
/// `+inf` comparison rules), collapses boolean constants, removes vacuous
/// quantifiers. All sort domains are nonempty, so a constant body folds
/// through its quantifier.
pub fn simplify(f: &Formula) -> Formula {
    match f {
        Formula::True | Formula::False => f.clone(),
        Formula::Cmp(op, a, b) => {
            if let (Some(ga), Some(gb)) = (ground_vg(a), ground_vg(b)) {
                if fold_cmp(*op, ga, gb) {
                    Formula::True
                } else {
                    Formula::False
                }
            } else {
                f.clone()
            }
        }
        Formula::Divides(k, t) => {
            if *k == 1 {
                return Formula::True;
            }
            match ground_vg(t) {
                Some(GroundVg::Fin(v)) => {
                    if v.rem_euclid(*k as i64) == 0 {
                        Formula::True
                    } else {
                        Formula::False
                    }
                }
                _ => f.clone(),
            }
        }
        Formula::Not(a) => match simplify(a) {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::Not(inner) => *inner,
            other => Formula::Not(Box::new(other)),
        },
        Formula::And(a, b) => {
            let fa = simplify(a);
            let fb = simplify(b);
            match (&fa, &fb) {
                (Formula::False, _) | (_, Formula::False) => Formula::False,
                (Formula::True, _) => fb,
                (_, Formula::True) => fa,
                _ if fa == fb => fa,
                _ => Formula::And(Box::new(fa), Box::new(fb)),
            }
        }
        Formula::Or(a, b) => {
            let fa = simplify(a);
            let fb = simplify(b);
            match (&fa, &fb) {
                (Formula::True, _) | (_, Formula::True) => Formula::True,
                (Formula::False, _) => fb,
                (_, Formula::False) => fa,
                _ if fa == fb => fa,
                _ => Formula::Or(Box::new(fa), Box::new(fb)),
            }
        }
        Formula::Implies(a, b) => {
            let fa = simplify(a);
            let fb = simplify(b);
            match (&fa, &fb) {
                (Formula::False, _) => Formula::True,
                (_, Formula::True) => Formula::True,
                (Formula::True, _) => fb,
                (_, Formula::False) => simplify(&Formula::Not(Box::new(fa))),
                _ => Formula::Implies(Box::new(fa), Box::new(fb)),
            }
        }
        Formula::Exists(n, s, body) | Formula::Forall(n, s, body) => {
            let inner = simplify(body);
            match inner {
                Formula::True => Formula::True,
                Formula::False => Formula::False,
                _ => {
                    if !inner
                        .free_variables()
                        .contains(&(n.clone(), *s))
                    {
                        return inner;
                    }
                    if matches!(f, Formula::Exists(..)) {
                        Formula::Exists(n.clone(), *s, Box::new(inner))
                    } else {
                        Formula::Forall(n.clone(), *s, Box::new(inner))
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(name: &str) -> Term {
        Term::var(name, Sort::ValueGroup)
    }

    #[test]
    fn nnf_pushes_negation_to_atoms() {
        let f = Formula::not(Formula::and(
            Formula::le(v("x"), Term::int(3)),
            Formula::divides(2, v("x")),
        ));
        let g = to_nnf(&f);
        assert_eq!(
            g,
            Formula::or(
                Formula::gt(v("x"), Term::int(3)),
                Formula::not(Formula::divides(2, v("x"))),
            )
        );
    }

    #[test]
    fn nnf_swaps_quantifiers() {
        let f = Formula::not(Formula::forall(
            "x",
            Sort::ValueGroup,
            Formula::eq(v("x"), Term::int(0)),
        ));
        let g = to_nnf(&f);
        assert_eq!(
            g,
            Formula::exists("x", Sort::ValueGroup, Formula::ne(v("x"), Term::int(0)))
        );
    }

    #[test]
    fn nnf_expands_implication() {
        let f = Formula::implies(
            Formula::lt(v("x"), Term::int(0)),
            Formula::lt(v("y"), Term::int(0)),
        );
        let g = to_nnf(&f);
        assert_eq!(
            g,
            Formula::or(
                Formula::ge(v("x"), Term::int(0)),
                Formula::lt(v("y"), Term::int(0)),
            )
        );
    }

    #[test]
    fn dnf_distributes() {
        // (a or b) and (c or d) -> 4 conjuncts
        let a = Formula::eq(v("x"), Term::int(1));
        let b = Formula::eq(v("x"), Term::int(2));
        let c = Formula::eq(v("y"), Term::int(3));
        let d = Formula::eq(v("y"), Term::int(4));
        let f = Formula::and(a.or(b), c.or(d));
        let clauses = dnf(&f).unwrap();
        assert_eq!(clauses.len(), 4);
        assert!(clauses.iter().all(|c| c.len() == 2));
    }

    #[test]
    fn substitution_avoids_capture() {
        // (exists y. x < y)[x := y + 1] must rename the binder.
        let f = Formula::exists("y", Sort::ValueGroup, Formula::lt(v("x"), v("y")));
        let g = substitute(&f, "x", Sort::ValueGroup, &v("y").add(Term::int(1)));
        match &g {
            Formula::Exists(n, _, body) => {
                assert_ne!(n, "y");
                let expected =
                    Formula::lt(v("y").add(Term::int(1)), Term::var(n.clone(), Sort::ValueGroup));
                assert_eq!(**body, expected);
            }
            other => panic!("expected exists, got {other:?}"),
        }
    }

    #[test]
    fn substitution_respects_shadowing() {
        let f = Formula::exists("x", Sort::ValueGroup, Formula::lt(v("x"), Term::int(0)));
        let g = substitute(&f, "x", Sort::ValueGroup, &Term::int(5));
        assert_eq!(f, g);
    }

    #[test]
    fn simplify_folds_ground_atoms() {
        let f = Formula::and(
            Formula::le(Term::int(2), Term::int(3)),
            Formula::divides(3, Term::int(-6)),
        );
        assert_eq!(simplify(&f), Formula::True);
        let g = Formula::divides(3, Term::int(-5));
        assert_eq!(simplify(&g), Formula::False);
    }

    #[test]
    fn simplify_plus_inf_rules() {
        assert_eq!(
            simplify(&Formula::le(Term::int(7), Term::PlusInf)),
            Formula::True
        );
        assert_eq!(
            simplify(&Formula::eq(Term::int(7), Term::PlusInf)),
            Formula::False
        );
        assert_eq!(
            simplify(&Formula::eq(Term::PlusInf, Term::PlusInf)),
            Formula::True
        );
        assert_eq!(
            simplify(&Formula::gt(Term::PlusInf, Term::int(-3))),
            Formula::True
        );
    }

    #[test]
    fn simplify_drops_vacuous_quantifier() {
        let f = Formula::exists(
            "z",
            Sort::ValueGroup,
            Formula::le(v("x"), Term::int(0)),
        );
        assert_eq!(simplify(&f), Formula::le(v("x"), Term::int(0)));
    }

    #[test]
    fn divides_by_one_is_trivial() {
        assert_eq!(simplify(&Formula::divides(1, v("x"))), Formula::True);
    }
}
