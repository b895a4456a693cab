//! Terms and formulas of a three-sorted first-order language for valued fields.
//!
//! The sorts are the valued field `K`, its residue field, and the value group
//! `Z` extended by `+inf`. Two function symbols cross sorts: the valuation
//! `ord : K -> Z ∪ {+inf}` with `ord(0) = +inf`, and the angular component
//! `ac : K -> k`, the first nonzero digit of a `π`-adic expansion, normalised
//! so that `ac(π) = 1` and `ac(0) = 0`. Value-group terms are restricted to
//! Presburger arithmetic: integer-linear combinations of variables and `ord`
//! applications, compared or tested for divisibility by a fixed modulus.
//! `+inf` may only occur as an entire side of a comparison; arithmetic on it
//! is not part of the language.

use std::collections::BTreeSet;

use num_rational::BigRational;

use crate::error::Error;
use crate::Result;

/// The three sorts of the language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sort {
    ValuedField,
    ResidueField,
    ValueGroup,
}

impl Sort {
    /// Keyword used by the concrete syntax.
    pub fn keyword(self) -> &'static str {
        match self {
            Sort::ValuedField => "vf",
            Sort::ResidueField => "rf",
            Sort::ValueGroup => "vg",
        }
    }
}

impl std::fmt::Display for Sort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.keyword())
    }
}

/// Comparison operators shared by all three sorts.
///
/// Order comparisons are meaningful on the value group only; `check`
/// rejects them on field sorts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Eq,
    Ne,
    Le,
    Lt,
    Ge,
    Gt,
}

impl CmpOp {
    /// The operator satisfied exactly when `self` is not.
    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Ge => CmpOp::Lt,
        }
    }

    /// The operator obtained by swapping the two sides.
    pub fn flip(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Eq,
            CmpOp::Ne => CmpOp::Ne,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Ge => CmpOp::Le,
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Lt,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Le => "<=",
            CmpOp::Lt => "<",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        }
    }
}

/// First-order terms.
///
/// A variable carries its sort, so scoping rules never need a symbol table:
/// a binder `(name, sort)` binds exactly the occurrences `Var(name, sort)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(String, Sort),
    /// Value-group integer constant.
    Int(i64),
    /// Top element of the extended value group.
    PlusInf,
    /// Valued-field rational constant.
    Rat(BigRational),
    /// Valued-field constant `π^k` (uniformiser power).
    PiPow(i64),
    /// Residue-field constant, interpreted modulo the prime in play.
    Residue(BigRational),
    Add(Box<Term>, Box<Term>),
    Sub(Box<Term>, Box<Term>),
    Mul(Box<Term>, Box<Term>),
    Neg(Box<Term>),
    /// Valuation of a valued-field term.
    Ord(Box<Term>),
    /// Angular component of a valued-field term.
    Ac(Box<Term>),
}

impl Term {
    pub fn var(name: impl Into<String>, sort: Sort) -> Term {
        Term::Var(name.into(), sort)
    }

    pub fn int(n: i64) -> Term {
        Term::Int(n)
    }

    pub fn rat(r: BigRational) -> Term {
        Term::Rat(r)
    }

    pub fn add(self, rhs: Term) -> Term {
        Term::Add(Box::new(self), Box::new(rhs))
    }

    pub fn sub(self, rhs: Term) -> Term {
        Term::Sub(Box::new(self), Box::new(rhs))
    }

    pub fn mul(self, rhs: Term) -> Term {
        Term::Mul(Box::new(self), Box::new(rhs))
    }

    pub fn neg(self) -> Term {
        Term::Neg(Box::new(self))
    }

    pub fn ord(self) -> Term {
        Term::Ord(Box::new(self))
    }

    pub fn ac(self) -> Term {
        Term::Ac(Box::new(self))
    }

    /// Infers the sort, or fails on ill-sorted structure.
    pub fn sort(&self) -> Result<Sort> {
        match self {
            Term::Var(_, s) => Ok(*s),
            Term::Int(_) | Term::PlusInf => Ok(Sort::ValueGroup),
            Term::Rat(_) | Term::PiPow(_) => Ok(Sort::ValuedField),
            Term::Residue(_) => Ok(Sort::ResidueField),
            Term::Add(a, b) | Term::Sub(a, b) | Term::Mul(a, b) => {
                let sa = a.sort()?;
                let sb = b.sort()?;
                if sa != sb {
                    return Err(Error::SortMismatch {
                        expected: sa,
                        found: sb,
                        context: format!("arithmetic on `{:?}`", self),
                    });
                }
                Ok(sa)
            }
            Term::Neg(a) => a.sort(),
            Term::Ord(a) => {
                expect_sort(a, Sort::ValuedField, "ord")?;
                Ok(Sort::ValueGroup)
            }
            Term::Ac(a) => {
                expect_sort(a, Sort::ValuedField, "ac")?;
                Ok(Sort::ResidueField)
            }
        }
    }

    /// True when the term contains no variables and no `ord`/`ac`.
    pub fn is_ground_int(&self) -> bool {
        match self {
            Term::Int(_) => true,
            Term::Add(a, b) | Term::Sub(a, b) | Term::Mul(a, b) => {
                a.is_ground_int() && b.is_ground_int()
            }
            Term::Neg(a) => a.is_ground_int(),
            _ => false,
        }
    }

    /// Evaluates a ground value-group integer with overflow checking.
    pub fn eval_ground_int(&self) -> Result<i64> {
        let overflow = || Error::Overflow("ground integer evaluation");
        match self {
            Term::Int(n) => Ok(*n),
            Term::Add(a, b) => a
                .eval_ground_int()?
                .checked_add(b.eval_ground_int()?)
                .ok_or_else(overflow),
            Term::Sub(a, b) => a
                .eval_ground_int()?
                .checked_sub(b.eval_ground_int()?)
                .ok_or_else(overflow),
            Term::Mul(a, b) => a
                .eval_ground_int()?
                .checked_mul(b.eval_ground_int()?)
                .ok_or_else(overflow),
            Term::Neg(a) => a.eval_ground_int()?.checked_neg().ok_or_else(overflow),
            _ => Err(Error::IllFormedTerm(format!(
                "non-ground term in integer position: {:?}",
                self
            ))),
        }
    }

    /// True if `PlusInf` occurs anywhere in the term.
    pub fn contains_plus_inf(&self) -> bool {
        match self {
            Term::PlusInf => true,
            Term::Add(a, b) | Term::Sub(a, b) | Term::Mul(a, b) => {
                a.contains_plus_inf() || b.contains_plus_inf()
            }
            Term::Neg(a) => a.contains_plus_inf(),
            Term::Ord(a) | Term::Ac(a) => a.contains_plus_inf(),
            _ => false,
        }
    }

    /// Collects free variables (every variable of a term is free).
    pub fn collect_vars(&self, out: &mut BTreeSet<(String, Sort)>) {
        match self {
            Term::Var(name, sort) => {
                out.insert((name.clone(), *sort));
            }
            Term::Add(a, b) | Term::Sub(a, b) | Term::Mul(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Term::Neg(a) | Term::Ord(a) | Term::Ac(a) => a.collect_vars(out),
            _ => {}
        }
    }

    /// True if the variable `(name, sort)` occurs in the term.
    pub fn mentions(&self, name: &str, sort: Sort) -> bool {
        match self {
            Term::Var(n, s) => n == name && *s == sort,
            Term::Add(a, b) | Term::Sub(a, b) | Term::Mul(a, b) => {
                a.mentions(name, sort) || b.mentions(name, sort)
            }
            Term::Neg(a) | Term::Ord(a) | Term::Ac(a) => a.mentions(name, sort),
            _ => false,
        }
    }
}

fn expect_sort(t: &Term, want: Sort, context: &str) -> Result<()> {
    let got = t.sort()?;
    if got != want {
        return Err(Error::SortMismatch {
            expected: want,
            found: got,
            context: context.to_string(),
        });
    }
    Ok(())
}

/// First-order formulas over the three-sorted language.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    True,
    False,
    Cmp(CmpOp, Term, Term),
    /// `k | t` on the value group, `k >= 1`.
    Divides(u64, Term),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Exists(String, Sort, Box<Formula>),
    Forall(String, Sort, Box<Formula>),
}

impl Formula {
    pub fn cmp(op: CmpOp, lhs: Term, rhs: Term) -> Formula {
        Formula::Cmp(op, lhs, rhs)
    }

    pub fn eq(lhs: Term, rhs: Term) -> Formula {
        Formula::Cmp(CmpOp::Eq, lhs, rhs)
    }

    pub fn ne(lhs: Term, rhs: Term) -> Formula {
        Formula::Cmp(CmpOp::Ne, lhs, rhs)
    }

    pub fn le(lhs: Term, rhs: Term) -> Formula {
        Formula::Cmp(CmpOp::Le, lhs, rhs)
    }

    pub fn lt(lhs: Term, rhs: Term) -> Formula {
        Formula::Cmp(CmpOp::Lt, lhs, rhs)
    }

    pub fn ge(lhs: Term, rhs: Term) -> Formula {
        Formula::Cmp(CmpOp::Ge, lhs, rhs)
    }

    pub fn gt(lhs: Term, rhs: Term) -> Formula {
        Formula::Cmp(CmpOp::Gt, lhs, rhs)
    }

    pub fn divides(k: u64, t: Term) -> Formula {
        Formula::Divides(k, t)
    }

    pub fn not(self) -> Formula {
        Formula::Not(Box::new(self))
    }

    pub fn and(self, rhs: Formula) -> Formula {
        Formula::And(Box::new(self), Box::new(rhs))
    }

    pub fn or(self, rhs: Formula) -> Formula {
        Formula::Or(Box::new(self), Box::new(rhs))
    }

    pub fn implies(self, rhs: Formula) -> Formula {
        Formula::Implies(Box::new(self), Box::new(rhs))
    }

    pub fn exists(name: impl Into<String>, sort: Sort, body: Formula) -> Formula {
        Formula::Exists(name.into(), sort, Box::new(body))
    }

    pub fn forall(name: impl Into<String>, sort: Sort, body: Formula) -> Formula {
        Formula::Forall(name.into(), sort, Box::new(body))
    }

    /// Conjunction of an iterator, `True` when empty.
    pub fn conj(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut it = parts.into_iter();
        match it.next() {
            None => Formula::True,
            Some(first) => it.fold(first, Formula::and),
        }
    }

    /// Disjunction of an iterator, `False` when empty.
    pub fn disj(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut it = parts.into_iter();
        match it.next() {
            None => Formula::False,
            Some(first) => it.fold(first, Formula::or),
        }
    }

    /// Free variables with their sorts, in lexicographic order.
    pub fn free_variables(&self) -> BTreeSet<(String, Sort)> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(
        &self,
        bound: &mut Vec<(String, Sort)>,
        out: &mut BTreeSet<(String, Sort)>,
    ) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Cmp(_, a, b) => {
                let mut vars = BTreeSet::new();
                a.collect_vars(&mut vars);
                b.collect_vars(&mut vars);
                for v in vars {
                    if !bound.contains(&v) {
                        out.insert(v);
                    }
                }
            }
            Formula::Divides(_, t) => {
                let mut vars = BTreeSet::new();
                t.collect_vars(&mut vars);
                for v in vars {
                    if !bound.contains(&v) {
                        out.insert(v);
                    }
                }
            }
            Formula::Not(a) => a.collect_free(bound, out),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Formula::Exists(name, sort, body) | Formula::Forall(name, sort, body) => {
                bound.push((name.clone(), *sort));
                body.collect_free(bound, out);
                bound.pop();
            }
        }
    }

    /// True if the formula contains any quantifier.
    pub fn has_quantifier(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Cmp(..) | Formula::Divides(..) => false,
            Formula::Not(a) => a.has_quantifier(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.has_quantifier() || b.has_quantifier()
            }
            Formula::Exists(..) | Formula::Forall(..) => true,
        }
    }

    /// Number of AST nodes; used for budget accounting and tests.
    pub fn size(&self) -> usize {
        match self {
            Formula::True | Formula::False | Formula::Cmp(..) | Formula::Divides(..) => 1,
            Formula::Not(a) => 1 + a.size(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                1 + a.size() + b.size()
            }
            Formula::Exists(_, _, body) | Formula::Forall(_, _, body) => 1 + body.size(),
        }
    }

    /// Validates sorts, value-group linearity and `+inf` placement.
    pub fn check(&self) -> Result<()> {
        match self {
            Formula::True | Formula::False => Ok(()),
            Formula::Cmp(op, a, b) => {
                let sa = a.sort()?;
                let sb = b.sort()?;
                if sa != sb {
                    return Err(Error::SortMismatch {
                        expected: sa,
                        found: sb,
                        context: format!("comparison `{:?}`", self),
                    });
                }
                if sa != Sort::ValueGroup
                    && matches!(op, CmpOp::Le | CmpOp::Lt | CmpOp::Ge | CmpOp::Gt)
                {
                    return Err(Error::OutOfFragment(format!(
                        "order comparison on sort {sa}: {self:?}"
                    )));
                }
                if sa == Sort::ValueGroup {
                    check_vg_side(a)?;
                    check_vg_side(b)?;
                } else if a.contains_plus_inf() || b.contains_plus_inf() {
                    return Err(Error::IllFormedTerm(
                        "+inf inside a field-sorted term".to_string(),
                    ));
                }
                Ok(())
            }
            Formula::Divides(k, t) => {
                if *k == 0 {
                    return Err(Error::BadModulus(0));
                }
                expect_sort(t, Sort::ValueGroup, "divisibility")?;
                if t.contains_plus_inf() {
                    return Err(Error::IllFormedTerm(
                        "+inf inside a divisibility test".to_string(),
                    ));
                }
                check_vg_linear(t)
            }
            Formula::Not(a) => a.check(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.check()?;
                b.check()
            }
            Formula::Exists(_, _, body) | Formula::Forall(_, _, body) => body.check(),
        }
    }
}

/// One side of a value-group comparison: either exactly `+inf`, or a
/// linear term free of `+inf`.
fn check_vg_side(t: &Term) -> Result<()> {
    if matches!(t, Term::PlusInf) {
        return Ok(());
    }
    if t.contains_plus_inf() {
        return Err(Error::IllFormedTerm(format!(
            "+inf may only stand alone on one side of a comparison: {:?}",
            t
        )));
    }
    check_vg_linear(t)
}

/// Linearity over the value group: sums of integer multiples of variables
/// and `ord` applications. A product needs one ground-integer factor.
fn check_vg_linear(t: &Term) -> Result<()> {
    match t {
        Term::Var(_, Sort::ValueGroup) | Term::Int(_) => Ok(()),
        Term::Ord(inner) => {
            expect_sort(inner, Sort::ValuedField, "ord")?;
            Ok(())
        }
        Term::Add(a, b) | Term::Sub(a, b) => {
            check_vg_linear(a)?;
            check_vg_linear(b)
        }
        Term::Neg(a) => check_vg_linear(a),
        Term::Mul(a, b) => {
            if a.is_ground_int() {
                check_vg_linear(b)
            } else if b.is_ground_int() {
                check_vg_linear(a)
            } else {
                Err(Error::Nonlinear(format!("{:?}", t)))
            }
        }
        other => Err(Error::IllFormedTerm(format!(
            "not a value-group linear term: {:?}",
            other
        ))),
    }
}
