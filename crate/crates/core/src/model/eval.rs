//! Three-valued evaluation of formulas in a concrete model at finite
//! precision.
//!
//! Valuations of truncated elements are only partially known, so a
//! value-group term evaluates to an interval of possible values in
//! Z ∪ {±∞} and a comparison returns `True`/`False` only when the intervals
//! decide it.  Residue terms evaluate to `Option<F_p>` — `None` when an
//! angular component is hidden behind an O-state.  Connectives combine
//! results by Kleene logic, which makes the whole evaluation sound: a
//! determinate answer holds for every refinement of the inputs.
//!
//! Quantifier support is deliberately narrow.  Residue-sort quantifiers
//! enumerate F_p.  Valued-field quantifiers are admitted only when a
//! syntactic guard (`ord(x) ≥ c` or `ord(x) = c` with `c ≥ 0`) confines the
//! variable to O; they then enumerate the classes of O/π^N at the working
//! precision, which is exact for formulas stable at that level.  Value-group
//! quantifiers are rejected — eliminate them first.
//!
//! Formulas are compiled once into a slot-resolved form, so the per-point
//! cost inside counting loops is a plain tree walk with `Copy` data.

use std::collections::BTreeMap;

use super::element::OrdBound;
use super::{ModelTag, TriBool, TruncatedElement, MAX_DIGITS};
use crate::ast::{CmpOp, Formula, Sort, Term};
use crate::error::Error;
use crate::Result;

/// Runtime binding for one variable slot.
#[derive(Debug, Clone, Copy)]
pub enum Value {
    Field(TruncatedElement),
    Residue(u64),
    Group(i64),
}

/// Z ∪ {±∞}; the derive order gives NegInf < Fin(_) < PosInf.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Ext {
    NegInf,
    Fin(i128),
    PosInf,
}

impl Ext {
    fn add(self, rhs: Ext) -> Option<Ext> {
        match (self, rhs) {
            (Ext::PosInf, Ext::NegInf) | (Ext::NegInf, Ext::PosInf) => None,
            (Ext::PosInf, _) | (_, Ext::PosInf) => Some(Ext::PosInf),
            (Ext::NegInf, _) | (_, Ext::NegInf) => Some(Ext::NegInf),
            (Ext::Fin(a), Ext::Fin(b)) => a.checked_add(b).map(Ext::Fin),
        }
    }

    fn neg(self) -> Ext {
        match self {
            Ext::NegInf => Ext::PosInf,
            Ext::PosInf => Ext::NegInf,
            Ext::Fin(a) => Ext::Fin(-a),
        }
    }

    fn scale(self, c: i128) -> Option<Ext> {
        if c == 0 {
            return Some(Ext::Fin(0));
        }
        let flipped = if c < 0 { self.neg() } else { self };
        match flipped {
            Ext::Fin(a) => a.checked_mul(c.abs()).map(Ext::Fin),
            inf => Some(inf),
        }
    }
}

/// Interval of possible values of a value-group term.
#[derive(Debug, Clone, Copy)]
struct Iv {
    lo: Ext,
    hi: Ext,
}

impl Iv {
    fn exact(v: i128) -> Iv {
        Iv { lo: Ext::Fin(v), hi: Ext::Fin(v) }
    }

    fn singleton(self) -> Option<Ext> {
        (self.lo == self.hi).then_some(self.lo)
    }
}

/// Compiled valued-field term.
enum TermF {
    Slot(usize),
    Const(TruncatedElement),
    Add(Box<TermF>, Box<TermF>),
    Sub(Box<TermF>, Box<TermF>),
    Mul(Box<TermF>, Box<TermF>),
    Neg(Box<TermF>),
}

/// Compiled residue term; values are `Option<u64>` mod p.
enum TermR {
    Slot(usize),
    Const(u64),
    Ac(Box<TermF>),
    Add(Box<TermR>, Box<TermR>),
    Sub(Box<TermR>, Box<TermR>),
    Mul(Box<TermR>, Box<TermR>),
    Neg(Box<TermR>),
}

/// Compiled value-group term; values are intervals.
enum TermG {
    Slot(usize),
    Const(i64),
    PlusInf,
    Ord(Box<TermF>),
    Add(Box<TermG>, Box<TermG>),
    Sub(Box<TermG>, Box<TermG>),
    Scale(i64, Box<TermG>),
}

enum CF {
    Const(bool),
    CmpG(CmpOp, TermG, TermG),
    /// Field equality; `true` flips it to inequality.
    EqF(TermF, TermF, bool),
    EqR(TermR, TermR, bool),
    Divides(u64, TermG),
    Not(Box<CF>),
    And(Box<CF>, Box<CF>),
    Or(Box<CF>, Box<CF>),
    Implies(Box<CF>, Box<CF>),
    ExistsR(Box<CF>),
    ForallR(Box<CF>),
    ExistsF(Box<CF>),
    ForallF(Box<CF>),
}

/// A formula compiled against a fixed signature, model, prime and precision.
pub struct Evaluator {
    model: ModelTag,
    p: u64,
    precision: u8,
    arity: usize,
    root: CF,
}

struct Compiler<'a> {
    model: ModelTag,
    p: u64,
    scopes: Vec<(&'a str, Sort)>,
}

impl<'a> Compiler<'a> {
    fn slot(&self, name: &str, sort: Sort) -> Result<usize> {
        self.scopes
            .iter()
            .rposition(|&(n, s)| n == name && s == sort)
            .ok_or_else(|| Error::UnboundVariable(name.to_string()))
    }

    fn field(&self, t: &'a Term) -> Result<TermF> {
        match t {
            Term::Var(name, Sort::ValuedField) => {
                Ok(TermF::Slot(self.slot(name, Sort::ValuedField)?))
            }
            Term::Rat(r) => Ok(TermF::Const(TruncatedElement::from_rational(
                self.model, self.p, r,
            )?)),
            Term::PiPow(k) => Ok(TermF::Const(TruncatedElement::pi_pow(self.model, self.p, *k)?)),
            Term::Add(a, b) => Ok(TermF::Add(Box::new(self.field(a)?), Box::new(self.field(b)?))),
            Term::Sub(a, b) => Ok(TermF::Sub(Box::new(self.field(a)?), Box::new(self.field(b)?))),
            Term::Mul(a, b) => Ok(TermF::Mul(Box::new(self.field(a)?), Box::new(self.field(b)?))),
            Term::Neg(a) => Ok(TermF::Neg(Box::new(self.field(a)?))),
            other => Err(Error::IllFormedTerm(format!(
                "expected a valued-field term, found `{other:?}`"
            ))),
        }
    }

    fn residue(&self, t: &'a Term) -> Result<TermR> {
        match t {
            Term::Var(name, Sort::ResidueField) => {
                Ok(TermR::Slot(self.slot(name, Sort::ResidueField)?))
            }
            Term::Residue(r) => Ok(TermR::Const(super::fp::rational_mod(r, self.p)?)),
            Term::Int(n) => Ok(TermR::Const(n.rem_euclid(self.p as i64) as u64)),
            Term::Ac(a) => Ok(TermR::Ac(Box::new(self.field(a)?))),
            Term::Add(a, b) => {
                Ok(TermR::Add(Box::new(self.residue(a)?), Box::new(self.residue(b)?)))
            }
            Term::Sub(a, b) => {
                Ok(TermR::Sub(Box::new(self.residue(a)?), Box::new(self.residue(b)?)))
            }
            Term::Mul(a, b) => {
                Ok(TermR::Mul(Box::new(self.residue(a)?), Box::new(self.residue(b)?)))
            }
            Term::Neg(a) => Ok(TermR::Neg(Box::new(self.residue(a)?))),
            other => Err(Error::IllFormedTerm(format!(
                "expected a residue term, found `{other:?}`"
            ))),
        }
    }

    fn group(&self, t: &'a Term) -> Result<TermG> {
        match t {
            Term::Var(name, Sort::ValueGroup) => {
                Ok(TermG::Slot(self.slot(name, Sort::ValueGroup)?))
            }
            Term::Int(n) => Ok(TermG::Const(*n)),
            Term::PlusInf => Ok(TermG::PlusInf),
            Term::Ord(a) => Ok(TermG::Ord(Box::new(self.field(a)?))),
            Term::Add(a, b) => Ok(TermG::Add(Box::new(self.group(a)?), Box::new(self.group(b)?))),
            Term::Sub(a, b) => Ok(TermG::Sub(Box::new(self.group(a)?), Box::new(self.group(b)?))),
            Term::Neg(a) => Ok(TermG::Scale(-1, Box::new(self.group(a)?))),
            Term::Mul(a, b) => {
                if a.is_ground_int() {
                    Ok(TermG::Scale(a.eval_ground_int()?, Box::new(self.group(b)?)))
                } else if b.is_ground_int() {
                    Ok(TermG::Scale(b.eval_ground_int()?, Box::new(self.group(a)?)))
                } else {
                    Err(Error::Nonlinear(format!("value-group product `{t:?}`")))
                }
            }
            other => Err(Error::IllFormedTerm(format!(
                "expected a value-group term, found `{other:?}`"
            ))),
        }
    }

    fn formula(&mut self, f: &'a Formula) -> Result<CF> {
        match f {
            Formula::True => Ok(CF::Const(true)),
            Formula::False => Ok(CF::Const(false)),
            Formula::Cmp(op, a, b) => match a.sort().or_else(|_| b.sort())? {
                Sort::ValueGroup => Ok(CF::CmpG(*op, self.group(a)?, self.group(b)?)),
                Sort::ValuedField => match op {
                    CmpOp::Eq => Ok(CF::EqF(self.field(a)?, self.field(b)?, false)),
                    CmpOp::Ne => Ok(CF::EqF(self.field(a)?, self.field(b)?, true)),
                    _ => Err(Error::OutOfFragment(
                        "order comparison on the valued-field sort".into(),
                    )),
                },
                Sort::ResidueField => match op {
                    CmpOp::Eq => Ok(CF::EqR(self.residue(a)?, self.residue(b)?, false)),
                    CmpOp::Ne => Ok(CF::EqR(self.residue(a)?, self.residue(b)?, true)),
                    _ => Err(Error::OutOfFragment(
                        "order comparison on the residue sort".into(),
                    )),
                },
            },
            Formula::Divides(k, t) => Ok(CF::Divides(*k, self.group(t)?)),
            Formula::Not(g) => Ok(CF::Not(Box::new(self.formula(g)?))),
            Formula::And(a, b) => {
                Ok(CF::And(Box::new(self.formula(a)?), Box::new(self.formula(b)?)))
            }
            Formula::Or(a, b) => {
                Ok(CF::Or(Box::new(self.formula(a)?), Box::new(self.formula(b)?)))
            }
            Formula::Implies(a, b) => {
                Ok(CF::Implies(Box::new(self.formula(a)?), Box::new(self.formula(b)?)))
            }
            Formula::Exists(name, sort, body) | Formula::Forall(name, sort, body) => {
                let universal = matches!(f, Formula::Forall(..));
                match sort {
                    Sort::ValueGroup => Err(Error::OutOfFragment(format!(
                        "value-group quantifier over `{name}`; eliminate quantifiers first"
                    ))),
                    Sort::ResidueField => {
                        self.scopes.push((name, Sort::ResidueField));
                        let inner = self.formula(body);
                        self.scopes.pop();
                        let inner = Box::new(inner?);
                        Ok(if universal { CF::ForallR(inner) } else { CF::ExistsR(inner) })
                    }
                    Sort::ValuedField => {
                        if !has_o_guard(name, body, universal) {
                            return Err(Error::OutOfFragment(format!(
                                "valued-field quantifier over `{name}` without an `ord({name}) >= 0` guard"
                            )));
                        }
                        self.scopes.push((name, Sort::ValuedField));
                        let inner = self.formula(body);
                        self.scopes.pop();
                        let inner = Box::new(inner?);
                        Ok(if universal { CF::ForallF(inner) } else { CF::ExistsF(inner) })
                    }
                }
            }
        }
    }
}

fn conjuncts<'f>(f: &'f Formula, out: &mut Vec<&'f Formula>) {
    if let Formula::And(a, b) = f {
        conjuncts(a, out);
        conjuncts(b, out);
    } else {
        out.push(f);
    }
}

/// Does `g` syntactically confine `name` to the valuation ring?
fn guard_atom(g: &Formula, name: &str) -> bool {
    let is_ord_of = |t: &Term| matches!(t, Term::Ord(inner)
        if matches!(&**inner, Term::Var(n, Sort::ValuedField) if n == name));
    if let Formula::Cmp(op, a, b) = g {
        if is_ord_of(a) && b.is_ground_int() {
            if let Ok(k) = b.eval_ground_int() {
                return match op {
                    CmpOp::Ge | CmpOp::Eq => k >= 0,
                    CmpOp::Gt => k >= -1,
                    _ => false,
                };
            }
        }
        if is_ord_of(b) && a.is_ground_int() {
            if let Ok(k) = a.eval_ground_int() {
                return match op {
                    CmpOp::Le | CmpOp::Eq => k >= 0,
                    CmpOp::Lt => k >= -1,
                    _ => false,
                };
            }
        }
    }
    false
}

/// An existential body must conjoin a guard; a universal body must be an
/// implication whose premise conjoins one.
fn has_o_guard(name: &str, body: &Formula, universal: bool) -> bool {
    let scope: &Formula = if universal {
        match body {
            Formula::Implies(prem, _) => prem,
            _ => return false,
        }
    } else {
        body
    };
    let mut parts = Vec::new();
    conjuncts(scope, &mut parts);
    parts.iter().any(|g| guard_atom(g, name))
}

impl Evaluator {
    pub fn compile(
        f: &Formula,
        signature: &[(String, Sort)],
        model: ModelTag,
        p: u64,
        precision: u8,
    ) -> Result<Evaluator> {
        if precision == 0 || precision as usize > MAX_DIGITS {
            return Err(Error::Precision(format!(
                "precision {precision} (supported: 1..={MAX_DIGITS})"
            )));
        }
        // Constant construction below also validates the prime.
        TruncatedElement::zero(model, p)?;
        f.check()?;
        for (name, sort) in f.free_variables() {
            if !signature.iter().any(|(n, s)| *n == name && *s == sort) {
                return Err(Error::UnboundVariable(name));
            }
        }
        let mut compiler = Compiler {
            model,
            p,
            scopes: signature.iter().map(|(n, s)| (n.as_str(), *s)).collect(),
        };
        let root = compiler.formula(f)?;
        Ok(Evaluator { model, p, precision, arity: signature.len(), root })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn prime(&self) -> u64 {
        self.p
    }

    pub fn model(&self) -> ModelTag {
        self.model
    }

    pub fn precision(&self) -> u8 {
        self.precision
    }

    /// Evaluates with `env` holding exactly one value per signature slot.
    ///
    /// Quantifiers use `env` as scratch above the signature slots; it is
    /// restored to its entry length on return.
    pub fn eval(&self, env: &mut Vec<Value>) -> TriBool {
        debug_assert_eq!(env.len(), self.arity);
        self.cf(&self.root, env)
    }

    fn field_val(&self, t: &TermF, env: &[Value]) -> TruncatedElement {
        match t {
            TermF::Slot(i) => match env[*i] {
                Value::Field(x) => x,
                _ => unreachable!("slot sort checked at compile time"),
            },
            TermF::Const(x) => *x,
            TermF::Add(a, b) => self.field_val(a, env).add(&self.field_val(b, env)),
            TermF::Sub(a, b) => self.field_val(a, env).sub(&self.field_val(b, env)),
            TermF::Mul(a, b) => self.field_val(a, env).mul(&self.field_val(b, env)),
            TermF::Neg(a) => self.field_val(a, env).neg(),
        }
    }

    fn residue_val(&self, t: &TermR, env: &[Value]) -> Option<u64> {
        let p = self.p;
        match t {
            TermR::Slot(i) => match env[*i] {
                Value::Residue(x) => Some(x),
                _ => unreachable!("slot sort checked at compile time"),
            },
            TermR::Const(c) => Some(*c),
            TermR::Ac(a) => self.field_val(a, env).ac(),
            TermR::Add(a, b) => {
                Some((self.residue_val(a, env)? + self.residue_val(b, env)?) % p)
            }
            TermR::Sub(a, b) => {
                let x = self.residue_val(a, env)?;
                let y = self.residue_val(b, env)?;
                Some((x + p - y) % p)
            }
            TermR::Mul(a, b) => Some(
                (self.residue_val(a, env)? as u128 * self.residue_val(b, env)? as u128
                    % p as u128) as u64,
            ),
            TermR::Neg(a) => Some((p - self.residue_val(a, env)?) % p),
        }
    }

    fn group_val(&self, t: &TermG, env: &[Value]) -> Option<Iv> {
        match t {
            TermG::Slot(i) => match env[*i] {
                Value::Group(v) => Some(Iv::exact(v as i128)),
                _ => unreachable!("slot sort checked at compile time"),
            },
            TermG::Const(n) => Some(Iv::exact(*n as i128)),
            TermG::PlusInf => Some(Iv { lo: Ext::PosInf, hi: Ext::PosInf }),
            TermG::Ord(a) => Some(match self.field_val(a, env).ord() {
                OrdBound::Exact(v) => Iv::exact(v as i128),
                OrdBound::AtLeast(v) => Iv { lo: Ext::Fin(v as i128), hi: Ext::PosInf },
                OrdBound::Infinite => Iv { lo: Ext::PosInf, hi: Ext::PosInf },
            }),
            TermG::Add(a, b) => {
                let x = self.group_val(a, env)?;
                let y = self.group_val(b, env)?;
                Some(Iv { lo: x.lo.add(y.lo)?, hi: x.hi.add(y.hi)? })
            }
            TermG::Sub(a, b) => {
                let x = self.group_val(a, env)?;
                let y = self.group_val(b, env)?;
                Some(Iv { lo: x.lo.add(y.hi.neg())?, hi: x.hi.add(y.lo.neg())? })
            }
            TermG::Scale(c, a) => {
                let x = self.group_val(a, env)?;
                let (lo, hi) = if *c < 0 { (x.hi, x.lo) } else { (x.lo, x.hi) };
                Some(Iv { lo: lo.scale(*c as i128)?, hi: hi.scale(*c as i128)? })
            }
        }
    }

    fn cf(&self, f: &CF, env: &mut Vec<Value>) -> TriBool {
        match f {
            CF::Const(b) => TriBool::from_bool(*b),
            CF::CmpG(op, a, b) => {
                let (x, y) = match (self.group_val(a, env), self.group_val(b, env)) {
                    (Some(x), Some(y)) => (x, y),
                    _ => return TriBool::Unknown,
                };
                compare_iv(*op, x, y)
            }
            CF::EqF(a, b, ne) => {
                let d = self.field_val(a, env).sub(&self.field_val(b, env));
                let eq = match d.ord() {
                    OrdBound::Infinite => TriBool::True,
                    OrdBound::Exact(_) => TriBool::False,
                    OrdBound::AtLeast(_) => TriBool::Unknown,
                };
                if *ne {
                    eq.not()
                } else {
                    eq
                }
            }
            CF::EqR(a, b, ne) => {
                let eq = match (self.residue_val(a, env), self.residue_val(b, env)) {
                    (Some(x), Some(y)) => TriBool::from_bool(x == y),
                    _ => TriBool::Unknown,
                };
                if *ne {
                    eq.not()
                } else {
                    eq
                }
            }
            CF::Divides(k, t) => match self.group_val(t, env).and_then(Iv::singleton) {
                Some(Ext::Fin(v)) => TriBool::from_bool(v.rem_euclid(*k as i128) == 0),
                _ => TriBool::Unknown,
            },
            CF::Not(g) => self.cf(g, env).not(),
            CF::And(a, b) => {
                let x = self.cf(a, env);
                if x == TriBool::False {
                    return TriBool::False;
                }
                x.and(self.cf(b, env))
            }
            CF::Or(a, b) => {
                let x = self.cf(a, env);
                if x == TriBool::True {
                    return TriBool::True;
                }
                x.or(self.cf(b, env))
            }
            CF::Implies(a, b) => {
                let x = self.cf(a, env);
                if x == TriBool::False {
                    return TriBool::True;
                }
                x.implies(self.cf(b, env))
            }
            CF::ExistsR(body) => self.quantify_residue(body, env, false),
            CF::ForallR(body) => self.quantify_residue(body, env, true),
            CF::ExistsF(body) => self.quantify_field(body, env, false),
            CF::ForallF(body) => self.quantify_field(body, env, true),
        }
    }

    fn quantify_residue(&self, body: &CF, env: &mut Vec<Value>, universal: bool) -> TriBool {
        let mut acc = TriBool::from_bool(universal);
        for v in 0..self.p {
            env.push(Value::Residue(v));
            let r = self.cf(body, env);
            env.pop();
            acc = if universal { acc.and(r) } else { acc.or(r) };
            if acc.known() == Some(!universal) {
                break;
            }
        }
        acc
    }

    fn quantify_field(&self, body: &CF, env: &mut Vec<Value>, universal: bool) -> TriBool {
        let n = self.precision as usize;
        let mut block = [0u64; MAX_DIGITS];
        let mut acc = TriBool::from_bool(universal);
        loop {
            let x = TruncatedElement::from_digit_block(self.model, self.p, &block[..n])
                .expect("enumerated digits are in range");
            env.push(Value::Field(x));
            let r = self.cf(body, env);
            env.pop();
            acc = if universal { acc.and(r) } else { acc.or(r) };
            if acc.known() == Some(!universal) {
                return acc;
            }
            // Odometer over O/π^N, first digit fastest.
            let mut i = 0;
            loop {
                if i == n {
                    return acc;
                }
                block[i] += 1;
                if block[i] < self.p {
                    break;
                }
                block[i] = 0;
                i += 1;
            }
        }
    }
}

fn compare_iv(op: CmpOp, x: Iv, y: Iv) -> TriBool {
    match op {
        CmpOp::Lt => {
            if x.hi < y.lo {
                TriBool::True
            } else if x.lo >= y.hi {
                TriBool::False
            } else {
                TriBool::Unknown
            }
        }
        CmpOp::Le => {
            if x.hi <= y.lo {
                TriBool::True
            } else if x.lo > y.hi {
                TriBool::False
            } else {
                TriBool::Unknown
            }
        }
        CmpOp::Gt => compare_iv(CmpOp::Lt, y, x),
        CmpOp::Ge => compare_iv(CmpOp::Le, y, x),
        CmpOp::Eq => {
            if x.hi < y.lo || y.hi < x.lo {
                TriBool::False
            } else if let (Some(a), Some(b)) = (x.singleton(), y.singleton()) {
                TriBool::from_bool(a == b)
            } else {
                TriBool::Unknown
            }
        }
        CmpOp::Ne => compare_iv(CmpOp::Eq, x, y).not(),
    }
}

/// One-shot evaluation with named bindings; see [`Evaluator`] for the
/// compiled interface used inside counting loops.
pub fn eval_valued(
    f: &Formula,
    model: ModelTag,
    p: u64,
    precision: u8,
    bindings: &BTreeMap<String, Value>,
) -> Result<TriBool> {
    let mut signature = Vec::new();
    let mut env = Vec::new();
    for (name, sort) in f.free_variables() {
        let value = bindings.get(&name).copied().ok_or_else(|| {
            Error::UnboundVariable(name.clone())
        })?;
        let fits = matches!(
            (sort, value),
            (Sort::ValuedField, Value::Field(_))
                | (Sort::ResidueField, Value::Residue(_))
                | (Sort::ValueGroup, Value::Group(_))
        );
        if !fits {
            return Err(Error::Invalid(format!(
                "binding for `{name}` does not match its {sort} sort"
            )));
        }
        signature.push((name, sort));
        env.push(value);
    }
    let ev = Evaluator::compile(f, &signature, model, p, precision)?;
    Ok(ev.eval(&mut env))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    fn ev(
        text: &str,
        model: ModelTag,
        p: u64,
        precision: u8,
        bindings: &[(&str, Value)],
    ) -> TriBool {
        let f = parse(text).unwrap();
        let map: BTreeMap<String, Value> =
            bindings.iter().map(|(n, v)| (n.to_string(), *v)).collect();
        eval_valued(&f, model, p, precision, &map).unwrap()
    }

    fn unit(model: ModelTag, p: u64, digits: &[u64]) -> Value {
        Value::Field(TruncatedElement::from_digit_block(model, p, digits).unwrap())
    }

    #[test]
    fn uniformizer_valuation() {
        assert_eq!(ev("ord(3) = 1", ModelTag::Padic, 3, 1, &[]), TriBool::True);
        assert_eq!(ev("ord(pi) = 1", ModelTag::Padic, 3, 1, &[]), TriBool::True);
        assert_eq!(ev("ord(pi) = 1", ModelTag::Laurent, 3, 1, &[]), TriBool::True);
        assert_eq!(ev("ord(pi^-2) = -2", ModelTag::Padic, 5, 1, &[]), TriBool::True);
    }

    #[test]
    fn angular_component_ignores_uniformizer_factors() {
        for model in [ModelTag::Padic, ModelTag::Laurent] {
            let x = unit(model, 5, &[3, 1, 4]);
            assert_eq!(
                ev("vf x; ac(pi*x) = ac(x)", model, 5, 3, &[("x", x)]),
                TriBool::True
            );
        }
    }

    #[test]
    fn precision_starvation_returns_unknown() {
        let x = Value::Field(TruncatedElement::big_o(ModelTag::Padic, 3, 5).unwrap());
        assert_eq!(
            ev("vf x; ord(x) >= 10", ModelTag::Padic, 3, 5, &[("x", x)]),
            TriBool::Unknown
        );
        // The same window decides a weaker bound.
        assert_eq!(
            ev("vf x; ord(x) >= 4", ModelTag::Padic, 3, 5, &[("x", x)]),
            TriBool::True
        );
    }

    #[test]
    fn field_equality_is_three_valued() {
        let x = unit(ModelTag::Padic, 3, &[1, 2]);
        assert_eq!(
            ev("vf x; x = x + pi^5", ModelTag::Padic, 3, 2, &[("x", x)]),
            TriBool::Unknown
        );
        assert_eq!(
            ev("vf x; x = x + pi", ModelTag::Padic, 3, 2, &[("x", x)]),
            TriBool::False
        );
        assert_eq!(ev("pi + pi = 2*pi", ModelTag::Padic, 3, 2, &[]), TriBool::Unknown);
        // An exact-zero difference is recognisable: 0 = 0.
        let z = Value::Field(TruncatedElement::zero(ModelTag::Padic, 3).unwrap());
        assert_eq!(ev("vf x; x = x - x", ModelTag::Padic, 3, 2, &[("x", z)]), TriBool::True);
    }

    #[test]
    fn residue_quantifier_detects_squares() {
        let a4 = unit(ModelTag::Padic, 5, &[4]);
        let a2 = unit(ModelTag::Padic, 5, &[2]);
        for (x, want) in [(a4, TriBool::True), (a2, TriBool::False)] {
            assert_eq!(
                ev(
                    "vf x; exists rf xi. xi*xi = ac(x)",
                    ModelTag::Padic,
                    5,
                    1,
                    &[("x", x)]
                ),
                want
            );
        }
    }

    #[test]
    fn guarded_field_quantifiers_enumerate_classes() {
        let x = unit(ModelTag::Padic, 3, &[1, 2]);
        assert_eq!(
            ev(
                "vf x; exists vf y. ord(y) >= 0 and ord(x - y) >= 1",
                ModelTag::Padic,
                3,
                2,
                &[("x", x)]
            ),
            TriBool::True
        );
        assert_eq!(
            ev(
                "vf x; forall vf y. ord(y) >= 0 -> ord(x - y) >= 1",
                ModelTag::Padic,
                3,
                2,
                &[("x", x)]
            ),
            TriBool::False
        );
    }

    #[test]
    fn unguarded_field_quantifier_is_out_of_fragment() {
        let f = parse("exists vf y. ord(y) = -1").unwrap();
        assert!(matches!(
            eval_valued(&f, ModelTag::Padic, 3, 2, &BTreeMap::new()),
            Err(Error::OutOfFragment(_))
        ));
    }

    #[test]
    fn group_quantifier_is_out_of_fragment() {
        let f = parse("exists vg m. m = 0").unwrap();
        assert!(matches!(
            eval_valued(&f, ModelTag::Padic, 3, 2, &BTreeMap::new()),
            Err(Error::OutOfFragment(_))
        ));
    }

    #[test]
    fn divisibility_of_valuations() {
        let x4 = Value::Field(TruncatedElement::pi_pow(ModelTag::Padic, 3, 4).unwrap());
        let x3 = Value::Field(TruncatedElement::pi_pow(ModelTag::Padic, 3, 3).unwrap());
        let o = Value::Field(TruncatedElement::big_o(ModelTag::Padic, 3, 2).unwrap());
        let z = Value::Field(TruncatedElement::zero(ModelTag::Padic, 3).unwrap());
        let t = "vf x; 2 | ord(x)";
        assert_eq!(ev(t, ModelTag::Padic, 3, 4, &[("x", x4)]), TriBool::True);
        assert_eq!(ev(t, ModelTag::Padic, 3, 4, &[("x", x3)]), TriBool::False);
        assert_eq!(ev(t, ModelTag::Padic, 3, 4, &[("x", o)]), TriBool::Unknown);
        assert_eq!(ev(t, ModelTag::Padic, 3, 4, &[("x", z)]), TriBool::Unknown);
    }

    #[test]
    fn plus_infinity_comparisons() {
        let z = Value::Field(TruncatedElement::zero(ModelTag::Padic, 3).unwrap());
        let u = unit(ModelTag::Padic, 3, &[2]);
        assert_eq!(ev("vf x; ord(x) = +inf", ModelTag::Padic, 3, 1, &[("x", z)]), TriBool::True);
        assert_eq!(ev("vf x; ord(x) = +inf", ModelTag::Padic, 3, 1, &[("x", u)]), TriBool::False);
        assert_eq!(ev("vf x; ord(x) < +inf", ModelTag::Padic, 3, 1, &[("x", z)]), TriBool::False);
        assert_eq!(ev("vf x; ord(x) < +inf", ModelTag::Padic, 3, 1, &[("x", u)]), TriBool::True);
    }

    #[test]
    fn cross_model_agreement_on_sampled_classes() {
        // Matching digit inputs must give matching verdicts in both models
        // for integral-fragment formulas with unit-or-zero constants.
        let formulas = [
            "vf x; ord(x) >= 1",
            "vf x; ord(x) = 0",
            "vf x; ord(x*x) = 2*ord(x)",
            "vf x; ac(x) = 2",
            "vf x; exists rf xi. xi*xi = ac(x)",
            "vf x; ord(x + pi) >= 1",
            "vf x; 2 | ord(x*x)",
        ];
        let p = 5u64;
        let blocks = crate::model::sample_elements(ModelTag::Padic, p, 3, 100, 11).unwrap();
        for text in formulas {
            let f = parse(text).unwrap();
            for b in &blocks {
                let digits: Vec<u64> = (0..3).map(|i| b.digit(i).unwrap_or(0)).collect();
                let verdicts: Vec<TriBool> = [ModelTag::Padic, ModelTag::Laurent]
                    .into_iter()
                    .map(|m| {
                        let x = TruncatedElement::from_digit_block(m, p, &digits).unwrap();
                        let mut env = BTreeMap::new();
                        env.insert("x".to_string(), Value::Field(x));
                        eval_valued(&f, m, p, 3, &env).unwrap()
                    })
                    .collect();
                assert_eq!(verdicts[0], verdicts[1], "{text} on digits {digits:?}");
            }
        }
    }

    #[test]
    fn precision_monotonicity_on_truncations() {
        let formulas = ["vf x; ord(x) >= 2", "vf x; ac(x) = 1", "vf x; ord(x+1) = 0"];
        let p = 3u64;
        let xs = crate::model::sample_elements(ModelTag::Padic, p, 4, 60, 99).unwrap();
        for text in formulas {
            let f = parse(text).unwrap();
            for x in &xs {
                let mut coarse_verdicts = Vec::new();
                for keep in 1..=4u8 {
                    let t = x.truncate(keep);
                    let mut env = BTreeMap::new();
                    env.insert("x".to_string(), Value::Field(t));
                    coarse_verdicts.push(eval_valued(&f, ModelTag::Padic, p, 4, &env).unwrap());
                }
                // Once determinate, further digits never flip the verdict.
                let mut decided: Option<TriBool> = None;
                for v in coarse_verdicts {
                    match decided {
                        Some(d) => assert_eq!(v, d, "{text} on {x}"),
                        None if v != TriBool::Unknown => decided = Some(v),
                        None => {}
                    }
                }
            }
        }
    }
}
