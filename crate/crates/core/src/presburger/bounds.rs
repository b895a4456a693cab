//! Boundedness decision and solution enumeration for quantifier-free
//! Presburger formulas.
//!
//! One-variable truth is eventually periodic: beyond the largest comparison
//! breakpoint every comparison literal holds a constant value, so the
//! formula's truth repeats with period `L`, the lcm of its divisibility
//! moduli. The solution set is unbounded above iff the window
//! `(maxBreak, maxBreak + L]` contains a solution, and symmetrically below.
//! A multivariate set is bounded iff each coordinate projection — computed
//! by quantifier elimination — is bounded, and the per-variable extrema
//! assemble into a tight enclosing box.

use std::collections::BTreeMap;

use num_integer::Integer;

use crate::ast::{Formula, Sort};
use crate::error::Error;
use crate::presburger::cooper::{eliminate_quantifiers, literals_of, Lit};
use crate::presburger::eval_quantifier_free;
use crate::transform::simplify;
use crate::Result;

/// Cap on single-variable scan work (window width plus periodic margins).
const SCAN_CAP: i128 = 10_000_000;

/// Cap on the number of points `enumerate` may visit.
const ENUM_CAP: u128 = 100_000_000;

/// Outcome of a boundedness decision.
///
/// When `bounded`, `intervals` holds one `(lo, hi)` pair per requested
/// variable, in order; `lo > hi` encodes the empty set. When unbounded,
/// `unbounded_var` names a direction of escape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundWitness {
    pub bounded: bool,
    pub unbounded_var: Option<String>,
    pub intervals: Option<Vec<(i64, i64)>>,
}

fn ensure_quantifier_free(f: &Formula) -> Result<()> {
    if f.has_quantifier() {
        return Err(Error::Invalid(
            "boundedness analysis expects a quantifier-free formula; run quantifier \
             elimination first"
                .to_string(),
        ));
    }
    Ok(())
}

fn ensure_vars_cover(f: &Formula, vars: &[String]) -> Result<()> {
    for (name, sort) in f.free_variables() {
        if sort != Sort::ValueGroup {
            return Err(Error::OutOfFragment(format!(
                "free variable `{name}` has sort {sort}; only value-group variables are allowed"
            )));
        }
        if !vars.contains(&name) {
            return Err(Error::Invalid(format!(
                "free variable `{name}` missing from the variable list"
            )));
        }
    }
    Ok(())
}

/// Existentially closes `f` over every variable in `vars` except `keep`.
fn project_onto(f: &Formula, vars: &[String], keep: Option<&str>) -> Result<Formula> {
    let mut g = f.clone();
    for v in vars {
        if Some(v.as_str()) != keep {
            g = Formula::Exists(v.clone(), Sort::ValueGroup, Box::new(g));
        }
    }
    eliminate_quantifiers(&g)
}

struct OneVarShape {
    min_break: i128,
    max_break: i128,
    period: i128,
}

fn one_var_shape(psi: &Formula, v: &str) -> Result<OneVarShape> {
    let mut lits = Vec::new();
    literals_of(psi, &mut lits)?;
    let mut breaks: Vec<i128> = Vec::new();
    let mut period: i128 = 1;
    for lit in &lits {
        let a = lit.lin().coeff(v);
        match lit {
            Lit::Dvd(k, _) | Lit::NotDvd(k, _) => {
                if a != 0 {
                    let k = i128::try_from(*k)
                        .map_err(|_| Error::Overflow("divisibility modulus"))?;
                    period = period.checked_mul(k / period.gcd(&k)).ok_or(Error::Overflow(
                        "period lcm in boundedness analysis",
                    ))?;
                }
            }
            _ => {
                if a != 0 {
                    let c = lit.lin().constant();
                    breaks.push(Integer::div_floor(&-c, &a));
                    breaks.push(Integer::div_ceil(&-c, &a));
                }
            }
        }
    }
    let min_break = breaks.iter().min().copied().unwrap_or(0);
    let max_break = breaks.iter().max().copied().unwrap_or(0);
    let width = max_break - min_break + 2 * period + 2;
    if width > SCAN_CAP || period > SCAN_CAP {
        return Err(Error::BudgetExceeded { needed: width as u128, budget: SCAN_CAP as u128 });
    }
    Ok(OneVarShape { min_break, max_break, period })
}

fn truth_at(psi: &Formula, v: &str, x: i128) -> Result<bool> {
    let x = i64::try_from(x).map_err(|_| Error::Overflow("scan point"))?;
    let mut env = BTreeMap::new();
    env.insert(v.to_string(), x);
    eval_quantifier_free(psi, &env)
}

enum OneVar {
    UnboundedAbove,
    UnboundedBelow,
    Range(Option<(i64, i64)>),
}

fn analyze_one_var(psi: &Formula, v: &str) -> Result<OneVar> {
    let shape = one_var_shape(psi, v)?;
    for j in 1..=shape.period {
        if truth_at(psi, v, shape.max_break + j)? {
            return Ok(OneVar::UnboundedAbove);
        }
    }
    for j in 1..=shape.period {
        if truth_at(psi, v, shape.min_break - j)? {
            return Ok(OneVar::UnboundedBelow);
        }
    }
    let mut lo = None;
    let mut hi = None;
    let mut x = shape.min_break;
    while x <= shape.max_break {
        if truth_at(psi, v, x)? {
            lo = Some(x);
            break;
        }
        x += 1;
    }
    let mut x = shape.max_break;
    while x >= shape.min_break {
        if truth_at(psi, v, x)? {
            hi = Some(x);
            break;
        }
        x -= 1;
    }
    match (lo, hi) {
        (Some(a), Some(b)) => Ok(OneVar::Range(Some((
            i64::try_from(a).map_err(|_| Error::Overflow("interval endpoint"))?,
            i64::try_from(b).map_err(|_| Error::Overflow("interval endpoint"))?,
        )))),
        _ => Ok(OneVar::Range(None)),
    }
}

/// Decides whether the solution set of `f` in `Z^vars` is finite; when it
/// is, returns a tight enclosing box (per-variable minimum and maximum of
/// the solution set's projections).
pub fn decide_bounded(f: &Formula, vars: &[String]) -> Result<BoundWitness> {
    ensure_quantifier_free(f)?;
    ensure_vars_cover(f, vars)?;

    let closed = project_onto(f, vars, None)?;
    match simplify(&closed) {
        Formula::False => {
            return Ok(BoundWitness {
                bounded: true,
                unbounded_var: None,
                intervals: Some(vec![(0, -1); vars.len()]),
            });
        }
        Formula::True => {}
        other => {
            return Err(Error::Invalid(format!(
                "full projection did not reach a constant: {other:?}"
            )));
        }
    }

    let mut intervals = Vec::with_capacity(vars.len());
    for v in vars {
        let psi = project_onto(f, vars, Some(v))?;
        match analyze_one_var(&psi, v)? {
            OneVar::UnboundedAbove | OneVar::UnboundedBelow => {
                return Ok(BoundWitness {
                    bounded: false,
                    unbounded_var: Some(v.clone()),
                    intervals: None,
                });
            }
            OneVar::Range(Some(r)) => intervals.push(r),
            // A nonempty set has nonempty projections; an empty projection
            // here means the satisfiability check above was contradicted.
            OneVar::Range(None) => {
                return Err(Error::Invalid(format!(
                    "projection onto `{v}` is empty for a satisfiable formula"
                )));
            }
        }
    }
    Ok(BoundWitness { bounded: true, unbounded_var: None, intervals: Some(intervals) })
}

/// Lists every solution inside the box, in lexicographic order of the
/// variable list.
pub fn enumerate(
    f: &Formula,
    vars: &[String],
    intervals: &[(i64, i64)],
) -> Result<Vec<Vec<i64>>> {
    ensure_quantifier_free(f)?;
    ensure_vars_cover(f, vars)?;
    if vars.len() != intervals.len() {
        return Err(Error::Invalid(format!(
            "{} variables but {} intervals",
            vars.len(),
            intervals.len()
        )));
    }
    let mut total: u128 = 1;
    for (lo, hi) in intervals {
        let w = if hi < lo { 0 } else { (*hi as i128 - *lo as i128 + 1) as u128 };
        total = total.checked_mul(w).ok_or(Error::Overflow("enumeration volume"))?;
        if total > ENUM_CAP {
            return Err(Error::BudgetExceeded { needed: total, budget: ENUM_CAP });
        }
    }
    if total == 0 {
        return Ok(Vec::new());
    }

    let mut out = Vec::new();
    let mut point: Vec<i64> = intervals.iter().map(|(lo, _)| *lo).collect();
    let mut env: BTreeMap<String, i64> = BTreeMap::new();
    'outer: loop {
        for (v, x) in vars.iter().zip(&point) {
            env.insert(v.clone(), *x);
        }
        if eval_quantifier_free(f, &env)? {
            out.push(point.clone());
        }
        // Odometer increment, last coordinate fastest: lexicographic output.
        let mut i = point.len();
        loop {
            if i == 0 {
                break 'outer;
            }
            i -= 1;
            if point[i] < intervals[i].1 {
                point[i] += 1;
                for j in i + 1..point.len() {
                    point[j] = intervals[j].0;
                }
                break;
            }
        }
    }
    Ok(out)
}
