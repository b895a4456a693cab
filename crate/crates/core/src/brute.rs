//! Independent reference routes computed by plain enumeration.
//!
//! Everything here recomputes a result of the main pipeline by a different
//! method, trading speed and generality for transparency:
//!
//! * [`presburger_truth`] decides value-group formulas by looping candidate
//!   witnesses over an explicit finite window, giving a second opinion on the
//!   symbolic elimination of [`crate::presburger`];
//! * [`random_sentence`] produces the randomized corpus for that comparison,
//!   with every quantifier range-guarded so that window semantics and integer
//!   semantics coincide;
//! * [`orbital_bruteforce`] integrates an orbital sum directly, enumerating
//!   explicit coset representatives together with residue classes of the
//!   conjugating and orbit variables, and counting conjugates that land in
//!   the support.  None of the index/volume shortcuts of [`crate::orbital`]
//!   are used: the double integral is a literal sum.
//!
//! The direct route realises the measure on the group as follows.  A coset
//! `K·diag(π^s, 1)·K` splits into left cosets `g_i·K` with the `g_i` listed
//! by [`crate::group::coset_representatives`], and each `g_i·K` carries the
//! pushforward of the additive Haar measure of `K ⊂ gl(2, O)` under
//! `k ↦ g_i k`.  Left translation by a determinant-one-unit matrix preserves
//! additive Haar, so the result is independent of the chosen representatives,
//! and right translation shows it is the right Haar measure on the group
//! with `vol(K)` matching the additive normalisation.  The orbital sum is
//! then `vol(K) · Σ_s Σ_i ∫_E ∫_K χ_D((g_i k)⁻¹ X (g_i k)) dk dX`, and both
//! inner integrals are counts of residue classes at a fixed digit width.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::ast::{CmpOp, Formula, Sort, Term};
use crate::error::Error;
use crate::group::{coset_representatives, mat_mul_elements};
use crate::measure::DEFAULT_EXACT_BUDGET;
use crate::model::{Evaluator, ModelTag, OrdBound, TriBool, TruncatedElement, Value, MAX_DIGITS};
use crate::orbital::OrbitalProblem;
use crate::Result;

/// Quantifier guards emitted by [`random_sentence`] stay inside this range,
/// so any window containing it gives exact integer semantics.
pub const GUARD_RANGE: (i64, i64) = (-6, 6);

/// Evaluates a pure value-group term over an integer environment.
fn int_term(t: &Term, env: &BTreeMap<String, i64>) -> Result<i128> {
    match t {
        Term::Var(name, Sort::ValueGroup) => env
            .get(name)
            .map(|&v| i128::from(v))
            .ok_or_else(|| Error::UnboundVariable(name.clone())),
        Term::Int(n) => Ok(i128::from(*n)),
        Term::Add(a, b) => Ok(int_term(a, env)? + int_term(b, env)?),
        Term::Sub(a, b) => Ok(int_term(a, env)? - int_term(b, env)?),
        Term::Mul(a, b) => Ok(int_term(a, env)? * int_term(b, env)?),
        Term::Neg(a) => Ok(-int_term(a, env)?),
        other => Err(Error::invalid(format!(
            "window truth handles plain value-group arithmetic only, got `{other:?}`"
        ))),
    }
}

fn rebind(env: &mut BTreeMap<String, i64>, name: &str, saved: Option<i64>) {
    match saved {
        Some(v) => env.insert(name.to_string(), v),
        None => env.remove(name),
    };
}

/// Decides a value-group formula by exhaustive search of `window` at every
/// quantifier.
///
/// The verdict equals truth over all of `Z` exactly when each quantifier is
/// guarded into `window` (existentials conjoin the guard, universals assume
/// it): outside values then neither witness an existential nor break a
/// universal.  [`random_sentence`] produces only such formulas.
pub fn presburger_truth(
    f: &Formula,
    window: (i64, i64),
    env: &mut BTreeMap<String, i64>,
) -> Result<bool> {
    if window.0 > window.1 {
        return Err(Error::invalid("window truth needs a nonempty window"));
    }
    match f {
        Formula::True => Ok(true),
        Formula::False => Ok(false),
        Formula::Cmp(op, a, b) => {
            let x = int_term(a, env)?;
            let y = int_term(b, env)?;
            Ok(match op {
                CmpOp::Eq => x == y,
                CmpOp::Ne => x != y,
                CmpOp::Le => x <= y,
                CmpOp::Lt => x < y,
                CmpOp::Ge => x >= y,
                CmpOp::Gt => x > y,
            })
        }
        Formula::Divides(k, t) => {
            if *k == 0 {
                return Err(Error::BadModulus(0));
            }
            Ok(int_term(t, env)?.rem_euclid(*k as i128) == 0)
        }
        Formula::Not(a) => Ok(!presburger_truth(a, window, env)?),
        Formula::And(a, b) => {
            Ok(presburger_truth(a, window, env)? && presburger_truth(b, window, env)?)
        }
        Formula::Or(a, b) => {
            Ok(presburger_truth(a, window, env)? || presburger_truth(b, window, env)?)
        }
        Formula::Implies(a, b) => {
            Ok(!presburger_truth(a, window, env)? || presburger_truth(b, window, env)?)
        }
        Formula::Exists(name, Sort::ValueGroup, body) => {
            let saved = env.get(name).copied();
            let mut verdict = false;
            for v in window.0..=window.1 {
                env.insert(name.clone(), v);
                if presburger_truth(body, window, env)? {
                    verdict = true;
                    break;
                }
            }
            rebind(env, name, saved);
            Ok(verdict)
        }
        Formula::Forall(name, Sort::ValueGroup, body) => {
            let saved = env.get(name).copied();
            let mut verdict = true;
            for v in window.0..=window.1 {
                env.insert(name.clone(), v);
                if !presburger_truth(body, window, env)? {
                    verdict = false;
                    break;
                }
            }
            rebind(env, name, saved);
            Ok(verdict)
        }
        Formula::Exists(_, sort, _) | Formula::Forall(_, sort, _) => Err(Error::invalid(format!(
            "window truth quantifies over the value group only, got a {sort} quantifier"
        ))),
    }
}

fn linear_term(rng: &mut ChaCha8Rng, scope: &[String]) -> Term {
    let mut t = Term::int(rng.gen_range(-4..=4));
    if scope.is_empty() {
        return t;
    }
    for _ in 0..rng.gen_range(0..=2usize) {
        let var = scope[rng.gen_range(0..scope.len())].clone();
        let c = *[-3, -2, -1, 1, 2, 3].get(rng.gen_range(0..6)).unwrap();
        t = t.add(Term::int(c).mul(Term::var(var, Sort::ValueGroup)));
    }
    t
}

fn random_atom(rng: &mut ChaCha8Rng, scope: &[String]) -> Formula {
    if rng.gen_bool(0.25) {
        Formula::divides(rng.gen_range(2..=4u64), linear_term(rng, scope))
    } else {
        let ops = [CmpOp::Eq, CmpOp::Ne, CmpOp::Le, CmpOp::Lt, CmpOp::Ge, CmpOp::Gt];
        let op = ops[rng.gen_range(0..ops.len())];
        Formula::cmp(op, linear_term(rng, scope), linear_term(rng, scope))
    }
}

fn random_node(
    rng: &mut ChaCha8Rng,
    depth: u32,
    scope: &mut Vec<String>,
    fresh: &mut usize,
) -> Formula {
    if depth == 0 {
        return random_atom(rng, scope);
    }
    match rng.gen_range(0..8u32) {
        0 | 1 => {
            random_node(rng, depth - 1, scope, fresh).and(random_node(rng, depth - 1, scope, fresh))
        }
        2 | 3 => {
            random_node(rng, depth - 1, scope, fresh).or(random_node(rng, depth - 1, scope, fresh))
        }
        4 => random_node(rng, depth - 1, scope, fresh).not(),
        5 => random_node(rng, depth - 1, scope, fresh)
            .implies(random_node(rng, depth - 1, scope, fresh)),
        _ => random_quantifier(rng, depth, scope, fresh),
    }
}

fn random_quantifier(
    rng: &mut ChaCha8Rng,
    depth: u32,
    scope: &mut Vec<String>,
    fresh: &mut usize,
) -> Formula {
    let name = format!("w{fresh}");
    *fresh += 1;
    let lo = rng.gen_range(GUARD_RANGE.0..=2);
    let hi = lo + rng.gen_range(0..=4);
    let guard = Formula::ge(Term::var(name.clone(), Sort::ValueGroup), Term::int(lo))
        .and(Formula::le(Term::var(name.clone(), Sort::ValueGroup), Term::int(hi)));
    scope.push(name.clone());
    let body = random_node(rng, depth - 1, scope, fresh);
    scope.pop();
    if rng.gen_bool(0.5) {
        Formula::exists(name, Sort::ValueGroup, guard.and(body))
    } else {
        Formula::forall(name, Sort::ValueGroup, guard.implies(body))
    }
}

/// Deterministically generates a value-group sentence over the given free
/// variables, rooted in a quantifier whose guard (like every nested guard)
/// lies inside [`GUARD_RANGE`].
pub fn random_sentence(seed: u64, free: &[&str]) -> Formula {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scope: Vec<String> = free.iter().map(|s| s.to_string()).collect();
    let mut fresh = 0usize;
    random_quantifier(&mut rng, 3, &mut scope, &mut fresh)
}

fn adjugate2(m: &[Vec<TruncatedElement>]) -> Vec<Vec<TruncatedElement>> {
    vec![vec![m[1][1], m[0][1].neg()], vec![m[1][0].neg(), m[0][0]]]
}

fn det2(m: &[Vec<TruncatedElement>]) -> TruncatedElement {
    m[0][0].mul(&m[1][1]).sub(&m[0][1].mul(&m[1][0]))
}

fn scale2(m: &[Vec<TruncatedElement>], c: &TruncatedElement) -> Vec<Vec<TruncatedElement>> {
    m.iter().map(|row| row.iter().map(|e| e.mul(c)).collect()).collect()
}

/// Decodes one residue class of `gl(2, O)` mod `π^width`, row major, with
/// the first matrix entry in the lowest digits of `idx`.
fn digit_matrix(
    model: ModelTag,
    p: u64,
    width: u32,
    mut idx: u128,
) -> Result<Vec<Vec<TruncatedElement>>> {
    let mut entries = Vec::with_capacity(4);
    for _ in 0..4 {
        let mut block = Vec::with_capacity(width as usize);
        for _ in 0..width {
            block.push((idx % u128::from(p)) as u64);
            idx /= u128::from(p);
        }
        entries.push(TruncatedElement::from_digit_block(model, p, &block)?);
    }
    Ok(vec![vec![entries[0], entries[1]], vec![entries[2], entries[3]]])
}

fn field_env(m: &[Vec<TruncatedElement>]) -> Vec<Value> {
    vec![
        Value::Field(m[0][0]),
        Value::Field(m[0][1]),
        Value::Field(m[1][0]),
        Value::Field(m[1][1]),
    ]
}

/// [`orbital_bruteforce_with_budget`] with the default budget.
pub fn orbital_bruteforce(
    problem: &OrbitalProblem,
    p: u64,
    width: u32,
    max_s: i64,
) -> Result<BigRational> {
    orbital_bruteforce_with_budget(problem, p, width, max_s, DEFAULT_EXACT_BUDGET)
}

/// Computes the orbital sum at `p` by direct enumeration: coset
/// representatives `g` up to `diag(π^max_s, 1)`, all residue classes mod
/// `π^width` of the conjugator `k ∈ K` and of the orbit variable `X`, and a
/// membership test of `(gk)⁻¹ X (gk)` in the support.
///
/// The value is exact when `width` resolves every decision; an undecided
/// membership is reported as a precision error, never guessed.  Cosets
/// beyond the true support contribute zero, so any `max_s` at or above the
/// support cutoff returns the full sum.
pub fn orbital_bruteforce_with_budget(
    problem: &OrbitalProblem,
    p: u64,
    width: u32,
    max_s: i64,
    budget: u128,
) -> Result<BigRational> {
    if width == 0 || width as usize > MAX_DIGITS {
        return Err(Error::Precision(format!("width {width} (supported 1..={MAX_DIGITS})")));
    }
    if max_s < 0 {
        return Err(Error::invalid("coset cutoff must be nonnegative"));
    }
    let model = problem.model();

    // Representatives g of K·diag(π^s, 1)·K / K with exact inverses: the
    // representatives are integral with det = π^s, so g⁻¹ = π^{-s}·adj(g).
    let mut reps = Vec::new();
    for s in 0..=max_s {
        for g in coset_representatives(&[s, 0], model, p)? {
            let shift = TruncatedElement::pi_pow(model, p, -s)?;
            let g_inv = scale2(&adjugate2(&g), &shift);
            reps.push((g, g_inv));
        }
    }

    let class_count = u128::from(p).pow(4 * width);
    let cost = class_count
        .checked_mul(class_count)
        .and_then(|pairs| pairs.checked_mul(reps.len() as u128))
        .ok_or(Error::Overflow("brute-force cost estimate"))?;
    if cost > budget {
        return Err(Error::BudgetExceeded { needed: cost, budget });
    }

    let sig = |set: &crate::measure::DefinableSet| -> Vec<(String, Sort)> {
        set.signature().iter().map(|n| (n.clone(), Sort::ValuedField)).collect()
    };
    let precision = width as u8;
    let ev_orbit =
        Evaluator::compile(problem.orbit_locus().formula(), &sig(problem.orbit_locus()), model, p, precision)?;
    let ev_support =
        Evaluator::compile(problem.support().formula(), &sig(problem.support()), model, p, precision)?;

    // Classes of the orbit variable that lie in the orbit locus.  A digit
    // block carries exactly `width` known digits, so an Unknown verdict means
    // the width genuinely does not resolve the locus.
    let mut orbit_classes = Vec::new();
    for idx in 0..class_count {
        let x = digit_matrix(model, p, width, idx)?;
        match ev_orbit.eval(&mut field_env(&x)) {
            TriBool::True => orbit_classes.push(x),
            TriBool::False => {}
            TriBool::Unknown => {
                return Err(Error::Precision(format!("orbit locus undecided at width {width}")))
            }
        }
    }

    // Classes of the conjugator, kept when the determinant is a unit.  The
    // determinant of a width-w block is known to w digits, so ord = 0 is
    // always decided: an all-zero window means ord ≥ width > 0.
    let mut unit_classes = Vec::new();
    for idx in 0..class_count {
        let k = digit_matrix(model, p, width, idx)?;
        let det = det2(&k);
        if det.ord() != OrdBound::Exact(0) {
            continue;
        }
        let k_inv = scale2(&adjugate2(&k), &det.inv()?);
        unit_classes.push((k, k_inv));
    }

    let counted: u128 = orbit_classes
        .par_iter()
        .map(|x| -> Result<u128> {
            let mut hits = 0u128;
            for (g, g_inv) in &reps {
                let middle = mat_mul_elements(&mat_mul_elements(g_inv, x), g);
                for (k, k_inv) in &unit_classes {
                    let z = mat_mul_elements(&mat_mul_elements(k_inv, &middle), k);
                    match ev_support.eval(&mut field_env(&z)) {
                        TriBool::True => hits += 1,
                        TriBool::False => {}
                        TriBool::Unknown => {
                            return Err(Error::Precision(format!(
                                "support membership of a conjugate undecided at width {width}"
                            )))
                        }
                    }
                }
            }
            Ok(hits)
        })
        .sum::<Result<u128>>()?;

    // Each (X, k) class pair has additive measure p^{-8 width}; the group
    // normalisation contributes the volume of K.
    let class_pair = BigRational::new(BigInt::from(1), BigInt::from(p).pow(8 * width));
    let vol_k = problem.context().normalization().eval_at(p)?;
    Ok(vol_k * BigRational::from(BigInt::from(counted)) * class_pair)
}
