//! Stability levels and volumes of definable subsets of `O^d`.
//!
//! The additive Haar measure on `O^d`, normalized to total mass 1, assigns
//! each residue class mod `π^{n+1}` the mass `q^{−(n+1)d}`.  For a set whose
//! membership is determined by finitely many initial digits, the volume is
//! therefore `N(n)·q^{−(n+1)d}` where `N(n)` counts satisfying classes at
//! truncation level `n` — the same rational for every sufficiently large
//! `n`.  This module finds the least sufficient truncation (the *stability
//! level*: the least `s` such that membership depends only on coordinates
//! mod `π^s`), counts exactly under a class budget, falls back to Monte
//! Carlo sampling beyond it, and multiplies volumes across declared
//! independent coordinate blocks after spot-checking the declaration.
//!
//! Counting relies on the three-valued evaluator: a class evaluates `True`
//! exactly when every element of the class satisfies the formula, so a
//! count over decided classes is exact.  An `Unknown` class is reported as
//! a precision failure rather than guessed.

use num_bigint::BigInt;
use num_rational::BigRational;
use rayon::prelude::*;

use crate::ast::{Formula, Sort};
use crate::error::Error;
use crate::model::{Evaluator, ModelTag, TriBool, TruncatedElement, Value, MAX_DIGITS};
use crate::Result;

/// Residue-class budget for exact counting.
pub const DEFAULT_EXACT_BUDGET: u128 = 100_000_000;

/// Default sample count for the Monte Carlo fallback.
pub const DEFAULT_MC_SAMPLES: u64 = 100_000;

/// Sampled checks performed before trusting a declared factorization.
pub const FACTORIZATION_CHECKS: usize = 100;

/// Caveat attached to stability reports: certification is per prime at
/// finite precision, not over all residue fields at once.
pub const STABILITY_PROVENANCE: &str =
    "stability certified per prime at finite digit precision";

const COUNT_CHUNK: u64 = 1 << 16;

/// A definable subset of `O^d`, cut out by a formula whose free variables
/// are exactly the valued-field coordinates listed in the signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DefinableSet {
    formula: Formula,
    signature: Vec<String>,
}

impl DefinableSet {
    /// Checks that the free variables of `formula` are precisely the
    /// valued-field variables named by `signature`, in any order.
    pub fn new(formula: Formula, signature: Vec<String>) -> Result<Self> {
        formula.check()?;
        if signature.is_empty() {
            return Err(Error::invalid("a definable set needs at least one coordinate"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in &signature {
            if !seen.insert(name.clone()) {
                return Err(Error::invalid(format!("duplicate coordinate `{name}`")));
            }
        }
        for (name, sort) in formula.free_variables() {
            match sort {
                Sort::ValuedField if seen.contains(&name) => {}
                Sort::ValuedField => {
                    return Err(Error::invalid(format!(
                        "free valued-field variable `{name}` missing from the signature"
                    )))
                }
                other => {
                    return Err(Error::invalid(format!(
                        "free {other} variable `{name}`: a definable set may not have \
                         non-coordinate parameters"
                    )))
                }
            }
        }
        Ok(DefinableSet { formula, signature })
    }

    /// Parses the body as a formula over the named coordinates.
    pub fn parse(text: &str, signature: &[&str]) -> Result<Self> {
        let formula = crate::parser::parse(text)?;
        DefinableSet::new(formula, signature.iter().map(|s| s.to_string()).collect())
    }

    pub fn formula(&self) -> &Formula {
        &self.formula
    }

    pub fn signature(&self) -> &[String] {
        &self.signature
    }

    /// Ambient dimension `d`.
    pub fn dimension(&self) -> usize {
        self.signature.len()
    }

    /// Intersection with another set over the same coordinates.
    pub fn intersect(&self, other: &DefinableSet) -> Result<DefinableSet> {
        if self.signature != other.signature {
            return Err(Error::invalid("intersection needs identical signatures"));
        }
        DefinableSet::new(
            self.formula.clone().and(other.formula.clone()),
            self.signature.clone(),
        )
    }

    fn typed_signature(&self) -> Vec<(String, Sort)> {
        self.signature.iter().map(|n| (n.clone(), Sort::ValuedField)).collect()
    }
}

/// How a volume value was obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    ExactCount,
    MonteCarlo { samples: u64, stderr: f64 },
}

/// A volume, exact or estimated, together with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeResult {
    pub value: BigRational,
    pub level: u32,
    pub prime: u64,
    pub model: ModelTag,
    pub method: Method,
}

/// Builds the truncated element representing the residue class
/// `Σ digits[i]·π^i + O(π^len)`; the empty prefix is all of `O`.
fn class_element(model: ModelTag, p: u64, digits: &[u64]) -> Result<TruncatedElement> {
    if digits.is_empty() {
        TruncatedElement::big_o(model, p, 0)
    } else {
        TruncatedElement::from_digit_block(model, p, digits)
    }
}

fn checked_class_count(p: u64, digits_per_coord: u32, d: usize) -> Result<u128> {
    let mut total: u128 = 1;
    for _ in 0..(digits_per_coord as usize * d) {
        total = total
            .checked_mul(p as u128)
            .ok_or(Error::Overflow("residue-class count"))?;
    }
    Ok(total)
}

/// Mixed-radix decode of a class index into per-coordinate digit rows.
fn decode_index(mut idx: u64, p: u64, digits: &mut [u64]) {
    for slot in digits.iter_mut() {
        *slot = idx % p;
        idx /= p;
    }
}

/// Walks indices `[start, end)` at `digits_per_coord` digits per coordinate
/// and folds the evaluator verdicts; returns the satisfying count or the
/// first undetermined class.
fn count_range(
    ev: &Evaluator,
    set: &DefinableSet,
    model: ModelTag,
    p: u64,
    digits_per_coord: u32,
    start: u64,
    end: u64,
) -> Result<u64> {
    let d = set.dimension();
    let width = digits_per_coord as usize;
    let mut digits = vec![0u64; width * d];
    decode_index(start, p, &mut digits);
    let mut env: Vec<Value> = Vec::with_capacity(d);
    for c in 0..d {
        env.push(Value::Field(class_element(model, p, &digits[c * width..(c + 1) * width])?));
    }
    let mut count = 0u64;
    let mut idx = start;
    loop {
        match ev.eval(&mut env) {
            TriBool::True => count += 1,
            TriBool::False => {}
            TriBool::Unknown => {
                let coords: Vec<String> = (0..d)
                    .map(|c| match &env[c] {
                        Value::Field(x) => x.to_string(),
                        _ => unreachable!("field signature"),
                    })
                    .collect();
                return Err(Error::Precision(format!(
                    "membership of class ({}) undetermined at {} digit(s); raise the level \
                     above the stability level",
                    coords.join(", "),
                    digits_per_coord
                )));
            }
        }
        idx += 1;
        if idx == end {
            return Ok(count);
        }
        // Odometer step; only coordinates whose digits moved are rebuilt.
        let mut pos = 0;
        loop {
            digits[pos] += 1;
            if digits[pos] < p {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
        for c in 0..=(pos / width) {
            env[c] = Value::Field(class_element(model, p, &digits[c * width..(c + 1) * width])?);
        }
    }
}

fn compile_for(set: &DefinableSet, model: ModelTag, p: u64, precision: u8) -> Result<Evaluator> {
    Evaluator::compile(&set.formula, &set.typed_signature(), model, p, precision)
}

/// Exact volume at truncation level `n`: satisfying classes mod `π^{n+1}`
/// scaled by `q^{−(n+1)d}`, under the default class budget.
pub fn volume_exact(
    set: &DefinableSet,
    model: ModelTag,
    p: u64,
    level: u32,
) -> Result<VolumeResult> {
    volume_exact_with_budget(set, model, p, level, DEFAULT_EXACT_BUDGET)
}

/// [`volume_exact`] with an explicit class budget.  Exceeding the budget is
/// an error; callers should drop to [`volume_monte_carlo`] or factor the
/// set into independent blocks via [`volume_factored`].
pub fn volume_exact_with_budget(
    set: &DefinableSet,
    model: ModelTag,
    p: u64,
    level: u32,
    budget: u128,
) -> Result<VolumeResult> {
    let width = level + 1;
    if width as usize > MAX_DIGITS {
        return Err(Error::Precision(format!(
            "level {level} needs {width} digits per coordinate (capacity {MAX_DIGITS})"
        )));
    }
    let d = set.dimension();
    let total = checked_class_count(p, width, d)?;
    if total > budget {
        return Err(Error::BudgetExceeded { needed: total, budget });
    }
    let ev = compile_for(set, model, p, width as u8)?;
    let total = total as u64;
    let chunks = total.div_ceil(COUNT_CHUNK);
    let count: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * COUNT_CHUNK;
            let end = (start + COUNT_CHUNK).min(total);
            count_range(&ev, set, model, p, width, start, end)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    let denom = BigInt::from(p).pow(width * d as u32);
    Ok(VolumeResult {
        value: BigRational::new(BigInt::from(count), denom),
        level,
        prime: p,
        model,
        method: Method::ExactCount,
    })
}

/// Unbiased volume estimate from uniform sampling of residue classes at
/// level `n`, with the binomial standard error.
pub fn volume_monte_carlo(
    set: &DefinableSet,
    model: ModelTag,
    p: u64,
    level: u32,
    samples: u64,
    seed: u64,
) -> Result<VolumeResult> {
    use rand::Rng;
    use rand::SeedableRng;

    let width = (level + 1) as usize;
    if width > MAX_DIGITS {
        return Err(Error::Precision(format!(
            "level {level} needs {width} digits per coordinate (capacity {MAX_DIGITS})"
        )));
    }
    if samples == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    let d = set.dimension();
    let ev = compile_for(set, model, p, width as u8)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut digits = vec![0u64; width];
    let mut env: Vec<Value> = vec![Value::Field(TruncatedElement::big_o(model, p, 0)?); d];
    let mut hits = 0u64;
    for _ in 0..samples {
        for c in 0..d {
            for slot in digits.iter_mut() {
                *slot = rng.gen_range(0..p);
            }
            env[c] = Value::Field(class_element(model, p, &digits)?);
        }
        match ev.eval(&mut env) {
            TriBool::True => hits += 1,
            TriBool::False => {}
            TriBool::Unknown => {
                return Err(Error::Precision(format!(
                    "sampled class undetermined at {width} digit(s); raise the level"
                )))
            }
        }
    }
    let phat = hits as f64 / samples as f64;
    let stderr = (phat * (1.0 - phat) / samples as f64).sqrt();
    Ok(VolumeResult {
        value: BigRational::new(BigInt::from(hits), BigInt::from(samples)),
        level,
        prime: p,
        model,
        method: Method::MonteCarlo { samples, stderr },
    })
}

/// Scans every class at `digits` digits per coordinate; `Ok(None)` when all
/// decided, else the first undetermined class's digit rows.
fn first_unknown_class(
    set: &DefinableSet,
    model: ModelTag,
    p: u64,
    digits_per_coord: u32,
    budget: u128,
) -> Result<Option<Vec<Vec<u64>>>> {
    let d = set.dimension();
    let width = digits_per_coord as usize;
    let total = checked_class_count(p, digits_per_coord, d)?;
    if total > budget {
        return Err(Error::BudgetExceeded { needed: total, budget });
    }
    // Quantifier enumeration depth can stay at the scan width except at
    // width 0, where one digit is still needed for inner quantifiers.
    let ev = compile_for(set, model, p, (width as u8).max(1))?;
    let mut digits = vec![0u64; width * d];
    let mut env: Vec<Value> = Vec::with_capacity(d);
    for c in 0..d {
        env.push(Value::Field(class_element(model, p, &digits[c * width..(c + 1) * width])?));
    }
    for idx in 0..total {
        if ev.eval(&mut env) == TriBool::Unknown {
            return Ok(Some(
                (0..d).map(|c| digits[c * width..(c + 1) * width].to_vec()).collect(),
            ));
        }
        if idx + 1 == total {
            break;
        }
        let mut pos = 0;
        loop {
            digits[pos] += 1;
            if digits[pos] < p {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
        for c in 0..=(pos / width) {
            env[c] = Value::Field(class_element(model, p, &digits[c * width..(c + 1) * width])?);
        }
    }
    Ok(None)
}

/// Least level `s ≤ max_level` at which every residue class mod `π^s` is
/// decided, under the default budget.
pub fn stability_level(
    set: &DefinableSet,
    model: ModelTag,
    p: u64,
    max_level: u32,
) -> Result<u32> {
    stability_level_with_budget(set, model, p, max_level, DEFAULT_EXACT_BUDGET)
}

/// [`stability_level`] with an explicit scan budget.
///
/// Searches by doubling then binary search; a decided verdict at level `s`
/// persists at `s+1` (extra digits only narrow the evaluator's intervals),
/// so decidedness is monotone and the search finds the least certified
/// level.  When even `max_level` digits leave some class undetermined, the
/// undetermined classes are refined digit by digit looking for two
/// extensions with opposite decided verdicts — a witness pair proving no
/// stability level exists up to `max_level`.
pub fn stability_level_with_budget(
    set: &DefinableSet,
    model: ModelTag,
    p: u64,
    max_level: u32,
    budget: u128,
) -> Result<u32> {
    if max_level as usize > MAX_DIGITS {
        return Err(Error::Precision(format!(
            "max level {max_level} exceeds digit capacity {MAX_DIGITS}"
        )));
    }
    let certified = |n: u32| -> Result<bool> {
        Ok(first_unknown_class(set, model, p, n, budget)?.is_none())
    };
    if certified(0)? {
        return Ok(0);
    }
    // Doubling phase: first certified level, capped at max_level.
    let mut lo = 0u32; // highest level known uncertified
    let mut hi = 1u32;
    loop {
        if certified(hi)? {
            break;
        }
        lo = hi;
        if hi == max_level {
            return instability_report(set, model, p, max_level, budget);
        }
        hi = (hi * 2).min(max_level);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if certified(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Digs below `max_level` for a same-class witness pair with opposite
/// decided verdicts.
fn instability_report(
    set: &DefinableSet,
    model: ModelTag,
    p: u64,
    max_level: u32,
    budget: u128,
) -> Result<u32> {
    let d = set.dimension();
    let prefix = first_unknown_class(set, model, p, max_level, budget)?
        .expect("caller observed an undetermined class at max_level");
    let mut found_true: Option<(Vec<TruncatedElement>, u32)> = None;
    let mut found_false: Option<(Vec<TruncatedElement>, u32)> = None;
    for refined in (max_level + 1)..=(MAX_DIGITS as u32) {
        let ev = compile_for(set, model, p, refined as u8)?;
        let extra = (refined - max_level) as usize;
        let tail_count = checked_class_count(p, (refined - max_level) * d as u32, 1)?;
        let mut tail = vec![0u64; extra * d];
        for idx in 0..tail_count {
            decode_index(idx as u64, p, &mut tail);
            let mut env: Vec<Value> = Vec::with_capacity(d);
            let mut elems = Vec::with_capacity(d);
            for c in 0..d {
                let mut block = prefix[c].clone();
                block.extend_from_slice(&tail[c * extra..(c + 1) * extra]);
                let e = class_element(model, p, &block)?;
                elems.push(e);
                env.push(Value::Field(e));
            }
            match ev.eval(&mut env) {
                TriBool::True if found_true.is_none() => {
                    found_true = Some((elems, refined));
                }
                TriBool::False if found_false.is_none() => {
                    found_false = Some((elems, refined));
                }
                _ => {}
            }
            if let (Some((a, ra)), Some((b, rb))) = (&found_true, &found_false) {
                let show = |xs: &[TruncatedElement]| {
                    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
                };
                return Err(Error::NotStable {
                    max_level,
                    witness_a: format!("({})", show(a)),
                    witness_b: format!("({})", show(b)),
                    refined_level: (*ra).max(*rb),
                });
            }
        }
    }
    Err(Error::Precision(format!(
        "no stability level up to {max_level} and no witness pair within \
         {MAX_DIGITS} digits; the set may need more precision"
    )))
}

/// Volume via a declared factorization into independent coordinate blocks.
///
/// The blocks must partition the signature.  Before multiplying block
/// volumes, the declaration is spot-checked on [`FACTORIZATION_CHECKS`]
/// uniformly sampled points: membership in the whole set must match the
/// conjunction of block memberships.
pub fn volume_factored(
    whole: &DefinableSet,
    blocks: &[DefinableSet],
    model: ModelTag,
    p: u64,
    level: u32,
    seed: u64,
) -> Result<VolumeResult> {
    use rand::Rng;
    use rand::SeedableRng;

    let mut names: Vec<&String> = Vec::new();
    for b in blocks {
        names.extend(b.signature());
    }
    let mut sorted: Vec<&String> = names.clone();
    sorted.sort();
    sorted.dedup();
    let mut whole_names: Vec<&String> = whole.signature().iter().collect();
    whole_names.sort();
    if sorted.len() != names.len() || sorted != whole_names {
        return Err(Error::invalid(
            "blocks must partition the coordinates of the whole set",
        ));
    }

    let width = (level + 1) as usize;
    if width > MAX_DIGITS {
        return Err(Error::Precision(format!(
            "level {level} needs {width} digits per coordinate (capacity {MAX_DIGITS})"
        )));
    }
    let whole_ev = compile_for(whole, model, p, width as u8)?;
    let block_evs: Vec<Evaluator> = blocks
        .iter()
        .map(|b| compile_for(b, model, p, width as u8))
        .collect::<Result<_>>()?;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut digits = vec![0u64; width];
    for check in 0..FACTORIZATION_CHECKS {
        let mut by_name = std::collections::BTreeMap::new();
        for name in whole.signature() {
            for slot in digits.iter_mut() {
                *slot = rng.gen_range(0..p);
            }
            by_name.insert(name.clone(), class_element(model, p, &digits)?);
        }
        let mut env: Vec<Value> =
            whole.signature().iter().map(|n| Value::Field(by_name[n])).collect();
        let whole_verdict = whole_ev.eval(&mut env);
        let mut conj = TriBool::True;
        for (b, ev) in blocks.iter().zip(&block_evs) {
            let mut benv: Vec<Value> =
                b.signature().iter().map(|n| Value::Field(by_name[n])).collect();
            conj = conj.and(ev.eval(&mut benv));
        }
        if whole_verdict == TriBool::Unknown || conj == TriBool::Unknown {
            return Err(Error::Precision(format!(
                "factorization check {check}: membership undetermined at level {level}"
            )));
        }
        if whole_verdict != conj {
            return Err(Error::invalid(format!(
                "declared factorization fails at sampled point (check {check}): \
                 whole set says {whole_verdict:?}, blocks say {conj:?}"
            )));
        }
    }

    let mut value = BigRational::from_integer(1.into());
    for b in blocks {
        value *= volume_exact(b, model, p, level)?.value;
    }
    Ok(VolumeResult { value, level, prime: p, model, method: Method::ExactCount })
}

/// Membership verdict of a single point (given as one truncated element per
/// coordinate, in signature order).
pub fn eval_membership(
    set: &DefinableSet,
    point: &[TruncatedElement],
    precision: u8,
) -> Result<TriBool> {
    if point.len() != set.dimension() {
        return Err(Error::invalid(format!(
            "point has {} coordinates, set has {}",
            point.len(),
            set.dimension()
        )));
    }
    let mut bindings = std::collections::BTreeMap::new();
    for (name, &x) in set.signature().iter().zip(point) {
        bindings.insert(name.clone(), Value::Field(x));
    }
    let first = point.first().expect("nonempty signature");
    crate::model::eval_valued(&set.formula, first.model(), first.prime(), precision, &bindings)
}
