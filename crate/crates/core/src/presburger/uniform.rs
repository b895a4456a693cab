//! Uniform solution bounds across residue characteristics.
//!
//! For a formula θ whose free variables are all value-group variables, the
//! model-specific solution set {m : θ(m)} varies with the residue field only
//! through the residue-sort guards of its sort-separated disjuncts.  Each
//! disjunct contributes its Presburger solutions whenever its guard holds,
//! so the union over guard-plausible disjuncts of the (finite) per-disjunct
//! solution sets is one finite set C containing every model's solutions —
//! provided each contributing Presburger part is in fact bounded.
//!
//! Guards are closed residue-field sentences; we classify them by exhaustive
//! evaluation over F_p for a sample of primes.  A guard false at every
//! sampled prime drops its disjunct; anything else keeps it.  An unbounded
//! Presburger part whose guard survives sampling is reported as an error
//! carrying a witness prime: under that model the solution set itself is
//! infinite, so no finite C exists.

use std::collections::BTreeSet;

use crate::ast::{Formula, Sort};
use crate::error::Error;
use crate::model::eval_residue;
use crate::presburger::{decide_bounded, eliminate_quantifiers, enumerate};
use crate::separation::{separate, ExclusionLedger, SortSeparatedForm};
use crate::transform::simplify;
use crate::Result;

/// Default prime sample for residue-guard classification.
pub const DEFAULT_SAMPLE_PRIMES: [u64; 5] = [3, 5, 7, 11, 13];

/// Recorded only from constant normalization and guard sampling; a full
/// quantifier elimination over the valued field could exclude more primes.
pub const EXCLUSION_PROVENANCE: &str =
    "excluded primes come from constant-unit normalization and residue sampling only";

/// How a sampled residue guard behaved across the prime sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuardVerdict {
    /// Held at every sampled prime.
    True,
    /// Failed at every sampled prime.
    False,
    /// Held at some sampled primes and failed at others.
    Mixed,
}

impl std::fmt::Display for GuardVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GuardVerdict::True => "true",
            GuardVerdict::False => "false",
            GuardVerdict::Mixed => "mixed",
        })
    }
}

/// Per-disjunct outcome of the bound computation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DisjunctFate {
    /// Guard survived sampling and the value-group part is bounded;
    /// `solutions` tuples joined the covering set.
    Counted { guard: GuardVerdict, solutions: usize },
    /// Guard failed at every sampled prime; the disjunct contributes
    /// nothing in any sampled model.
    GuardFalse,
}

/// A finite covering set for the solutions of θ, uniform in the prime.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UniformBound {
    /// Value-group variables, in the tuple order used by `tuples`.
    pub vars: Vec<String>,
    /// The covering set C, lexicographically sorted and deduplicated.
    pub tuples: Vec<Vec<i64>>,
    /// Primes at which the underlying separation is not valid.
    pub ledger: ExclusionLedger,
    /// Outcome per disjunct of the separated form, in disjunct order.
    pub fates: Vec<DisjunctFate>,
    /// The separated form the analysis ran on.
    pub form: SortSeparatedForm,
    /// Primes the guards were sampled at (exclusions already removed).
    pub sampled_primes: Vec<u64>,
    /// Caveat on how `ledger` was produced.
    pub provenance: &'static str,
}

fn classify_guard(psi: &Formula, primes: &[u64]) -> Result<(GuardVerdict, Option<u64>)> {
    if *psi == Formula::True {
        return Ok((GuardVerdict::True, primes.first().copied()));
    }
    let mut held_at = None;
    let mut failed = false;
    for &p in primes {
        if eval_residue(psi, p)? {
            held_at.get_or_insert(p);
        } else {
            failed = true;
        }
    }
    let verdict = match (held_at, failed) {
        (Some(_), false) => GuardVerdict::True,
        (Some(_), true) => GuardVerdict::Mixed,
        (None, _) => GuardVerdict::False,
    };
    Ok((verdict, held_at))
}

/// Computes a finite set containing the solutions of `theta` in every
/// admissible model away from the returned ledger, sampling residue guards
/// over [`DEFAULT_SAMPLE_PRIMES`].
pub fn uniform_bound(theta: &Formula) -> Result<UniformBound> {
    uniform_bound_sampled(theta, &DEFAULT_SAMPLE_PRIMES)
}

/// [`uniform_bound`] with an explicit guard-sampling prime list.
pub fn uniform_bound_sampled(theta: &Formula, sample: &[u64]) -> Result<UniformBound> {
    let mut vars = Vec::new();
    for (name, sort) in theta.free_variables() {
        match sort {
            Sort::ValueGroup => vars.push(name),
            other => {
                return Err(Error::OutOfFragment(format!(
                    "free {other} variable `{name}`; a uniform bound needs \
                     value-group free variables only"
                )))
            }
        }
    }

    let (form, ledger) = separate(theta)?;
    let sampled: Vec<u64> = sample.iter().copied().filter(|&p| !ledger.contains(p)).collect();
    if sampled.is_empty() && form.disjuncts.iter().any(|(psi, _)| *psi != Formula::True) {
        return Err(Error::invalid(
            "every sampling prime is excluded by the separation ledger; \
             supply a larger prime sample",
        ));
    }

    let mut solutions: BTreeSet<Vec<i64>> = BTreeSet::new();
    let mut fates = Vec::with_capacity(form.disjuncts.len());
    for (psi, l) in &form.disjuncts {
        let (verdict, held_at) = classify_guard(psi, &sampled)?;
        if verdict == GuardVerdict::False {
            fates.push(DisjunctFate::GuardFalse);
            continue;
        }
        let qf = simplify(&eliminate_quantifiers(l)?);
        let witness = decide_bounded(&qf, &vars)?;
        if !witness.bounded {
            return Err(Error::UnboundedUnderModel {
                // A guard that survived sampling held somewhere; with no
                // sampling primes at all the guard was literally `true`.
                prime: held_at.unwrap_or(DEFAULT_SAMPLE_PRIMES[0]),
                disjunct: crate::parser::serialize_body(l),
            });
        }
        let intervals = witness.intervals.expect("bounded witness carries intervals");
        let tuples = enumerate(&qf, &vars, &intervals)?;
        fates.push(DisjunctFate::Counted { guard: verdict, solutions: tuples.len() });
        solutions.extend(tuples);
    }

    Ok(UniformBound {
        vars,
        tuples: solutions.into_iter().collect(),
        ledger,
        fates,
        form,
        sampled_primes: sampled,
        provenance: EXCLUSION_PROVENANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{eval_valued, ModelTag, TriBool, Value};
    use crate::parser::parse;

    fn bound(text: &str) -> UniformBound {
        uniform_bound(&parse(text).unwrap()).unwrap()
    }

    #[test]
    fn union_of_bounded_pieces() {
        let b = bound("vg m; (0 <= m and m <= 2) or m = 0");
        assert_eq!(b.tuples, vec![vec![0], vec![1], vec![2]]);
        assert!(b.ledger.is_empty());
    }

    #[test]
    fn mixed_guard_keeps_its_disjunct() {
        // -1 is a square mod 5 and 13 but not mod 3, 7, 11.
        let b = bound(
            "vg m; (0 <= m and m <= 2 and (exists rf xi. xi*xi = -(1))) or m = 1",
        );
        assert_eq!(b.tuples, vec![vec![0], vec![1], vec![2]]);
        assert!(b
            .fates
            .iter()
            .any(|f| matches!(f, DisjunctFate::Counted { guard: GuardVerdict::Mixed, .. })));
    }

    #[test]
    fn false_guard_drops_an_unbounded_disjunct() {
        // ξ² = ξ fails at ξ = 2 for every sampled prime, so the unbounded
        // piece m >= 0 never fires.
        let b = bound(
            "vg m; (m >= 0 and (forall rf xi. xi*xi = xi)) or (0 <= m and m <= 1)",
        );
        assert_eq!(b.tuples, vec![vec![0], vec![1]]);
        assert!(b.fates.contains(&DisjunctFate::GuardFalse));
    }

    #[test]
    fn unbounded_disjunct_with_live_guard_is_an_error() {
        let err = uniform_bound(&parse("vg m; m >= 0 and (exists rf xi. xi*xi = -(1))").unwrap())
            .unwrap_err();
        match err {
            Error::UnboundedUnderModel { prime, .. } => assert_eq!(prime, 5),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn quantified_value_group_parts_are_eliminated_first() {
        let b = bound("vg m; exists vg x. (x = m and 0 <= x and x <= 3)");
        assert_eq!(b.tuples, vec![vec![0], vec![1], vec![2], vec![3]]);
    }

    #[test]
    fn per_prime_solutions_are_covered() {
        let texts = [
            "vg m; (0 <= m and m <= 2 and (exists rf xi. xi*xi = -(1))) or m = 1",
            "vg m; (0 <= m and m <= 2) or m = 0",
            "vg m; (ord(2) = m) or (3 <= m and m <= 4)",
        ];
        for text in texts {
            let theta = parse(text).unwrap();
            let b = uniform_bound(&theta).unwrap();
            for p in DEFAULT_SAMPLE_PRIMES {
                if b.ledger.contains(p) {
                    continue;
                }
                for m in -10i64..=10 {
                    let mut env = std::collections::BTreeMap::new();
                    env.insert("m".to_string(), Value::Group(m));
                    let holds = eval_valued(&theta, ModelTag::Padic, p, 8, &env).unwrap();
                    assert_ne!(holds, TriBool::Unknown, "{text}");
                    if holds == TriBool::True {
                        assert!(
                            b.tuples.contains(&vec![m]),
                            "{text}: solution m={m} at p={p} escapes C={:?}",
                            b.tuples
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn residue_free_variables_are_rejected() {
        assert!(matches!(
            uniform_bound(&parse("rf xi; vg m; xi = 0 and m = 0").unwrap()),
            Err(Error::OutOfFragment(_))
        ));
    }

    #[test]
    fn two_variable_simplex_bound() {
        let b = bound("vg m1, m2; m1 >= 0 and m2 >= 0 and m1 + m2 <= 2");
        assert_eq!(b.vars, vec!["m1", "m2"]);
        assert_eq!(
            b.tuples,
            vec![
                vec![0, 0],
                vec![0, 1],
                vec![0, 2],
                vec![1, 0],
                vec![1, 1],
                vec![2, 0]
            ]
        );
    }
}
