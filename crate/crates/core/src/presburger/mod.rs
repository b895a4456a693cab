//! Decision procedures for the value-group sort: quantifier elimination,
//! boundedness, and solution enumeration over `Z^l`.
//!
//! The fragment handled here is conventional Presburger arithmetic: boolean
//! combinations of integer-linear comparisons `Σ a_i m_i + c ▷ 0` and
//! divisibilities `k | Σ a_i m_i + c`, quantifying only value-group
//! variables. Valuations, angular components and `+inf` must be rewritten
//! away first (see [`crate::separation`]).

mod bounds;
mod cooper;
mod uniform;

use std::collections::BTreeMap;

use crate::ast::Formula;
use crate::error::Error;
use crate::Result;

pub use bounds::{decide_bounded, enumerate, BoundWitness};
pub use cooper::eliminate_quantifiers;
pub use uniform::{
    uniform_bound, uniform_bound_sampled, DisjunctFate, GuardVerdict, UniformBound,
    DEFAULT_SAMPLE_PRIMES, EXCLUSION_PROVENANCE,
};

/// Evaluates a quantifier-free Presburger formula at an integer point.
pub fn eval_quantifier_free(f: &Formula, env: &BTreeMap<String, i64>) -> Result<bool> {
    match f {
        Formula::True => Ok(true),
        Formula::False => Ok(false),
        Formula::Cmp(..) | Formula::Divides(..) => cooper::Lit::from_atom(f)?.eval(env),
        Formula::Not(a) => Ok(!eval_quantifier_free(a, env)?),
        Formula::And(a, b) => Ok(eval_quantifier_free(a, env)? && eval_quantifier_free(b, env)?),
        Formula::Or(a, b) => Ok(eval_quantifier_free(a, env)? || eval_quantifier_free(b, env)?),
        Formula::Implies(a, b) => {
            Ok(!eval_quantifier_free(a, env)? || eval_quantifier_free(b, env)?)
        }
        Formula::Exists(..) | Formula::Forall(..) => Err(Error::OutOfFragment(
            "eval_quantifier_free needs a quantifier-free formula".to_string(),
        )),
    }
}
