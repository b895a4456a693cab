//! Concrete models of the three-sorted language, with finite-precision
//! evaluation.
//!
//! Two families of valued fields are modelled at a prime `p`:
//!
//! * `Padic` — the ring of integers of Q_p, elements written in base p with
//!   carrying arithmetic; the uniformizer is p itself.
//! * `Laurent` — F_p[[t]] inside F_p((t)), coefficientwise arithmetic in
//!   characteristic p; the uniformizer is t.
//!
//! Elements are known only to finitely many digits ([`TruncatedElement`]),
//! so evaluation is three-valued ([`TriBool`], Kleene semantics): `True` and
//! `False` are certificates that every refinement of the inputs agrees, and
//! `Unknown` means the truncation does not decide the formula.  Residue-sort
//! material evaluates exactly over F_p ([`FiniteFieldElement`]).

mod element;
mod eval;
mod fp;

pub use element::{sample_elements, OrdBound, TruncatedElement, MAX_DIGITS};
pub use eval::{eval_valued, Evaluator, Value};
pub use fp::{count_residue, eval_residue, is_prime, FiniteFieldElement};

/// Which valued field a truncated element lives in.
///
/// Arithmetic differs only in whether digit arithmetic carries (`Padic`)
/// or stays coefficientwise in characteristic p (`Laurent`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelTag {
    Padic,
    Laurent,
}

impl std::fmt::Display for ModelTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelTag::Padic => write!(f, "padic"),
            ModelTag::Laurent => write!(f, "laurent"),
        }
    }
}

/// Three-valued truth with Kleene connectives.
///
/// `Unknown` is contagious except where one operand already decides the
/// connective (`False and _`, `True or _`).  Raising precision may resolve
/// `Unknown` but never flips `True` to `False` or back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TriBool {
    True,
    False,
    Unknown,
}

impl TriBool {
    pub fn from_bool(b: bool) -> Self {
        if b {
            TriBool::True
        } else {
            TriBool::False
        }
    }

    /// `Some(b)` when determined.
    pub fn known(self) -> Option<bool> {
        match self {
            TriBool::True => Some(true),
            TriBool::False => Some(false),
            TriBool::Unknown => None,
        }
    }

    pub fn not(self) -> Self {
        match self {
            TriBool::True => TriBool::False,
            TriBool::False => TriBool::True,
            TriBool::Unknown => TriBool::Unknown,
        }
    }

    pub fn and(self, other: Self) -> Self {
        match (self, other) {
            (TriBool::False, _) | (_, TriBool::False) => TriBool::False,
            (TriBool::True, TriBool::True) => TriBool::True,
            _ => TriBool::Unknown,
        }
    }

    pub fn or(self, other: Self) -> Self {
        match (self, other) {
            (TriBool::True, _) | (_, TriBool::True) => TriBool::True,
            (TriBool::False, TriBool::False) => TriBool::False,
            _ => TriBool::Unknown,
        }
    }

    pub fn implies(self, other: Self) -> Self {
        self.not().or(other)
    }
}

impl std::fmt::Display for TriBool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TriBool::True => write!(f, "true"),
            TriBool::False => write!(f, "false"),
            TriBool::Unknown => write!(f, "unknown"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kleene_tables() {
        use TriBool::*;
        assert_eq!(False.and(Unknown), False);
        assert_eq!(Unknown.and(False), False);
        assert_eq!(True.and(Unknown), Unknown);
        assert_eq!(True.or(Unknown), True);
        assert_eq!(Unknown.or(False), Unknown);
        assert_eq!(Unknown.not(), Unknown);
        assert_eq!(Unknown.implies(True), True);
        assert_eq!(False.implies(Unknown), True);
        assert_eq!(True.implies(Unknown), Unknown);
    }
}
