//! Workbench for definable sets over p-adic fields and Laurent series fields.
//!
//! The crate is organised around a three-sorted first-order language
//! (valued field, residue field, value group) with the valuation `ord` and
//! angular component `ac` as the only cross-sort function symbols:
//!
//! * [`ast`], [`transform`]: formulas and structural transformations,
//! * [`parser`]: a concrete text syntax,
//! * [`presburger`]: quantifier elimination and boundedness over the value group,
//! * [`separation`]: rewriting valued-field constants into residue and
//!   value-group conditions, tracking excluded primes,
//! * [`model`]: truncated `Q_p` / `F_p((t))` elements and three-valued evaluation,
//! * [`measure`]: stability levels and exact / Monte Carlo volumes,
//! * [`group`]: `GL(n)` lattice constructions, Cartan types and coset indices,
//! * [`orbital`]: orbital-integral sums over double cosets and Laurent fits,
//! * [`brute`]: independent enumeration-based reference routes used by tests.

pub mod ast;
pub mod brute;
pub mod error;
pub mod group;
pub mod measure;
pub mod model;
pub mod orbital;
pub mod parser;
pub mod presburger;
pub mod qpoly;
pub mod separation;
pub mod transform;

pub use ast::{CmpOp, Formula, Sort, Term};
pub use error::Error;
pub use model::{ModelTag, TriBool, TruncatedElement};
pub use qpoly::QPolynomial;

/// Convenience result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
