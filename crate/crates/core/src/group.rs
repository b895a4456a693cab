//! GL(n) over the integer ring: integral matrices, the unit group, the
//! regular semisimple elliptic locus, Cartan decomposition, and double-coset
//! indices.
//!
//! Matrices live in `O^{n²}` through the entry naming scheme `X[i][j]`
//! (1-based, row-major), so every construction here is a [`DefinableSet`]
//! or a term-level matrix over that coordinate system.  The double coset
//! `K·diag(π^{m₁},…,π^{mₙ})·K` of `K = GL(n,O)` is recognized valuatively:
//! a matrix lies in it exactly when the minimum valuation over its `k×k`
//! minors equals `m_n + ⋯ + m_{n−k+1}` for every `k` (Smith normal form
//! over a discrete valuation ring).  For `n = 2` the number of left cosets
//! inside `K t K` is `1` for `m₁ = m₂` and `q^{s−1}(q+1)` for `s = m₁ −
//! m₂ ≥ 1`, which the Hermite-form enumeration below reproduces prime by
//! prime.

use num_bigint::BigInt;
use num_rational::BigRational;

use crate::ast::{Formula, Sort, Term};
use crate::error::Error;
use crate::measure::DefinableSet;
use crate::model::{ModelTag, OrdBound, TruncatedElement};
use crate::qpoly::QPolynomial;
use crate::Result;

/// Matrix size bound keeping minor expansions and counting spaces at desk
/// scale.
pub const MAX_N: usize = 4;

/// Entry variable names for an `n×n` matrix, row-major, 1-based.
pub fn matrix_vars(prefix: &str, n: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(n * n);
    for i in 1..=n {
        for j in 1..=n {
            out.push(format!("{prefix}[{i}][{j}]"));
        }
    }
    out
}

/// The same names as terms, shaped as a matrix.
pub fn term_matrix(prefix: &str, n: usize) -> Vec<Vec<Term>> {
    (1..=n)
        .map(|i| {
            (1..=n)
                .map(|j| Term::var(format!("{prefix}[{i}][{j}]"), Sort::ValuedField))
                .collect()
        })
        .collect()
}

fn vf_const(n: i64) -> Term {
    Term::Rat(BigRational::from_integer(BigInt::from(n)))
}

fn check_square(m: &[Vec<Term>]) -> usize {
    let n = m.len();
    debug_assert!(m.iter().all(|row| row.len() == n), "square matrix expected");
    n
}

pub fn mat_mul_terms(a: &[Vec<Term>], b: &[Vec<Term>]) -> Vec<Vec<Term>> {
    let n = check_square(a);
    debug_assert_eq!(n, check_square(b));
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    (0..n)
                        .map(|k| a[i][k].clone().mul(b[k][j].clone()))
                        .reduce(Term::add)
                        .expect("n >= 1")
                })
                .collect()
        })
        .collect()
}

pub fn trace_term(m: &[Vec<Term>]) -> Term {
    let n = check_square(m);
    (0..n).map(|i| m[i][i].clone()).reduce(Term::add).expect("n >= 1")
}

/// Determinant by cofactor expansion along the first row.
pub fn det_term(m: &[Vec<Term>]) -> Term {
    let n = check_square(m);
    if n == 1 {
        return m[0][0].clone();
    }
    let mut total: Option<Term> = None;
    for j in 0..n {
        let sub: Vec<Vec<Term>> = (1..n)
            .map(|i| (0..n).filter(|&c| c != j).map(|c| m[i][c].clone()).collect())
            .collect();
        let mut cof = m[0][j].clone().mul(det_term(&sub));
        if j % 2 == 1 {
            cof = cof.neg();
        }
        total = Some(match total {
            None => cof,
            Some(t) => t.add(cof),
        });
    }
    total.expect("n >= 1")
}

/// Adjugate (transposed cofactor matrix): `M · adj(M) = det(M)·I`.
pub fn adjugate_terms(m: &[Vec<Term>]) -> Vec<Vec<Term>> {
    let n = check_square(m);
    if n == 1 {
        return vec![vec![vf_const(1)]];
    }
    let mut adj = vec![vec![vf_const(0); n]; n];
    for i in 0..n {
        for j in 0..n {
            let sub: Vec<Vec<Term>> = (0..n)
                .filter(|&r| r != i)
                .map(|r| (0..n).filter(|&c| c != j).map(|c| m[r][c].clone()).collect())
                .collect();
            let mut cof = det_term(&sub);
            if (i + j) % 2 == 1 {
                cof = cof.neg();
            }
            adj[j][i] = cof;
        }
    }
    adj
}

pub fn mat_mul_elements(
    a: &[Vec<TruncatedElement>],
    b: &[Vec<TruncatedElement>],
) -> Vec<Vec<TruncatedElement>> {
    let n = a.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let mut acc = a[i][0].mul(&b[0][j]);
                    for k in 1..n {
                        acc = acc.add(&a[i][k].mul(&b[k][j]));
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// The general linear group context: dimensions, the diagonal torus, and
/// the counting normalization `[G]_q = |G(F_q)|·q^{−dim G}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupContext {
    n: usize,
    cardinality: QPolynomial,
    normalization: QPolynomial,
}

impl GroupContext {
    pub fn gl(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_N {
            return Err(Error::invalid(format!("matrix size {n} (supported: 1..={MAX_N})")));
        }
        // |GL_n(F_q)| = Π_{i=0}^{n−1} (q^n − q^i).
        let mut cardinality = QPolynomial::one();
        for i in 0..n {
            let factor = QPolynomial::monomial(n as i64, BigRational::from_integer(1.into()))
                .sub(&QPolynomial::monomial(i as i64, BigRational::from_integer(1.into())));
            cardinality = cardinality.mul(&factor);
        }
        let normalization = cardinality.shift(-((n * n) as i64));
        Ok(GroupContext { n, cardinality, normalization })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.n * self.n
    }

    /// Rank of the diagonal torus.
    pub fn rank(&self) -> usize {
        self.n
    }

    /// `|G(F_q)|` as a polynomial in `q`.
    pub fn cardinality(&self) -> &QPolynomial {
        &self.cardinality
    }

    /// `[G]_q = |G(F_q)|·q^{−dim G}`; equals the additive volume of `K`.
    pub fn normalization(&self) -> &QPolynomial {
        &self.normalization
    }

    /// The torus element `diag(π^{m₁},…,π^{mₙ})`.
    pub fn torus(
        &self,
        m: &[i64],
        model: ModelTag,
        p: u64,
    ) -> Result<Vec<Vec<TruncatedElement>>> {
        if m.len() != self.n {
            return Err(Error::invalid(format!(
                "torus exponent tuple has length {}, rank is {}",
                m.len(),
                self.n
            )));
        }
        let zero = TruncatedElement::zero(model, p)?;
        let mut out = vec![vec![zero; self.n]; self.n];
        for (i, &mi) in m.iter().enumerate() {
            out[i][i] = TruncatedElement::pi_pow(model, p, mi)?;
        }
        Ok(out)
    }
}

/// All of `gl(n, O)` as a definable set over the `prefix[i][j]` entries.
pub fn build_integral_matrices_named(n: usize, prefix: &str) -> Result<DefinableSet> {
    if n == 0 || n > MAX_N {
        return Err(Error::invalid(format!("matrix size {n} (supported: 1..={MAX_N})")));
    }
    let entries = term_matrix(prefix, n);
    let formula = Formula::conj(
        entries
            .iter()
            .flatten()
            .map(|t| Formula::ge(t.clone().ord(), Term::int(0))),
    );
    DefinableSet::new(formula, matrix_vars(prefix, n))
}

pub fn build_integral_matrices(n: usize) -> Result<DefinableSet> {
    build_integral_matrices_named(n, "X")
}

/// `K = GL(n, O)`: integral matrices with unit determinant.
pub fn build_unit_group_named(n: usize, prefix: &str) -> Result<DefinableSet> {
    let ambient = build_integral_matrices_named(n, prefix)?;
    let det = det_term(&term_matrix(prefix, n));
    let formula = ambient.formula().clone().and(Formula::eq(det.ord(), Term::int(0)));
    DefinableSet::new(formula, matrix_vars(prefix, n))
}

pub fn build_unit_group(n: usize) -> Result<DefinableSet> {
    build_unit_group_named(n, "X")
}

/// Characteristic-polynomial discriminant `tr(X)² − 4·det(X)` for `n = 2`.
pub fn discriminant_term(prefix: &str) -> Term {
    let m = term_matrix(prefix, 2);
    let tr = trace_term(&m);
    let det = det_term(&m);
    tr.clone().mul(tr).sub(vf_const(4).mul(det))
}

/// Regular semisimple locus in `gl(2, O)`: nonvanishing discriminant.
pub fn build_regular_semisimple(n: usize) -> Result<DefinableSet> {
    if n != 2 {
        return Err(Error::invalid("regular semisimple locus is built for n = 2 only"));
    }
    let disc = discriminant_term("X");
    let formula = Formula::eq(disc.ord(), Term::PlusInf).not();
    DefinableSet::new(formula, matrix_vars("X", 2))
}

/// Regular semisimple elliptic locus in `gl(2, O)`.
///
/// The eigenvalues generate the quadratic extension cut out by the
/// discriminant, so for odd residue characteristic the matrix is elliptic
/// exactly when the discriminant is a nonsquare: odd valuation, or even
/// valuation with nonsquare angular component.  The residue-square
/// criterion fails at p = 2 (units congruent to squares need not be
/// squares there), so 2 must be excluded wherever this set is used.
pub fn build_regular_semisimple_elliptic(n: usize) -> Result<DefinableSet> {
    if n != 2 {
        return Err(Error::invalid("elliptic locus is built for n = 2 only"));
    }
    let disc = discriminant_term("X");
    let finite = Formula::eq(disc.clone().ord(), Term::PlusInf).not();
    let odd_val = Formula::divides(2, disc.clone().ord()).not();
    let xi = Term::var("xi", Sort::ResidueField);
    let square = Formula::exists(
        "xi",
        Sort::ResidueField,
        Formula::eq(xi.clone().mul(xi), disc.clone().ac()),
    );
    let even_nonsquare = Formula::divides(2, disc.ord()).and(square.not());
    let formula = finite.and(odd_val.or(even_nonsquare));
    DefinableSet::new(formula, matrix_vars("X", 2))
}

fn ord_interval(bounds: impl IntoIterator<Item = OrdBound>) -> (Option<i64>, Option<i64>) {
    // Minimum of valuation intervals: lower bounds always combine; the
    // upper end only moves down at exactly-known valuations.
    let mut lo: Option<i64> = None; // None = +∞
    let mut hi: Option<i64> = None;
    for b in bounds {
        let (blo, bhi) = match b {
            OrdBound::Exact(v) => (Some(v), Some(v)),
            OrdBound::AtLeast(v) => (Some(v), None),
            OrdBound::Infinite => (None, None),
        };
        lo = match (lo, blo) {
            (None, x) => x,
            (x, None) => x,
            (Some(a), Some(b)) => Some(a.min(b)),
        };
        hi = match (hi, bhi) {
            (None, x) => x,
            (x, None) => x,
            (Some(a), Some(b)) => Some(a.min(b)),
        };
    }
    (lo, hi)
}

fn minor_det(
    g: &[Vec<TruncatedElement>],
    rows: &[usize],
    cols: &[usize],
) -> TruncatedElement {
    if rows.len() == 1 {
        return g[rows[0]][cols[0]];
    }
    let mut total: Option<TruncatedElement> = None;
    for (idx, &c) in cols.iter().enumerate() {
        let sub_rows = &rows[1..];
        let sub_cols: Vec<usize> = cols.iter().copied().filter(|&x| x != c).collect();
        let mut term = g[rows[0]][c].mul(&minor_det(g, sub_rows, &sub_cols));
        if idx % 2 == 1 {
            term = term.neg();
        }
        total = Some(match total {
            None => term,
            Some(t) => t.add(&term),
        });
    }
    total.expect("nonempty minor")
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Cartan coordinates of an invertible matrix over `O`: the descending
/// elementary-divisor valuations `m` with `g ∈ K·diag(π^{m₁},…,π^{mₙ})·K`.
///
/// The ascending partial sums are the minimum valuations over `k×k`
/// minors; a minimum that the entry windows do not pin down is a precision
/// error, as is a determinant of undetermined or infinite valuation.
pub fn cartan_decompose(g: &[Vec<TruncatedElement>]) -> Result<Vec<i64>> {
    let n = g.len();
    if n == 0 || n > MAX_N || g.iter().any(|row| row.len() != n) {
        return Err(Error::invalid(format!("square matrix of size 1..={MAX_N} expected")));
    }
    let mut sums = Vec::with_capacity(n);
    for k in 1..=n {
        let index_sets = subsets(n, k);
        let bounds = index_sets.iter().flat_map(|rows| {
            index_sets.iter().map(move |cols| minor_det(g, rows, cols).ord())
        });
        let (lo, hi) = ord_interval(bounds);
        match (lo, hi) {
            (Some(a), Some(b)) if a == b => sums.push(a),
            (None, _) => {
                return Err(Error::Precision(format!(
                    "all {k}x{k} minors vanish to available precision; matrix not invertible"
                )))
            }
            _ => {
                return Err(Error::Precision(format!(
                    "minimum valuation over {k}x{k} minors undetermined at current precision"
                )))
            }
        }
    }
    let mut divisors = Vec::with_capacity(n);
    let mut prev = 0i64;
    for &s in &sums {
        divisors.push(s - prev);
        prev = s;
    }
    divisors.reverse();
    Ok(divisors)
}

/// The double coset `K·diag(π^m)·K` inside `gl(2,O)` as a definable set:
/// minimum entry valuation `m₂` and determinant valuation `m₁ + m₂`.
pub fn double_coset_set(m: &[i64]) -> Result<DefinableSet> {
    validate_coset_tuple(m)?;
    let entries = term_matrix("X", 2);
    let det = det_term(&entries);
    let all_ge = Formula::conj(
        entries
            .iter()
            .flatten()
            .map(|t| Formula::ge(t.clone().ord(), Term::int(m[1]))),
    );
    let some_eq = Formula::disj(
        entries
            .iter()
            .flatten()
            .map(|t| Formula::eq(t.clone().ord(), Term::int(m[1]))),
    );
    let formula = all_ge
        .and(some_eq)
        .and(Formula::eq(det.ord(), Term::int(m[0] + m[1])));
    DefinableSet::new(formula, matrix_vars("X", 2))
}

fn validate_coset_tuple(m: &[i64]) -> Result<()> {
    if m.len() != 2 {
        return Err(Error::invalid("coset tuples are supported for n = 2 only"));
    }
    if m[0] < m[1] {
        return Err(Error::invalid(format!(
            "coset tuple ({}, {}) must be sorted descending",
            m[0], m[1]
        )));
    }
    if m[1] < 0 {
        return Err(Error::invalid(
            "coset tuple must be nonnegative (integral double cosets)",
        ));
    }
    Ok(())
}

/// A double-coset index `[K_m : K]` as a polynomial in `q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CosetIndex {
    pub m: Vec<i64>,
    pub index: QPolynomial,
}

/// Closed form of the left-coset count of `K` in `K·diag(π^m)·K` for
/// `n = 2`: depends only on `s = m₁ − m₂`; `1` for `s = 0`, else
/// `q^{s−1}(q + 1)`.
pub fn coset_index(m: &[i64]) -> Result<CosetIndex> {
    validate_coset_tuple(m)?;
    let s = m[0] - m[1];
    let one = BigRational::from_integer(BigInt::from(1));
    let index = if s == 0 {
        QPolynomial::one()
    } else {
        QPolynomial::from_terms([(s, one.clone()), (s - 1, one)])
    };
    Ok(CosetIndex { m: m.to_vec(), index })
}

/// Explicit left-coset representatives of `K` in `K·diag(π^m)·K`.
///
/// Left cosets `gK` of integral `g` correspond to the sublattices
/// `g·O² ⊆ O²`; those of elementary-divisor type `m` are enumerated
/// without repetition by Hermite forms `[[π^a, b], [0, π^{s−a}]]` (scaled
/// centrally by `π^{m₂}`), and each candidate's type is confirmed through
/// [`cartan_decompose`].
pub fn coset_representatives(
    m: &[i64],
    model: ModelTag,
    p: u64,
) -> Result<Vec<Vec<Vec<TruncatedElement>>>> {
    validate_coset_tuple(m)?;
    let s = (m[0] - m[1]) as u32;
    if s >= 20 {
        return Err(Error::BudgetExceeded { needed: (p as u128).pow(s), budget: 1 << 40 });
    }
    let center = TruncatedElement::pi_pow(model, p, m[1])?;
    let zero = TruncatedElement::zero(model, p)?;
    let mut reps = Vec::new();
    for a in 0..=s {
        let upper = p.pow(s - a);
        for b in 0..upper {
            let g = vec![
                vec![
                    TruncatedElement::pi_pow(model, p, a as i64)?,
                    TruncatedElement::from_int(model, p, b as i64)?,
                ],
                vec![zero, TruncatedElement::pi_pow(model, p, (s - a) as i64)?],
            ];
            if cartan_decompose(&g)? == vec![s as i64, 0] {
                reps.push(
                    g.into_iter()
                        .map(|row| row.into_iter().map(|e| e.mul(&center)).collect())
                        .collect(),
                );
            }
        }
    }
    Ok(reps)
}

/// Counts the left cosets in `K·diag(π^m)·K` directly at one prime.
pub fn coset_index_bruteforce(m: &[i64], p: u64) -> Result<u64> {
    Ok(coset_representatives(m, ModelTag::Padic, p)?.len() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{eval_membership, volume_exact};
    use crate::model::{count_residue, sample_elements, TriBool};
    use crate::parser::parse;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn int_matrix(model: ModelTag, p: u64, rows: &[[i64; 2]; 2]) -> Vec<Vec<TruncatedElement>> {
        rows.iter()
            .map(|row| {
                row.iter().map(|&v| TruncatedElement::from_int(model, p, v).unwrap()).collect()
            })
            .collect()
    }

    #[test]
    fn cardinality_matches_residue_count() {
        let ctx = GroupContext::gl(2).unwrap();
        let nonsingular = parse("rf a, b, c, d; not (a*d - b*c = 0)").unwrap();
        for p in [3u64, 5, 7] {
            let brute = count_residue(&nonsingular, p).unwrap();
            let closed = ctx.cardinality().eval_at(p).unwrap();
            assert_eq!(closed, BigRational::from_integer(BigInt::from(brute)), "p={p}");
        }
        assert_eq!(ctx.normalization(), &ctx.cardinality().shift(-4));
        let gl1 = GroupContext::gl(1).unwrap();
        assert_eq!(gl1.cardinality().to_string(), "q - 1");
    }

    #[test]
    fn unit_group_volume_equals_normalization() {
        let k = build_unit_group(2).unwrap();
        for p in [3u64, 5] {
            let vol = volume_exact(&k, ModelTag::Padic, p, 1).unwrap().value;
            let ctx = GroupContext::gl(2).unwrap();
            assert_eq!(vol, ctx.normalization().eval_at(p).unwrap(), "p={p}");
        }
        let v3 = volume_exact(&k, ModelTag::Padic, 3, 1).unwrap().value;
        assert_eq!(v3, rat(16, 27));
        let ambient = build_integral_matrices(2).unwrap();
        assert_eq!(
            volume_exact(&ambient, ModelTag::Padic, 3, 0).unwrap().value,
            rat(1, 1)
        );
    }

    #[test]
    fn identity_lies_in_the_unit_group_at_every_prime() {
        let k = build_unit_group(2).unwrap();
        for p in [3u64, 5, 7, 11, 13] {
            let id = int_matrix(ModelTag::Padic, p, &[[1, 0], [0, 1]]);
            let point: Vec<TruncatedElement> = id.into_iter().flatten().collect();
            assert_eq!(eval_membership(&k, &point, 4).unwrap(), TriBool::True, "p={p}");
        }
    }

    #[test]
    fn elliptic_criterion_on_fixtures() {
        let elliptic = build_regular_semisimple_elliptic(2).unwrap();
        let rss = build_regular_semisimple(2).unwrap();
        for p in [3u64, 5] {
            // Antidiagonal with a nonsquare unit below: nonsquare
            // discriminant, hence elliptic.
            let z = int_matrix(ModelTag::Padic, p, &[[0, 1], [2, 0]]);
            let zp: Vec<_> = z.into_iter().flatten().collect();
            assert_eq!(eval_membership(&elliptic, &zp, 6).unwrap(), TriBool::True, "p={p}");
            // Same shape with a square unit: split torus.
            let w = int_matrix(ModelTag::Padic, p, &[[0, 1], [1, 0]]);
            let wp: Vec<_> = w.into_iter().flatten().collect();
            assert_eq!(eval_membership(&elliptic, &wp, 6).unwrap(), TriBool::False);
        }
        // Nilpotent: zero discriminant, not regular semisimple.
        let nil = int_matrix(ModelTag::Padic, 5, &[[0, 1], [0, 0]]);
        let nilp: Vec<_> = nil.into_iter().flatten().collect();
        assert_eq!(eval_membership(&rss, &nilp, 6).unwrap(), TriBool::False);
        assert_eq!(eval_membership(&elliptic, &nilp, 6).unwrap(), TriBool::False);
        // diag(1,2): distinct rational eigenvalues — regular semisimple but
        // split.
        let split = int_matrix(ModelTag::Padic, 5, &[[1, 0], [0, 2]]);
        let splitp: Vec<_> = split.into_iter().flatten().collect();
        assert_eq!(eval_membership(&rss, &splitp, 6).unwrap(), TriBool::True);
        assert_eq!(eval_membership(&elliptic, &splitp, 6).unwrap(), TriBool::False);
    }

    #[test]
    fn nonsquare_units_are_half_of_all_units() {
        let nonsquare =
            parse("rf u; not (u = 0) and not (exists rf xi. xi*xi = u)").unwrap();
        for p in [3u64, 5, 7] {
            let count = count_residue(&nonsquare, p).unwrap();
            assert_eq!(count, (p - 1) / 2, "p={p}");
        }
    }

    #[test]
    fn cartan_decomposition_fixtures() {
        let p = 5;
        let id = int_matrix(ModelTag::Padic, p, &[[1, 0], [0, 1]]);
        assert_eq!(cartan_decompose(&id).unwrap(), vec![0, 0]);
        let dp = int_matrix(ModelTag::Padic, p, &[[5, 0], [0, 1]]);
        assert_eq!(cartan_decompose(&dp).unwrap(), vec![1, 0]);
        let anti = int_matrix(ModelTag::Padic, p, &[[0, 1], [5, 0]]);
        assert_eq!(cartan_decompose(&anti).unwrap(), vec![1, 0]);
        let both = int_matrix(ModelTag::Padic, p, &[[25, 0], [0, 5]]);
        assert_eq!(cartan_decompose(&both).unwrap(), vec![2, 1]);
        // An undetermined entry blocks the determinant valuation.
        let fuzzy = vec![
            vec![
                TruncatedElement::big_o(ModelTag::Padic, p, 1).unwrap(),
                TruncatedElement::zero(ModelTag::Padic, p).unwrap(),
            ],
            vec![
                TruncatedElement::zero(ModelTag::Padic, p).unwrap(),
                TruncatedElement::one(ModelTag::Padic, p).unwrap(),
            ],
        ];
        assert!(matches!(cartan_decompose(&fuzzy), Err(Error::Precision(_))));
    }

    #[test]
    fn torus_elements_decompose_to_their_exponents() {
        let ctx = GroupContext::gl(2).unwrap();
        for m in [[0i64, 0], [1, 0], [3, 1]] {
            let t = ctx.torus(&m, ModelTag::Laurent, 3).unwrap();
            assert_eq!(cartan_decompose(&t).unwrap(), m.to_vec(), "{m:?}");
        }
    }

    #[test]
    fn cartan_agrees_with_the_valuative_double_coset_test() {
        let p = 3;
        let mut checked = 0;
        let mut seed = 0u64;
        while checked < 100 {
            seed += 1;
            let entries = sample_elements(ModelTag::Padic, p, 8, 4, seed).unwrap();
            let mut g = vec![
                vec![entries[0], entries[1]],
                vec![entries[2], entries[3]],
            ];
            if seed % 2 == 0 {
                // Exercise nonzero central valuations too.
                let pi = TruncatedElement::pi_pow(ModelTag::Padic, p, 1).unwrap();
                for row in &mut g {
                    for e in row.iter_mut() {
                        *e = e.mul(&pi);
                    }
                }
            }
            let m = match cartan_decompose(&g) {
                Ok(m) => m,
                Err(Error::Precision(_)) => continue,
                Err(other) => panic!("unexpected error {other}"),
            };
            let point: Vec<_> = g.into_iter().flatten().collect();
            let inside = double_coset_set(&m).unwrap();
            assert_eq!(
                eval_membership(&inside, &point, 8).unwrap(),
                TriBool::True,
                "m={m:?} seed={seed}"
            );
            for neighbor in [
                vec![m[0] + 1, m[1]],
                vec![m[0] - 1, m[1]],
                vec![m[0], m[1] + 1],
                vec![m[0], m[1] - 1],
            ] {
                if validate_coset_tuple(&neighbor).is_err() {
                    continue;
                }
                let set = double_coset_set(&neighbor).unwrap();
                assert_eq!(
                    eval_membership(&set, &point, 8).unwrap(),
                    TriBool::False,
                    "neighbor {neighbor:?} of {m:?}"
                );
            }
            checked += 1;
        }
    }

    #[test]
    fn closed_form_index_matches_bruteforce_counts() {
        assert_eq!(coset_index(&[0, 0]).unwrap().index, QPolynomial::one());
        let idx10 = coset_index(&[1, 0]).unwrap().index;
        assert_eq!(idx10.to_string(), "q + 1");
        for p in [3u64, 5, 7] {
            assert_eq!(
                BigRational::from_integer(coset_index_bruteforce(&[1, 0], p).unwrap().into()),
                idx10.eval_at(p).unwrap(),
                "m=(1,0) p={p}"
            );
        }
        let idx20 = coset_index(&[2, 0]).unwrap().index;
        assert_eq!(idx20.to_string(), "q^2 + q");
        assert_eq!(coset_index_bruteforce(&[2, 0], 3).unwrap(), 12);
        assert_eq!(coset_index_bruteforce(&[2, 0], 5).unwrap(), 30);
        assert_eq!(coset_index_bruteforce(&[3, 0], 3).unwrap(), 36);
        // The index depends only on the exponent gap.
        assert_eq!(coset_index(&[2, 1]).unwrap().index, idx10);
        assert_eq!(coset_index_bruteforce(&[1, 1], 5).unwrap(), 1);
    }

    #[test]
    fn index_times_unit_volume_is_coset_volume() {
        // Haar measure on GL(2) is |det|^{−2}·(additive measure), so the
        // coset K·diag(π^m)·K of [K_m:K] translates of K satisfies
        // [K_m:K]·vol(K) = q^{2(m₁+m₂)}·vol_additive(D_m).
        let p = 3u64;
        let vol_k = volume_exact(&build_unit_group(2).unwrap(), ModelTag::Padic, p, 1).unwrap().value;
        for m in [[0i64, 0], [1, 0], [1, 1], [2, 0]] {
            let level = (m[0] + m[1]) as u32;
            let coset = double_coset_set(&m).unwrap();
            let additive = volume_exact(&coset, ModelTag::Padic, p, level).unwrap().value;
            let haar = additive * rat((p as i64).pow(2 * level), 1);
            let index = coset_index(&m).unwrap().index.eval_at(p).unwrap();
            assert_eq!(index * vol_k.clone(), haar, "m={m:?}");
        }
    }
}
