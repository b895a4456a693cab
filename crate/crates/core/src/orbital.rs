//! Orbital integrals of definable test functions on gl(2) via double
//! cosets.
//!
//! For an integrally supported test function `f = char(D)` and a stable
//! set `E ⊆ gl(2,O)` of regular semisimple elliptic elements, the weighted
//! orbital integral
//!
//! ```text
//!   vol(K,dk) · ∫_E ∫_G f(g⁻¹ X g) dg dX
//! ```
//!
//! decomposes along `G = ⊔ K·diag(π^{m₁},π^{m₂})·K` into the finite sum
//! `Σ_{m∈C} [K_m:K](q) · vol_q(ψ_m)`, where `ψ(m, k₁, k₂, X)` asserts
//! `k₁,k₂ ∈ K`, `X ∈ E`, and `Ad(k₁ t k₂)X ∈ D` for a torus element `t`
//! of valuation `m`.  Conventions: `dX` gives `gl(2,O)` volume 1, `dg`
//! restricts to `dk` on `K`, and `vol(K,dk) = |GL₂(F_q)|·q^{−4}`.
//!
//! Three desk-scale devices make this computable exactly:
//!
//! - **Denominator clearing.**  `Ad(g)X = (g X adj g)/det g`, so a
//!   valuation condition `ord(P(Ad(g)X)) ⋈ c` becomes
//!   `ord(P̃(g X adj g, det g)) − deg(P)·ord(det g) ⋈ c` with `P̃` the
//!   `det`-homogenization of `P`.  No division and no field equations
//!   enter the formula, so truncated evaluation stays decided.
//! - **Center reduction.**  The integrand is invariant under the center,
//!   which meets every coset `K·diag(π^{a+s},π^a)·K`; the sum runs over
//!   the representatives `m = (s, 0)`, `s ≥ 0`, matching the chosen
//!   normalization on the compact quotient.
//! - **Support certificate.**  If `Ad(g)X` is integral and `X` is elliptic
//!   with `ord(disc X) = d`, then reducing `Y = k₂ X k₂⁻¹` modulo `π^s`
//!   splits the characteristic polynomial whenever `s > d`, forcing the
//!   discriminant into an even-valuation square class.  Hence
//!   `s ≤ B = max_E ord(disc)`, and `B` is found by a finite scan of
//!   `E ∧ ord(disc) ≥ d` for emptiness.
//!
//! The value at each prime is an exact rational; across primes the values
//! of well-behaved problems interpolate to a single Laurent polynomial in
//! `q` (see `qpoly::fit_laurent`), which is the uniformity the pipeline is
//! built to exhibit.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;

use crate::ast::{Formula, Sort, Term};
use crate::error::Error;
use crate::group::{
    build_integral_matrices, build_unit_group_named, coset_index, discriminant_term,
    mat_mul_elements, mat_mul_terms, matrix_vars, term_matrix, GroupContext,
};
use crate::measure::{
    stability_level, volume_exact_with_budget, DefinableSet, DEFAULT_EXACT_BUDGET,
};
use crate::model::{sample_elements, ModelTag, TruncatedElement};
use crate::separation::ExclusionLedger;
use crate::Result;

/// Largest discriminant valuation probed when certifying the coset cutoff.
pub const DEFAULT_DISC_CAP: i64 = 6;

/// Sampled points used to confirm a declared conjugation invariance.
pub const INVARIANCE_CHECKS: usize = 100;

/// Extra truncation levels tried when a volume comes back undecided.
const WIDTH_RETRIES: u32 = 2;

/// Ceiling for the stability search when validating problem sets.
const STABILITY_SEARCH_CAP: u32 = 4;

fn rat_int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn adjugate_elements(g: &[Vec<TruncatedElement>]) -> Vec<Vec<TruncatedElement>> {
    debug_assert_eq!(g.len(), 2);
    vec![
        vec![g[1][1], g[0][1].neg()],
        vec![g[1][0].neg(), g[0][0]],
    ]
}

fn delta_power(delta: &Term, k: i64, t: Term) -> Term {
    let mut acc = t;
    for _ in 0..k {
        acc = delta.clone().mul(acc);
    }
    acc
}

/// Homogenizes a field polynomial under the substitution `x ↦ N_x/δ`:
/// returns `(P̃, d)` with `P(N/δ) = P̃/δ^d` identically and `P̃`
/// division-free.
fn homogenize(t: &Term, subst: &BTreeMap<String, Term>, delta: &Term) -> Result<(Term, i64)> {
    match t {
        Term::Var(name, Sort::ValuedField) => match subst.get(name) {
            Some(n) => Ok((n.clone(), 1)),
            None => Err(Error::invalid(format!(
                "support formula references `{name}` outside the conjugated matrix coordinates"
            ))),
        },
        Term::Rat(_) | Term::PiPow(_) => Ok((t.clone(), 0)),
        Term::Add(a, b) => {
            let (ta, da) = homogenize(a, subst, delta)?;
            let (tb, db) = homogenize(b, subst, delta)?;
            let d = da.max(db);
            Ok((delta_power(delta, d - da, ta).add(delta_power(delta, d - db, tb)), d))
        }
        Term::Sub(a, b) => {
            let (ta, da) = homogenize(a, subst, delta)?;
            let (tb, db) = homogenize(b, subst, delta)?;
            let d = da.max(db);
            Ok((delta_power(delta, d - da, ta).sub(delta_power(delta, d - db, tb)), d))
        }
        Term::Mul(a, b) => {
            let (ta, da) = homogenize(a, subst, delta)?;
            let (tb, db) = homogenize(b, subst, delta)?;
            Ok((ta.mul(tb), da + db))
        }
        Term::Neg(a) => {
            let (ta, da) = homogenize(a, subst, delta)?;
            Ok((ta.neg(), da))
        }
        other => Err(Error::IllFormedTerm(format!(
            "non-field subterm inside a conjugated coordinate: {other:?}"
        ))),
    }
}

fn shift_group_term(
    t: &Term,
    subst: &BTreeMap<String, Term>,
    delta: &Term,
) -> Result<Term> {
    match t {
        Term::Var(_, Sort::ValueGroup) | Term::Int(_) | Term::PlusInf => Ok(t.clone()),
        Term::Add(a, b) => {
            Ok(shift_group_term(a, subst, delta)?.add(shift_group_term(b, subst, delta)?))
        }
        Term::Sub(a, b) => {
            Ok(shift_group_term(a, subst, delta)?.sub(shift_group_term(b, subst, delta)?))
        }
        Term::Mul(a, b) => {
            Ok(shift_group_term(a, subst, delta)?.mul(shift_group_term(b, subst, delta)?))
        }
        Term::Neg(a) => Ok(shift_group_term(a, subst, delta)?.neg()),
        Term::Ord(p) => {
            let (ph, d) = homogenize(p, subst, delta)?;
            let base = ph.ord();
            Ok(match d {
                0 => base,
                1 => base.sub(delta.clone().ord()),
                k => base.sub(Term::int(k).mul(delta.clone().ord())),
            })
        }
        other => Err(Error::OutOfFragment(format!(
            "residue or field conditions on conjugated coordinates are not supported \
             in test-function supports (offending term: {other:?})"
        ))),
    }
}

/// Rewrites a support formula so that its matrix variable `x` means
/// `N_x/δ`, clearing every denominator through valuation shifts.
fn substitute_conjugate(
    f: &Formula,
    subst: &BTreeMap<String, Term>,
    delta: &Term,
) -> Result<Formula> {
    match f {
        Formula::True | Formula::False => Ok(f.clone()),
        Formula::Cmp(op, a, b) => {
            let sort = a.sort().or_else(|_| b.sort())?;
            if sort != Sort::ValueGroup {
                return Err(Error::OutOfFragment(
                    "only valuation conditions on conjugated coordinates are supported \
                     in test-function supports"
                        .into(),
                ));
            }
            Ok(Formula::cmp(
                *op,
                shift_group_term(a, subst, delta)?,
                shift_group_term(b, subst, delta)?,
            ))
        }
        Formula::Divides(k, t) => Ok(Formula::divides(*k, shift_group_term(t, subst, delta)?)),
        Formula::Not(g) => Ok(substitute_conjugate(g, subst, delta)?.not()),
        Formula::And(a, b) => Ok(substitute_conjugate(a, subst, delta)?
            .and(substitute_conjugate(b, subst, delta)?)),
        Formula::Or(a, b) => Ok(substitute_conjugate(a, subst, delta)?
            .or(substitute_conjugate(b, subst, delta)?)),
        Formula::Implies(a, b) => Ok(substitute_conjugate(a, subst, delta)?
            .implies(substitute_conjugate(b, subst, delta)?)),
        Formula::Exists(name, sort, body) | Formula::Forall(name, sort, body) => {
            if *sort == Sort::ValuedField {
                return Err(Error::OutOfFragment(
                    "field quantifiers in test-function supports are not supported \
                     under conjugation"
                        .into(),
                ));
            }
            let inner = substitute_conjugate(body, subst, delta)?;
            Ok(match f {
                Formula::Exists(..) => Formula::exists(name.clone(), *sort, inner),
                _ => Formula::forall(name.clone(), *sort, inner),
            })
        }
    }
}

fn validate_exponents(m: &[i64], n: usize) -> Result<()> {
    if m.len() != n {
        return Err(Error::invalid(format!(
            "torus exponent tuple has length {}, rank is {n}",
            m.len()
        )));
    }
    if m.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::invalid(format!("exponents {m:?} must be sorted descending")));
    }
    Ok(())
}

fn conjugate_substitution(
    matrices: &[&[Vec<Term>]],
    x: &[Vec<Term>],
) -> (BTreeMap<String, Term>, Term) {
    // g = product of `matrices`; the conjugate is (g·X·adj g)/det g with
    // adj g the reversed product of adjugates.
    let n = x.len();
    let mut g = matrices[0].to_vec();
    for m in &matrices[1..] {
        g = mat_mul_terms(&g, m);
    }
    let mut adj = crate::group::adjugate_terms(matrices[matrices.len() - 1]);
    for m in matrices[..matrices.len() - 1].iter().rev() {
        adj = mat_mul_terms(&adj, &crate::group::adjugate_terms(m));
    }
    let numerator = mat_mul_terms(&mat_mul_terms(&g, x), &adj);
    let delta = matrices
        .iter()
        .map(|m| crate::group::det_term(m))
        .reduce(Term::mul)
        .expect("at least one factor");
    let mut subst = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            subst.insert(format!("X[{}][{}]", i + 1, j + 1), numerator[i][j].clone());
        }
    }
    (subst, delta)
}

/// The inner-integrand formula `ψ(m, k₁, k₂, X)`: `k₁, k₂ ∈ K`, `X` in the
/// orbit locus, and `Ad(k₁ t k₂) X` in the support, where `t` ranges over
/// the torus elements of valuation `m` through existential unit
/// coordinates (each confined to the valuation ring by an explicit
/// `ord(u) = 0` guard).
pub fn build_psi(
    m: &[i64],
    orbit_locus: &DefinableSet,
    support: &DefinableSet,
    context: &GroupContext,
) -> Result<Formula> {
    let n = context.n();
    if n != 2 {
        return Err(Error::invalid("orbital assembly is wired for 2x2 matrices"));
    }
    validate_exponents(m, n)?;
    for (set, what) in [(orbit_locus, "orbit locus"), (support, "support")] {
        if set.signature() != matrix_vars("X", n) {
            return Err(Error::invalid(format!(
                "{what} must be defined over the `X[i][j]` matrix coordinates"
            )));
        }
    }
    let k1 = term_matrix("k1", n);
    let k2 = term_matrix("k2", n);
    let x = term_matrix("X", n);
    let torus: Vec<Vec<Term>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        Term::var(format!("u{}", i + 1), Sort::ValuedField)
                            .mul(Term::PiPow(m[i]))
                    } else {
                        Term::Rat(BigRational::from_integer(BigInt::from(0)))
                    }
                })
                .collect()
        })
        .collect();
    let (subst, delta) = conjugate_substitution(&[&k1, &torus, &k2], &x);
    let mut body = substitute_conjugate(support.formula(), &subst, &delta)?;
    for i in (1..=n).rev() {
        let u = Term::var(format!("u{i}"), Sort::ValuedField);
        body = Formula::exists(
            format!("u{i}"),
            Sort::ValuedField,
            Formula::eq(u.ord(), Term::int(0)).and(body),
        );
    }
    Ok(Formula::conj([
        build_unit_group_named(n, "k1")?.formula().clone(),
        build_unit_group_named(n, "k2")?.formula().clone(),
        orbit_locus.formula().clone(),
        body,
    ]))
}

/// The reduced integrand over `(k, X)` used when the support is the full
/// integral lattice: the `k₁` factor and the unit torus coordinates are
/// absorbed into `K` by the (checked) conjugation invariance, leaving
/// `k ∈ K ∧ X ∈ E ∧ Ad(diag(π^m)·k) X ∈ D`.
fn reduced_coset_set(
    m: &[i64],
    orbit_locus: &DefinableSet,
    support: &DefinableSet,
    n: usize,
) -> Result<DefinableSet> {
    let k = term_matrix("k", n);
    let x = term_matrix("X", n);
    let torus: Vec<Vec<Term>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        Term::PiPow(m[i])
                    } else {
                        Term::Rat(BigRational::from_integer(BigInt::from(0)))
                    }
                })
                .collect()
        })
        .collect();
    let (subst, delta) = conjugate_substitution(&[&torus, &k], &x);
    let formula = Formula::conj([
        build_unit_group_named(n, "k")?.formula().clone(),
        orbit_locus.formula().clone(),
        substitute_conjugate(support.formula(), &subst, &delta)?,
    ]);
    let mut signature = matrix_vars("k", n);
    signature.extend(matrix_vars("X", n));
    DefinableSet::new(formula, signature)
}

/// Samples conjugations `X ↦ k X k⁻¹` by units and checks that membership
/// in `support` is preserved; a decided disagreement refutes the declared
/// invariance.
pub fn conjugation_invariance_check(
    support: &DefinableSet,
    model: ModelTag,
    p: u64,
    seed: u64,
) -> Result<()> {
    let mut checked = 0usize;
    let mut attempts = 0usize;
    let mut round = 0u64;
    while checked < INVARIANCE_CHECKS {
        attempts += 1;
        if attempts > 200 * INVARIANCE_CHECKS {
            return Err(Error::Precision(
                "could not assemble enough decided samples for the conjugation \
                 invariance check"
                    .into(),
            ));
        }
        round += 1;
        let e = sample_elements(model, p, 8, 8, seed.wrapping_add(round))?;
        let k = vec![vec![e[0], e[1]], vec![e[2], e[3]]];
        let x = vec![vec![e[4], e[5]], vec![e[6], e[7]]];
        let det = k[0][0].mul(&k[1][1]).sub(&k[0][1].mul(&k[1][0]));
        // Conjugation must be by the unit group: integral inverse.
        if det.ord() != crate::model::OrdBound::Exact(0) {
            continue;
        }
        let det_inv = match det.inv() {
            Ok(d) => d,
            Err(_) => continue,
        };
        let adj = adjugate_elements(&k);
        let k_inv: Vec<Vec<TruncatedElement>> = adj
            .iter()
            .map(|row| row.iter().map(|e| e.mul(&det_inv)).collect())
            .collect();
        let z = mat_mul_elements(&mat_mul_elements(&k, &x), &k_inv);
        let xp: Vec<TruncatedElement> = x.into_iter().flatten().collect();
        let zp: Vec<TruncatedElement> = z.into_iter().flatten().collect();
        let vx = crate::measure::eval_membership(support, &xp, 8)?;
        let vz = crate::measure::eval_membership(support, &zp, 8)?;
        match (vx.known(), vz.known()) {
            (Some(a), Some(b)) if a == b => checked += 1,
            (Some(_), Some(_)) => {
                return Err(Error::Invalid(format!(
                    "declared conjugation invariance fails at a sampled point \
                     (p = {p}, sample {round})"
                )))
            }
            _ => continue,
        }
    }
    Ok(())
}

/// An orbital-integral problem: a test-function support `D`, an orbit
/// locus `E` of regular semisimple elliptic elements inside `gl(n,O)`, the
/// ambient group data, and the primes the problem is sampled at.
#[derive(Debug, Clone)]
pub struct OrbitalProblem {
    support: DefinableSet,
    orbit_locus: DefinableSet,
    context: GroupContext,
    primes: Vec<u64>,
    model: ModelTag,
    budget: u128,
    disc_cap: i64,
    stabilities: BTreeMap<u64, (u32, u32)>,
    integral_support: bool,
}

impl OrbitalProblem {
    /// Validates and freezes a problem: the orbit locus is intersected
    /// with `gl(n,O)`, and both sets must pass stability detection at
    /// every sampled prime.
    pub fn new(
        support: DefinableSet,
        orbit_locus: DefinableSet,
        context: GroupContext,
        primes: &[u64],
        model: ModelTag,
    ) -> Result<Self> {
        let n = context.n();
        if n != 2 {
            return Err(Error::invalid("orbital assembly is wired for 2x2 matrices"));
        }
        let vars = matrix_vars("X", n);
        if support.signature() != vars || orbit_locus.signature() != vars {
            return Err(Error::invalid(
                "support and orbit locus must be defined over the `X[i][j]` matrix \
                 coordinates",
            ));
        }
        if primes.is_empty() {
            return Err(Error::invalid("at least one sampled prime is required"));
        }
        let mut sorted: Vec<u64> = primes.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        for &p in &sorted {
            if p == 2 {
                return Err(Error::invalid(
                    "p = 2 is excluded: the residue square criterion for ellipticity \
                     fails there",
                ));
            }
            if !crate::model::is_prime(p) {
                return Err(Error::BadModulus(p as i64));
            }
        }
        let ambient = build_integral_matrices(n)?;
        let orbit_locus = orbit_locus.intersect(&ambient)?;
        let integral_support =
            crate::parser::serialize_body(support.formula())
                == crate::parser::serialize_body(ambient.formula());
        let mut stabilities = BTreeMap::new();
        for &p in &sorted {
            let d_stab = stability_level(&support, model, p, STABILITY_SEARCH_CAP)?;
            let e_stab = stability_level(&orbit_locus, model, p, STABILITY_SEARCH_CAP)?;
            stabilities.insert(p, (d_stab, e_stab));
        }
        Ok(OrbitalProblem {
            support,
            orbit_locus,
            context,
            primes: sorted,
            model,
            budget: DEFAULT_EXACT_BUDGET,
            disc_cap: DEFAULT_DISC_CAP,
            stabilities,
            integral_support,
        })
    }

    pub fn with_budget(mut self, budget: u128) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_disc_cap(mut self, cap: i64) -> Self {
        self.disc_cap = cap;
        self
    }

    pub fn support(&self) -> &DefinableSet {
        &self.support
    }

    /// The orbit locus after intersection with `gl(n,O)`.
    pub fn orbit_locus(&self) -> &DefinableSet {
        &self.orbit_locus
    }

    pub fn context(&self) -> &GroupContext {
        &self.context
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn model(&self) -> ModelTag {
        self.model
    }

    fn widths_at(&self, p: u64) -> Result<(u32, u32)> {
        if let Some(&w) = self.stabilities.get(&p) {
            return Ok(w);
        }
        Ok((
            stability_level(&self.support, self.model, p, STABILITY_SEARCH_CAP)?,
            stability_level(&self.orbit_locus, self.model, p, STABILITY_SEARCH_CAP)?,
        ))
    }
}

fn robust_volume(
    set: &DefinableSet,
    model: ModelTag,
    p: u64,
    start_level: u32,
    budget: u128,
) -> Result<BigRational> {
    let mut level = start_level;
    loop {
        match volume_exact_with_budget(set, model, p, level, budget) {
            Ok(v) => return Ok(v.value),
            Err(Error::Precision(_)) if level < start_level + WIDTH_RETRIES => level += 1,
            Err(e) => return Err(e),
        }
    }
}

/// Certified bound on `ord(disc)` over the orbit locus at one prime: the
/// largest `d` with `E ∧ ord(disc) ≥ d` nonempty (−1 for empty `E`).
fn discriminant_valuation_bound(problem: &OrbitalProblem, p: u64) -> Result<i64> {
    let disc = discriminant_term("X");
    let (_, e_stab) = problem.widths_at(p)?;
    for d in 0..=problem.disc_cap {
        let probe = problem.orbit_locus.intersect(&DefinableSet::new(
            Formula::ge(disc.clone().ord(), Term::int(d)),
            matrix_vars("X", 2),
        )?)?;
        let width = e_stab.max(d as u32).max(1);
        let vol = robust_volume(&probe, problem.model, p, width - 1, problem.budget)?;
        if vol == rat_int(0) {
            return Ok(d - 1);
        }
    }
    Err(Error::UnboundedSupport(problem.disc_cap))
}

/// The full-dimensional volume of `ψ_m` over `(k₁, k₂, X)` at one prime.
///
/// With an integral-lattice support the `k₁` coordinates and the torus
/// units contribute an exact factor `vol(K)` (conjugation invariance,
/// checked by sampling); otherwise the twelve-coordinate formula is
/// counted directly.  On the identity coset the whole conjugator
/// `k₁·diag(u₁, u₂)·k₂` lies in `K`, so the same invariance makes the
/// support condition identically true over the orbit locus and the term
/// collapses to `vol(K)² · vol(E)`.
pub fn coset_term_volume(problem: &OrbitalProblem, m: &[i64], p: u64) -> Result<BigRational> {
    coset_index(m)?;
    let (d_stab, e_stab) = problem.widths_at(p)?;
    let s = (m[0] - m[1]) as u32;
    let width = d_stab.max(e_stab).max(s).max(1);
    if problem.integral_support {
        conjugation_invariance_check(&problem.support, problem.model, p, 0x9e3779b9)?;
        let unit_vol = problem.context.normalization().eval_at(p)?;
        if s == 0 && m[1] == 0 {
            let orbit_vol =
                robust_volume(&problem.orbit_locus, problem.model, p, e_stab.max(1) - 1, problem.budget)?;
            return Ok(unit_vol.clone() * unit_vol * orbit_vol);
        }
        let reduced = reduced_coset_set(m, &problem.orbit_locus, &problem.support, 2)?;
        Ok(unit_vol * robust_volume(&reduced, problem.model, p, width - 1, problem.budget)?)
    } else {
        let psi = build_psi(m, &problem.orbit_locus, &problem.support, &problem.context)?;
        let mut signature = matrix_vars("k1", 2);
        signature.extend(matrix_vars("k2", 2));
        signature.extend(matrix_vars("X", 2));
        let set = DefinableSet::new(psi, signature)?;
        robust_volume(&set, problem.model, p, width - 1, problem.budget)
    }
}

/// The coset support and per-prime term volumes of a problem.
#[derive(Debug, Clone)]
pub struct SupportReport {
    /// Certified `max ord(disc)` per sampled prime.
    pub disc_bounds: BTreeMap<u64, i64>,
    /// Every candidate `m = (s,0)`, `0 ≤ s ≤ B`, with its `ψ_m` volume.
    pub per_prime: BTreeMap<u64, Vec<(Vec<i64>, BigRational)>>,
    /// Union over primes of the candidates with nonzero volume, sorted.
    pub support: Vec<Vec<i64>>,
    pub ledger: ExclusionLedger,
    pub method: &'static str,
}

fn support_rows_at_prime(
    problem: &OrbitalProblem,
    p: u64,
) -> Result<(i64, Vec<(Vec<i64>, BigRational)>)> {
    let bound = discriminant_valuation_bound(problem, p)?;
    let mut rows = Vec::new();
    for s in 0..=bound.max(-1) {
        let m = vec![s, 0];
        let vol = coset_term_volume(problem, &m, p)?;
        rows.push((m, vol));
    }
    Ok((bound, rows))
}

/// Computes the finite double-coset support `C` of a problem.
///
/// The torus entry `π^{m}` with a symbolic exponent is outside the term
/// language, so no sort-separated form of `∃k₁k₂X.ψ` exists; the support
/// is found per sampled prime inside the certified cutoff instead, and
/// the two routes agree exactly where both are defined.
pub fn coset_support(problem: &OrbitalProblem) -> Result<SupportReport> {
    let mut ledger = ExclusionLedger::new();
    ledger.exclude(2, "residue square criterion for ellipticity fails at p = 2");
    let mut disc_bounds = BTreeMap::new();
    let mut per_prime = BTreeMap::new();
    let mut union: Vec<Vec<i64>> = Vec::new();
    for &p in &problem.primes {
        let (bound, rows) = support_rows_at_prime(problem, p)?;
        for (m, vol) in &rows {
            if *vol != rat_int(0) && !union.contains(m) {
                union.push(m.clone());
            }
        }
        disc_bounds.insert(p, bound);
        per_prime.insert(p, rows);
    }
    union.sort();
    Ok(SupportReport {
        disc_bounds,
        per_prime,
        support: union,
        ledger,
        method: "per-prime coset scan inside the certified discriminant-valuation cutoff",
    })
}

/// One `m`-term of an orbital integral evaluation.
#[derive(Debug, Clone)]
pub struct OrbitalTerm {
    pub m: Vec<i64>,
    /// `[K_m : K]` evaluated at the prime.
    pub index: BigRational,
    pub volume: Option<BigRational>,
    pub status: String,
}

/// An orbital integral value at one prime, with per-coset accounting.
#[derive(Debug, Clone)]
pub struct OrbitalEvaluation {
    pub prime: u64,
    /// `Σ_m [K_m:K](q)·vol_q(ψ_m)`; absent when any term failed.
    pub value: Option<BigRational>,
    pub terms: Vec<OrbitalTerm>,
}

/// Evaluates the orbital integral at `q`, reusing the report's volumes
/// when `q` was sampled and rederiving the cutoff at fresh primes.
pub fn orbital_integral_with_support(
    problem: &OrbitalProblem,
    report: &SupportReport,
    q: u64,
) -> Result<OrbitalEvaluation> {
    if q == 2 || !crate::model::is_prime(q) {
        return Err(Error::invalid(format!("evaluation prime {q} (odd primes only)")));
    }
    let rows: Vec<(Vec<i64>, Option<BigRational>, String)> = match report.per_prime.get(&q) {
        Some(rows) => rows
            .iter()
            .map(|(m, v)| (m.clone(), Some(v.clone()), "ok".to_string()))
            .collect(),
        None => {
            let bound = discriminant_valuation_bound(problem, q)?;
            (0..=bound.max(-1))
                .map(|s| {
                    let m = vec![s, 0];
                    match coset_term_volume(problem, &m, q) {
                        Ok(v) => (m, Some(v), "ok".to_string()),
                        Err(e) => (m, None, e.to_string()),
                    }
                })
                .collect()
        }
    };
    let mut terms = Vec::new();
    let mut total = Some(rat_int(0));
    for (m, volume, status) in rows {
        let index = coset_index(&m)?.index.eval_at(q)?;
        total = match (&total, &volume) {
            (Some(t), Some(v)) => Some(t + &index * v),
            _ => None,
        };
        terms.push(OrbitalTerm { m, index, volume, status });
    }
    Ok(OrbitalEvaluation { prime: q, value: total, terms })
}

/// Evaluates the orbital integral at `q`, computing the support first.
pub fn orbital_integral(problem: &OrbitalProblem, q: u64) -> Result<OrbitalEvaluation> {
    let report = coset_support(problem)?;
    orbital_integral_with_support(problem, &report, q)
}

/// The orbital integral at every sampled prime, as exact fit-ready points.
pub fn orbital_series(problem: &OrbitalProblem) -> Result<Vec<(u64, BigRational)>> {
    let report = coset_support(problem)?;
    let mut out = Vec::new();
    for &p in &problem.primes {
        let eval = orbital_integral_with_support(problem, &report, p)?;
        match eval.value {
            Some(v) => out.push((p, v)),
            None => {
                let failed: Vec<&str> = eval
                    .terms
                    .iter()
                    .filter(|t| t.volume.is_none())
                    .map(|t| t.status.as_str())
                    .collect();
                return Err(Error::invalid(format!(
                    "orbital integral at p = {p} is incomplete: {}",
                    failed.join("; ")
                )));
            }
        }
    }
    Ok(out)
}

/// Elliptic elements of `gl(2,O)` with unit discriminant: the
/// characteristic polynomial cuts out the unramified quadratic extension.
pub fn unit_discriminant_locus() -> Result<DefinableSet> {
    let disc = discriminant_term("X");
    crate::group::build_regular_semisimple_elliptic(2)?.intersect(&DefinableSet::new(
        Formula::eq(disc.ord(), Term::int(0)),
        matrix_vars("X", 2),
    )?)
}

/// Elliptic elements of `gl(2,O)` whose discriminant has valuation one:
/// the characteristic polynomial cuts out a ramified quadratic extension.
pub fn ramified_discriminant_locus() -> Result<DefinableSet> {
    let disc = discriminant_term("X");
    crate::group::build_regular_semisimple_elliptic(2)?.intersect(&DefinableSet::new(
        Formula::eq(disc.ord(), Term::int(1)),
        matrix_vars("X", 2),
    )?)
}

/// The bundled unramified problem: `D = gl(2,O)`, `E` the unit-discriminant
/// elliptic locus.
pub fn bundled_unit_discriminant_problem(
    model: ModelTag,
    primes: &[u64],
) -> Result<OrbitalProblem> {
    OrbitalProblem::new(
        build_integral_matrices(2)?,
        unit_discriminant_locus()?,
        GroupContext::gl(2)?,
        primes,
        model,
    )
}

/// The bundled ramified problem: `D = gl(2,O)`, `E` the
/// valuation-one-discriminant elliptic locus.  Counting widths grow with
/// the discriminant bound, so this ships wired to a single small prime.
pub fn bundled_ramified_discriminant_problem(model: ModelTag) -> Result<OrbitalProblem> {
    OrbitalProblem::new(
        build_integral_matrices(2)?,
        ramified_discriminant_locus()?,
        GroupContext::gl(2)?,
        &[3],
        model,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{eval_membership, volume_exact};
    use crate::model::{Evaluator, TriBool, Value};

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn signature_of(prefixes: &[&str]) -> Vec<(String, Sort)> {
        prefixes
            .iter()
            .flat_map(|p| matrix_vars(p, 2))
            .map(|v| (v, Sort::ValuedField))
            .collect()
    }

    fn disjoint_support() -> DefinableSet {
        // Integral except the top-left entry, which is pinned outside O.
        let x = term_matrix("X", 2);
        let formula = Formula::conj([
            Formula::eq(x[0][0].clone().ord(), Term::int(-1)),
            Formula::ge(x[0][1].clone().ord(), Term::int(0)),
            Formula::ge(x[1][0].clone().ord(), Term::int(0)),
            Formula::ge(x[1][1].clone().ord(), Term::int(0)),
        ]);
        DefinableSet::new(formula, matrix_vars("X", 2)).unwrap()
    }

    #[test]
    fn psi_exposes_the_three_matrix_blocks() {
        let ctx = GroupContext::gl(2).unwrap();
        let e = unit_discriminant_locus().unwrap();
        let d = build_integral_matrices(2).unwrap();
        let psi = build_psi(&[1, 0], &e, &d, &ctx).unwrap();
        psi.check().unwrap();
        assert!(psi.has_quantifier());
        let frees = psi.free_variables();
        let expected: std::collections::BTreeSet<(String, Sort)> = ["k1", "k2", "X"]
            .iter()
            .flat_map(|p| matrix_vars(p, 2))
            .map(|v| (v, Sort::ValuedField))
            .collect();
        assert_eq!(frees, expected);
        assert!(build_psi(&[0, 1], &e, &d, &ctx).is_err(), "unsorted exponents");
    }

    #[test]
    fn psi_at_the_identity_coset_matches_direct_membership() {
        let ctx = GroupContext::gl(2).unwrap();
        let e = unit_discriminant_locus().unwrap();
        let d = build_integral_matrices(2).unwrap();
        let k = crate::group::build_unit_group(2).unwrap();
        let psi = build_psi(&[0, 0], &e, &d, &ctx).unwrap();
        let sig = signature_of(&["k1", "k2", "X"]);
        for p in [3u64, 5] {
            let ev = Evaluator::compile(&psi, &sig, ModelTag::Padic, p, 2).unwrap();
            for seed in 0..1000u64 {
                let elems = sample_elements(ModelTag::Padic, p, 8, 12, seed).unwrap();
                let direct = eval_membership(&k, &elems[0..4], 8)
                    .unwrap()
                    .and(eval_membership(&k, &elems[4..8], 8).unwrap())
                    .and(eval_membership(&e, &elems[8..12], 8).unwrap());
                let mut env: Vec<Value> = elems.iter().map(|x| Value::Field(*x)).collect();
                let got = ev.eval(&mut env);
                assert_eq!(got, direct, "p={p} seed={seed}");
            }
        }
    }

    #[test]
    fn psi_with_a_nonintegral_support_is_unsatisfiable() {
        let ctx = GroupContext::gl(2).unwrap();
        let e = unit_discriminant_locus().unwrap();
        let d = disjoint_support();
        let sig = signature_of(&["k1", "k2", "X"]);
        for (p, points) in [(3u64, 300u64), (5, 200)] {
            for m in [[0i64, 0], [1, 0]] {
                let psi = build_psi(&m, &e, &d, &ctx).unwrap();
                let ev = Evaluator::compile(&psi, &sig, ModelTag::Padic, p, 2).unwrap();
                for seed in 0..points {
                    let elems = sample_elements(ModelTag::Padic, p, 8, 12, seed).unwrap();
                    let mut env: Vec<Value> =
                        elems.iter().map(|x| Value::Field(*x)).collect();
                    assert_eq!(ev.eval(&mut env), TriBool::False, "p={p} m={m:?}");
                }
            }
        }
    }

    #[test]
    fn unit_discriminant_problem_reduces_to_the_identity_coset() {
        let problem = bundled_unit_discriminant_problem(ModelTag::Padic, &[3, 5]).unwrap();
        let report = coset_support(&problem).unwrap();
        assert_eq!(report.support, vec![vec![0, 0]]);
        assert_eq!(report.disc_bounds[&3], 0);
        assert_eq!(report.disc_bounds[&5], 0);
        assert!(report.ledger.contains(2));

        let vol_e3 = volume_exact(problem.orbit_locus(), ModelTag::Padic, 3, 0)
            .unwrap()
            .value;
        assert_eq!(vol_e3, rat(2, 9));
        let eval3 = orbital_integral_with_support(&problem, &report, 3).unwrap();
        assert_eq!(eval3.value.unwrap(), rat(512, 6561));
        assert_eq!(eval3.terms.len(), 1);
        assert_eq!(eval3.terms[0].index, rat(1, 1));

        // The jointly counted eight-coordinate volume factors exactly into
        // the independently counted unit-group and locus volumes; this is
        // the identity the identity-coset shortcut in `coset_term_volume`
        // rests on, so it is counted here the long way.
        for p in [3u64, 5] {
            let reduced =
                reduced_coset_set(&[0, 0], problem.orbit_locus(), problem.support(), 2).unwrap();
            let joint = volume_exact(&reduced, ModelTag::Padic, p, 0).unwrap().value;
            let unit = problem.context().normalization().eval_at(p).unwrap();
            let vol_e = volume_exact(problem.orbit_locus(), ModelTag::Padic, p, 0)
                .unwrap()
                .value;
            let eval = orbital_integral_with_support(&problem, &report, p).unwrap();
            assert_eq!(joint, unit.clone() * vol_e.clone(), "p = {p}");
            assert_eq!(eval.value.unwrap(), unit.clone() * unit * vol_e, "p = {p}");
        }
    }

    #[test]
    fn models_agree_on_the_bundled_problem() {
        let padic = bundled_unit_discriminant_problem(ModelTag::Padic, &[3]).unwrap();
        let laurent = bundled_unit_discriminant_problem(ModelTag::Laurent, &[3]).unwrap();
        let a = orbital_integral(&padic, 3).unwrap().value.unwrap();
        let b = orbital_integral(&laurent, 3).unwrap().value.unwrap();
        assert_eq!(a, b);
        assert_eq!(a, rat(512, 6561));
    }

    #[test]
    fn fresh_prime_evaluation_rederives_the_cutoff() {
        // The report below only knows p = 5; evaluating at 3 must rebuild
        // the certified support there and land on the frozen value.
        let problem = bundled_unit_discriminant_problem(ModelTag::Padic, &[5]).unwrap();
        let report = coset_support(&problem).unwrap();
        assert!(!report.per_prime.contains_key(&3));
        let eval = orbital_integral_with_support(&problem, &report, 3).unwrap();
        assert_eq!(eval.value.unwrap(), rat(512, 6561));
    }

    #[test]
    fn empty_orbit_locus_has_empty_support_and_zero_integral() {
        let problem = OrbitalProblem::new(
            build_integral_matrices(2).unwrap(),
            DefinableSet::new(Formula::False, matrix_vars("X", 2)).unwrap(),
            GroupContext::gl(2).unwrap(),
            &[3],
            ModelTag::Padic,
        )
        .unwrap();
        let report = coset_support(&problem).unwrap();
        assert!(report.support.is_empty());
        let eval = orbital_integral_with_support(&problem, &report, 3).unwrap();
        assert_eq!(eval.value.unwrap(), rat(0, 1));
        assert!(eval.terms.is_empty());
    }

    #[test]
    fn cosets_beyond_the_certified_support_contribute_nothing() {
        let problem = bundled_unit_discriminant_problem(ModelTag::Padic, &[3]).unwrap();
        assert_eq!(coset_term_volume(&problem, &[1, 0], 3).unwrap(), rat(0, 1));
    }

    #[test]
    fn invariance_check_accepts_the_lattice_and_rejects_a_flag() {
        let lattice = build_integral_matrices(2).unwrap();
        conjugation_invariance_check(&lattice, ModelTag::Padic, 3, 7).unwrap();
        // Matrices integral with π | top-right entry: not stable under
        // unit conjugation.
        let x = term_matrix("X", 2);
        let flag = DefinableSet::new(
            Formula::conj([
                Formula::ge(x[0][0].clone().ord(), Term::int(0)),
                Formula::ge(x[0][1].clone().ord(), Term::int(1)),
                Formula::ge(x[1][0].clone().ord(), Term::int(0)),
                Formula::ge(x[1][1].clone().ord(), Term::int(0)),
            ]),
            matrix_vars("X", 2),
        )
        .unwrap();
        assert!(matches!(
            conjugation_invariance_check(&flag, ModelTag::Padic, 3, 7),
            Err(Error::Invalid(_))
        ));
    }

    #[test]
    fn unbounded_discriminant_is_reported() {
        // The whole lattice as orbit locus has no discriminant bound.
        let problem = OrbitalProblem::new(
            build_integral_matrices(2).unwrap(),
            build_integral_matrices(2).unwrap(),
            GroupContext::gl(2).unwrap(),
            &[3],
            ModelTag::Padic,
        )
        .unwrap()
        .with_disc_cap(2);
        assert!(matches!(coset_support(&problem), Err(Error::UnboundedSupport(2))));
    }

    #[test]
    fn constructor_rejections() {
        let d = build_integral_matrices(2).unwrap();
        let e = unit_discriminant_locus().unwrap();
        let ctx = GroupContext::gl(2).unwrap();
        assert!(OrbitalProblem::new(d.clone(), e.clone(), ctx.clone(), &[2, 3], ModelTag::Padic)
            .is_err());
        assert!(OrbitalProblem::new(d.clone(), e.clone(), ctx.clone(), &[], ModelTag::Padic)
            .is_err());
        assert!(OrbitalProblem::new(d.clone(), e.clone(), ctx.clone(), &[9], ModelTag::Padic)
            .is_err());
        // A bare angular-component locus is not stable at any level.
        let x = term_matrix("X", 2);
        let unstable = DefinableSet::new(
            Formula::eq(x[0][0].clone().ac(), Term::Residue(rat(1, 1))),
            matrix_vars("X", 2),
        )
        .unwrap();
        assert!(matches!(
            OrbitalProblem::new(d, unstable, ctx, &[3], ModelTag::Padic),
            Err(Error::NotStable { .. })
        ));
    }
}
