//! Canonical inputs for the criterion benchmarks in `benches/workbench.rs`:
//! a quantified sentence for elimination, the `GL(2,O)` unit group for
//! volume counting, a fixed matrix for Cartan decomposition, and the
//! normalized orbital series for Laurent fitting.

use num_bigint::BigInt;
use num_rational::BigRational;

use padicvol_core::brute::random_sentence;
use padicvol_core::measure::DefinableSet;
use padicvol_core::model::{ModelTag, TruncatedElement};
use padicvol_core::{Formula, Result};

/// A three-quantifier sentence over two free value-group variables.
pub fn qe_sentence() -> Formula {
    random_sentence(17, &["m", "n"])
}

/// The unit group `GL(2,O)` as a definable set of matrix entries.
pub fn unit_group() -> Result<DefinableSet> {
    padicvol_core::group::build_unit_group(2)
}

/// An integral matrix of Cartan type `(2, 1)` at the given prime.
pub fn cartan_input(p: u64) -> Result<Vec<Vec<TruncatedElement>>> {
    let q = p as i64;
    [[q * q, q], [0, q]]
        .iter()
        .map(|row| {
            row.iter().map(|&v| TruncatedElement::from_int(ModelTag::Padic, p, v)).collect()
        })
        .collect()
}

/// The unit-discriminant orbital values divided by `vol(K)²`, one point
/// per sampled prime; the series a fit must recover.
pub fn normalized_orbital_points() -> Vec<(u64, BigRational)> {
    let rat = |n: i64, d: i64| BigRational::new(BigInt::from(n), BigInt::from(d));
    vec![(3, rat(2, 9)), (5, rat(8, 25)), (7, rat(18, 49)), (11, rat(50, 121)), (13, rat(72, 169))]
}

#[cfg(test)]
mod tests {
    use super::*;
    use padicvol_core::group::cartan_decompose;
    use padicvol_core::measure::volume_exact;
    use padicvol_core::presburger::eliminate_quantifiers;
    use padicvol_core::qpoly::fit_laurent;

    #[test]
    fn the_benchmark_inputs_are_well_posed() {
        assert!(qe_sentence().has_quantifier());
        assert!(!eliminate_quantifiers(&qe_sentence()).unwrap().has_quantifier());
        let vol = volume_exact(&unit_group().unwrap(), ModelTag::Padic, 3, 0).unwrap();
        assert_eq!(vol.value.to_string(), "16/27");
        assert_eq!(cartan_decompose(&cartan_input(5).unwrap()).unwrap(), vec![2, 1]);
        let fit = fit_laurent(&normalized_orbital_points(), (-2, 1)).unwrap();
        assert_eq!(fit.to_string(), "1/2 - q^-1 + 1/2*q^-2");
    }
}
