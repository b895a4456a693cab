//! Property tests for the text syntax: every generated well-sorted formula
//! serializes to text that reparses to a structurally equal AST.

use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;

use padicvol_core::ast::{CmpOp, Formula, Sort, Term};
use padicvol_core::parser::{parse, serialize};

fn vf_var() -> impl Strategy<Value = Term> {
    prop_oneof![
        Just(Term::var("x", Sort::ValuedField)),
        Just(Term::var("y", Sort::ValuedField)),
        Just(Term::var("X[1][2]", Sort::ValuedField)),
    ]
}

fn rf_var() -> impl Strategy<Value = Term> {
    prop_oneof![
        Just(Term::var("u", Sort::ResidueField)),
        Just(Term::var("v", Sort::ResidueField)),
    ]
}

fn vg_var() -> impl Strategy<Value = Term> {
    prop_oneof![
        Just(Term::var("m", Sort::ValueGroup)),
        Just(Term::var("n", Sort::ValueGroup)),
    ]
}

fn rational() -> impl Strategy<Value = BigRational> {
    (-20i64..20, 1i64..9)
        .prop_map(|(n, d)| BigRational::new(BigInt::from(n), BigInt::from(d)))
}

fn vf_term() -> impl Strategy<Value = Term> {
    let leaf = prop_oneof![
        vf_var(),
        (-3i64..4).prop_map(Term::PiPow),
        rational().prop_map(Term::Rat),
    ];
    leaf.prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.add(b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.sub(b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.mul(b)),
            inner.prop_map(Term::neg),
        ]
    })
}

fn rf_term() -> impl Strategy<Value = Term> {
    let leaf = prop_oneof![
        rf_var(),
        rational().prop_map(Term::Residue),
        vf_term().prop_map(Term::ac),
    ];
    leaf.prop_recursive(2, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.add(b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.mul(b)),
            inner.prop_map(Term::neg),
        ]
    })
}

/// Linear value-group terms: integer combinations of variables, `ord`
/// applications and constants.
fn vg_term() -> impl Strategy<Value = Term> {
    let leaf = prop_oneof![
        vg_var(),
        (-50i64..50).prop_map(Term::int),
        vf_term().prop_map(Term::ord),
    ];
    leaf.prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.add(b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.sub(b)),
            ((-9i64..10), inner.clone()).prop_map(|(k, t)| Term::int(k).mul(t)),
            inner.prop_map(Term::neg),
        ]
    })
}

fn cmp_op() -> impl Strategy<Value = CmpOp> {
    prop_oneof![
        Just(CmpOp::Eq),
        Just(CmpOp::Ne),
        Just(CmpOp::Le),
        Just(CmpOp::Lt),
        Just(CmpOp::Ge),
        Just(CmpOp::Gt),
    ]
}

/// Weaves a variable into a term so the containing atom is anchored.
fn anchored(var: impl Strategy<Value = Term>, term: impl Strategy<Value = Term>) -> impl Strategy<Value = Term> {
    (var, term, 0u8..4).prop_map(|(v, t, how)| match how {
        0 => v,
        1 => v.add(t),
        2 => t.sub(v),
        _ => v.mul(t),
    })
}

/// Atoms are anchored: each field-sorted comparison carries a variable (or
/// `ac`/`pi`) on one side, so literal sorts survive the round trip.
/// Value-group atoms need no anchor — they are the typing default.
fn atom() -> impl Strategy<Value = Formula> {
    prop_oneof![
        (cmp_op(), vg_term(), vg_term()).prop_map(|(op, a, b)| Formula::cmp(op, a, b)),
        (vf_term().prop_map(Term::ord))
            .prop_map(|t| Formula::cmp(CmpOp::Eq, t, Term::PlusInf)),
        (1u64..13, vg_term()).prop_map(|(k, t)| Formula::divides(k, t)),
        (anchored(rf_var(), rf_term()), rf_term()).prop_map(|(a, b)| Formula::eq(a, b)),
        (rf_term(), anchored(rf_var(), rf_term())).prop_map(|(a, b)| Formula::ne(a, b)),
        (anchored(vf_var(), vf_term()), vf_term()).prop_map(|(a, b)| Formula::eq(a, b)),
        Just(Formula::True),
        Just(Formula::False),
    ]
}

fn formula() -> impl Strategy<Value = Formula> {
    atom().prop_recursive(4, 40, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.and(b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.or(b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.implies(b)),
            inner.clone().prop_map(Formula::not),
            (prop_oneof![Just("m"), Just("q0")], inner.clone())
                .prop_map(|(n, f)| Formula::exists(n, Sort::ValueGroup, f)),
            (prop_oneof![Just("u"), Just("w")], inner.clone())
                .prop_map(|(n, f)| Formula::forall(n, Sort::ResidueField, f)),
            (prop_oneof![Just("x"), Just("z")], inner)
                .prop_map(|(n, f)| Formula::exists(n, Sort::ValuedField, f)),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn serialize_then_parse_is_identity(f in formula()) {
        // Generated formulas stay inside the checked fragment; atoms with
        // field-sorted literals always carry an anchoring variable or ac/pi.
        prop_assume!(f.check().is_ok());
        let text = serialize(&f);
        let reparsed = parse(&text)
            .unwrap_or_else(|e| panic!("serialized text failed to parse: {e}\n{text}"));
        prop_assert_eq!(reparsed, f);
    }
}
