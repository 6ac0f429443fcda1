//! Property tests for the Fourier–Taylor algebra: ring/bracket axioms,
//! grading laws, truncation compatibility, and a brute-force convolution
//! oracle for multiplication.

use num_complex::Complex64 as C64;
use proptest::prelude::*;
use resnf_core::{Dims, FtSeries, Monomial, Truncation};
use std::collections::BTreeMap;

const DIMS: Dims = Dims { m: 2, nt: 3 };
// Roomy enough that no double/triple product of generated monomials (grade
// ≤ 20 each) ever hits the cap: the ring/bracket laws only hold exactly when
// nothing truncates.
const WIDE: Truncation = Truncation { s_max: 12, grade_max: 64 };

fn arb_monomial() -> impl Strategy<Value = Monomial> {
    (
        proptest::collection::vec(-2i32..=2, DIMS.m),
        proptest::collection::vec(0u32..=2, DIMS.m),
        proptest::collection::vec(0u32..=2, DIMS.nt),
        proptest::collection::vec(0u32..=2, DIMS.nt),
    )
        .prop_map(|(k, l, a, b)| Monomial { k, l, a, b })
}

fn arb_series(max_terms: usize) -> impl Strategy<Value = FtSeries> {
    proptest::collection::vec(
        (0u32..=2, arb_monomial(), -1.0f64..1.0, -1.0f64..1.0),
        1..=max_terms,
    )
    .prop_map(|terms| {
        let mut f = FtSeries::zero(DIMS, WIDE);
        for (s, m, re, im) in terms {
            f.insert(s, m, C64::new(re, im));
        }
        f
    })
}

fn max_diff(f: &FtSeries, g: &FtSeries) -> f64 {
    f.sub(g).unwrap().max_abs_coeff()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn additive_identity(f in arb_series(20)) {
        let zero = FtSeries::zero(DIMS, WIDE);
        prop_assert!(max_diff(&f.add(&zero).unwrap(), &f) < 1e-15);
    }

    #[test]
    fn mul_matches_convolution_oracle(f in arb_series(15), g in arb_series(15)) {
        let fast = f.mul(&g).unwrap();
        // Brute-force double loop into a plain map.
        let mut oracle: BTreeMap<(u32, Monomial), C64> = BTreeMap::new();
        for (s1, m1, c1) in f.terms() {
            for (s2, m2, c2) in g.terms() {
                let mono = Monomial {
                    k: m1.k.iter().zip(&m2.k).map(|(x, y)| x + y).collect(),
                    l: m1.l.iter().zip(&m2.l).map(|(x, y)| x + y).collect(),
                    a: m1.a.iter().zip(&m2.a).map(|(x, y)| x + y).collect(),
                    b: m1.b.iter().zip(&m2.b).map(|(x, y)| x + y).collect(),
                };
                *oracle.entry((s1 + s2, mono)).or_insert(C64::new(0.0, 0.0)) += c1 * c2;
            }
        }
        let mut expected = FtSeries::zero(DIMS, WIDE);
        for ((s, m), c) in oracle {
            expected.insert(s, m, c);
        }
        prop_assert!(max_diff(&fast, &expected) < 1e-12);
    }

    #[test]
    fn bracket_antisymmetry(f in arb_series(20)) {
        prop_assert!(f.poisson(&f).unwrap().max_abs_coeff() < 1e-12);
    }

    #[test]
    fn bracket_bilinearity(f in arb_series(10), g in arb_series(10), h in arb_series(10)) {
        let lhs = f.add(&g).unwrap().poisson(&h).unwrap();
        let rhs = f.poisson(&h).unwrap().add(&g.poisson(&h).unwrap()).unwrap();
        prop_assert!(max_diff(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn bracket_leibniz(f in arb_series(8), g in arb_series(8), h in arb_series(8)) {
        let lhs = f.poisson(&g.mul(&h).unwrap()).unwrap();
        let rhs = f
            .poisson(&g)
            .unwrap()
            .mul(&h)
            .unwrap()
            .add(&g.mul(&f.poisson(&h).unwrap()).unwrap())
            .unwrap();
        prop_assert!(max_diff(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn bracket_jacobi(f in arb_series(6), g in arb_series(6), h in arb_series(6)) {
        let t1 = f.poisson(&g.poisson(&h).unwrap()).unwrap();
        let t2 = g.poisson(&h.poisson(&f).unwrap()).unwrap();
        let t3 = h.poisson(&f.poisson(&g).unwrap()).unwrap();
        let sum = t1.add(&t2).unwrap().add(&t3).unwrap();
        prop_assert!(sum.max_abs_coeff() < 1e-10);
    }

    #[test]
    fn grade_law_homogeneous(f in arb_series(12), g in arb_series(12), gf in 1u32..6, gg in 1u32..6) {
        let fh = f.grade_part(gf);
        let gh = g.grade_part(gg);
        let br = fh.poisson(&gh).unwrap();
        for (_, m, _) in br.terms() {
            prop_assert_eq!(m.grade(), gf + gg - 2);
        }
    }

    #[test]
    fn eps_order_law(f in arb_series(10), g in arb_series(10)) {
        if let (Some(sf), Some(sg)) = (f.min_eps_order(), g.min_eps_order()) {
            let p = f.mul(&g).unwrap();
            if let Some(sp) = p.min_eps_order() {
                prop_assert!(sp >= sf + sg);
            }
            let br = f.poisson(&g).unwrap();
            if let Some(sb) = br.min_eps_order() {
                prop_assert!(sb >= sf + sg);
            }
        }
    }

    #[test]
    fn truncation_commutes_with_arithmetic(f in arb_series(12), g in arb_series(12)) {
        // ε-orders only add, so ε-truncation commutes with add/mul/bracket.
        let tight = Truncation { s_max: 2, grade_max: 24 };
        let ft = f.with_trunc(tight);
        let gt = g.with_trunc(tight);
        for op in 0..3 {
            let full = match op {
                0 => f.add(&g).unwrap(),
                1 => f.mul(&g).unwrap(),
                _ => f.poisson(&g).unwrap(),
            };
            let pre = match op {
                0 => ft.add(&gt).unwrap(),
                1 => ft.mul(&gt).unwrap(),
                _ => ft.poisson(&gt).unwrap(),
            };
            prop_assert!(max_diff(&full.with_trunc(tight), &pre.with_trunc(tight)) < 1e-12);
        }
        // Grades only add under mul, so grade-truncation commutes there too
        // (the bracket lowers grade by 2 and is excluded by design).
        let gtight = Truncation { s_max: 12, grade_max: 5 };
        let full = f.mul(&g).unwrap().with_trunc(gtight);
        let pre = f.with_trunc(gtight).mul(&g.with_trunc(gtight)).unwrap().with_trunc(gtight);
        prop_assert!(max_diff(&full, &pre) < 1e-12);
    }

    #[test]
    fn involution_squares_to_identity(f in arb_series(20)) {
        prop_assert!(max_diff(&f.involution().involution(), &f) < 1e-13);
    }
}
