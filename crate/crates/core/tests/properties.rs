use std::sync::Arc;

use carnot_core::algebra::{builtin, free_nilpotent};
use carnot_core::barycenter::{com, DiscreteMeasure};
use carnot_core::exterior::GradedForm;
use carnot_core::{rat, CarnotAlgebra, GroupPoint, Rational};
use proptest::prelude::*;

fn algebras() -> Vec<Arc<CarnotAlgebra>> {
    vec![
        Arc::new(builtin("H1").unwrap()),
        Arc::new(builtin("H2").unwrap()),
        Arc::new(free_nilpotent(2, 3).unwrap()),
        Arc::new(free_nilpotent(2, 4).unwrap()),
    ]
}

fn point(alg: &CarnotAlgebra, raw: &[(i64, i64)]) -> GroupPoint<Rational> {
    GroupPoint::from_coords(
        raw.iter()
            .cycle()
            .take(alg.dim())
            .map(|&(n, d)| rat(n, d))
            .collect(),
    )
}

fn raw_coords() -> impl Strategy<Value = Vec<(i64, i64)>> {
    prop::collection::vec((-6i64..=6, 1i64..=4), 8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn group_law(which in 0usize..4, a in raw_coords(), b in raw_coords(), c in raw_coords()) {
        let alg = &algebras()[which];
        let (x, y, z) = (point(alg, &a), point(alg, &b), point(alg, &c));
        let xy_z = alg.mul(&alg.mul(&x, &y).unwrap(), &z).unwrap();
        let x_yz = alg.mul(&x, &alg.mul(&y, &z).unwrap()).unwrap();
        prop_assert_eq!(xy_z, x_yz);
        let e = alg.mul(&x, &alg.inv(&x).unwrap()).unwrap();
        prop_assert!(e.is_identity());
    }

    #[test]
    fn dilations_are_automorphisms(which in 0usize..4, a in raw_coords(), b in raw_coords(), n in 1i64..5, d in 1i64..5) {
        let alg = &algebras()[which];
        let r = rat(n, d);
        let dil = |p: &GroupPoint<Rational>| GroupPoint::exp(alg.dilate(&r, p.log()).unwrap());
        let (x, y) = (point(alg, &a), point(alg, &b));
        prop_assert_eq!(dil(&alg.mul(&x, &y).unwrap()), alg.mul(&dil(&x), &dil(&y)).unwrap());
    }

    #[test]
    fn com_of_dirac_and_of_a_pair(which in 0usize..4, a in raw_coords(), b in raw_coords()) {
        let alg = &algebras()[which];
        let x = point(alg, &a);
        prop_assert_eq!(com(alg, &DiscreteMeasure::dirac(x.clone())).unwrap(), x.clone());
        // The midpoint of x and x·exp(v) is x·exp(v/2).
        let v = point(alg, &b);
        let half = GroupPoint::exp(v.log().scale(&rat(1, 2)));
        let m = DiscreteMeasure::uniform(vec![x.clone(), alg.mul(&x, &v).unwrap()]).unwrap();
        prop_assert_eq!(com(alg, &m).unwrap(), alg.mul(&x, &half).unwrap());
    }

    #[test]
    fn d_squared_vanishes(which in 0usize..4, k in 0usize..4, coeffs in prop::collection::vec(-3i64..=3, 1..6), idx in prop::collection::vec(any::<u32>(), 1..6)) {
        let alg = algebras()[which].clone();
        let n = alg.dim();
        let k = k.min(n);
        let mut form = GradedForm::<Rational>::zero(alg.clone(), k);
        for (c, seed) in coeffs.iter().zip(&idx) {
            let mut ind: Vec<usize> = (0..n).collect();
            let mut s = *seed as usize;
            for i in (1..n).rev() {
                ind.swap(i, s % (i + 1));
                s /= i + 1;
            }
            ind.truncate(k);
            ind.sort_unstable();
            form = form.add(&GradedForm::from_terms(alg.clone(), k, &[(ind, rat(*c, 1))]));
        }
        prop_assert!(form.d().d().is_zero());
    }

    #[test]
    fn wedge_is_graded_commutative_and_d_is_a_derivation(which in 0usize..4, i in 0usize..12, j in 0usize..12, l in 0usize..12) {
        let alg = algebras()[which].clone();
        let n = alg.dim();
        let a = GradedForm::<Rational>::theta(alg.clone(), i % n);
        let b = GradedForm::theta(alg.clone(), j % n).wedge(&GradedForm::theta(alg.clone(), l % n)).unwrap();
        let ab = a.wedge(&b).unwrap();
        prop_assert_eq!(ab.clone(), b.wedge(&a).unwrap());
        let rhs = a.d().wedge(&b).unwrap().sub(&a.wedge(&b.d()).unwrap());
        prop_assert_eq!(ab.d(), rhs);
    }
}
