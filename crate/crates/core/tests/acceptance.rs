//! Acceptance run: one PASS/FAIL line per criterion.

mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use carnot_core::algebra::{
    builtin, random_graded_automorphism, random_graded_hom, validate_algebra, CarnotAlgebra,
};
use carnot_core::barycenter::{com, DiscreteMeasure};
use carnot_core::exterior::{
    binomial, form_ideal_basis, free_step2_obstruction, GradedForm, StepTwoObstruction,
};
use carnot_core::harness::approx::{run_approximation_experiment, ApproxSetup, CoordinateBump};
use carnot_core::harness::config::GridSpec;
use carnot_core::harness::dcheck::{default_centers, run_exterior_derivative_check, DcheckSetup};
use carnot_core::harness::maps::{hom_from_block, parse_form};
use carnot_core::harness::{run_rigidity_demo, write_csv};
use carnot_core::mollifier::map::{
    constant, contact_scaling, from_hom, vertical_square_perturbation,
};
use carnot_core::mollifier::{mollify_at, MollKernel, SampledMap};
use carnot_core::pansu::{
    distortion, pansu_convergence_probe, pansu_differential, pansu_differential_analytic,
    CoefficientForm,
};
use carnot_core::{GradedHom, GroupPoint, Rational};
use common::*;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = (bool, String);

fn alg(name: &str) -> Arc<CarnotAlgebra> {
    Arc::new(builtin(name).unwrap())
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_measure<R: Rng>(a: &CarnotAlgebra, r: &mut R, len: usize) -> DiscreteMeasure<Rational> {
    let support = (0..len).map(|_| random_point(a, r)).collect();
    let raw = (0..len)
        .map(|_| Rational::new(r.random_range(1..=5).into(), 1.into()))
        .collect();
    DiscreteMeasure::normalized(support, raw).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    for name in ["H1", "H2", "H1xH1", "free(2,3)", "H1C"] {
        let a = alg(name);
        if !validate_algebra(&a.definition()).is_pass() {
            failures.push(format!("{name}: validation"));
        }
        let n = a.dim();
        let e = |i: usize| a.basis_vector::<Rational>(i);
        let br = |x: &carnot_core::AlgebraVector<Rational>,
                  y: &carnot_core::AlgebraVector<Rational>| {
            a.bracket(x, y).unwrap()
        };
        for i in 0..n {
            for j in 0..n {
                let bij = br(&e(i), &e(j));
                if bij != br(&e(j), &e(i)).neg() {
                    failures.push(format!("{name}: antisymmetry ({i},{j})"));
                }
                let w = a.layer_of(i) + a.layer_of(j);
                if bij
                    .coords()
                    .iter()
                    .enumerate()
                    .any(|(k, c)| !c.is_zero() && a.layer_of(k) != w)
                {
                    failures.push(format!("{name}: grading ({i},{j})"));
                }
                for k in 0..n {
                    let jac = br(&e(i), &br(&e(j), &e(k)))
                        .add(&br(&e(j), &br(&e(k), &e(i))))
                        .add(&br(&e(k), &br(&e(i), &e(j))));
                    if !jac.is_zero() {
                        failures.push(format!("{name}: Jacobi ({i},{j},{k})"));
                    }
                }
            }
        }
    }
    let t = start.elapsed();
    (
        failures.is_empty() && t < Duration::from_secs(10),
        format!("{} violations, {:.2?}", failures.len(), t),
    )
}

fn criterion_2() -> Outcome {
    let mut r = rng(2);
    let mut bad = 0;
    let free = FreeEmbedding::new(alg("free(2,3)"));
    for (name, n) in [("H1", Some(1)), ("H2", Some(2)), ("free(2,3)", None)] {
        let a = alg(name);
        for _ in 0..1000 {
            let (x, y) = (random_point(&a, &mut r), random_point(&a, &mut r));
            let got = a.mul(&x, &y).unwrap();
            let want = match n {
                Some(n) => heisenberg_oracle_mul(n, x.coords(), y.coords()),
                None => free.oracle_mul(x.coords(), y.coords()),
            };
            if got.coords() != want.as_slice() {
                bad += 1;
            }
            let z = random_point(&a, &mut r);
            let left = a.mul(&a.mul(&x, &y).unwrap(), &z).unwrap();
            let right = a.mul(&x, &a.mul(&y, &z).unwrap()).unwrap();
            if left != right {
                bad += 1;
            }
        }
    }
    (
        bad == 0,
        format!("{bad} mismatches over 3x1000 pairs and 3x1000 triples"),
    )
}

fn criterion_3() -> Outcome {
    let mut r = rng(3);
    let mut notes = Vec::new();
    let mut ok = true;

    let mut bad = 0;
    for i in 0..200 {
        let a = alg(if i % 2 == 0 { "H1" } else { "H2" });
        let m = random_measure(&a, &mut r, 1 + i % 6);
        let mut mean = vec![Rational::zero(); a.dim()];
        for (x, w) in m.support().iter().zip(m.weights()) {
            for (s, c) in mean.iter_mut().zip(x.coords()) {
                *s += w * c;
            }
        }
        if com(&a, &m).unwrap().coords() != mean.as_slice() {
            bad += 1;
        }
    }
    ok &= bad == 0;
    notes.push(format!("(a) {bad}/200"));

    let mut bad = 0;
    for i in 0..100 {
        let a = alg(if i % 2 == 0 { "free(2,3)" } else { "free(2,4)" });
        let m = random_measure(&a, &mut r, 2 + i % 5);
        let c = com(&a, &m).unwrap();
        let mut res = vec![Rational::zero(); a.dim()];
        for (x, w) in m.support().iter().zip(m.weights()) {
            for (s, v) in res.iter_mut().zip(a.log_based(&c, x).unwrap().coords()) {
                *s += w * v;
            }
        }
        if res.iter().any(|v| !v.is_zero()) {
            bad += 1;
        }
    }
    ok &= bad == 0;
    notes.push(format!("(b) {bad}/100"));

    let a = alg("free(2,3)");
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let len = 2 + i % 6;
        let support: Vec<GroupPoint<f64>> =
            (0..len).map(|_| random_point_f64(&a, &mut r)).collect();
        let raw: Vec<f64> = (0..len).map(|_| r.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let c = com(
            &a,
            &DiscreteMeasure::new(support.clone(), w.clone()).unwrap(),
        )
        .unwrap();
        worst = worst.max(max_diff(c.coords(), &newton_com(&a, &support, &w)));
    }
    ok &= worst <= 1e-10;
    notes.push(format!("(c) {worst:.2e}"));

    let mut bad = [0; 3];
    for i in 0..100 {
        let a = alg(if i % 2 == 0 { "free(2,3)" } else { "H2" });
        let m = random_measure(&a, &mut r, 1 + i % 5);
        let c = com(&a, &m).unwrap();
        let z = random_point(&a, &mut r);
        if com(&a, &m.translate(&a, &z).unwrap()).unwrap() != a.mul(&z, &c).unwrap() {
            bad[0] += 1;
        }
        if com(&a, &m.invert()).unwrap() != a.inv(&c).unwrap() {
            bad[1] += 1;
        }
        let phi = if i % 2 == 0 {
            random_graded_hom(a.clone(), a.clone(), &mut r).unwrap()
        } else {
            random_graded_automorphism(a.clone(), &mut r).unwrap()
        };
        let pushed = com(phi.target(), &m.push_hom(&phi).unwrap()).unwrap();
        if pushed.log() != &phi.apply(c.log()).unwrap() {
            bad[2] += 1;
        }
    }
    ok &= bad == [0; 3];
    notes.push(format!("(d) translation/inversion/hom failures {bad:?}"));
    (ok, notes.join(", "))
}

fn grid5() -> Vec<Vec<f64>> {
    const S: [f64; 5] = [-0.5, -0.25, 0.0, 0.25, 0.5];
    let mut out = Vec::new();
    for x in S {
        for y in S {
            for t in S {
                out.push(vec![x, y, t]);
            }
        }
    }
    out
}

fn criterion_4() -> Outcome {
    let mut r = rng(4);
    let h1 = alg("H1");
    let kernel = MollKernel::default_for(h1.clone()).unwrap();
    let pts = grid5();
    let rho = 0.3;
    let mut worst_fixed: f64 = 0.0;
    let mut worst_coord: f64 = 0.0;
    for tgt in ["H1", "H2"] {
        let t = alg(tgt);
        for _ in 0..20 {
            let f = from_hom(
                &random_graded_hom(h1.clone(), t.clone(), &mut r)
                    .unwrap()
                    .to_f64(),
            );
            for x in &pts {
                let xp = GroupPoint::from_coords(x.clone());
                let fr = mollify_at(&f, &kernel, &xp, rho).unwrap();
                let fx = f.eval(&xp).unwrap();
                worst_fixed = worst_fixed.max(exact_quasi_distance(&t, fr.coords(), fx.coords()));
                worst_coord = worst_coord.max(max_diff(fr.coords(), fx.coords()));
            }
        }
    }

    let f = contact_scaling(h1.clone(), 0.5).unwrap();
    let mut worst_eq: f64 = 0.0;
    let a = GroupPoint::from_coords(vec![0.3, -0.2, 0.1]);
    let b = GroupPoint::from_coords(vec![-0.1, 0.4, -0.3]);
    let translated = f.translated(&a, &b).unwrap();
    let d3 = GradedHom::dilation(h1.clone(), &3.0).unwrap();
    let dilated = f.then_hom(&d3).unwrap();
    for x in pts.iter().step_by(7) {
        let xp = GroupPoint::from_coords(x.clone());
        let lhs = mollify_at(&translated, &kernel, &xp, 1.0).unwrap();
        let inner = mollify_at(&f, &kernel, &h1.mul(&a, &xp).unwrap(), 1.0).unwrap();
        let rhs = h1.mul(&b, &inner).unwrap();
        worst_eq = worst_eq.max(max_diff(lhs.coords(), rhs.coords()));

        let lhs = mollify_at(&dilated, &kernel, &xp, 1.0).unwrap();
        let rhs = d3
            .apply(mollify_at(&f, &kernel, &xp, 1.0).unwrap().log())
            .unwrap();
        worst_eq = worst_eq.max(max_diff(lhs.coords(), rhs.coords()));

        for rho in [0.5, 0.1] {
            let fr = mollify_at(
                &f,
                &kernel,
                &GroupPoint::exp(h1.dilate(&rho, xp.log()).unwrap()),
                rho,
            )
            .unwrap();
            let lhs = h1.dilate(&(1.0 / rho), fr.log()).unwrap();
            let h = f.conjugated_by_dilation(rho).unwrap();
            let rhs = mollify_at(&h, &kernel, &xp, 1.0).unwrap();
            worst_eq = worst_eq.max(max_diff(lhs.coords(), rhs.coords()));
        }
    }

    let c = vec![0.25, -1.5, 2.0];
    let k = constant(h1.clone(), h1.clone(), c.clone());
    let exact = pts.iter().all(|x| {
        [1.0, 0.2].iter().all(|&rho| {
            mollify_at(&k, &kernel, &GroupPoint::from_coords(x.clone()), rho)
                .unwrap()
                .coords()
                == c.as_slice()
        })
    });
    (
        worst_fixed <= 1e-8 && worst_eq <= 1e-8 && exact,
        format!("fixed point {worst_fixed:.2e} (coordinates {worst_coord:.2e}), equivariance {worst_eq:.2e}, constant exact {exact}"),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut failures: Vec<String> = Vec::new();
    for name in ["H1", "H2", "H1C", "R3", "free(2,3)", "free(3,2)", "H1xH1"] {
        let a = alg(name);
        let n = a.dim();
        let nu = a.homogeneous_dim() as i64;
        let idx: Vec<usize> = (0..n).collect();
        for k in 0..=n {
            for mask in 0u64..(1 << n) {
                if mask.count_ones() as usize != k {
                    continue;
                }
                let ind: Vec<usize> = idx
                    .iter()
                    .copied()
                    .filter(|i| mask & (1 << i) != 0)
                    .collect();
                if !GradedForm::<Rational>::monomial(a.clone(), &ind)
                    .d()
                    .d()
                    .is_zero()
                {
                    failures.push(format!("{name}: d² on {ind:?}"));
                }
            }
            let b = form_ideal_basis(&a, k).unwrap();
            let dual = form_ideal_basis(&a, n - k).unwrap();
            if binomial(n, k) - b.ideal.len() != dual.annihilator.len()
                || b.quotient_dim() != dual.annihilator.len()
            {
                failures.push(format!("{name}: duality in degree {k}"));
            }
            for g in &b.annihilator {
                if !g.d().is_zero() {
                    failures.push(format!("{name}: dJ in degree {k}"));
                }
                if g.weight() != Some(n as i64 - k as i64 - nu) {
                    failures.push(format!("{name}: J weight in degree {k}"));
                }
            }
        }
    }
    let h2 = alg("H2");
    let oracle = binomial(5, 2) - rank(&i2_span(&h2));
    let lib = form_ideal_basis(&h2, 2).unwrap().quotient_dim();
    if oracle != 5 || lib != 5 {
        failures.push(format!("H2 quotient: oracle {oracle}, library {lib}"));
    }
    let h1 = alg("H1");
    let i2 = form_ideal_basis(&h1, 2).unwrap();
    if i2.ideal.len() != 3 || free_step2_obstruction(&h1).unwrap() != StepTwoObstruction::Free {
        failures.push("H1: I² = Λ² and free".into());
    }
    let t = start.elapsed();
    (
        failures.is_empty() && t < Duration::from_secs(30),
        format!(
            "{} failures {:?}, H2 Λ²/I² = {lib} (oracle {oracle}), {:.2?}",
            failures.len(),
            failures.first(),
            t
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut r = rng(6);
    let mut worst: f64 = 0.0;
    for name in ["H1", "H2"] {
        let a = alg(name);
        for _ in 0..20 {
            let phi = random_graded_automorphism(a.clone(), &mut r)
                .unwrap()
                .to_f64();
            let f = from_hom(&phi);
            let x = random_point_f64(&a, &mut r);
            let dp = pansu_differential_analytic(&f, &x, 1e-4).unwrap();
            let scale = phi.matrix().max_abs().max(1.0);
            worst = worst.max(dp.matrix().sub(phi.matrix()).max_abs() / scale);
        }
    }
    let h1 = alg("H1");
    let f = vertical_square_perturbation(&GradedHom::identity(h1.clone()), 0.5);
    let probe =
        pansu_convergence_probe(&f, &GroupPoint::identity(3), &[0.4, 0.2, 0.1, 0.05], 2.0).unwrap();
    let monotone = probe.rows.windows(2).all(|w| w[1].1 < w[0].1);
    let mut ks = Vec::new();
    for lambda in [0.5, 1.0, 3.0] {
        let d = from_hom(&GradedHom::dilation(h1.clone(), &lambda).unwrap());
        let dp =
            pansu_differential(&d, &GroupPoint::from_coords(vec![0.1, 0.2, -0.3]), 1e-4).unwrap();
        ks.push(distortion(&dp).k);
    }
    let kexact = ks.iter().all(|k| *k == 1.0);
    (
        worst <= 1e-8 && monotone && probe.exponent >= 0.8 && kexact,
        format!(
            "differential error {worst:.2e}, probe exponent {:.3} monotone {monotone}, K {ks:?}",
            probe.exponent
        ),
    )
}

fn contact_family(h1: &Arc<CarnotAlgebra>) -> SampledMap {
    let rot = hom_from_block(h1.clone(), h1.clone(), &[vec![0.8, -0.6], vec![0.6, 0.8]]).unwrap();
    contact_scaling(h1.clone(), 0.5)
        .unwrap()
        .conjugated_by_hom(&rot)
        .unwrap()
}

fn approx_setup(
    id: &str,
    map: SampledMap,
    omega: &str,
    gamma: &str,
    n: usize,
    rhos: Vec<f64>,
) -> ApproxSetup {
    let a = map.source().clone();
    ApproxSetup {
        id: id.into(),
        omega: CoefficientForm::left_invariant(parse_form(omega, &a).unwrap()).unwrap(),
        gamma: parse_form(gamma, &a).unwrap(),
        map,
        grid: GridSpec {
            lo: vec![-0.5; 3],
            hi: vec![0.5; 3],
            n,
        },
        rhos,
        p: 4.0,
        m: None,
        kernel_nodes: 9,
        omega_continuous: true,
        map_sobolev: true,
        timings: false,
    }
}

fn criterion_7() -> Outcome {
    let h1 = alg("H1");
    let start = Instant::now();
    let rep = run_approximation_experiment(&approx_setup(
        "contact",
        contact_family(&h1),
        "vol",
        "1",
        13,
        vec![0.4, 0.2, 0.1, 0.05],
    ))
    .unwrap();
    let t = start.elapsed();
    let norms: Vec<String> = rep.rows.iter().map(|r| format!("{:.3e}", r.norm)).collect();
    let deficit = run_approximation_experiment(&approx_setup(
        "deficit",
        contact_family(&h1),
        "1,3",
        "3",
        7,
        vec![0.4, 0.2],
    ))
    .unwrap();
    let ok = rep.monotone
        && rep.final_over_initial() <= 0.1
        && t <= Duration::from_secs(300)
        && deficit.deficit
        && deficit.pansu_vanishes();
    (
        ok,
        format!(
            "L1 errors [{}], final/initial {:.3e}, {:.1?}; deficit Pansu side zero {}",
            norms.join(", "),
            rep.final_over_initial(),
            t,
            deficit.pansu_vanishes()
        ),
    )
}

fn criterion_8() -> Outcome {
    let h1 = alg("H1");
    let setup = |map: SampledMap| DcheckSetup {
        id: "dcheck".into(),
        map,
        alpha: GradedForm::monomial(h1.clone(), &[1, 2]),
        coefficient: Some(CoordinateBump::unit(3)),
        beta: GradedForm::scalar(h1.clone(), 1.0),
        centers: default_centers(3),
        half_width: 0.5,
        base: 6,
        levels: 4,
        timings: false,
    };
    let contact = run_exterior_derivative_check(&setup(contact_family(&h1))).unwrap();
    let ratios = contact.ratios();
    let mut r = rng(8);
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        let phi = random_graded_automorphism(h1.clone(), &mut r)
            .unwrap()
            .to_f64();
        let alpha = GradedForm::monomial(h1.clone(), if i % 2 == 0 { &[1, 2] } else { &[0, 2] });
        let rep = run_exterior_derivative_check(&DcheckSetup {
            levels: 2,
            alpha,
            coefficient: None,
            ..setup(from_hom(&phi))
        })
        .unwrap();
        worst = worst.max(rep.rows.iter().map(|x| x.discrepancy).fold(0.0, f64::max));
    }
    (
        ratios.iter().all(|q| *q <= 0.6) && worst <= 1e-9,
        format!(
            "contact ratios {:?}, automorphism max discrepancy {worst:.2e}",
            ratios.iter().map(|q| format!("{q:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut r = rng(9);
    let a = run_rigidity_demo("h1xh1", alg("H1xH1"), 50, 3, &mut r).unwrap();
    let b = run_rigidity_demo("h2xh2", alg("H2xH2"), 20, 3, &mut r).unwrap();
    (
        a.match_rate() == 1.0
            && b.match_rate() == 1.0
            && b.two_forms_available
            && b.two_forms_agree(),
        format!(
            "H1xH1 {:.2}, H2xH2 {:.2}, two-form agreement {}",
            a.match_rate(),
            b.match_rate(),
            b.two_forms_agree()
        ),
    )
}

fn criterion_10() -> Outcome {
    let csv = |seed: u64| {
        let h1 = alg("H1");
        let mut r = rng(seed);
        let phi = random_graded_automorphism(h1.clone(), &mut r)
            .unwrap()
            .to_f64();
        let map = contact_family(&h1).then_hom(&phi).unwrap();
        let mut rows =
            run_approximation_experiment(&approx_setup("det", map, "vol", "1", 5, vec![0.4, 0.2]))
                .unwrap()
                .to_report()
                .rows;
        rows.extend(
            run_rigidity_demo("det", alg("H1xH1"), 5, 3, &mut r)
                .unwrap()
                .to_report()
                .rows,
        );
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        buf
    };
    let (a, b) = (csv(10), csv(10));
    (
        a == b && !a.is_empty(),
        format!("{} bytes, identical {}", a.len(), a == b),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("exact algebra suite", criterion_1),
        ("BCH against matrix oracles", criterion_2),
        ("center of mass", criterion_3),
        ("mollifier", criterion_4),
        ("exterior suite", criterion_5),
        ("Pansu differential", criterion_6),
        ("approximation", criterion_7),
        ("exterior derivative commutation", criterion_8),
        ("rigidity", criterion_9),
        ("determinism", criterion_10),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (ok, detail) = run();
        if !ok {
            failed.push(i + 1);
        }
        println!(
            "criterion {:>2} {}: {name}: {detail}",
            i + 1,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    println!(
        "{} of {} criteria passed; failed: {failed:?}",
        criteria.len() - failed.len(),
        criteria.len()
    );
}
