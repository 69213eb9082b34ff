use kamkit::local_ops::*;
use kamkit::series::TruncatedSeries;
use kamkit::{Complex64, Error};
use proptest::prelude::*;
use std::f64::consts::E;

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn poly(cap: usize, r: f64, c: &[f64]) -> TruncatedSeries {
    TruncatedSeries::from_real(cap, r, c)
}

fn field(cap: usize, r: f64, c: &[f64]) -> LocalOperator {
    certify_vector_field(poly(cap, r, c)).unwrap()
}

#[test]
fn submult_midpoint_equality() {
    let r = submult_check(&WeightFunction::width(), 1, 1, &[(0.2, 1.0)]).unwrap();
    assert!(r.holds);
    assert!(r.worst_margin.abs() < 1e-12);
    let w = WeightFunction::width();
    assert!((w.grade(2, 1.0, 0.2) - E * E * 0.16).abs() < 1e-14);
    assert!((w.grade(1, 1.0, 0.6) * w.grade(1, 0.6, 0.2) - E * E * 0.16).abs() < 1e-14);
}

#[test]
fn submult_constant_weight() {
    let w = WeightFunction::new(0.7, 0.0, 0.0, 0).unwrap();
    let grid: Vec<(f64, f64)> = (1..20).map(|i| (i as f64 / 40.0, 0.5 + i as f64 / 40.0)).collect();
    for p in 1..6 {
        for q in 1..6 {
            let r = submult_check(&w, p, q, &grid).unwrap();
            assert!(r.holds, "p = {p}, q = {q}");
            // λ_{p+q}/(λ_p λ_q) = p^p q^q/(p+q)^{p+q}
            let (pf, qf) = (p as f64, q as f64);
            let ratio = w.grade(p + q, 1.0, 0.5) / (w.grade(p, 1.0, 0.7) * w.grade(q, 0.7, 0.5));
            let oracle = pf.powf(pf) * qf.powf(qf) / (pf + qf).powf(pf + qf);
            assert!((ratio - oracle).abs() < 1e-12);
        }
    }
}

#[test]
fn submult_degenerate_and_general() {
    let r = submult_check(&WeightFunction::width(), 2, 2, &[(1.0 - 1e-9, 1.0)]).unwrap();
    assert!(r.holds);
    let w = WeightFunction::new(2.0, 1.0, 0.5, 1).unwrap();
    let grid: Vec<(f64, f64)> = (1..30).flat_map(|i| (1..10).map(move |j| (i as f64 / 31.0 * j as f64 / 10.0, i as f64 / 31.0))).collect();
    for (p, q) in [(1, 1), (1, 3), (2, 5)] {
        assert!(submult_check(&w, p, q, &grid).unwrap().holds);
    }
    assert!(submult_check(&w, 0, 1, &grid).is_err());
}

#[test]
fn vector_field_bounds() {
    let d = field(16, 1.0, &[1.0]);
    assert_eq!(d.norm_bound, 1.0);
    assert_eq!(d.grade, 1);
    let t = 0.6;
    let z2 = field(16, t, &[0.0, 0.0, 1.0]);
    assert!((z2.norm_bound - t * t).abs() < 1e-15);
    let zero = field(16, 1.0, &[]);
    assert_eq!(zero.norm_bound, 0.0);
    assert!(zero.is_null());
    let g = poly(16, 1.0, &[1.0, 2.0, 3.0]);
    assert!(zero.apply(&g, 1.0, 0.5).unwrap().is_zero());
    let fourier = TruncatedSeries::zero_fourier(4, 1.0);
    assert!(certify_vector_field(fourier).is_err());
}

#[test]
fn second_derivative_has_unit_grade_two_norm() {
    let d = field(24, 1.0, &[1.0]);
    let dd = compose(&d, &d).unwrap();
    assert_eq!(dd.grade, 2);
    assert!(dd.norm_bound <= 1.0);
    for n in 0..20usize {
        let mut c = vec![0.0; n + 1];
        c[n] = 1.0;
        let g = poly(24, 1.0, &c);
        for (t, s) in [(1.0, 0.5), (0.8, 0.1), (0.3, 0.29)] {
            assert!(dd.sampled_norm(&g, t, s).unwrap() <= 1.0 + 1e-12);
        }
    }
}

#[test]
fn compose_with_zero_is_zero() {
    let d = field(16, 1.0, &[0.5, 1.0]);
    let z = LocalOperator::zero(1);
    let g = poly(16, 1.0, &[1.0, 1.0, 1.0]);
    for op in [compose(&d, &z).unwrap(), compose(&z, &d).unwrap()] {
        assert!(op.is_null());
        assert_eq!(op.norm_bound, 0.0);
        assert!(op.apply(&g, 1.0, 0.5).unwrap().poly_norm(0.5) == 0.0);
    }
}

#[test]
fn cutoff_weights_refuse_composition() {
    let c = LocalOperator::cutoff(2, 5, CutoffWeight { a: 1.0, b: 1.0 });
    let d = field(16, 1.0, &[1.0]);
    assert!(matches!(compose(&c, &d), Err(Error::Domain(_))));
    assert!(!CutoffWeight { a: 0.0, b: 0.0 }.submultiplicative());
}

#[test]
fn exp_of_zero_is_restriction() {
    let g = poly(16, 1.0, &[1.0, -0.5, 0.25]).with_tail(1e-4, 17);
    let r = exp_apply(&LocalOperator::zero(1), 1.0, 0.5, &g).unwrap();
    assert_eq!(r.series, g.restrict_to(0.5).unwrap());
}

#[test]
fn exp_of_constant_field_is_shift() {
    let g = poly(12, 1.0, &[0.3, -1.0, 0.5, 0.2, -0.1, 0.05]);
    for c in [0.1, -0.25, 0.3] {
        let u = constant_field(re(c), 12, 1.0).unwrap();
        let r = exp_apply(&u, 1.0, 0.6, &g).unwrap();
        let oracle = g.shift(re(c)).unwrap();
        for n in 0..=12 {
            assert!((r.series.c(n) - oracle.c(n)).norm() < 1e-12, "c = {c}, n = {n}");
        }
        assert_eq!(r.series.tail(), 0.0);
    }
}

#[test]
fn exp_of_z_squared_field() {
    // the time-one flow of ż = z² is z/(1−z)
    let cap = 24;
    let u = field(cap, 0.5, &[0.0, 0.0, 1.0]);
    let g = poly(cap, 0.5, &[0.0, 1.0]);
    let r = exp_apply(&u, 0.5, 0.2, &g).unwrap();
    assert_eq!(r.series.c(0), re(0.0));
    for n in 1..=cap {
        assert!((r.series.c(n) - re(1.0)).norm() < 1e-12, "n = {n}");
    }
    // the exact flow's majorant at s lies inside the enclosure
    let s: f64 = 0.2;
    let exact = s / (1.0 - s);
    assert!(exact <= r.series.majorant_norm(s).unwrap() * (1.0 + 1e-12));
}

#[test]
fn borel_domain_boundary() {
    let g = poly(16, 1.0, &[1.0, 1.0]);
    let ok = constant_field(re(0.99 * 0.5), 16, 1.0).unwrap();
    assert!(exp_apply(&ok, 1.0, 0.5, &g).is_ok());
    let bad = constant_field(re(1.01 * 0.5), 16, 1.0).unwrap();
    assert!(matches!(exp_apply(&bad, 1.0, 0.5, &g), Err(Error::OutsideDisc { .. })));
}

#[test]
fn product_of_zero_exponentials() {
    let g = poly(16, 1.0, &[1.0, 2.0, 3.0]);
    let us = vec![LocalOperator::zero(1); 3];
    let p = product_of_exponentials(&us, &[1.0, 0.9, 0.8, 0.7], &g).unwrap();
    assert_eq!(p.sigma, 0.0);
    assert_eq!(p.observed, 0.0);
    assert!(p.holds);
    assert_eq!(p.series.max_coeff_diff(&g.restrict_to(0.7).unwrap()).unwrap(), 0.0);
}

#[test]
fn product_of_two_shifts() {
    let g = poly(12, 1.0, &[0.5, -1.0, 0.25, 0.125]);
    let (c0, c1) = (0.1, -0.05);
    let us = vec![constant_field(re(c0), 12, 1.0).unwrap(), constant_field(re(c1), 12, 1.0).unwrap()];
    let p = product_of_exponentials(&us, &[1.0, 0.8, 0.6], &g).unwrap();
    let oracle = g.shift(re(c0 + c1)).unwrap();
    for n in 0..=12 {
        assert!((p.series.c(n) - oracle.c(n)).norm() < 1e-12);
    }
    assert!((p.sigma - (0.1 / 0.2 + 0.05 / 0.2)).abs() < 1e-12);
    assert!(p.holds);
}

#[test]
fn product_reports_failing_index() {
    let g = poly(12, 1.0, &[1.0, 1.0]);
    let us = vec![constant_field(re(0.01), 12, 1.0).unwrap(), constant_field(re(0.5), 12, 1.0).unwrap()];
    match product_of_exponentials(&us, &[1.0, 0.8, 0.6], &g) {
        Err(Error::Step { index, .. }) => assert_eq!(index, 1),
        other => panic!("expected a step error, got {other:?}"),
    }
    assert!(product_of_exponentials(&us, &[1.0, 0.8], &g).is_err());
    assert!(product_of_exponentials(&us, &[1.0, 0.8, 0.9], &g).is_err());
}

#[test]
fn operator_descriptor_json() {
    let u = field(8, 0.5, &[0.0, 0.0, 1.0]);
    let s = serde_json::to_string(&u).unwrap();
    assert!(s.contains("\"class\":\"vector_field\""));
    let back: LocalOperator = serde_json::from_str(&s).unwrap();
    assert_eq!(back, u);
}

// complex RK4 for ż = a(z), time one
fn flow(a: &[f64], z0: Complex64) -> Complex64 {
    let f = |z: Complex64| a.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c);
    let steps = 400;
    let h = 1.0 / steps as f64;
    let mut z = z0;
    for _ in 0..steps {
        let k1 = f(z);
        let k2 = f(z + k1 * (h / 2.0));
        let k3 = f(z + k2 * (h / 2.0));
        let k4 = f(z + k3 * h);
        z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    z
}

fn coeffs(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

fn radii() -> impl Strategy<Value = (f64, f64)> {
    (0.1f64..1.0, 0.05f64..0.95).prop_map(|(t, u)| (t, t * u))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn vector_field_certificate_is_sound(a in coeffs(4), g in coeffs(10), (t, s) in radii()) {
        let u = field(12, 1.0, &a);
        let gs = poly(12, 1.0, &g);
        let sampled = u.sampled_norm(&gs, t, s).unwrap();
        prop_assert!(sampled <= u.norm_bound * (1.0 + 1e-12) + 1e-300, "{sampled} > {}", u.norm_bound);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn composed_fields_respect_product_bound(a in coeffs(4), b in coeffs(4), g in coeffs(8), (t, s) in radii()) {
        let (u, v) = (field(12, 1.0, &a), field(12, 1.0, &b));
        let vu = compose(&v, &u).unwrap();
        prop_assert!(vu.sampled_norm(&poly(12, 1.0, &g), t, s).unwrap() <= u.norm_bound * v.norm_bound * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn powers_respect_power_bound(a in coeffs(3), g in coeffs(8), n in 1u32..6, (t, s) in radii()) {
        let u = field(16, 1.0, &a);
        let mut p = u.clone();
        for _ in 1..n {
            p = compose(&u, &p).unwrap();
        }
        prop_assert_eq!(p.grade, n);
        let sampled = p.sampled_norm(&poly(16, 1.0, &g), t, s).unwrap();
        prop_assert!(sampled <= u.norm_bound.powi(n as i32) * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn operators_commute_with_restriction(a in coeffs(4), g in coeffs(8), m in 0.3f64..0.7) {
        // chain t > t' > s
        let (t, tp, s) = (1.0, 0.5 + m / 2.0, 0.4 * m);
        let u = field(12, 1.0, &a);
        let gs = poly(12, 1.0, &g);
        let direct = u.apply(&gs, t, s).unwrap();
        let via = u.apply(&gs.restrict_to(tp).unwrap(), tp, s).unwrap();
        prop_assert_eq!(direct.max_coeff_diff(&via).unwrap(), 0.0);
        let later = u.apply(&gs, t, tp).unwrap().restrict_to(s).unwrap();
        prop_assert_eq!(direct.max_coeff_diff(&later).unwrap(), 0.0);
    }

    #[test]
    fn exp_bound(a in coeffs(4), g in coeffs(10), (t, s) in radii(), x in 0.0f64..0.95) {
        let raw = poly(16, 1.0, &a);
        let n = raw.majorant_norm(t).unwrap();
        prop_assume!(n > 0.0);
        let scaled = raw.scale_real(x * (t - s) / n);
        let u = certify_vector_field(scaled).unwrap();
        let gs = poly(16, 1.0, &g);
        let r = exp_apply(&u, t, s, &gs).unwrap();
        let lhs = r.series.majorant_norm(s).unwrap();
        let rhs = gs.majorant_norm(t).unwrap() / (1.0 - r.ratio);
        prop_assert!((r.ratio - x).abs() < 1e-12);
        prop_assert!(lhs <= rhs * (1.0 + 1e-12), "{lhs} > {rhs}");
    }

    #[test]
    fn exp_pair_is_consistent(a in coeffs(3), g in coeffs(8), x in 0.0f64..0.4) {
        let (t, s) = (1.0, 0.5);
        let raw = poly(16, 1.0, &a);
        let n = raw.majorant_norm(t).unwrap();
        prop_assume!(n > 0.0);
        let u = certify_vector_field(raw.scale_real(x * (t - s) / 2.0 / n)).unwrap();
        let rep = exp_pair_check(&u, t, s, &poly(16, 1.0, &g)).unwrap();
        prop_assert!(rep.consistent, "{rep:?}");
    }

    #[test]
    fn phi_bound(a in coeffs(4), g in coeffs(10), x in 0.0f64..0.5) {
        let (t, s) = (1.0, 0.4);
        let raw = poly(16, 1.0, &a);
        let n = raw.majorant_norm(t).unwrap();
        prop_assume!(n > 0.0);
        let u = certify_vector_field(raw.scale_real(x * (t - s) / n)).unwrap();
        let gs = poly(16, 1.0, &g);
        let r = borel_apply(&BorelFn::Phi, &u, t, s, &gs).unwrap();
        let lhs = r.series.majorant_norm(s).unwrap();
        let gt = gs.majorant_norm(t).unwrap();
        prop_assert!(lhs <= (x / (1.0 - x)).powi(2) * gt * (1.0 + 1e-12));
        if x <= 0.29 {
            prop_assert!(lhs <= 2.0 * x * x * gt * (1.0 + 1e-12));
        }
    }

    #[test]
    fn exp_matches_integrated_flow(a in coeffs(4), g in coeffs(4), x in 0.0f64..0.3, zr in -1.0f64..1.0, zi in -1.0f64..1.0) {
        let (t, s) = (1.0, 0.6);
        let raw = poly(48, t, &a);
        let n = raw.majorant_norm(t).unwrap();
        prop_assume!(n > 0.0);
        let k = x * (t - s) / n;
        let field_coeffs: Vec<f64> = a.iter().map(|c| c * k).collect();
        let u = certify_vector_field(raw.scale_real(k)).unwrap();
        let gs = poly(48, t, &g);
        let r = exp_apply(&u, t, s, &gs).unwrap();
        // interior point |z| ≤ s/2
        let z = Complex64::new(zr, zi) * (s / 2.0 / 2f64.sqrt());
        let lhs = r.series.eval(z);
        let rhs = gs.eval(flow(&field_coeffs, z));
        prop_assert!((lhs - rhs).norm() <= 1e-8 + r.series.tail_at(z.norm().max(1e-3).min(s)), "{lhs} vs {rhs}");
    }
}
