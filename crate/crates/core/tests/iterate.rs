use kamkit::iterate::*;
use kamkit::sequences::{PositiveSequence, Sign};
use kamkit::series::TruncatedSeries;
use kamkit::trace::Status;
use kamkit::Error;
use proptest::prelude::*;

fn poly(cap: usize, r: f64, c: &[f64]) -> TruncatedSeries {
    TruncatedSeries::from_real(cap, r, c)
}

fn radii(n: usize) -> Vec<f64> {
    (0..=n).map(|k| 0.5 + 0.5 * 0.8f64.powi(k as i32)).collect()
}

#[test]
fn geometric_half_steps() {
    // s_n = s_inf + (s0 - s_inf) q^n
    let s = RadiusSchedule::geometric(0.5, 1.5, 0.5).unwrap();
    for n in 0..30 {
        let half = s.s(n).unwrap() - s.mid(n).unwrap();
        assert!((half - 0.5f64.powi(n as i32 + 1) / 2.0).abs() < 1e-15);
    }
    let s = RadiusSchedule::geometric(0.3, 2.0, 0.25).unwrap();
    for n in 0..30 {
        let half = s.s(n).unwrap() - s.mid(n).unwrap();
        let oracle = (2.0 - 0.25) * (1.0 - 0.3) * 0.3f64.powi(n as i32) / 2.0;
        assert!((half - oracle).abs() < 1e-15);
        assert!(s.s(n + 1).unwrap() < s.s(n).unwrap());
        assert_eq!(s.quarter(n, 2).unwrap(), s.mid(n).unwrap());
    }
    assert_eq!(s.limit().unwrap(), 0.25);
    assert!(RadiusSchedule::geometric(1.0, 1.0, 0.5).is_err());
    assert!(RadiusSchedule::geometric(0.5, 0.5, 0.5).is_err());
}

#[test]
fn rho_driven_schedule() {
    let rho = PositiveSequence::exp_power(Sign::Minus, 1.5).scaled(0.5);
    let s = RadiusSchedule::rho_driven(rho, 1.0).unwrap();
    // ln s_∞ = −Σ (ln 2 + 1.5^n)/2^n
    let oracle: f64 = (0..200).map(|n| -(2f64.ln() + 1.5f64.powi(n)) / 2f64.powi(n)).sum();
    let lim = s.limit().unwrap();
    assert!(lim <= oracle.exp() * (1.0 + 1e-12));
    assert!(lim >= oracle.exp() * (1.0 - 1e-9));
    for n in 0..40 {
        assert!(s.s(n + 1).unwrap() < s.s(n).unwrap());
        assert!(s.s(n).unwrap() >= lim);
    }
    // ρ_0 = 1 does not shrink the radius
    assert!(RadiusSchedule::rho_driven(PositiveSequence::geometric(0.5), 1.0).is_err());
    // ρ_n = e^{−2^n} has no positive limit
    assert!(RadiusSchedule::rho_driven(PositiveSequence::exp_power(Sign::Minus, 2.0), 1.0).is_err());
}

#[test]
fn contraction_by_one_half() {
    let x0 = poly(8, 1.0, &[1.0, 0.5, 0.25]);
    let r = relative_contraction(|_, x, _, s| Ok(x.restrict_to(s)?.scale_real(0.5)), &PositiveSequence::constant(0.5), &x0, &radii(20)).unwrap();
    assert!(r.hypotheses_hold);
    assert_eq!(r.trace.status, Status::Certified);
    let d: Vec<f64> = r.trace.steps.iter().map(|s| s.delta_norm.unwrap()).collect();
    for w in d.windows(2) {
        assert!(w[1] <= 0.5 * w[0] * (1.0 + 1e-12));
    }
    assert!((r.product - 0.5f64.powi(19)).abs() < 1e-18);
}

#[test]
fn contraction_by_one_is_not_certified() {
    let x0 = poly(8, 1.0, &[1.0, 0.5]);
    let step = |_: usize, x: &TruncatedSeries, _: f64, s: f64| x.restrict_to(s)?.add(&poly(8, s, &[0.1]));
    let r = relative_contraction(step, &PositiveSequence::constant(1.0), &x0, &radii(10)).unwrap();
    assert!(!r.hypotheses_hold);
    assert_eq!(r.trace.status, Status::Uncertified);
}

#[test]
fn increasing_lambda_is_refused() {
    // λ_n = n/(n+1) has vanishing products but is not decreasing
    let lam = PositiveSequence::tabulated((0..40).map(|n| (n as f64 + 1e-300) / (n as f64 + 1.0)).collect());
    let x0 = poly(8, 1.0, &[1.0]);
    let step = |n: usize, x: &TruncatedSeries, _: f64, s: f64| Ok(x.restrict_to(s)?.scale_real((n as f64 + 1.0) / (n as f64 + 2.0)));
    let r = relative_contraction(step, &lam, &x0, &radii(20)).unwrap();
    assert!(!r.hypotheses_hold);
    assert!((r.product - 1.0 / 20.0).abs() < 1e-12);
    assert_ne!(r.trace.status, Status::Certified);
    assert!(r.trace.notes.iter().any(|n| n.contains("non-increasing")));
}

#[test]
fn contraction_needs_two_steps() {
    let x0 = poly(4, 1.0, &[1.0]);
    let r = relative_contraction(|_, x, _, _| Ok(x.clone()), &PositiveSequence::constant(0.5), &x0, &[1.0, 0.9]);
    assert!(matches!(r, Err(Error::Input(_))));
}

#[test]
fn majorized_square() {
    let half_square = |x: &TruncatedSeries| Ok(x.multiply(x)?.scale_real(0.5));
    let x0 = poly(32, 1.0, &[0.3, 0.4, 0.2]);
    let y0 = x0.majorant_norm(1.0).unwrap();
    assert!(y0 <= 1.0);
    let tr = majorized_iteration(half_square, |y| y * y / 2.0, &x0, y0, 1.0, 8).unwrap();
    assert_eq!(tr.status, Status::Certified);
    for rec in &tr.steps {
        assert!(rec.r_norm.unwrap() <= rec.b_n.unwrap() * (1.0 + 1e-12));
    }
}

#[test]
fn majorized_zero() {
    let x0 = TruncatedSeries::zero(1, 8, 1.0);
    let tr = majorized_iteration(|x| Ok(x.multiply(x)?.scale_real(0.5)), |y| y * y / 2.0, &x0, 0.0, 1.0, 5).unwrap();
    assert!(tr.steps.iter().all(|r| r.r_norm == Some(0.0)));
    assert_eq!(tr.status, Status::Certified);
}

#[test]
fn majorized_fixed_point_is_bounded_only() {
    let x0 = poly(8, 1.0, &[0.5, 0.5]);
    let tr = majorized_iteration(|x| Ok(x.scale_real(0.5)), |y| (y + 1.0) / 2.0, &x0, 1.0, 1.0, 10).unwrap();
    assert_eq!(tr.status, Status::BoundedOnly);
}

#[test]
fn majorized_violation_names_step() {
    let x0 = poly(8, 1.0, &[0.5]);
    let tr = majorized_iteration(|x| Ok(x.scale_real(2.0)), |y| y / 2.0, &x0, 0.5, 1.0, 5).unwrap();
    assert_eq!(tr.status, Status::Uncertified);
    assert_eq!(tr.first_failure(), Some(0));
    assert!(tr.notes.iter().any(|n| n.contains("step 0")));
}

#[test]
fn newton_sqrt_two() {
    let r = newton(|x| x * x, |x| 2.0 * x, 1.5, 2.0, 1.0 / (2.0 * 2f64.sqrt()), 2.0, 3).unwrap();
    // x_1 = 17/12, x_2 = 577/408, x_3 = 665857/470832
    assert!((r.root - 665857.0 / 470832.0).abs() < 1e-15);
    assert!((r.root - 1.4142135623746899).abs() < 1e-15);
    let r = newton(|x| x * x, |x| 2.0 * x, 1.5, 2.0, 1.0 / (2.0 * 2f64.sqrt()), 2.0, 8).unwrap();
    assert!((r.root - 2f64.sqrt()).abs() < 1e-15);
    assert_eq!(r.trace.status, Status::Certified);
}

#[test]
fn newton_linear_one_step() {
    let r = newton(|x| x, |_| 1.0, 0.0, 0.3, 1.0, 0.0, 5).unwrap();
    assert_eq!(r.root, 0.3);
    assert_eq!(r.trace.len(), 2);
}

#[test]
fn newton_quadratic_ratios() {
    let (m, big_m) = (1.0 / (1.0 - 2.0 * 0.25), 2.0);
    let r = newton(|x| x + x * x, |x| 1.0 + 2.0 * x, 0.0, 0.1, m, big_m, 10).unwrap();
    assert_eq!(r.c, 2.0);
    assert!(r.gate);
    let oracle = (-1.0 + (1.0f64 + 0.4).sqrt()) / 2.0;
    assert!((r.root - oracle).abs() < 1e-15);
    for rec in &r.trace.steps {
        if let Some(q) = rec.ratio {
            assert!(q <= r.c + 1e-9);
        }
    }
    assert_eq!(r.trace.status, Status::Certified);
}

#[test]
fn newton_singular_derivative() {
    let r = newton(|x| x * x, |x| 2.0 * x, 0.0, 1.0, 1.0, 2.0, 5);
    assert!(matches!(r, Err(Error::Step { index: 0, .. })));
}

fn nm_y(c: &[f64]) -> TruncatedSeries {
    poly(24, 1.0, c)
}

fn nm_schedule() -> RadiusSchedule {
    RadiusSchedule::geometric(0.5, 1.0, 0.5).unwrap()
}

// u = y − u² iterated on plain coefficient vectors
fn fixed_point_oracle(y: &[f64], cap: usize) -> Vec<f64> {
    let mut u = vec![0.0; cap + 1];
    for _ in 0..100 {
        let mut next = vec![0.0; cap + 1];
        for (i, c) in y.iter().enumerate() {
            next[i] += c;
        }
        for i in 0..=cap {
            for j in 0..=cap - i {
                next[i + j] -= u[i] * u[j];
            }
        }
        u = next;
    }
    u
}

#[test]
fn nash_moser_quadratic() {
    let yc = [0.005, 0.003, 0.002];
    let y = nm_y(&yc);
    assert!((y.majorant_norm(1.0).unwrap() - 0.01).abs() < 1e-15);
    let p = QuadraticProblem { cap: 24 };
    let r = nash_moser(&p, &nm_schedule(), &TruncatedSeries::zero(1, 24, 1.0), &y, 6).unwrap();
    assert!(r.trace.len() <= 6);
    assert!(r.final_residual < 1e-10, "residual {}", r.final_residual);
    assert_eq!(r.s_inf, 0.5);
    assert!(r.gate_passed);
    assert_eq!(r.trace.status, Status::Certified);
    let oracle = fixed_point_oracle(&yc, 24);
    let x = r.solution.unwrap();
    for n in 0..=24 {
        assert!((x.c(n).re - oracle[n]).abs() < 1e-12, "n = {n}");
    }
}

#[test]
fn nash_moser_increments_follow_the_model() {
    let y = nm_y(&[0.005, 0.003, 0.002]);
    let r = nash_moser(&QuadraticProblem { cap: 24 }, &nm_schedule(), &TruncatedSeries::zero(1, 24, 1.0), &y, 8).unwrap();
    let d: Vec<f64> = r.trace.steps.iter().map(|s| s.delta_norm.unwrap()).collect();
    // |Δ_n| ≤ (a_0^{1/2} a_1^{1/4} ⋯ a_{n−1}^{1/2^n} |Δ_0|)^{2^n}
    let mut log_base = d[0].ln();
    for n in 1..d.len() {
        log_base += r.a.ln(n - 1).unwrap() / 2f64.powi(n as i32);
        let model = 2f64.powi(n as i32) * log_base;
        if r.trace.steps[n].b_n.is_some() {
            assert!(d[n].ln() <= model + 1e-9, "n = {n}");
        }
    }
}

#[test]
fn nash_moser_zero_data() {
    let y = TruncatedSeries::zero(1, 24, 1.0);
    let r = nash_moser(&QuadraticProblem { cap: 24 }, &nm_schedule(), &y, &y, 6).unwrap();
    assert!(r.solution.unwrap().is_zero());
    assert_eq!(r.final_residual, 0.0);
}

#[test]
fn nash_moser_gate_refuses_large_data() {
    let y = nm_y(&[0.2, 0.1]);
    let r = nash_moser(&QuadraticProblem { cap: 24 }, &nm_schedule(), &TruncatedSeries::zero(1, 24, 1.0), &y, 10).unwrap();
    assert!(!r.gate_passed);
    assert!(r.initial_increment > r.gate_threshold);
    assert_ne!(r.trace.status, Status::Certified);
    // the Bruno constant of a_n = M q^{-αn} from the transform
    assert!(r.bruno_constant > 0.0 && r.bruno_constant <= r.gate_threshold);
}

#[test]
fn nash_moser_needs_geometric_schedule() {
    let rho = RadiusSchedule::rho_driven(PositiveSequence::exp_power(Sign::Minus, 1.5).scaled(0.5), 1.0).unwrap();
    let y = nm_y(&[0.01]);
    let r = nash_moser(&QuadraticProblem { cap: 24 }, &rho, &TruncatedSeries::zero(1, 24, 1.0), &y, 3);
    assert!(matches!(r, Err(Error::Input(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn newton_ratios_never_exceed_c(c in -2.0f64..2.0, y in -0.05f64..0.05) {
        // f(x) = x + c x² on |x| ≤ 0.1
        let r0 = 0.1;
        prop_assume!(2.0 * c.abs() * r0 < 0.9);
        let m = 1.0 / (1.0 - 2.0 * c.abs() * r0);
        let big_m = 2.0 * c.abs();
        let rep = newton(|x| x + c * x * x, |x| 1.0 + 2.0 * c * x, 0.0, y, m, big_m, 12).unwrap();
        for rec in &rep.trace.steps {
            if let Some(q) = rec.ratio {
                prop_assert!(q <= rep.c + 1e-9, "ratio {q} > {}", rep.c);
            }
        }
        prop_assert!((rep.root + c * rep.root * rep.root - y).abs() < 1e-15);
    }
}
