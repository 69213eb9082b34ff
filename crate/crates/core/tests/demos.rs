use kamkit::demos::*;
use kamkit::iterate::RadiusSchedule;
use kamkit::lie::{lie_step, ActionProblem, LieState};
use kamkit::series::TruncatedSeries;
use kamkit::trace::Status;
use kamkit::Complex64;

fn all_passed(rep: &DemoReport) -> bool {
    rep.checks.iter().all(|c| c.passed)
}

#[test]
fn morse_default() {
    let rep = demo_morse(&MorseParams::default()).unwrap();
    assert_eq!(rep.status, Status::Certified, "{:?}", rep.checks);
    assert!(rep.summary["residual"] <= 1e-8);
    for (n, want) in [3, 4, 6, 10, 18].iter().enumerate() {
        assert!(rep.orders[n] >= *want, "orders {:?}", rep.orders);
    }
    assert_eq!(rep.trace.len(), 9);
}

#[test]
fn morse_zero_is_identity() {
    let rep = demo_morse(&MorseParams { eps: 0.0, ..Default::default() }).unwrap();
    assert!(all_passed(&rep));
    assert_eq!(rep.summary["residual"], 0.0);
    assert_eq!(rep.summary["identity_defect"], 0.0);
    assert_eq!(rep.summary["sigma"], 0.0);
}

#[test]
fn morse_mixed_perturbation() {
    let rep = demo_morse(&MorseParams { mixed: true, ..Default::default() }).unwrap();
    assert_eq!(rep.status, Status::Certified, "{:?}", rep.checks);
    assert!(rep.summary["residual"] <= 1e-8);
}

#[test]
fn morse_bad_input() {
    assert!(demo_morse(&MorseParams { eps: -1.0, ..Default::default() }).is_err());
    assert!(demo_morse(&MorseParams { eps: f64::NAN, ..Default::default() }).is_err());
    assert!(demo_morse(&MorseParams { t: 0.0, ..Default::default() }).is_err());
}

#[test]
fn mather_default() {
    let rep = demo_mather(&MatherParams::default()).unwrap();
    assert_eq!(rep.status, Status::Certified, "{:?}", rep.checks);
    assert!(rep.summary["residual"] <= 1e-8);
    assert!(rep.check("membership").unwrap().passed);
    // order 7 = 3 + 2² sits in the level-1 space
    assert_eq!(rep.summary["n_offset"], 1.0);
}

#[test]
fn mather_zero_is_identity() {
    let rep = demo_mather(&MatherParams { r: vec![], ..Default::default() }).unwrap();
    assert!(all_passed(&rep));
    assert_eq!(rep.summary["residual"], 0.0);
}

#[test]
fn mather_quintic() {
    let mut r = vec![0.0; 10];
    r[9] = 1e-4;
    let p = MatherParams { f: vec![0.0, 0.0, 0.0, 1.0, 0.0, 1.0], r, ..Default::default() };
    let rep = demo_mather(&p).unwrap();
    assert_eq!(rep.status, Status::Certified, "{:?}", rep.checks);
    assert!(rep.summary["residual"] <= 1e-8);
}

#[test]
fn mather_low_order_perturbation_is_refused() {
    let p = MatherParams { r: vec![0.0, 0.0, 0.0, 0.0, 1e-4], ..Default::default() };
    assert!(demo_mather(&p).is_err());
}

#[test]
fn circle_default() {
    let rep = demo_circle(&CircleParams::default()).unwrap();
    assert_eq!(rep.status, Status::Certified, "{:?}", rep.checks);
    assert!(rep.summary["remainder"] <= 1e-8);
    // at k = 1 the golden mean meets C = 1/(1+ω) with equality
    assert!(rep.divisors.iter().all(|d| d.passed && d.distance >= d.bound * (1.0 - 1e-12)));
    // modes up to 2⁷ are used in 8 steps
    assert_eq!(rep.divisors.len(), 64);
    assert!(rep.summary["lambda_re"].abs() < 1e-3);
}

#[test]
fn circle_zero_is_identity() {
    let rep = demo_circle(&CircleParams { eps: 0.0, ..Default::default() }).unwrap();
    assert!(all_passed(&rep));
    assert_eq!(rep.summary["remainder"], 0.0);
    assert_eq!(rep.summary["lambda_re"], 0.0);
}

#[test]
fn circle_single_mode() {
    let rep = demo_circle(&CircleParams { single_mode: true, ..Default::default() }).unwrap();
    assert_eq!(rep.status, Status::Certified, "{:?}", rep.checks);
}

#[test]
fn circle_single_mode_first_step() {
    let omega = golden_mean();
    let eps = 1e-3;
    let p = ActionProblem::circle(omega, 1.0 / (1.0 + omega), 1.0, 32, 0.5).unwrap();
    let sched = RadiusSchedule::geometric(0.5, 0.5, 0.2).unwrap();
    let r0 = TruncatedSeries::from_fourier(32, 0.5, &[(1, Complex64::new(eps, 0.0))]);
    let st = LieState::initial(&p, &r0, 0.5).unwrap();
    let out = lie_step(&st, &p, &sched).unwrap();
    // v₁ = ε/(iω)
    let v1 = Complex64::new(eps, 0.0) / Complex64::new(0.0, omega);
    assert!((out.field.mode(1) - v1).norm() < 1e-18);
    assert!(out.field.mode(-1).norm() == 0.0);
    // the remainder is φ(u)τ only, within the quadratic φ bound; a single
    // mode commutes with its own bracket so the second-order term vanishes
    let x = out.ratio;
    assert!(x > 0.0 && x <= 0.5);
    assert!(out.next.r_norm <= 2.0 * x * x * omega * (1.0 + 1e-12));
    assert!(out.next.r_norm <= 1e-20);
}

#[test]
fn nashmoser_default() {
    let rep = demo_nashmoser(&NashMoserParams::default()).unwrap();
    assert_eq!(rep.status, Status::Certified);
    assert!(rep.summary["final_residual"] <= NASH_MOSER_TARGET);
    let big = demo_nashmoser(&NashMoserParams { y: vec![0.2, 0.1], ..Default::default() }).unwrap();
    assert!(!big.check("gate").unwrap().passed);
    assert_ne!(big.status, Status::Certified);
}

#[test]
fn presets_by_name() {
    for name in ["morse", "mather", "circle", "nashmoser", "nashmoser_quadratic"] {
        assert!(DemoSpec::by_name(name).is_ok());
    }
    assert!(DemoSpec::by_name("torus").is_err());
}

#[test]
fn demo_config_json_round_trip() {
    let spec: DemoSpec = serde_json::from_str(r#"{"demo":"morse","eps":0.0005,"steps":6}"#).unwrap();
    match &spec {
        DemoSpec::Morse(p) => {
            assert_eq!(p.eps, 5e-4);
            assert_eq!(p.steps, 6);
            assert_eq!(p.t, 1.0);
        }
        other => panic!("{other:?}"),
    }
    assert!(serde_json::from_str::<DemoSpec>(r#"{"demo":"morse","epsilon":1}"#).is_err());
    assert!(serde_json::from_str::<DemoSpec>(r#"{"demo":"torus"}"#).is_err());
}

#[test]
fn reports_are_deterministic() {
    for name in ["morse", "mather", "circle", "nashmoser"] {
        let spec = DemoSpec::by_name(name).unwrap();
        let a = spec.run().unwrap().to_json().unwrap();
        let b = spec.run().unwrap().to_json().unwrap();
        assert_eq!(a, b, "{name}");
        let back: DemoReport = serde_json::from_str(&a).unwrap();
        assert_eq!(back.to_json().unwrap(), a);
    }
}
