//! Randomized property suite run by `kamkit verify`. Every property draws
//! from its own ChaCha stream so the suite is reproducible from one seed.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::demos::{self, DemoSpec, NashMoserParams};
use crate::error::Result;
use crate::iterate::newton;
use crate::lie::InvolutiveQuasiInverse;
use crate::local_ops::{certify_vector_field, constant_field, exp_apply, product_of_exponentials};
use crate::sequences::{bruno_transform, model_iteration, transform_recursion_defect, PositiveSequence, Sign};
use crate::series::{multi_indices, TruncatedSeries};

pub const DEFAULT_SEED: u64 = 20_240_917;

/// Relative slack for inequalities evaluated in floating point.
const SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub name: String,
    pub cases: usize,
    pub violations: usize,
    /// largest lhs/rhs ratio, or largest defect for identities
    pub worst: f64,
    pub passed: bool,
    pub detail: String,
}

impl PropertyResult {
    fn new(name: &str, cases: usize, violations: usize, worst: f64, detail: String) -> Self {
        PropertyResult { name: name.into(), cases, violations, worst, passed: violations == 0 && cases > 0, detail }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub properties: Vec<PropertyResult>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn get(&self, name: &str) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| p.name == name)
    }
}

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn complex(rng: &mut ChaCha8Rng, scale: f64) -> Complex64 {
    Complex64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale))
}

/// Random univariate Taylor series: coefficients up to `degree`, optional tail
/// beyond the cap.
pub fn random_series(rng: &mut ChaCha8Rng, cap: usize, degree: usize, r: f64, with_tail: bool) -> TruncatedSeries {
    let coeffs: Vec<Complex64> = (0..=degree.min(cap)).map(|_| complex(rng, 1.0)).collect();
    let f = TruncatedSeries::from_complex(cap, r, &coeffs);
    if with_tail && rng.random_bool(0.5) {
        f.with_tail(rng.random_range(0.0..0.2), cap + 1)
    } else {
        f
    }
}

/// Random increasing family with a ≥ 1 and a closed-form log tail.
pub fn random_bruno_family(rng: &mut ChaCha8Rng) -> PositiveSequence {
    let mut factors = Vec::new();
    for _ in 0..rng.random_range(1..=3) {
        factors.push(match rng.random_range(0..3) {
            0 => PositiveSequence::geometric(rng.random_range(1.0..5.0)),
            1 => PositiveSequence::exp_power(Sign::Plus, rng.random_range(1.01..1.9)),
            _ => PositiveSequence::constant(rng.random_range(1.0..4.0)),
        });
    }
    if factors.len() == 1 {
        factors.pop().expect("one factor")
    } else {
        PositiveSequence::Product { factors }
    }
}

/// Tame pair built by b_{n+1} = a_n b_n² f_n with f_n ∈ [1, 2], b_0 small
/// enough that b stays below 1.
pub fn random_tame_pair(rng: &mut ChaCha8Rng, len: usize) -> (PositiveSequence, PositiveSequence) {
    let q: f64 = rng.random_range(1.0..4.0);
    let a = PositiveSequence::geometric(q);
    let mut lb = vec![-(q.ln() + 2f64.ln()) - rng.random_range(0.1..3.0)];
    for n in 0..len {
        let next = n as f64 * q.ln() + 2.0 * lb[n] + rng.random_range(0.0..2f64.ln());
        lb.push(next);
    }
    (a, PositiveSequence::log_tabulated(lb))
}

pub fn bruno_recursion(seed: u64, families: usize, n_max: usize) -> Result<PropertyResult> {
    let mut rng = rng_for(seed, 1);
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..families {
        let a = random_bruno_family(&mut rng);
        for n in 0..=n_max {
            let (defect, width) = transform_recursion_defect(&a, n, crate::sequences::TRANSFORM_DEPTH)?;
            if defect > width {
                violations += 1;
            }
            if width > 0.0 {
                worst = worst.max(defect / width);
            }
        }
    }
    Ok(PropertyResult::new(
        "bruno_recursion",
        families * (n_max + 1),
        violations,
        worst,
        format!("{families} families, n ≤ {n_max}, defect/width at most {worst:.3e}"),
    ))
}

pub fn bruno_geometric_q3() -> Result<PropertyResult> {
    let t = bruno_transform(&PositiveSequence::geometric(3.0), 0, crate::sequences::TRANSFORM_DEPTH)?;
    let err = (t.value - 1.0 / 3.0).abs().max((t.lower - 1.0 / 3.0).abs());
    Ok(PropertyResult::new(
        "bruno_geometric_q3",
        1,
        usize::from(err > 1e-10),
        err,
        format!("a^pi_0 in [{:.17}, {:.17}]", t.lower, t.value),
    ))
}

pub fn tame_model(seed: u64, pairs: usize, steps: usize) -> Result<PropertyResult> {
    let mut rng = rng_for(seed, 2);
    let mut violations = 0;
    let mut uncertified = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..pairs {
        let (a, b) = random_tame_pair(&mut rng, steps);
        let x0 = b.value(0)? * rng.random_range(0.0..1.0);
        let trace = model_iteration(&a, &b, x0, steps)?;
        violations += trace.steps.iter().filter(|s| !s.checks_passed).count();
        if !trace.status.is_certified() {
            uncertified += 1;
        }
        for s in &trace.steps {
            if let (Some(lr), Some(lb)) = (s.log_r, s.log_b) {
                worst = worst.max(lr - lb);
            }
        }
    }
    Ok(PropertyResult::new(
        "tame_model",
        pairs,
        violations + uncertified,
        worst,
        format!("{pairs} pairs over {steps} steps, max ln(x_n/b_n) = {worst:.3}"),
    ))
}

fn radius_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let t = rng.random_range(0.05..1.0);
    let s = t * rng.random_range(0.01..0.99);
    (t, s)
}

pub fn cauchy_nagumo(seed: u64, cases: usize) -> Result<PropertyResult> {
    let mut rng = rng_for(seed, 3);
    let (mut violations, mut worst) = (0, 0.0f64);
    for _ in 0..cases {
        let f = random_series(&mut rng, 12, 12, 1.0, true);
        let (t, s) = radius_pair(&mut rng);
        let lhs = f.restrict_to(t)?.derivative_to(0, s)?.majorant_norm(s)?;
        let rhs = f.majorant_norm(t)? / (t - s);
        if lhs > rhs * (1.0 + SLACK) {
            violations += 1;
        }
        worst = worst.max(lhs / rhs);
    }
    Ok(PropertyResult::new("cauchy_nagumo", cases, violations, worst, format!("|f'|_s (t-s)/|f|_t ≤ {worst:.6}")))
}

pub fn division_by_z(seed: u64, cases: usize) -> Result<PropertyResult> {
    let mut rng = rng_for(seed, 4);
    let (mut violations, mut worst) = (0, 0.0f64);
    for _ in 0..cases {
        let mut f = random_series(&mut rng, 12, 12, 1.0, true);
        f.set_coeff(&[0], Complex64::default());
        let t = rng.random_range(0.05..1.0);
        let ft = f.restrict_to(t)?;
        let lhs = ft.divide_by_coordinate(0, 0.0)?.majorant_norm(t)?;
        let rhs = ft.majorant_norm(t)? / t;
        if lhs > rhs * (1.0 + SLACK) {
            violations += 1;
        }
        if rhs > 0.0 {
            worst = worst.max(lhs / rhs);
        }
    }
    Ok(PropertyResult::new("division_by_z", cases, violations, worst, format!("t|f/z|_t/|f|_t ≤ {worst:.6}")))
}

pub fn arnold_moser(seed: u64, cases: usize) -> Result<PropertyResult> {
    let mut rng = rng_for(seed, 5);
    let (mut violations, mut worst) = (0, 0.0f64);
    let cap = 8;
    for _ in 0..cases {
        let d = rng.random_range(1..=3);
        let mut f = TruncatedSeries::zero(d, cap, 1.0);
        for idx in multi_indices(d, cap) {
            f.set_coeff(&idx, complex(&mut rng, 1.0));
        }
        let n = rng.random_range(0..=cap);
        let (t, s) = radius_pair(&mut rng);
        let high = f.cutoff(n, cap + 1)?;
        let lhs = high.restrict_to(s)?.hilbert_norm(s)?;
        let rhs = (s / t).powi((d + n) as i32) * high.restrict_to(t)?.hilbert_norm(t)?;
        if lhs > rhs * (1.0 + SLACK) {
            violations += 1;
        }
        if rhs > 0.0 {
            worst = worst.max(lhs / rhs);
        }
    }
    Ok(PropertyResult::new("arnold_moser", cases, violations, worst, format!("d ≤ 3, ratio to (s/t)^(d+N) ≤ {worst:.6}")))
}

pub fn shift_agreement(seed: u64, cases: usize) -> Result<PropertyResult> {
    let mut rng = rng_for(seed, 6);
    let (mut violations, mut worst) = (0, 0.0f64);
    let (t, s) = (1.0, 0.4);
    for _ in 0..cases {
        let deg = rng.random_range(0..=8);
        let f = random_series(&mut rng, 16, deg, t, false);
        let c = Complex64::from_polar(rng.random_range(0.0..0.99) * (t - s), rng.random_range(0.0..std::f64::consts::TAU));
        let e = exp_apply(&constant_field(c, 16, t)?, t, s, &f)?.series;
        let oracle = f.shift(c)?;
        let defect = (0..=16).map(|n| (e.c(n) - oracle.c(n)).norm()).fold(0.0, f64::max);
        let scale = f.norm().max(1.0);
        if defect > 1e-12 * scale {
            violations += 1;
        }
        worst = worst.max(defect / scale);
    }
    Ok(PropertyResult::new("exp_shift", cases, violations, worst, format!("max |e^(c d)f - f(.+c)| = {worst:.3e}")))
}

pub fn borel_bound(seed: u64, cases: usize) -> Result<PropertyResult> {
    let mut rng = rng_for(seed, 7);
    let (mut violations, mut worst) = (0, 0.0f64);
    for _ in 0..cases {
        let g = random_series(&mut rng, 12, 12, 1.0, true);
        let (t, s) = radius_pair(&mut rng);
        let deg = rng.random_range(0..=3);
        let a = random_series(&mut rng, 12, deg, 1.0, false);
        let x: f64 = rng.random_range(0.0..0.9);
        let scale = x * (t - s) / a.majorant_norm(t)?;
        let u = certify_vector_field(a.scale_real(scale))?;
        let res = exp_apply(&u, t, s, &g)?;
        let lhs = res.series.majorant_norm(s)?;
        let rhs = g.majorant_norm(t)? / (1.0 - res.ratio);
        if lhs > rhs * (1.0 + SLACK) {
            violations += 1;
        }
        if rhs > 0.0 {
            worst = worst.max(lhs / rhs);
        }
    }
    Ok(PropertyResult::new("borel_bound", cases, violations, worst, format!("|e^u g|_s (1-x)/|g|_t ≤ {worst:.6}")))
}

pub fn product_chains(seed: u64, chains: usize) -> Result<PropertyResult> {
    let mut rng = rng_for(seed, 8);
    let (mut violations, mut worst) = (0, 0.0f64);
    for _ in 0..chains {
        let len = rng.random_range(2..=5);
        let radii: Vec<f64> = (0..=len).map(|i| 1.0 - 0.1 * i as f64).collect();
        let budget = rng.random_range(0.05..0.9);
        let mut us = Vec::with_capacity(len);
        for i in 0..len {
            let deg = rng.random_range(0..=2);
        let a = random_series(&mut rng, 16, deg, 1.0, false);
            let x = budget / len as f64;
            let scale = x * (radii[i] - radii[i + 1]) / a.majorant_norm(radii[i])?;
            us.push(certify_vector_field(a.scale_real(scale))?);
        }
        let g = random_series(&mut rng, 16, 6, 1.0, false);
        let rep = product_of_exponentials(&us, &radii, &g)?;
        if !rep.holds {
            violations += 1;
        }
        if rep.bound > 0.0 {
            worst = worst.max(rep.observed / rep.bound);
        }
    }
    Ok(PropertyResult::new("product_chain", chains, violations, worst, format!("|g - i|/(sigma/(1-sigma)) ≤ {worst:.6}")))
}

pub fn newton_sqrt2() -> Result<PropertyResult> {
    let m = 1.0 / (2.0 * 2f64.sqrt());
    let rep = newton(|x| x * x - 2.0, |x| 2.0 * x, 1.5, 0.0, m, 2.0, 5)?;
    let err = (rep.root - 2f64.sqrt()).abs();
    let ok = err < 1e-12 && rep.trace.len() <= 5 && rep.trace.status.is_certified();
    Ok(PropertyResult::new(
        "newton_sqrt2",
        1,
        usize::from(!ok),
        err,
        format!("{} steps, |x - sqrt 2| = {err:e}", rep.trace.len()),
    ))
}

/// Convex increasing f started right of the root: the iterates decrease to
/// the root, so m = 1/f′(root) and M = sup f″ on [root, x0] are valid.
pub fn newton_ratios(seed: u64, cases: usize) -> Result<PropertyResult> {
    let mut rng = rng_for(seed, 9);
    let (mut violations, mut worst) = (0, 0.0f64);
    let mut recorded = 0;
    for i in 0..cases {
        let y: f64 = rng.random_range(0.5..8.0);
        let rel: f64 = rng.random_range(0.01..0.3);
        let rep = if i % 2 == 0 {
            let root = y.sqrt();
            let x0 = root * (1.0 + rel);
            newton(|x| x * x, |x| 2.0 * x, x0, y, 1.0 / (2.0 * root), 2.0, 12)?
        } else {
            let root = y.cbrt();
            let x0 = root * (1.0 + rel);
            newton(|x| x * x * x, |x| 3.0 * x * x, x0, y, 1.0 / (3.0 * root * root), 6.0 * x0, 12)?
        };
        for s in &rep.trace.steps {
            if let Some(r) = s.ratio {
                recorded += 1;
                if r > rep.c + 1e-9 {
                    violations += 1;
                }
                worst = worst.max(r / rep.c);
            }
        }
    }
    Ok(PropertyResult::new(
        "newton_ratios",
        recorded,
        violations,
        worst,
        format!("{recorded} ratios over {cases} problems, ratio/(mM/2) ≤ {worst:.6}"),
    ))
}

pub fn nash_moser_run() -> Result<PropertyResult> {
    let rep = demos::demo_nashmoser(&NashMoserParams::default())?;
    let res = rep.summary["final_residual"];
    let mut violations = usize::from(res > demos::NASH_MOSER_TARGET);
    let steps = &rep.trace.steps;
    for w in steps.windows(2) {
        if let (Some(d0), Some(d1), Some(a0)) = (w[0].delta_norm, w[1].delta_norm, w[0].a_n) {
            if w[1].b_n.is_some() && d1 > a0 * d0 * d0 * (1.0 + 1e-9) {
                violations += 1;
            }
        }
    }
    violations += usize::from(!rep.status.is_certified());
    Ok(PropertyResult::new("nash_moser", steps.len(), violations, res, format!("final residual {res:e}")))
}

pub fn nash_moser_gate() -> Result<PropertyResult> {
    let big = NashMoserParams { y: vec![0.2, 0.1], ..Default::default() };
    let rep = demos::demo_nashmoser(&big)?;
    let refused = rep.check("gate").is_some_and(|c| !c.passed) && !rep.status.is_certified();
    Ok(PropertyResult::new(
        "nash_moser_gate",
        1,
        usize::from(!refused),
        rep.summary["initial_increment"],
        rep.check("gate").map(|c| c.detail.clone()).unwrap_or_default(),
    ))
}

/// T = constants, L(y) = [m·y]_0^9, fields acting by a·g′.
pub fn involutivity(seed: u64, cases: usize) -> Result<PropertyResult> {
    let mut rng = rng_for(seed, 10);
    let (mut violations, mut worst) = (0, 0.0f64);
    let cap = 32;
    for _ in 0..cases {
        let m = random_series(&mut rng, cap, 8, 1.0, false);
        let x = random_series(&mut rng, cap, 8, 1.0, false);
        let r = random_series(&mut rng, cap, 8, 1.0, false);
        let delta = TruncatedSeries::from_complex(cap, 1.0, &[complex(&mut rng, 1.0)]);
        let l = move |y: &TruncatedSeries| m.multiply(y)?.cutoff(0, 9);
        let pi = |y: &TruncatedSeries| y.cutoff(0, 1);
        let q = InvolutiveQuasiInverse::new(l, pi, x, &[r.clone(), delta.clone()])?;
        let rep = q.check(&r, &delta)?;
        if !rep.holds {
            violations += 1;
        }
        worst = worst.max(rep.chain_defect.max(rep.quotient_defect));
    }
    Ok(PropertyResult::new("involutivity", cases, violations, worst, format!("max coefficient defect {worst:.3e}")))
}

pub fn demo_certified(name: &str) -> Result<PropertyResult> {
    let rep = DemoSpec::by_name(name)?.run()?;
    let failed: Vec<&str> = rep.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    Ok(PropertyResult::new(
        &format!("demo_{name}"),
        rep.checks.len(),
        failed.len(),
        rep.summary.get("residual").or(rep.summary.get("remainder")).copied().unwrap_or(0.0),
        if failed.is_empty() { "certified".into() } else { format!("failed: {}", failed.join(", ")) },
    ))
}

pub fn determinism(name: &str) -> Result<PropertyResult> {
    let spec = DemoSpec::by_name(name)?;
    let a = spec.run()?.to_json()?;
    let b = spec.run()?.to_json()?;
    Ok(PropertyResult::new(
        &format!("determinism_{name}"),
        2,
        usize::from(a != b),
        0.0,
        format!("{} bytes", a.len()),
    ))
}

pub fn run_suite(seed: u64) -> Result<VerifyReport> {
    let properties = vec![
        bruno_recursion(seed, 50, 40)?,
        bruno_geometric_q3()?,
        tame_model(seed, 100, 40)?,
        cauchy_nagumo(seed, 1000)?,
        division_by_z(seed, 1000)?,
        arnold_moser(seed, 1000)?,
        shift_agreement(seed, 200)?,
        borel_bound(seed, 500)?,
        product_chains(seed, 50)?,
        newton_sqrt2()?,
        newton_ratios(seed, 100)?,
        nash_moser_run()?,
        nash_moser_gate()?,
        involutivity(seed, 100)?,
        demo_certified("morse")?,
        demo_certified("mather")?,
        demo_certified("circle")?,
        determinism("morse")?,
    ];
    let passed = properties.iter().all(|p| p.passed);
    Ok(VerifyReport { seed, properties, passed })
}
