//! Named end-to-end runs: Morse, Mather, the circle flow and the quadratic
//! Nash–Moser problem.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::iterate::{nash_moser, QuadraticProblem, RadiusSchedule, DEFAULT_STEP_CAP};
use crate::lie::{certify, rho_schedule, run_lie, ActionProblem, LieRun, RhoScheduleParams, VersalSchedule};
use crate::sequences::{PositiveSequence, Sign};
use crate::series::TruncatedSeries;
use crate::trace::{IterationTrace, Status};

/// Residual target of the conjugacy demos.
pub const RESIDUAL_TARGET: f64 = 1e-8;

pub fn golden_mean() -> f64 {
    (1.0 + 5f64.sqrt()) / 2.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MorseParams {
    pub eps: f64,
    pub t: f64,
    pub cap: usize,
    pub steps: usize,
    /// add εz⁴ to the εz³ perturbation
    pub mixed: bool,
    /// b_n = e^{−βⁿ}
    pub beta: f64,
}

impl Default for MorseParams {
    fn default() -> Self {
        MorseParams { eps: 1e-3, t: 1.0, cap: 64, steps: 8, mixed: false, beta: 1.5 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatherParams {
    /// Taylor coefficients of f
    pub f: Vec<f64>,
    /// Taylor coefficients of the perturbation
    pub r: Vec<f64>,
    pub t: f64,
    pub cap: usize,
    pub steps: usize,
    pub beta: f64,
}

impl Default for MatherParams {
    fn default() -> Self {
        let mut r = vec![0.0; 8];
        r[7] = 1e-4;
        MatherParams { f: vec![0.0, 0.0, 0.0, 1.0], r, t: 0.8, cap: 64, steps: 6, beta: 1.5 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CircleParams {
    pub omega: f64,
    pub eps: f64,
    /// Diophantine constant; defaults to 1/(1+ω)
    pub c: Option<f64>,
    pub nu: f64,
    pub width0: f64,
    pub width_inf: f64,
    pub q: f64,
    pub cap: usize,
    pub steps: usize,
    /// perturb by ε e^{ix} only, instead of 2ε cos x
    pub single_mode: bool,
}

impl Default for CircleParams {
    fn default() -> Self {
        CircleParams {
            omega: golden_mean(),
            eps: 1e-3,
            c: None,
            nu: 1.0,
            width0: 0.5,
            width_inf: 0.2,
            q: 0.5,
            cap: 64,
            steps: 8,
            single_mode: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NashMoserParams {
    /// Taylor coefficients of the right-hand side y
    pub y: Vec<f64>,
    pub s0: f64,
    pub s_inf: f64,
    pub q: f64,
    pub cap: usize,
    pub steps: usize,
}

impl Default for NashMoserParams {
    fn default() -> Self {
        NashMoserParams { y: vec![0.005, 0.003, 0.002], s0: 1.0, s_inf: 0.5, q: 0.5, cap: 64, steps: DEFAULT_STEP_CAP }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "demo", rename_all = "snake_case")]
pub enum DemoSpec {
    Morse(MorseParams),
    Mather(MatherParams),
    Circle(CircleParams),
    NashmoserQuadratic(NashMoserParams),
}

impl DemoSpec {
    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match name {
            "morse" => DemoSpec::Morse(MorseParams::default()),
            "mather" => DemoSpec::Mather(MatherParams::default()),
            "circle" => DemoSpec::Circle(CircleParams::default()),
            "nashmoser" | "nashmoser_quadratic" => DemoSpec::NashmoserQuadratic(NashMoserParams::default()),
            other => return input(format!("unknown demo '{other}'")),
        })
    }

    pub fn run(&self) -> Result<DemoReport> {
        match self {
            DemoSpec::Morse(p) => demo_morse(p),
            DemoSpec::Mather(p) => demo_mather(p),
            DemoSpec::Circle(p) => demo_circle(p),
            DemoSpec::NashmoserQuadratic(p) => demo_nashmoser(p),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Check { name: name.to_string(), passed, detail }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DivisorCheck {
    pub k: usize,
    pub distance: f64,
    pub bound: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DemoReport {
    pub name: String,
    pub status: Status,
    pub checks: Vec<Check>,
    pub summary: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub orders: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub divisors: Vec<DivisorCheck>,
    pub trace: IterationTrace,
}

impl DemoReport {
    fn finish(name: &str, mut trace: IterationTrace, checks: Vec<Check>, summary: BTreeMap<String, f64>) -> Self {
        let ok = checks.iter().all(|c| c.passed);
        let status = match trace.status {
            Status::Diverged => Status::Diverged,
            _ if ok => Status::Certified,
            _ => Status::Uncertified,
        };
        trace.status = status;
        DemoReport { name: name.into(), status, checks, summary, orders: Vec::new(), divisors: Vec::new(), trace }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_finite(name: &str, x: f64) -> Result<()> {
    if !x.is_finite() {
        return input(format!("{name} must be finite"));
    }
    Ok(())
}

fn versal_summary(sched: &VersalSchedule, run: &LieRun) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    m.insert("k_const".into(), sched.lemma.k_const);
    m.insert("halvings".into(), sched.total_halvings as f64);
    m.insert("limit_radius".into(), sched.limit_radius);
    m.insert("a_priori_threshold".into(), sched.threshold);
    m.insert("smallness_m".into(), sched.m);
    m.insert("smallness_eps".into(), sched.epsilon);
    m.insert("residual".into(), run.conjugacy.residual);
    m.insert("coeff_residual".into(), run.conjugacy.coeff_residual);
    m.insert("identity_defect".into(), run.conjugacy.identity_defect);
    m.insert("sigma".into(), run.conjugacy.sigma);
    m
}

fn versal_checks(run: &LieRun, cert_passed: bool, first: Option<&(usize, String)>) -> Vec<Check> {
    let detail = first.map_or_else(|| "all steps".to_string(), |(n, w)| format!("fails at n = {n}: {w}"));
    vec![
        Check::new("certificate", cert_passed, detail),
        Check::new(
            "residual",
            run.conjugacy.residual <= RESIDUAL_TARGET && run.conjugacy.coeff_residual <= RESIDUAL_TARGET,
            format!(
                "|g(x0) - tau_N| = {:e} at the limit radius, max coefficient {:e}",
                run.conjugacy.residual, run.conjugacy.coeff_residual
            ),
        ),
        Check::new(
            "consistency",
            run.consistency.iter().all(|&c| c <= crate::lie::CONSISTENCY_TOL * 1e3),
            format!("worst step defect {:e}", run.consistency.iter().copied().fold(0.0, f64::max)),
        ),
    ]
}

pub fn demo_morse(p: &MorseParams) -> Result<DemoReport> {
    check_finite("eps", p.eps)?;
    if p.eps < 0.0 || !(p.t > 0.0) {
        return input("Morse needs eps ≥ 0 and t > 0");
    }
    let problem = ActionProblem::morse(p.cap, p.t)?;
    let b = PositiveSequence::exp_power(Sign::Minus, p.beta);
    let sched = rho_schedule(&problem, &b, p.t, &RhoScheduleParams::default())?;
    let mut coeffs = vec![0.0; 5];
    coeffs[3] = p.eps;
    if p.mixed {
        coeffs[4] = p.eps;
    }
    let r0 = TruncatedSeries::from_real(p.cap, p.t, &coeffs);
    let mut run = run_lie(&problem, &sched.schedule, &r0, p.steps)?;
    let cert = certify(&mut run.trace, &sched)?;
    let mut checks = versal_checks(&run, cert.passed, cert.first_failure.as_ref());
    let upto = p.steps.min(5);
    let doubling = (0..=upto).all(|n| run.orders[n] >= (2 + (1usize << n)).min(p.cap + 1));
    checks.push(Check::new("order_doubling", doubling, format!("orders {:?}", &run.orders[..=upto])));
    let summary = versal_summary(&sched, &run);
    let orders = run.orders.clone();
    let mut rep = DemoReport::finish("morse", run.trace, checks, summary);
    rep.orders = orders;
    Ok(rep)
}

pub fn demo_mather(p: &MatherParams) -> Result<DemoReport> {
    if !(p.t > 0.0) || p.f.len() > p.cap + 1 || p.r.len() > p.cap + 1 {
        return input("Mather needs t > 0 and coefficient lists within the cap");
    }
    for &c in p.f.iter().chain(&p.r) {
        check_finite("coefficient", c)?;
    }
    let f = TruncatedSeries::from_real(p.cap, p.t, &p.f);
    let r0 = TruncatedSeries::from_real(p.cap, p.t, &p.r);
    let k = f.order(0.0);
    if k < 2 || k > p.cap {
        return input("f must have order at least 2");
    }
    let ord = r0.order(0.0);
    if ord < k + 2 && !r0.is_zero() {
        return input(format!("the perturbation must have order at least {}", k + 2));
    }
    // deepest level whose space still contains r
    let mut n_offset = 0;
    while k + (1usize << (n_offset + 2)) <= ord.min(p.cap + 1) {
        n_offset += 1;
    }
    let problem = ActionProblem::mather(f, n_offset)?;
    let b = PositiveSequence::exp_power(Sign::Minus, p.beta);
    let sched = rho_schedule(&problem, &b, p.t, &RhoScheduleParams::default())?;
    let mut run = run_lie(&problem, &sched.schedule, &r0, p.steps)?;
    let cert = certify(&mut run.trace, &sched)?;
    let mut checks = versal_checks(&run, cert.passed, cert.first_failure.as_ref());
    let member = run.membership.iter().all(|&m| m);
    checks.push(Check::new(
        "membership",
        member,
        format!("orders {:?}, thresholds {:?}", run.orders, (0..=p.steps).map(|n| problem.m_order(n)).collect::<Vec<_>>()),
    ));
    let mut summary = versal_summary(&sched, &run);
    summary.insert("n_offset".into(), n_offset as f64);
    let orders = run.orders.clone();
    let mut rep = DemoReport::finish("mather", run.trace, checks, summary);
    rep.orders = orders;
    Ok(rep)
}

pub fn demo_circle(p: &CircleParams) -> Result<DemoReport> {
    for (name, x) in [("omega", p.omega), ("eps", p.eps), ("nu", p.nu)] {
        check_finite(name, x)?;
    }
    let c = p.c.unwrap_or(1.0 / (1.0 + p.omega));
    let problem = ActionProblem::circle(p.omega, c, p.nu, p.cap, p.width0)?;
    let schedule = RadiusSchedule::geometric(p.q, p.width0, p.width_inf)?;
    let e = Complex64::new(p.eps, 0.0);
    let modes: Vec<(i64, Complex64)> = if p.single_mode { vec![(1, e)] } else { vec![(1, e), (-1, e)] };
    let r0 = TruncatedSeries::from_fourier(p.cap, p.width0, &modes);
    let mut run = run_lie(&problem, &schedule, &r0, p.steps)?;
    for rec in run.trace.steps.iter_mut() {
        let n = rec.n;
        rec.sigma_n = Some(schedule.gap(n)? / schedule.s(n)?);
    }
    let norms: Vec<f64> = run.trace.steps.iter().map(|s| s.r_norm.unwrap_or(0.0)).collect();
    let last = *norms.last().unwrap_or(&0.0);
    let decay = norms.windows(2).all(|w| w[1] <= w[0]);
    let divisors: Vec<DivisorCheck> = problem
        .divisor_checks(p.steps.saturating_sub(1), p.cap)
        .into_iter()
        .map(|(k, passed)| {
            let kf = k as f64;
            DivisorCheck { k, distance: crate::lie::dist_to_integer(kf * p.omega), bound: c / kf.powf(p.nu), passed }
        })
        .collect();
    let lambda = run.tau.mode(0) - Complex64::new(p.omega, 0.0);
    let mut checks = vec![
        Check::new("remainder", last <= RESIDUAL_TARGET, format!("|r_N| = {last:e} at width {}", p.width_inf)),
        Check::new("decay", decay, format!("norms {norms:?}")),
        Check::new(
            "divisors",
            divisors.iter().all(|d| d.passed),
            format!("{} modes checked against C/|k|^nu", divisors.len()),
        ),
        Check::new("steps", run.trace.all_checks_passed(), "per-step consistency".into()),
    ];
    checks.push(Check::new(
        "identity",
        run.conjugacy.identity_defect <= crate::lie::CONSISTENCY_TOL * 1e3,
        format!("g(x0) vs tau_N + r_N: {:e}", run.conjugacy.identity_defect),
    ));
    let mut summary = BTreeMap::new();
    summary.insert("lambda_re".into(), lambda.re);
    summary.insert("lambda_im".into(), lambda.im);
    summary.insert("remainder".into(), last);
    summary.insert("residual".into(), run.conjugacy.residual);
    summary.insert("diophantine_c".into(), c);
    let mut rep = DemoReport::finish("circle", run.trace, checks, summary);
    rep.divisors = divisors;
    Ok(rep)
}

/// Final residual target of the Nash–Moser demo.
pub const NASH_MOSER_TARGET: f64 = 1e-10;

pub fn demo_nashmoser(p: &NashMoserParams) -> Result<DemoReport> {
    if p.y.len() > p.cap + 1 {
        return input("y has more coefficients than the cap allows");
    }
    for &c in &p.y {
        check_finite("coefficient", c)?;
    }
    let schedule = RadiusSchedule::geometric(p.q, p.s0, p.s_inf)?;
    let problem = QuadraticProblem { cap: p.cap };
    let y = TruncatedSeries::from_real(p.cap, p.s0, &p.y);
    let x0 = TruncatedSeries::zero(1, p.cap, p.s0);
    let rep = nash_moser(&problem, &schedule, &x0, &y, p.steps)?;
    let checks = vec![
        Check::new(
            "gate",
            rep.gate_passed,
            format!("|x1 - x0| = {:e}, threshold {:e}", rep.initial_increment, rep.gate_threshold),
        ),
        Check::new("quadratic", rep.trace.all_checks_passed(), "Delta_n <= a_(n-1) Delta_(n-1)^2".into()),
        Check::new(
            "residual",
            rep.final_residual <= NASH_MOSER_TARGET,
            format!("|y - f(x)| = {:e} at s_inf", rep.final_residual),
        ),
    ];
    let mut summary = BTreeMap::new();
    summary.insert("bruno_constant".into(), rep.bruno_constant);
    summary.insert("gate_threshold".into(), rep.gate_threshold);
    summary.insert("initial_increment".into(), rep.initial_increment);
    summary.insert("final_residual".into(), rep.final_residual);
    summary.insert("s_inf".into(), rep.s_inf);
    Ok(DemoReport::finish("nashmoser_quadratic", rep.trace, checks, summary))
}
