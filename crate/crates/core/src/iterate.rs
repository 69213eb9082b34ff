//! Iteration engines: relative contraction, majorized iteration, scalar
//! Newton and the analytic Nash–Moser scheme over radius schedules.

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::sequences::{bruno_check, bruno_transform, BrunoVerdict, PositiveSequence, TRANSFORM_DEPTH};
use crate::series::TruncatedSeries;
use crate::trace::{IterationTrace, Status, StepRecord};

pub const DEFAULT_STEP_CAP: usize = 40;

/// Consecutive increment growths that declare divergence.
pub const GROWTH_LIMIT: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadiusSchedule {
    /// s_n = s_inf + (s0 − s_inf)·qⁿ
    Geometric { q: f64, s0: f64, s_inf: f64 },
    /// s_{n+1} = ρ_n^{1/2ⁿ} s_n
    RhoDriven { rho: PositiveSequence, s0: f64 },
}

impl RadiusSchedule {
    pub fn geometric(q: f64, s0: f64, s_inf: f64) -> Result<Self> {
        let s = RadiusSchedule::Geometric { q, s0, s_inf };
        s.validate()?;
        Ok(s)
    }

    pub fn rho_driven(rho: PositiveSequence, s0: f64) -> Result<Self> {
        let s = RadiusSchedule::RhoDriven { rho, s0 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RadiusSchedule::Geometric { q, s0, s_inf } => {
                if !(*q > 0.0 && *q < 1.0) {
                    return input("geometric schedule needs 0 < q < 1");
                }
                if !(*s_inf > 0.0 && s0 > s_inf) {
                    return input("geometric schedule needs s0 > s_inf > 0");
                }
                Ok(())
            }
            RadiusSchedule::RhoDriven { rho, s0 } => {
                if !(*s0 > 0.0) {
                    return input("schedule needs s0 > 0");
                }
                let cert = bruno_check(&rho.clone().reciprocal(), 40)?;
                if cert.verdict != BrunoVerdict::Bruno {
                    return input("Σ|ln ρ_n|/2ⁿ is not certified finite, the limit radius may vanish");
                }
                for n in 0..=40 {
                    if rho.ln(n)? >= 0.0 {
                        return input(format!("ρ_{n} ≥ 1, the schedule would not fall"));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn ln_s(&self, n: usize) -> Result<f64> {
        match self {
            RadiusSchedule::Geometric { .. } => Ok(self.s(n)?.ln()),
            RadiusSchedule::RhoDriven { rho, s0 } => {
                let mut l = s0.ln();
                for k in 0..n {
                    l += rho.ln(k)? / (2f64).powi(k as i32);
                }
                Ok(l)
            }
        }
    }

    pub fn s(&self, n: usize) -> Result<f64> {
        match self {
            RadiusSchedule::Geometric { q, s0, s_inf } => Ok(s_inf + (s0 - s_inf) * q.powi(n as i32)),
            RadiusSchedule::RhoDriven { .. } => Ok(self.ln_s(n)?.exp()),
        }
    }

    /// s_{n+1/2}
    pub fn mid(&self, n: usize) -> Result<f64> {
        Ok(0.5 * (self.s(n)? + self.s(n + 1)?))
    }

    /// s_n − j(s_n − s_{n+1})/4 for j = 0..=4.
    pub fn quarter(&self, n: usize, j: usize) -> Result<f64> {
        let (a, b) = (self.s(n)?, self.s(n + 1)?);
        Ok(a - j as f64 * (a - b) / 4.0)
    }

    /// s_n − s_{n+1} = σ_n s_n for ρ-driven schedules.
    pub fn gap(&self, n: usize) -> Result<f64> {
        Ok(self.s(n)? - self.s(n + 1)?)
    }

    pub fn limit(&self) -> Result<f64> {
        match self {
            RadiusSchedule::Geometric { s_inf, .. } => Ok(*s_inf),
            RadiusSchedule::RhoDriven { rho, s0 } => {
                // lower bound: window sum plus the closed-form tail
                let depth = 60;
                let mut l = s0.ln();
                for k in 0..depth {
                    l += rho.ln(k)? / (2f64).powi(k as i32);
                }
                match rho.log_tail(depth) {
                    crate::sequences::Tail::Bound(t) => Ok((l - 2.0 * t).exp()),
                    _ => Err(Error::Scheduling("no tail bound for the limit radius".into())),
                }
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContractionReport {
    pub trace: IterationTrace,
    pub hypotheses_hold: bool,
    pub product: f64,
}

/// Runs x_{n+1} = T_n(x_n) from radius s_n to s_{n+1} and checks
/// d(x_{n+1}, ι x_n) ≤ λ_n⋯λ_1 d(x_1, ι x_0). Certification needs λ
/// non-increasing with λ_N < 1 on the window.
pub fn relative_contraction<F>(
    mut step: F,
    lambda: &PositiveSequence,
    x0: &TruncatedSeries,
    radii: &[f64],
) -> Result<ContractionReport>
where
    F: FnMut(usize, &TruncatedSeries, f64, f64) -> Result<TruncatedSeries>,
{
    if radii.len() < 3 {
        return input("relative_contraction needs at least two steps");
    }
    let steps = radii.len() - 1;
    let lam: Vec<f64> = (1..=steps).map(|n| lambda.value(n)).collect::<Result<_>>()?;
    let non_increasing = lam.windows(2).all(|w| w[1] <= w[0]);
    let vanishing = *lam.last().expect("non-empty") < 1.0;
    let hypotheses_hold = non_increasing && vanishing;
    let mut trace = IterationTrace::new("relative_contraction");
    if !non_increasing {
        trace.note("λ is not non-increasing, certification refused");
    }
    if !vanishing {
        trace.note("λ does not drop below 1 on the window, ∏λ → 0 is not established");
    }
    let mut x = x0.restrict_to(radii[0])?;
    let mut d1 = 0.0;
    let mut product = 1.0;
    let mut all_ok = true;
    for n in 0..steps {
        let next = step(n, &x, radii[n], radii[n + 1])?;
        let d = next.sub(&x.restrict_to(radii[n + 1])?)?.majorant_norm(radii[n + 1])?;
        let mut rec = StepRecord::new(n);
        rec.s_n = Some(radii[n + 1]);
        rec.delta_norm = Some(d);
        rec.r_norm = Some(next.majorant_norm(radii[n + 1])?);
        if n == 0 {
            d1 = d;
            rec.b_n = Some(d);
        } else {
            product *= lam[n - 1];
            let bound = product * d1;
            rec.b_n = Some(bound);
            rec.a_n = Some(lam[n - 1]);
            rec.checks_passed = d <= bound * (1.0 + 1e-12) + 1e-300;
            all_ok &= rec.checks_passed;
        }
        trace.push(rec);
        x = next;
    }
    trace.status = if hypotheses_hold && all_ok {
        Status::Certified
    } else if !all_ok {
        trace.note("contraction estimate violated");
        Status::Inconsistent
    } else {
        Status::Uncertified
    };
    Ok(ContractionReport { trace, hypotheses_hold, product })
}

/// Runs x ↦ F(x) next to the scalar majorant y ↦ f(y) and checks
/// |x_n|_t ≤ y_n together with |F(x_n)| ≤ f(|x_n|).
pub fn majorized_iteration<F, G>(
    mut big_f: F,
    f: G,
    x0: &TruncatedSeries,
    y0: f64,
    t: f64,
    steps: usize,
) -> Result<IterationTrace>
where
    F: FnMut(&TruncatedSeries) -> Result<TruncatedSeries>,
    G: Fn(f64) -> f64,
{
    let mut trace = IterationTrace::new("majorized");
    let mut x = x0.restrict_to(t)?;
    let mut y = y0;
    let mut failure = None;
    let mut ys = vec![y0];
    for n in 0..=steps {
        let nx = x.majorant_norm(t)?;
        let mut rec = StepRecord::new(n);
        rec.s_n = Some(t);
        rec.r_norm = Some(nx);
        rec.b_n = Some(y);
        rec.checks_passed = nx <= y * (1.0 + 1e-12);
        if n < steps {
            let fx = big_f(&x)?;
            let nfx = fx.majorant_norm(t)?;
            if nfx > f(nx) * (1.0 + 1e-12) + 1e-300 {
                rec.checks_passed = false;
                rec.note = Some("ordered-diagram hypothesis |F(x)| ≤ f(|x|) fails".into());
            }
            x = fx;
            y = f(y);
            ys.push(y);
        }
        if !rec.checks_passed && failure.is_none() {
            failure = Some(n);
        }
        trace.push(rec);
    }
    let decreasing = ys.windows(2).all(|w| w[1] <= w[0]);
    let to_zero = decreasing && (*ys.last().unwrap_or(&y0) <= 1e-12 * y0.max(f64::MIN_POSITIVE) || y0 == 0.0);
    trace.status = match failure {
        Some(n) => {
            trace.note(format!("majorization violated at step {n}, certificate withdrawn"));
            Status::Uncertified
        }
        None if to_zero => Status::Certified,
        None => {
            trace.note("the majorant does not reach 0, only boundedness is asserted");
            Status::BoundedOnly
        }
    };
    Ok(trace)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NewtonReport {
    pub trace: IterationTrace,
    pub root: f64,
    pub c: f64,
    pub gate: bool,
}

/// x_{n+1} = x_n − (f(x_n) − y)/f′(x_n) with the quadratic ratio
/// |Δ_{n+1}|/|Δ_n|² checked against C = mM/2.
pub fn newton<F, D>(f: F, df: D, x0: f64, y: f64, m: f64, big_m: f64, steps: usize) -> Result<NewtonReport>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    if !(m > 0.0 && big_m >= 0.0) {
        return input("newton needs m > 0 and M ≥ 0");
    }
    let c = 0.5 * m * big_m;
    let mut trace = IterationTrace::new("newton");
    let mut x = x0;
    let mut prev: Option<f64> = None;
    let mut gate = false;
    let mut ok = true;
    for n in 0..steps {
        let d = df(x);
        if d == 0.0 || !d.is_finite() {
            return Err(Error::Step { index: n, detail: format!("derivative {d} at x = {x} is not invertible") });
        }
        let delta = -(f(x) - y) / d;
        let mut rec = StepRecord::new(n);
        rec.r_norm = Some(x);
        rec.delta_norm = Some(delta.abs());
        rec.a_n = Some(c);
        if n == 0 {
            gate = c * delta.abs() < 1.0;
            rec.checks_passed = gate;
        }
        let rounding = 8.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE);
        if let Some(p) = prev {
            // the increment is only known to ±rounding, so the ratio is only
            // recorded when that uncertainty is below the 1e-9 tolerance
            if p > rounding && delta.abs() > rounding && rounding / (p * p) <= 1e-9 {
                let ratio = delta.abs() / (p * p);
                rec.ratio = Some(ratio);
                rec.checks_passed = ratio <= c + 1e-9;
            } else {
                rec.note = Some("increment below rounding resolution, ratio not recorded".into());
            }
        }
        ok &= rec.checks_passed;
        trace.push(rec);
        x += delta;
        if !x.is_finite() {
            trace.status = Status::Diverged;
            return Ok(NewtonReport { trace, root: x, c, gate });
        }
        if delta.abs() <= rounding {
            break;
        }
        prev = Some(delta.abs());
    }
    trace.status = if gate && ok { Status::Certified } else { Status::Uncertified };
    Ok(NewtonReport { trace, root: x, c, gate })
}

/// Constants of the locality estimates: |j(x)| ≤ C(1+|x|)/((u−t)^l t^b),
/// ½|D²f(x)| ≤ C′(1+|x|)/((u−t)^l t^b (t−s)^k s^a).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NashMoserConstants {
    pub c_j: f64,
    pub c_d2: f64,
    pub a: f64,
    pub b: f64,
    pub k: f64,
    pub l: f64,
}

impl NashMoserConstants {
    /// Exponent of q^{−n} in a_n.
    pub fn alpha(&self) -> f64 {
        2.0 * self.k + self.l
    }
}

/// A partial map with an exact right inverse of its derivative.
pub trait NashMoserProblem {
    /// y − f(x), certified at radius s ≤ t where x, y are read at t
    fn residual(&self, x: &TruncatedSeries, y: &TruncatedSeries, t: f64, s: f64) -> Result<TruncatedSeries>;
    /// j(x)(v) read at t and certified at s
    fn apply_j(&self, x: &TruncatedSeries, v: &TruncatedSeries, t: f64, s: f64) -> Result<TruncatedSeries>;
    fn constants(&self) -> NashMoserConstants;
    /// |x| must stay below this for the constants to hold
    fn domain_radius(&self) -> f64;
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NashMoserReport {
    pub trace: IterationTrace,
    pub a: PositiveSequence,
    /// a^π_0
    pub bruno_constant: f64,
    /// a^π_1, the threshold for |x_1 − ι x_0|
    pub gate_threshold: f64,
    pub initial_increment: f64,
    pub gate_passed: bool,
    pub final_residual: f64,
    pub s_inf: f64,
    #[serde(skip)]
    pub solution: Option<TruncatedSeries>,
}

/// a_n = M'·q^{−αn} dominating 4CC′/((s_n − s_{n+1/2})^{2k+l} s_{n+1/2}^{a+2b}).
pub fn nash_moser_sequence(consts: &NashMoserConstants, schedule: &RadiusSchedule) -> Result<PositiveSequence> {
    let RadiusSchedule::Geometric { q, s0, s_inf } = *schedule else {
        return input("the Nash–Moser engine needs a geometric schedule");
    };
    let m = 4.0 * consts.c_j * consts.c_d2;
    let half_gap0 = 0.5 * (s0 - s_inf) * (1.0 - q);
    let prefactor = m / (half_gap0.powf(consts.alpha()) * s_inf.powf(consts.a + 2.0 * consts.b));
    let base = PositiveSequence::geometric(q.powf(-consts.alpha()));
    Ok(base.scaled(prefactor.max(1.0)))
}

/// Midpoint Nash–Moser iteration x_{n+1} = ι(x_n + j(x_n)(y − f(x_n))).
pub fn nash_moser<P: NashMoserProblem>(
    problem: &P,
    schedule: &RadiusSchedule,
    x0: &TruncatedSeries,
    y: &TruncatedSeries,
    steps: usize,
) -> Result<NashMoserReport> {
    schedule.validate()?;
    let consts = problem.constants();
    let a = nash_moser_sequence(&consts, schedule)?;
    let bruno_constant = bruno_transform(&a, 0, TRANSFORM_DEPTH)?.lower;
    let gate_threshold = bruno_transform(&a, 1, TRANSFORM_DEPTH)?.lower;
    let s_inf = schedule.limit()?;
    let mut trace = IterationTrace::new("nash_moser");
    let mut x = x0.restrict_to(schedule.s(0)?)?;
    let mut prev_delta: Option<f64> = None;
    let mut initial_increment = 0.0;
    let mut growths = 0;
    let mut ok = true;
    let mut diverged = false;
    let domain = problem.domain_radius();
    for n in 0..steps {
        let (sn, mid, sn1) = (schedule.s(n)?, schedule.mid(n)?, schedule.s(n + 1)?);
        let res = problem.residual(&x, y, sn, mid)?;
        let step = problem.apply_j(&x, &res, mid, sn1)?;
        let next = x.restrict_to(sn1)?.add(&step)?;
        let delta = step.majorant_norm(sn1)?;
        let mut rec = StepRecord::new(n);
        rec.s_n = Some(sn);
        rec.r_norm = Some(res.majorant_norm(mid)?);
        rec.delta_norm = Some(delta);
        rec.u_norm = Some(x.majorant_norm(sn)?);
        rec.a_n = Some(a.value(n)?);
        if x.majorant_norm(sn)? > domain {
            rec.checks_passed = false;
            rec.note = Some(format!("|x_n| exceeds the domain radius {domain}"));
        }
        let floor = 64.0 * f64::EPSILON * x.majorant_norm(sn)?.max(y.majorant_norm(sn)?);
        let at_floor = prev_delta.is_some() && delta <= floor;
        match prev_delta {
            None => initial_increment = delta,
            Some(_) if at_floor => {
                rec.note = Some("increment at rounding level, quadratic check skipped".into());
            }
            Some(p) => {
                let bound = a.value(n - 1)? * p * p;
                rec.b_n = Some(bound);
                if p > 0.0 {
                    rec.ratio = Some(delta / (p * p));
                }
                if delta > bound * (1.0 + 1e-9) + 1e-300 {
                    rec.checks_passed = false;
                }
                growths = if delta > p { growths + 1 } else { 0 };
            }
        }
        ok &= rec.checks_passed;
        trace.push(rec);
        x = next;
        if !delta.is_finite() || growths >= GROWTH_LIMIT {
            diverged = true;
            trace.note(format!("increments grew {GROWTH_LIMIT} steps in a row"));
            break;
        }
        if delta == 0.0 || at_floor {
            break;
        }
        prev_delta = Some(delta);
    }
    let final_residual = problem.residual(&x, y, x.ref_radius(), s_inf)?.majorant_norm(s_inf)?;
    let gate_passed = initial_increment < gate_threshold;
    if !gate_passed {
        trace.note(format!(
            "|x_1 − x_0| = {initial_increment:e} is not below the Bruno threshold {gate_threshold:e}"
        ));
    }
    trace.status = if diverged {
        Status::Diverged
    } else if gate_passed && ok {
        Status::Certified
    } else {
        Status::Uncertified
    };
    Ok(NashMoserReport {
        trace,
        a,
        bruno_constant,
        gate_threshold,
        initial_increment,
        gate_passed,
        final_residual,
        s_inf,
        solution: Some(x),
    })
}

/// f(u) = u + u² with j(u) = multiplication by 1/(1 + 2u).
#[derive(Clone, Debug)]
pub struct QuadraticProblem {
    pub cap: usize,
}

impl NashMoserProblem for QuadraticProblem {
    fn residual(&self, x: &TruncatedSeries, y: &TruncatedSeries, _t: f64, s: f64) -> Result<TruncatedSeries> {
        let xs = x.restrict_to(s)?;
        let fx = xs.add(&xs.multiply(&xs)?)?;
        y.restrict_to(s)?.sub(&fx)
    }

    fn apply_j(&self, x: &TruncatedSeries, v: &TruncatedSeries, _t: f64, s: f64) -> Result<TruncatedSeries> {
        let xs = x.restrict_to(s)?;
        let one = TruncatedSeries::constant(1, xs.cap(), s, 1.0);
        let inv = one.add(&xs.scale_real(2.0))?.inverse()?;
        inv.multiply(&v.restrict_to(s)?)
    }

    fn constants(&self) -> NashMoserConstants {
        // |1/(1+2u)| ≤ 2 ≤ 2(1+|u|) for |u| ≤ 1/4 and ½|D²f| = 1
        NashMoserConstants { c_j: 2.0, c_d2: 0.5, a: 0.0, b: 0.0, k: 0.0, l: 0.0 }
    }

    fn domain_radius(&self) -> f64 {
        0.25
    }
}
