//! Actions of vector fields on series, the Lie normal-form iteration, its
//! ρ-driven radius schedule and the a-posteriori certificate.

use std::f64::consts::E;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::iterate::RadiusSchedule;
use crate::local_ops::{
    borel_apply, certify_vector_field, product_of_exponentials, BorelFn, LocalOperator, OperatorKind,
};
use crate::sequences::{
    bruno_check, lemma_rho, tame_check_logs, BrunoVerdict, LemmaRhoParams, LemmaRhoReport, PositiveSequence,
    TamePairReport,
};
use crate::series::{Basis, TruncatedSeries};
use crate::trace::{IterationTrace, Status, StepRecord};

/// Weight exponents of π (α), j (β, γ) and κ (ν, ξ).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub nu: f64,
    pub xi: f64,
}

impl Exponents {
    /// Exponent of the quadratic term.
    pub fn k(&self) -> f64 {
        2.0 * (self.alpha + self.beta + self.gamma + 1.0)
    }

    /// Exponent of the linear (cutoff) term.
    pub fn l(&self) -> f64 {
        self.nu + self.xi + 1.0
    }
}

/// Which concrete action is iterated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ActionKind {
    /// f = z², M = order ≥ 3, T = {0}, j(r) = r/(2z)·∂
    Morse,
    /// f of order k; Mₙ = order ≥ k + 2^{n+n_offset+1}; j cuts b to
    /// [k + 2^{m+1}, k + 2^{m+2}) and divides by f′
    Mather { k: usize, n_offset: usize, inv: Vec<f64> },
    /// constant fields on the circle; T = constants, π = mean,
    /// j solves c·v′ = r on the modes 1 ≤ |k| ≤ 2ⁿ
    Circle { omega: f64, c: f64, nu: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ActionProblem {
    pub name: String,
    pub kind: ActionKind,
    pub tau0: TruncatedSeries,
    pub exponents: Exponents,
    pub pi_norm: PositiveSequence,
    pub j_norm: PositiveSequence,
    pub kappa_norm: PositiveSequence,
}

/// ‖x‖ = distance to the nearest integer.
pub fn dist_to_integer(x: f64) -> f64 {
    (x - x.round()).abs()
}

fn pow2(n: usize) -> usize {
    1usize.checked_shl(n as u32).unwrap_or(usize::MAX)
}

impl ActionProblem {
    pub fn morse(cap: usize, t: f64) -> Result<Self> {
        if cap < 4 {
            return input("the Morse problem needs a degree cap of at least 4");
        }
        let tau0 = TruncatedSeries::from_real(cap, t, &[0.0, 0.0, 1.0]);
        Ok(ActionProblem {
            name: "morse".into(),
            kind: ActionKind::Morse,
            tau0,
            exponents: Exponents { alpha: 0.0, beta: 0.0, gamma: 1.0, nu: 0.0, xi: 0.0 },
            pi_norm: PositiveSequence::constant(1.0),
            j_norm: PositiveSequence::constant(0.5),
            kappa_norm: PositiveSequence::constant(1.0),
        })
    }

    /// `f` must be a tail-free univariate Taylor polynomial of order k ≥ 2.
    pub fn mather(f: TruncatedSeries, n_offset: usize) -> Result<Self> {
        if f.basis() != Basis::Taylor || f.dim() != 1 || f.tail() > 0.0 {
            return input("Mather needs a tail-free univariate Taylor polynomial");
        }
        let k = f.order(0.0);
        if k < 2 || k > f.cap() {
            return input("f must have order at least 2");
        }
        let mut g = f.derivative(0)?;
        for _ in 0..k - 1 {
            g = g.divide_by_coordinate(0, 0.0)?;
        }
        if g.c(0).norm() == 0.0 {
            return input("f′ has a vanishing leading coefficient");
        }
        // coefficients of 1/g do not depend on the radius; shrink until certified
        let mut r = g.ref_radius();
        let inv = loop {
            match g.restrict_to(r)?.inverse() {
                Ok(i) => break i,
                Err(Error::Domain(_)) if r > 1e-12 => r *= 0.5,
                Err(e) => return Err(e),
            }
        };
        let inv: Vec<f64> = (0..=f.cap()).map(|n| inv.c(n).re).collect();
        // the truncated multiplier is a polynomial, its norm at t bounds all smaller radii
        let j_bound = TruncatedSeries::from_real(f.cap(), f.ref_radius(), &inv).norm();
        Ok(ActionProblem {
            name: "mather".into(),
            kind: ActionKind::Mather { k, n_offset, inv },
            tau0: f,
            exponents: Exponents { alpha: 0.0, beta: 0.0, gamma: (k - 1) as f64, nu: 0.0, xi: 0.0 },
            pi_norm: PositiveSequence::constant(1.0),
            j_norm: PositiveSequence::constant(j_bound),
            kappa_norm: PositiveSequence::constant(1.0),
        })
    }

    /// Vector field ω∂ₓ on the circle with Diophantine witness (c, ν).
    pub fn circle(omega: f64, c: f64, nu: f64, cap: usize, width: f64) -> Result<Self> {
        if !(omega > 0.0 && c > 0.0 && nu >= 1.0 && width > 0.0) {
            return input("circle needs ω > 0, C > 0, ν ≥ 1 and a positive width");
        }
        let tau0 = TruncatedSeries::from_fourier(cap, width, &[(0, Complex64::new(omega, 0.0))]);
        Ok(ActionProblem {
            name: "circle".into(),
            kind: ActionKind::Circle { omega, c, nu },
            tau0,
            exponents: Exponents { alpha: 0.0, beta: 0.0, gamma: 0.0, nu: 0.0, xi: 0.0 },
            pi_norm: PositiveSequence::constant(1.0),
            j_norm: PositiveSequence::constant(1.0_f64.max(1.0 / omega)),
            kappa_norm: PositiveSequence::constant(1.0),
        })
    }

    /// Order threshold of the space Mₙ, if the problem has one.
    pub fn m_order(&self, n: usize) -> Option<usize> {
        match &self.kind {
            ActionKind::Morse => Some(3),
            ActionKind::Mather { k, n_offset, .. } => Some(k + pow2(n + n_offset + 1)),
            ActionKind::Circle { .. } => None,
        }
    }

    /// Coefficient-exact membership rₙ ∈ Mₙ (tail included through its order).
    pub fn in_m(&self, n: usize, r: &TruncatedSeries) -> bool {
        match self.m_order(n) {
            Some(m) => r.order(0.0) >= m.min(r.cap() + 1),
            None => true,
        }
    }

    /// Projection onto T.
    pub fn project(&self, w: &TruncatedSeries) -> TruncatedSeries {
        match &self.kind {
            ActionKind::Circle { .. } => {
                let mut d = TruncatedSeries::zero_fourier(w.cap(), w.ref_radius());
                d.set_mode(0, w.mode(0));
                d
            }
            _ => w.clone().with_tail(0.0, 0).scale_real(0.0),
        }
    }

    /// Splits w = r − u(τ) into δ ∈ T and the cutoff remainder κ. For Mather
    /// κ = [w]_{≥k+2^{m+2}} exactly; the rounding residue below that degree is
    /// returned as the third component.
    pub fn split(&self, n: usize, w: &TruncatedSeries) -> Result<(TruncatedSeries, TruncatedSeries, f64)> {
        let delta = self.project(w);
        match &self.kind {
            ActionKind::Mather { k, n_offset, .. } => {
                let hi = k.saturating_add(pow2(n + n_offset + 2));
                if w.tail() > 0.0 && w.tail_order() < hi {
                    return Ok((delta, w.clone(), 0.0));
                }
                let low = w.clone().with_tail(0.0, 0).cutoff(0, hi.min(w.cap() + 1))?;
                let dropped = low.max_coeff_diff(&low.scale_real(0.0))?;
                Ok((delta, w.cutoff(hi.min(w.cap() + 1), usize::MAX)?, dropped))
            }
            _ => {
                let kappa = w.sub(&delta)?;
                Ok((delta, kappa, 0.0))
            }
        }
    }

    /// Vector-field coefficient of j(τ)(p) for a tail-free p.
    pub fn quasi_inverse(&self, n: usize, tau: &TruncatedSeries, p: &TruncatedSeries) -> Result<TruncatedSeries> {
        let s = p.ref_radius();
        match &self.kind {
            ActionKind::Morse => Ok(p.divide_by_coordinate(0, 0.0)?.scale_real(0.5)),
            ActionKind::Mather { k, n_offset, inv } => {
                let m = n + n_offset;
                let (lo, hi) = (k + pow2(m + 1), k.saturating_add(pow2(m + 2)));
                let mut b = p.cutoff(lo.min(p.cap() + 1), hi.min(p.cap() + 1))?;
                for _ in 0..k - 1 {
                    b = b.divide_by_coordinate(0, 0.0)?;
                }
                let g = TruncatedSeries::from_real(p.cap(), s, inv);
                Ok(b.multiply(&g)?.with_tail(0.0, 0))
            }
            ActionKind::Circle { omega, c, nu } => {
                let shift = tau.mode(0);
                if shift.norm() == 0.0 {
                    return Err(Error::Division("the constant field vanishes".into()));
                }
                let top = pow2(n).min(p.cap());
                let mut v = TruncatedSeries::zero_fourier(p.cap(), s);
                for k in 1..=top as i64 {
                    for kk in [k, -k] {
                        let rk = p.mode(kk);
                        if rk == Complex64::default() {
                            continue;
                        }
                        let kf = k as f64;
                        if dist_to_integer(kf * omega) < c / kf.powf(*nu) * (1.0 - 1e-12) {
                            return input(format!("small divisor at k = {kk}: ‖kω‖ is below C/|k|^ν"));
                        }
                        v.set_mode(kk, rk / (Complex64::new(0.0, kk as f64) * shift));
                    }
                }
                Ok(v)
            }
        }
    }

    /// The grade-1 operator of a field coefficient.
    pub fn field_operator(&self, a: &TruncatedSeries) -> Result<LocalOperator> {
        match self.kind {
            ActionKind::Circle { .. } => LocalOperator::bracket(a.clone()),
            _ => certify_vector_field(a.clone()),
        }
    }

    /// Modes 1 ≤ k ≤ 2ⁿ whose divisor bound ‖kω‖ ≥ C/k^ν holds (circle only).
    pub fn divisor_checks(&self, n: usize, cap: usize) -> Vec<(usize, bool)> {
        match self.kind {
            ActionKind::Circle { omega, c, nu } => (1..=pow2(n).min(cap))
                .map(|k| {
                    let kf = k as f64;
                    (k, dist_to_integer(kf * omega) >= c / kf.powf(nu) * (1.0 - 1e-12))
                })
                .collect(),
            _ => Vec::new(),
        }
    }

    /// π ∘ π = π and u(f) ∈ M for the sampled inputs.
    pub fn check_invariants(&self, samples: &[TruncatedSeries]) -> Result<bool> {
        for x in samples {
            let p = self.project(x);
            if self.project(&p).max_coeff_diff(&p)? > 0.0 {
                return Ok(false);
            }
            if !self.in_m(0, x) {
                continue;
            }
            let a = self.quasi_inverse(0, &self.tau0.restrict_to(x.ref_radius().min(self.tau0.ref_radius()))?, &x.clone().with_tail(0.0, 0))?;
            let u = self.field_operator(&a)?;
            let r = a.ref_radius();
            let uf = u.apply(&self.tau0.restrict_to(r.min(self.tau0.ref_radius()))?, r, r)?;
            if !self.in_m(0, &uf) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LieState {
    pub n: usize,
    pub s_n: f64,
    pub tau: TruncatedSeries,
    pub r: TruncatedSeries,
    /// the increment that produced τₙ
    pub delta: TruncatedSeries,
    pub r_norm: f64,
    pub delta_norm: f64,
}

impl LieState {
    pub fn initial(problem: &ActionProblem, r0: &TruncatedSeries, s0: f64) -> Result<Self> {
        let tau = problem.tau0.restrict_to(s0)?;
        let r = r0.restrict_to(s0)?;
        let delta = problem.project(&r);
        let delta = delta.scale_real(0.0);
        Ok(LieState { n: 0, s_n: s0, r_norm: r.majorant_norm(s0)?, delta_norm: 0.0, tau, r, delta })
    }

    /// xₙ = τₙ + rₙ
    pub fn x(&self) -> Result<TruncatedSeries> {
        self.tau.add(&self.r)
    }
}

#[derive(Clone, Debug)]
pub struct LieStepOutput {
    pub next: LieState,
    pub field: TruncatedSeries,
    pub u: LocalOperator,
    pub u_norm: f64,
    /// Borel ratio of uₙ between the first and third quarter points
    pub ratio: f64,
    /// max coefficient distance between τ_{n+1} + r_{n+1} and e^{−uₙ}xₙ
    pub consistency: f64,
    /// rounding residue removed by the exact cutoff
    pub dropped: f64,
}

fn tag(what: &str, n: usize) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::Step { index: n, detail: format!("{what}: {e}") }
}

/// One step xₙ ↦ e^{−uₙ}xₙ, split into the φ, ψ and cutoff parts.
pub fn lie_step(state: &LieState, problem: &ActionProblem, schedule: &RadiusSchedule) -> Result<LieStepOutput> {
    let n = state.n;
    let s = state.s_n;
    let s_next = schedule.s(n + 1)?;
    let q1 = schedule.quarter(n, 1)?;
    if !(s_next < q1 && q1 < s) {
        return Err(Error::Step { index: n, detail: format!("radii do not fall: {s} → {s_next}") });
    }
    let p = state.r.clone().with_tail(0.0, 0);
    let field = problem.quasi_inverse(n, &state.tau, &p).map_err(|e| match e {
        Error::Input(m) => Error::Input(m),
        other => tag("quasi-inverse", n)(other),
    })?;
    let u = problem.field_operator(&field)?;
    let u_tau = u.apply(&state.tau, s, q1).map_err(tag("u(τ)", n))?;
    let w = state.r.restrict_to(q1)?.sub(&u_tau)?;
    let (delta_plus, kappa, dropped) = problem.split(n, &w)?;

    // Borel sums land at the third quarter point; the last quarter only restricts
    let q3 = schedule.quarter(n, 3)?;
    let phi = borel_apply(&BorelFn::Phi, &u, q1, q3, &state.tau).map_err(tag("φ(u)τ", n))?;
    let psi = borel_apply(&BorelFn::Psi, &u, q1, q3, &delta_plus).map_err(tag("ψ(u)δ", n))?;
    let rem = borel_apply(&BorelFn::NegExp, &u, q1, q3, &kappa).map_err(tag("e^{−u}κ", n))?;
    let r_next = phi.series.add(&psi.series)?.add(&rem.series)?.restrict_to(s_next)?;
    let delta = delta_plus.restrict_to(s_next)?;
    let tau_next = state.tau.restrict_to(s_next)?.add(&delta)?;

    let whole = borel_apply(&BorelFn::NegExp, &u, q1, q3, &state.x()?).map_err(tag("e^{−u}x", n))?;
    let consistency = whole.series.restrict_to(s_next)?.max_coeff_diff(&tau_next.add(&r_next)?)?;

    let next = LieState {
        n: n + 1,
        s_n: s_next,
        r_norm: r_next.majorant_norm(s_next)?,
        delta_norm: delta.majorant_norm(s_next)?,
        tau: tau_next,
        r: r_next,
        delta,
    };
    Ok(LieStepOutput { u_norm: field.majorant_norm(s)?, ratio: phi.ratio, next, field, u, consistency, dropped })
}

/// Output of the scheduler: the derived sequences, ρ, σ and the radii.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VersalSchedule {
    pub t: f64,
    pub k: f64,
    pub l: f64,
    pub b: PositiveSequence,
    pub j: PositiveSequence,
    pub tau0_norm: f64,
    pub a1: PositiveSequence,
    pub a2: PositiveSequence,
    pub a3: PositiveSequence,
    pub a4: PositiveSequence,
    pub lemma: LemmaRhoReport,
    pub conditions: [TamePairReport; 4],
    pub condition5: Vec<bool>,
    pub schedule: RadiusSchedule,
    pub window: usize,
    pub limit_radius: f64,
    /// min(model start bound, N₂ at n = 0): |r₀| below this is covered a priori
    pub threshold: f64,
    /// smallness exponent m = k + l and ε = threshold·t^{−m}
    pub m: f64,
    pub epsilon: f64,
    pub total_halvings: usize,
}

impl VersalSchedule {
    pub fn rho_ln(&self, n: usize) -> Result<f64> {
        self.lemma.rho.ln(n)
    }

    pub fn sigma_ln(&self, n: usize) -> Result<f64> {
        Ok(crate::sequences::log_sigma_from_rho(self.rho_ln(n)?, n))
    }
}

#[derive(Clone, Debug)]
pub struct RhoScheduleParams {
    pub k_const: f64,
    pub alpha: f64,
    pub window: usize,
}

impl Default for RhoScheduleParams {
    fn default() -> Self {
        RhoScheduleParams { k_const: 0.5, alpha: 1.5, window: 40 }
    }
}

/// Builds a′, a″, a‴, a⁗ from the norm sequences and |τ₀|_t, then halves K
/// until conditions 1 to 5 hold on the window.
pub fn rho_schedule(
    problem: &ActionProblem,
    b: &PositiveSequence,
    t: f64,
    params: &RhoScheduleParams,
) -> Result<VersalSchedule> {
    let window = params.window;
    for (name, s) in [("|π|", &problem.pi_norm), ("|j|", &problem.j_norm), ("|κ|", &problem.kappa_norm)] {
        if bruno_check(s, window)?.verdict == BrunoVerdict::NotBruno {
            return Err(Error::Scheduling(format!("{name} is not a Bruno sequence")));
        }
    }
    let tau0 = problem.tau0.restrict_to(t.min(problem.tau0.ref_radius()))?.majorant_norm(t)?;
    let one = PositiveSequence::constant(1.0);
    let j = problem.j_norm.clone();
    let a1 = problem
        .pi_norm
        .clone()
        .times(one.clone().plus(j.clone()))
        .scaled((2.0 + tau0) * (1.0 + tau0));
    let a2 = j.clone().pow(2.0).scaled(4.0 * E * E * (1.0 + tau0).powi(2));
    let a3 = j.clone().times(a1.clone()).scaled(4.0 * E * (1.0 + tau0));
    let a4 = problem.kappa_norm.clone().scaled(4.0);
    let k = problem.exponents.k();
    let l = problem.exponents.l();
    let big_a = a2.clone().plus(a3.clone()).scaled(2.0);
    let big_ap = a4.clone().scaled(2.0);

    let la1 = a1.logs(window + 1)?;
    let la4 = a4.logs(window + 1)?;
    let lj = j.logs(window + 1)?;
    let mut k_const = params.k_const;
    let mut total = 0;
    let mut binding = String::from("condition 1");
    while total <= 64 {
        let lemma = lemma_rho(
            &big_a,
            &big_ap,
            b,
            &LemmaRhoParams { k, l, k_const, alpha: params.alpha, window, auto_tune: true },
        )?;
        total += lemma.halvings;
        if !lemma.passed {
            return Err(Error::Scheduling(format!(
                "condition 1 fails at indices {:?} after {total} halvings",
                lemma.failures
            )));
        }
        let lrho = lemma.rho.logs(window + 1)?;
        let ls = &lemma.log_sigma;
        let c2 = tame_check_logs(
            &(0..=window).map(|n| la4[n] - l * ls[n]).collect::<Vec<_>>(),
            &lrho.iter().map(|r| 0.5 * r).collect::<Vec<_>>(),
        );
        let c3 = tame_check_logs(
            &(0..=window).map(|n| (4.0 * E).ln() + lj[n] - ls[n]).collect::<Vec<_>>(),
            &lrho.iter().map(|r| 0.25 * r).collect::<Vec<_>>(),
        );
        let c4 = tame_check_logs(
            &(0..=window).map(|n| la1[n] - 0.5 * k * ls[n]).collect::<Vec<_>>(),
            &lrho.iter().map(|r| 0.25 * r).collect::<Vec<_>>(),
        );
        let c5: Vec<bool> = (0..=window).map(|n| 0.25 * lrho[n] < -(n as f64) * std::f64::consts::LN_2).collect();
        let ok = c2.tame && c3.tame && c4.tame && c5.iter().all(|&x| x);
        if ok {
            let schedule = RadiusSchedule::rho_driven(lemma.rho.clone(), t)?;
            let limit_radius = schedule.limit()?;
            let s0 = ls[0].exp();
            let model_b0 = (2.0f64.ln() + lrho[0] + la4[0] - l * ls[0]).exp();
            let n2 = s0 / (4.0 * E * lj[0].exp());
            let threshold = model_b0.min(n2);
            let m = k + l;
            let conditions = [lemma.conclusion1.clone(), c2, c3, c4];
            return Ok(VersalSchedule {
                t,
                k,
                l,
                b: b.clone(),
                j: j.clone(),
                tau0_norm: tau0,
                a1,
                a2,
                a3,
                a4,
                lemma,
                conditions,
                condition5: c5,
                schedule,
                window,
                limit_radius,
                threshold,
                m,
                epsilon: threshold / t.powf(m),
                total_halvings: total,
            });
        }
        binding = if !c2.tame {
            "condition 2".into()
        } else if !c3.tame {
            "condition 3".into()
        } else if !c4.tame {
            "condition 4".into()
        } else {
            "condition 5".into()
        };
        k_const = lemma.k_const / 2.0;
        total += 1;
    }
    Err(Error::Scheduling(format!("no K within 64 halvings, {binding} is binding")))
}

/// Per-step verdicts of the a-posteriori certificate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VersalCertificate {
    pub n1: Vec<bool>,
    pub n2: Vec<bool>,
    pub master: Vec<bool>,
    pub r_le_b: Vec<bool>,
    pub delta_le_b: Vec<bool>,
    pub a_priori: bool,
    pub passed: bool,
    pub first_failure: Option<(usize, String)>,
}

fn ln0(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Checks N₁, N₂, the master inequality and |rₙ|, |δₙ| ≤ bₙ on a run, and
/// writes bₙ, σₙ and the verdicts into the trace.
pub fn certify(trace: &mut IterationTrace, sched: &VersalSchedule) -> Result<VersalCertificate> {
    let steps = trace.steps.len();
    let mut cert = VersalCertificate {
        n1: Vec::new(),
        n2: Vec::new(),
        master: Vec::new(),
        r_le_b: Vec::new(),
        delta_le_b: Vec::new(),
        a_priori: false,
        passed: true,
        first_failure: None,
    };
    let (k, l) = (sched.k, sched.l);
    let tol = 1e-12;
    for i in 0..steps {
        let rec = &trace.steps[i];
        let n = rec.n;
        let lr = ln0(rec.r_norm.unwrap_or(0.0));
        let ld = ln0(rec.delta_norm.unwrap_or(0.0));
        let lb = sched.b.ln(n)?;
        let lsig = sched.sigma_ln(n)?;
        let lrho = sched.rho_ln(n)?;
        let n1 = n == 0 || ld <= -((n + 1) as f64) * std::f64::consts::LN_2 + tol;
        let n2 = i + 1 == steps || lr <= lsig - (4.0 * E).ln() - sched.j.ln(n)? + tol;
        let master = if i + 1 < steps {
            let lr1 = ln0(trace.steps[i + 1].r_norm.unwrap_or(0.0));
            let quad = crate::sequences::log_add_exp(sched.a2.ln(n)?, sched.a3.ln(n)?) - k * lsig + 2.0 * lr;
            let lin = lrho + sched.a4.ln(n)? - l * lsig + lr;
            lr1 <= crate::sequences::log_add_exp(quad, lin) + tol
        } else {
            true
        };
        let rb = lr <= lb + tol;
        let db = ld <= lb + tol;
        if n == 0 {
            cert.a_priori = rec.r_norm.unwrap_or(0.0) <= sched.threshold;
        }
        let ok = n1 && n2 && master && rb && db;
        if !ok && cert.first_failure.is_none() {
            let which = [(n1, "N1"), (n2, "N2"), (master, "master"), (rb, "|r| ≤ b"), (db, "|δ| ≤ b")]
                .iter()
                .find(|(h, _)| !h)
                .map(|(_, w)| w.to_string())
                .unwrap_or_default();
            cert.first_failure = Some((n, which));
        }
        cert.n1.push(n1);
        cert.n2.push(n2);
        cert.master.push(master);
        cert.r_le_b.push(rb);
        cert.delta_le_b.push(db);
        let rec = &mut trace.steps[i];
        rec.b_n = Some(lb.exp());
        rec.log_b = Some(lb);
        rec.sigma_n = Some(lsig.exp());
        rec.checks_passed &= ok;
    }
    cert.passed = cert.first_failure.is_none() && trace.all_checks_passed();
    if !cert.passed && trace.status == Status::Certified {
        trace.status = Status::Uncertified;
    }
    if let Some((n, w)) = &cert.first_failure {
        trace.note(format!("certificate fails first at n = {n}: {w}"));
    }
    Ok(cert)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConjugacyReport {
    /// max coefficient of g(τ₀+r₀) − (τ_N + r_N)
    pub identity_defect: f64,
    /// |g(τ₀+r₀) − τ_N| at the limit radius
    pub residual: f64,
    /// max coefficient of g(τ₀+r₀) − τ_N
    pub coeff_residual: f64,
    pub limit_radius: f64,
    pub sigma: f64,
    pub product_bound_holds: bool,
}

#[derive(Clone, Debug)]
pub struct LieRun {
    pub trace: IterationTrace,
    pub tau: TruncatedSeries,
    pub r: TruncatedSeries,
    pub delta_sum: TruncatedSeries,
    pub fields: Vec<TruncatedSeries>,
    pub orders: Vec<usize>,
    pub membership: Vec<bool>,
    pub consistency: Vec<f64>,
    /// |rₙ| restricted to the limit radius
    pub residuals: Vec<f64>,
    pub conjugacy: ConjugacyReport,
}

/// Consistency tolerance relative to the size of xₙ.
pub const CONSISTENCY_TOL: f64 = 1e-12;

/// Iterates `lie_step` and assembles g = e^{−u_{N−1}}⋯e^{−u₀}.
pub fn run_lie(
    problem: &ActionProblem,
    schedule: &RadiusSchedule,
    r0: &TruncatedSeries,
    steps: usize,
) -> Result<LieRun> {
    let s0 = schedule.s(0)?;
    let limit = schedule.limit()?;
    let mut state = LieState::initial(problem, r0, s0)?;
    let x0 = state.x()?;
    let mut trace = IterationTrace::new(&format!("lie:{}", problem.name));
    let mut fields = Vec::new();
    let mut ops = Vec::new();
    let mut orders = vec![state.r.order(0.0)];
    let mut membership = vec![problem.in_m(0, &state.r)];
    let mut consistency = Vec::new();
    let mut residuals = vec![state.r.restrict_to(limit.min(s0))?.majorant_norm(limit.min(s0))?];
    let mut delta_sum = state.delta.clone();
    let mut radii = vec![s0];
    let mut records = Vec::new();

    let mut rec = StepRecord::new(0);
    rec.s_n = Some(s0);
    rec.r_norm = Some(state.r_norm);
    rec.delta_norm = Some(0.0);
    rec.log_r = Some(ln0(state.r_norm));
    rec.checks_passed = membership[0];
    records.push(rec);

    for _ in 0..steps {
        let out = lie_step(&state, problem, schedule)?;
        let scale = state.x()?.majorant_norm(state.s_n)?.max(1.0);
        let consistent = out.consistency <= CONSISTENCY_TOL * scale && out.dropped <= CONSISTENCY_TOL * scale;
        {
            let cur = records.last_mut().expect("record for step n");
            cur.u_norm = Some(out.u_norm);
            cur.ratio = Some(out.ratio);
            cur.checks_passed &= consistent;
            if !consistent {
                cur.note = Some(format!("e^(-u)x differs from tau + r by {:.3e}", out.consistency));
            }
        }
        consistency.push(out.consistency);
        fields.push(out.field.clone());
        ops.push(problem.field_operator(&out.field.scale_real(-1.0))?);
        state = out.next;
        delta_sum = delta_sum.add(&state.delta)?;
        radii.push(state.s_n);
        orders.push(state.r.order(0.0));
        let member = problem.in_m(state.n, &state.r);
        membership.push(member);
        let at = limit.min(state.s_n);
        residuals.push(state.r.restrict_to(at)?.majorant_norm(at)?);
        let mut rec = StepRecord::new(state.n);
        rec.s_n = Some(state.s_n);
        rec.r_norm = Some(state.r_norm);
        rec.delta_norm = Some(state.delta_norm);
        rec.log_r = Some(ln0(state.r_norm));
        rec.checks_passed = member;
        records.push(rec);
    }
    for r in records {
        trace.push(r);
    }

    let product = if ops.is_empty() {
        None
    } else {
        Some(product_of_exponentials(&ops, &radii, &x0)?)
    };
    let g = match &product {
        Some(p) => p.series.clone(),
        None => x0.clone(),
    };
    let identity_defect = g.max_coeff_diff(&state.x()?)?;
    let at = limit.min(state.s_n);
    let residual = g.sub(&state.tau)?.restrict_to(at)?.majorant_norm(at)?;
    let coeff_residual = g.max_coeff_diff(&state.tau)?;
    let conjugacy = ConjugacyReport {
        identity_defect,
        residual,
        coeff_residual,
        limit_radius: limit,
        sigma: product.as_ref().map_or(0.0, |p| p.sigma),
        product_bound_holds: product.as_ref().map_or(true, |p| p.holds),
    };
    let scale = x0.majorant_norm(s0)?.max(1.0);
    let identity_ok = identity_defect <= CONSISTENCY_TOL * scale;
    if !identity_ok {
        trace.note(format!("g(x0) differs from tau_N + r_N by {identity_defect:.3e}"));
    }
    trace.status = if trace.all_checks_passed() && identity_ok { Status::Certified } else { Status::Uncertified };
    trace.note(format!("limit radius {limit:e}, residual {residual:e}"));
    Ok(LieRun {
        trace,
        tau: state.tau.clone(),
        r: state.r,
        delta_sum,
        fields,
        orders,
        membership,
        consistency,
        residuals,
        conjugacy,
    })
}

/// j = L ∘ (ι − L) built from a map L: M → vector-field coefficients and a
/// projector π onto T, at the base point x. Fields act by a ↦ a·g′.
pub struct InvolutiveQuasiInverse<L, P> {
    l: L,
    pi: P,
    x: TruncatedSeries,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InvolutivityReport {
    /// j(τ)(r)(x+δ) − [r + K(r − L(r)δ) − L(L(r)δ)δ] with K(y) = L(y)x − y
    pub chain_defect: f64,
    /// (ι−π)(j(τ)(r)(x+δ) − r) − κ₀(r − L(r)δ)
    pub quotient_defect: f64,
    /// |(ι−π)L(L(r)δ)δ|, zero when L(·) preserves T
    pub t_leak: f64,
    pub holds: bool,
}

/// a·g′ at the reference radius of g (tail-free inputs).
pub fn act_field(a: &TruncatedSeries, g: &TruncatedSeries) -> Result<TruncatedSeries> {
    let r = a.ref_radius().min(g.ref_radius());
    let dg = g.restrict_to(r)?.derivative_to(0, r)?;
    a.restrict_to(r)?.multiply(&dg)
}

impl<L, P> InvolutiveQuasiInverse<L, P>
where
    L: Fn(&TruncatedSeries) -> Result<TruncatedSeries>,
    P: Fn(&TruncatedSeries) -> Result<TruncatedSeries>,
{
    /// Refuses when π is not idempotent or L(y) does not map T to T on the
    /// samples; the error names the offending sample.
    pub fn new(l: L, pi: P, x: TruncatedSeries, samples: &[TruncatedSeries]) -> Result<Self> {
        let q = InvolutiveQuasiInverse { l, pi, x };
        for (i, y) in samples.iter().enumerate() {
            let p = (q.pi)(y)?;
            let scale = y.poly_norm(y.ref_radius()).max(1.0);
            if (q.pi)(&p)?.max_coeff_diff(&p)? > 1e-12 * scale {
                return Err(Error::Domain(format!("π is not idempotent on sample {i}")));
            }
            for z in samples {
                let delta = (q.pi)(z)?;
                let moved = act_field(&(q.l)(y)?, &delta)?;
                let leak = moved.sub(&(q.pi)(&moved)?)?;
                if leak.poly_norm(leak.ref_radius()) > 1e-12 * scale.max(z.poly_norm(z.ref_radius())) {
                    return Err(Error::Domain(format!("L(sample {i}) does not preserve T")));
                }
            }
        }
        Ok(q)
    }

    /// Same without the hypothesis sampling.
    pub fn unchecked(l: L, pi: P, x: TruncatedSeries) -> Self {
        InvolutiveQuasiInverse { l, pi, x }
    }

    pub fn l(&self, y: &TruncatedSeries) -> Result<TruncatedSeries> {
        (self.l)(y)
    }

    /// j(x+δ)(r) = L(r − L(r)δ)
    pub fn j(&self, delta: &TruncatedSeries, r: &TruncatedSeries) -> Result<TruncatedSeries> {
        let lr = (self.l)(r)?;
        (self.l)(&r.sub(&act_field(&lr, delta)?)?)
    }

    /// K(y) = L(y)x − y, unprojected
    pub fn k_full(&self, y: &TruncatedSeries) -> Result<TruncatedSeries> {
        act_field(&(self.l)(y)?, &self.x)?.sub(y)
    }

    /// κ₀ = (ι − π)K
    pub fn kappa0(&self, y: &TruncatedSeries) -> Result<TruncatedSeries> {
        let k = self.k_full(y)?;
        k.sub(&(self.pi)(&k)?)
    }

    pub fn check(&self, r: &TruncatedSeries, delta: &TruncatedSeries) -> Result<InvolutivityReport> {
        let tau = self.x.add(delta)?;
        let lhs = act_field(&self.j(delta, r)?, &tau)?;
        let lr = (self.l)(r)?;
        let lr_delta = act_field(&lr, delta)?;
        let w = r.sub(&lr_delta)?;
        let last = act_field(&(self.l)(&lr_delta)?, delta)?;
        let rhs = r.add(&self.k_full(&w)?)?.sub(&last)?;
        let chain_defect = lhs.max_coeff_diff(&rhs)?;
        let diff = lhs.sub(r)?;
        let proj = diff.sub(&(self.pi)(&diff)?)?;
        let quotient_defect = proj.max_coeff_diff(&self.kappa0(&w)?)?;
        let t_leak = last.sub(&(self.pi)(&last)?)?.max_coeff_diff(&last.scale_real(0.0))?;
        let scale = [r, delta, &self.x].iter().map(|s| s.poly_norm(s.ref_radius())).fold(1.0, f64::max);
        let tol = 1e-12 * scale * scale;
        Ok(InvolutivityReport {
            holds: chain_defect <= tol && quotient_defect <= tol + t_leak,
            chain_defect,
            quotient_defect,
            t_leak,
        })
    }
}

/// Wraps local operators applied at their own reference radius.
pub fn involutive_quasi_inverse(
    l: LocalOperator,
    pi: LocalOperator,
    x: TruncatedSeries,
    samples: &[TruncatedSeries],
) -> Result<InvolutiveQuasiInverse<impl Fn(&TruncatedSeries) -> Result<TruncatedSeries>, impl Fn(&TruncatedSeries) -> Result<TruncatedSeries>>> {
    if matches!(l.kind, OperatorKind::Cutoff { .. }) && l.grade > 0 {
        return input("L must be a grade-0 operator");
    }
    let lf = move |y: &TruncatedSeries| {
        let r = y.ref_radius();
        l.apply(y, r, r)
    };
    let pf = move |y: &TruncatedSeries| {
        let r = y.ref_radius();
        pi.apply(y, r, r)
    };
    InvolutiveQuasiInverse::new(lf, pf, x, samples)
}
