//! Weight functions, local operators with certified norms, the Borel map and
//! exponentials of derivations.
//!
//! A grade-n operator u carries a bound N with |u g|_s ≤ N·|g|_t / Λ_n(t,s)
//! for all s < t ≤ r_ref, where Λ_n = λⁿ/nⁿ (Λ_0 = 1). With λ = t − s this
//! gives |d/dz| = 1 and |v ∘ u| ≤ |v||u| at the optimal intermediate radius.

use std::f64::consts::E;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, input, Error, Result};
use crate::series::{Basis, TruncatedSeries};

/// λ(t,s) = C s^p t^{−q} (t−s)^k
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightFunction {
    pub c: f64,
    pub p: f64,
    pub q: f64,
    pub k: u32,
}

impl Default for WeightFunction {
    fn default() -> Self {
        WeightFunction { c: 1.0, p: 0.0, q: 0.0, k: 1 }
    }
}

impl WeightFunction {
    pub fn new(c: f64, p: f64, q: f64, k: u32) -> Result<Self> {
        if !(c > 0.0 && p >= 0.0 && q >= 0.0) {
            return input("weight needs C > 0 and p, q ≥ 0");
        }
        Ok(WeightFunction { c, p, q, k })
    }

    /// The plain width t − s.
    pub fn width() -> Self {
        Self::default()
    }

    pub fn eval(&self, t: f64, s: f64) -> f64 {
        self.c * s.powf(self.p) * t.powf(-self.q) * (t - s).powi(self.k as i32)
    }

    /// λ_n = eⁿ λⁿ / nⁿ
    pub fn grade(&self, n: u32, t: f64, s: f64) -> f64 {
        if n == 0 {
            return 1.0;
        }
        let nf = n as f64;
        (nf * (E * self.eval(t, s) / nf).ln()).exp()
    }

    /// Λ_n = λⁿ / nⁿ, the weight used for operator norms.
    pub fn operator_weight(&self, n: u32, t: f64, s: f64) -> f64 {
        if n == 0 {
            return 1.0;
        }
        let nf = n as f64;
        (self.eval(t, s) / nf).powi(n as i32)
    }
}

/// λ(n,s,t) = (t/s)^{2ⁿ} s^a (t−s)^b; not submultiplicative.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffWeight {
    pub a: f64,
    pub b: f64,
}

impl CutoffWeight {
    pub fn eval(&self, n: u32, s: f64, t: f64) -> f64 {
        ((2f64).powi(n as i32) * (t / s).ln() + self.a * s.ln() + self.b * (t - s).ln()).exp()
    }

    pub fn submultiplicative(&self) -> bool {
        false
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubmultReport {
    pub p: u32,
    pub q: u32,
    pub samples: usize,
    /// min over samples of (rhs − lhs)/max(lhs, rhs)
    pub worst_margin: f64,
    pub violations: Vec<(f64, f64)>,
    pub holds: bool,
}

/// Checks λ_{p+q}(t,s) ≤ λ_p(t,m)·λ_q(m,s) at m = p/(p+q)·s + q/(p+q)·t.
pub fn submult_check(w: &WeightFunction, p: u32, q: u32, grid: &[(f64, f64)]) -> Result<SubmultReport> {
    if p < 1 || q < 1 {
        return input("submult_check needs p, q ≥ 1");
    }
    let (pf, qf) = (p as f64, q as f64);
    let mut worst = f64::INFINITY;
    let mut violations = Vec::new();
    for &(s, t) in grid {
        if !(0.0 < s && s < t) {
            return input(format!("grid point ({s}, {t}) needs 0 < s < t"));
        }
        let m = pf / (pf + qf) * s + qf / (pf + qf) * t;
        let lhs = w.grade(p + q, t, s);
        let rhs = w.grade(p, t, m) * w.grade(q, m, s);
        let scale = lhs.max(rhs);
        let margin = if scale > 0.0 { (rhs - lhs) / scale } else { 0.0 };
        worst = worst.min(margin);
        if margin < -1e-12 {
            violations.push((s, t));
        }
    }
    Ok(SubmultReport { p, q, samples: grid.len(), worst_margin: worst, holds: violations.is_empty(), violations })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "weight", rename_all = "snake_case")]
pub enum Weight {
    Standard(WeightFunction),
    Cutoff(CutoffWeight),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum OperatorKind {
    Zero,
    /// g ↦ a·∂g on univariate Taylor series
    VectorField { a: TruncatedSeries },
    /// F ↦ F v′ − v F′ on Fourier coefficients of vector fields F∂ₓ
    Bracket { v: TruncatedSeries },
    /// g ↦ m·g
    Multiplication { m: TruncatedSeries },
    /// keep degrees (or |k|) in [k, l)
    Cutoff { k: usize, l: usize },
    /// apply factors[0] first
    Composite { factors: Vec<LocalOperator> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalOperator {
    pub kind: OperatorKind,
    pub weight: Weight,
    pub grade: u32,
    pub norm_bound: f64,
}

impl LocalOperator {
    pub fn zero(grade: u32) -> Self {
        LocalOperator { kind: OperatorKind::Zero, weight: Weight::Standard(WeightFunction::width()), grade, norm_bound: 0.0 }
    }

    pub fn multiplication(m: TruncatedSeries) -> Self {
        let norm_bound = m.norm();
        LocalOperator { kind: OperatorKind::Multiplication { m }, weight: Weight::Standard(WeightFunction::width()), grade: 0, norm_bound }
    }

    /// Truncation to [k, l); a contraction for majorant norms.
    pub fn cutoff(k: usize, l: usize, weight: CutoffWeight) -> Self {
        LocalOperator { kind: OperatorKind::Cutoff { k, l }, weight: Weight::Cutoff(weight), grade: 0, norm_bound: 1.0 }
    }

    /// Fourier bracket with v∂ₓ; the grade-1 bound holds for widths t − s ≤ r_ref.
    pub fn bracket(v: TruncatedSeries) -> Result<Self> {
        if v.basis() != Basis::Fourier {
            return input("bracket needs a Fourier series");
        }
        let r = v.ref_radius();
        let dv = v.derivative(0)?;
        let norm_bound = v.norm() / E + r * dv.majorant_norm(dv.ref_radius())?;
        Ok(LocalOperator { kind: OperatorKind::Bracket { v }, weight: Weight::Standard(WeightFunction::width()), grade: 1, norm_bound })
    }

    fn weight_fn(&self) -> Option<WeightFunction> {
        match self.weight {
            Weight::Standard(w) => Some(w),
            Weight::Cutoff(_) => None,
        }
    }

    /// Apply at (t, s): the input is read at radius t, the output certified at s.
    pub fn apply(&self, g: &TruncatedSeries, t: f64, s: f64) -> Result<TruncatedSeries> {
        if s > t {
            return Err(Error::Order(format!("apply needs s ≤ t, got s = {s}, t = {t}")));
        }
        let gt = g.restrict_to(t)?;
        match &self.kind {
            OperatorKind::Zero => Ok(gt.restrict_to(s)?.scale_real(0.0)),
            OperatorKind::VectorField { a } => {
                if s >= t && gt.tail() > 0.0 {
                    return domain("a derivation needs s < t on series with a tail");
                }
                let dg = gt.derivative_to(0, s)?;
                a.restrict_to(s)?.multiply(&dg)
            }
            OperatorKind::Bracket { v } => {
                let vs = v.restrict_to(t)?;
                let dv = vs.derivative_to(0, s)?;
                let dg = gt.derivative_to(0, s)?;
                let first = gt.restrict_to(s)?.multiply(&dv)?;
                let second = vs.restrict_to(s)?.multiply(&dg)?;
                first.sub(&second)
            }
            OperatorKind::Multiplication { m } => m.restrict_to(s)?.multiply(&gt.restrict_to(s)?),
            OperatorKind::Cutoff { k, l } => gt.restrict_to(s)?.cutoff(*k, *l),
            OperatorKind::Composite { factors } => {
                let total: u32 = factors.iter().map(|f| f.grade).sum();
                let mut cur = gt;
                let mut r = t;
                for f in factors {
                    let next = if total == 0 { t } else { r - (t - s) * f.grade as f64 / total as f64 };
                    let next = next.max(s);
                    cur = f.apply(&cur, r, next)?;
                    r = next;
                }
                cur.restrict_to(s)
            }
        }
    }

    /// Ratio x with |uⁿ g|_s / n! ≤ xⁿ |g|_t for all n.
    pub fn borel_ratio(&self, t: f64, s: f64) -> Result<f64> {
        if !(s < t) {
            return domain("the Borel map needs s < t");
        }
        match &self.kind {
            OperatorKind::Zero => Ok(0.0),
            OperatorKind::VectorField { a } => Ok(a.majorant_norm(t)? / (t - s)),
            OperatorKind::Bracket { v } => {
                let vt = v.restrict_to(t)?;
                let dv = vt.derivative(0)?;
                Ok((vt.norm() + E * (t - s) * dv.norm()) / (t - s))
            }
            _ => {
                if self.grade != 1 {
                    return input("the Borel map needs a grade-1 operator");
                }
                let w = self.weight_fn().ok_or_else(|| Error::Domain("cutoff weights have no Borel map".into()))?;
                Ok(E * self.norm_bound / w.eval(t, s))
            }
        }
    }

    /// Sampled λ-weighted ratio Λ_n(t,s)|u g|_s / |g|_t (a lower bound for the norm).
    pub fn sampled_norm(&self, g: &TruncatedSeries, t: f64, s: f64) -> Result<f64> {
        let w = self.weight_fn().unwrap_or_default();
        let out = self.apply(g, t, s)?;
        let den = g.majorant_norm(t)?;
        if den == 0.0 {
            return Ok(0.0);
        }
        Ok(w.operator_weight(self.grade, t, s) * out.majorant_norm(s)? / den)
    }

    /// The operator is identically zero (not merely small at these radii).
    pub fn is_null(&self) -> bool {
        match &self.kind {
            OperatorKind::Zero => true,
            OperatorKind::VectorField { a } => a.is_zero(),
            OperatorKind::Bracket { v } => v.is_zero(),
            OperatorKind::Multiplication { m } => m.is_zero(),
            OperatorKind::Composite { factors } => factors.iter().any(|f| f.is_null()),
            OperatorKind::Cutoff { .. } => false,
        }
    }

    fn is_tail_free(&self) -> bool {
        match &self.kind {
            OperatorKind::VectorField { a } => a.tail() == 0.0,
            OperatorKind::Bracket { v } => v.tail() == 0.0,
            OperatorKind::Multiplication { m } => m.tail() == 0.0,
            OperatorKind::Composite { factors } => factors.iter().all(|f| f.is_tail_free()),
            _ => true,
        }
    }

    fn min_degree_shift(&self) -> Option<i64> {
        match &self.kind {
            OperatorKind::VectorField { a } => {
                let o = a.order(0.0);
                (o <= a.cap()).then_some(o as i64 - 1)
            }
            OperatorKind::Zero => None,
            _ => Some(i64::MIN),
        }
    }
}

/// Grade-1 operator f ↦ a f′ with bound |a|_{r_ref}.
pub fn certify_vector_field(a: TruncatedSeries) -> Result<LocalOperator> {
    if a.basis() != Basis::Taylor || a.dim() != 1 {
        return input("vector fields are univariate Taylor series");
    }
    let norm_bound = a.norm();
    Ok(LocalOperator { kind: OperatorKind::VectorField { a }, weight: Weight::Standard(WeightFunction::width()), grade: 1, norm_bound })
}

/// v ∘ u: u first, then v.
pub fn compose(v: &LocalOperator, u: &LocalOperator) -> Result<LocalOperator> {
    let (Weight::Standard(wv), Weight::Standard(wu)) = (&v.weight, &u.weight) else {
        return domain("cutoff weights are not submultiplicative, grade composition is refused");
    };
    if wv != wu {
        return input("compose needs the same weight function on both operators");
    }
    let mut factors = Vec::new();
    for op in [u, v] {
        match &op.kind {
            OperatorKind::Composite { factors: f } => factors.extend(f.iter().cloned()),
            _ => factors.push(op.clone()),
        }
    }
    Ok(LocalOperator {
        kind: OperatorKind::Composite { factors },
        weight: v.weight.clone(),
        grade: u.grade + v.grade,
        norm_bound: u.norm_bound * v.norm_bound,
    })
}

/// Power series fed to the Borel map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum BorelFn {
    /// 1/(1−z) ↦ eᶻ
    Exp,
    /// 1/(1+z) ↦ e^{−z}
    NegExp,
    /// e^{−z}(1+z) − 1
    Phi,
    /// e^{−z} − 1
    Psi,
    /// polynomial with explicit coefficients
    Custom { coeffs: Vec<f64> },
}

impl BorelFn {
    /// Coefficient a_n of the series before the Borel transform.
    pub fn coeff(&self, n: usize) -> f64 {
        let sgn = if n % 2 == 0 { 1.0 } else { -1.0 };
        match self {
            BorelFn::Exp => 1.0,
            BorelFn::NegExp => sgn,
            BorelFn::Phi => {
                if n >= 2 {
                    -(n as f64 - 1.0) * sgn
                } else {
                    0.0
                }
            }
            BorelFn::Psi => {
                if n >= 1 {
                    sgn
                } else {
                    0.0
                }
            }
            BorelFn::Custom { coeffs, .. } => coeffs.get(n).copied().unwrap_or(0.0),
        }
    }

    /// |f|(x)
    pub fn majorant(&self, x: f64) -> f64 {
        match self {
            BorelFn::Exp | BorelFn::NegExp => 1.0 / (1.0 - x),
            BorelFn::Phi => (x / (1.0 - x)).powi(2),
            BorelFn::Psi => x / (1.0 - x),
            BorelFn::Custom { coeffs, .. } => {
                coeffs.iter().enumerate().map(|(n, a)| a.abs() * x.powi(n as i32)).sum()
            }
        }
    }

    /// Σ_{n>m} |a_n| xⁿ
    fn majorant_tail(&self, x: f64, m: usize) -> f64 {
        let mf = m as f64;
        match self {
            BorelFn::Exp | BorelFn::NegExp | BorelFn::Psi => x.powi(m as i32 + 1) / (1.0 - x),
            BorelFn::Phi => {
                // Σ_{n≥m+1} (n−1) xⁿ ≤ Σ_{n≥m+1} (n+1) xⁿ
                (mf + 2.0) * x.powi(m as i32 + 1) / (1.0 - x) + x.powi(m as i32 + 2) / (1.0 - x).powi(2)
            }
            BorelFn::Custom { coeffs } => {
                coeffs.iter().enumerate().skip(m + 1).map(|(n, a)| a.abs() * x.powi(n as i32)).sum()
            }
        }
    }

    /// Bound on Σ_{j≥0} |a_{k+j}| x^j / C(k+j, k), the propagation factor of an
    /// overflow created at step k.
    fn overflow_factor(&self, x: f64, k: usize) -> f64 {
        let kf = k as f64;
        match self {
            BorelFn::Exp | BorelFn::NegExp | BorelFn::Psi => 1.0 / (1.0 - x),
            BorelFn::Phi => (kf + 1.0) / (1.0 - x) + x / (1.0 - x).powi(2),
            BorelFn::Custom { coeffs } => {
                let mut s = 0.0;
                let mut binom = 1.0;
                for j in 0.. {
                    let n = k + j;
                    if n >= coeffs.len() {
                        break;
                    }
                    if j > 0 {
                        binom *= n as f64 / j as f64;
                    }
                    s += coeffs[n].abs() * x.powi(j as i32) / binom;
                }
                s
            }
        }
    }

    fn radius(&self) -> f64 {
        match self {
            BorelFn::Custom { .. } => f64::INFINITY,
            _ => 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BorelResult {
    pub series: TruncatedSeries,
    /// x = ‖u‖/λ(t,s) in the form used by the bound
    pub ratio: f64,
    /// |f|(x)·|g|_t
    pub bound: f64,
    pub terms: usize,
}

/// Maximal number of terms for non-terminating Borel sums.
pub const BOREL_MAX_TERMS: usize = 400;

/// Σ aₙ/n!·uⁿ(g) truncated at the cap, with a certified tail at radius s.
pub fn borel_apply(f: &BorelFn, u: &LocalOperator, t: f64, s: f64, g: &TruncatedSeries) -> Result<BorelResult> {
    if u.grade != 1 && !matches!(u.kind, OperatorKind::Zero) {
        return input("borel_apply needs a grade-1 operator");
    }
    if !u.is_tail_free() {
        return domain("borel_apply needs a derivation with exact coefficients");
    }
    let x = if matches!(u.kind, OperatorKind::Zero) { 0.0 } else { u.borel_ratio(t, s)? };
    if !(x < f.radius()) {
        return Err(Error::OutsideDisc { ratio: x, limit: f.radius() });
    }
    let gt = g.restrict_to(t)?;
    if u.is_null() {
        let bound = f.coeff(0).abs() * gt.norm();
        return Ok(BorelResult { series: gt.restrict_to(s)?.scale_real(f.coeff(0)), ratio: 0.0, bound, terms: 1 });
    }
    let rem_g = gt.tail();
    let p = gt.clone().with_tail(0.0, 0);
    let p_norm = p.norm();
    let fourier = g.basis() == Basis::Fourier;

    let mut acc = p.scale_real(f.coeff(0));
    let mut q = p.clone();
    let mut overflow_tail = 0.0;
    let mut terms = 1;
    let mut terminated = u.is_null() || p.is_zero();
    let mut n = 1;
    while !terminated && n <= BOREL_MAX_TERMS {
        // derivations preserve the coefficient/radius bookkeeping at t
        let uq = u.apply(&q, t, t)?;
        let o = uq.tail();
        q = uq.with_tail(0.0, 0).scale_real(1.0 / n as f64);
        if o > 0.0 {
            overflow_tail += o / n as f64 * f.overflow_factor(x, n);
        }
        let a = f.coeff(n);
        if a != 0.0 {
            acc = acc.add(&q.scale_real(a))?;
        }
        terms = n + 1;
        if q.is_zero() {
            terminated = true;
        }
        n += 1;
    }
    let last = n - 1;
    let nonterm = if terminated { 0.0 } else { f.majorant_tail(x, last) * p_norm };
    let rem_part = if rem_g > 0.0 { f.majorant(x) * rem_g } else { 0.0 };

    let mut order = acc.cap() + 1;
    if !fourier {
        let shift = u.min_degree_shift();
        if overflow_tail > 0.0 && shift.map_or(false, |d| d >= 0) {
            order = order.min(acc.cap() + 1);
        } else if overflow_tail > 0.0 {
            order = 0;
        }
        if rem_part > 0.0 {
            order = order.min(if shift.map_or(true, |d| d >= 0) { gt.tail_order() } else { 0 });
        }
        if nonterm > 0.0 {
            let po = p.order(0.0) as i64;
            order = order.min(match shift {
                Some(d) if d >= 0 => (po + (last as i64 + 1) * d).max(0) as usize,
                None => order,
                _ => 0,
            });
        }
    } else if overflow_tail + rem_part + nonterm > 0.0 {
        order = 0;
    }
    let tail = overflow_tail + nonterm + rem_part;
    let mut series = acc.restrict_to(s)?.with_tail(0.0, 0);
    if tail > 0.0 {
        series = series.with_tail(tail, order);
    }
    let bound = f.majorant(x) * gt.norm();
    // the a-priori ball |f|(x)|g|_t around 0 is the tighter enclosure here
    if tail > 0.0 && series.majorant_norm(s)? > bound {
        let ord = if fourier || u.min_degree_shift().map_or(false, |d| d < 0) { 0 } else { gt.order(0.0) };
        series = series.scale_real(0.0).with_tail(0.0, 0).with_tail(bound, ord);
    }
    Ok(BorelResult { series, ratio: x, bound, terms })
}

/// e^u g certified at s.
pub fn exp_apply(u: &LocalOperator, t: f64, s: f64, g: &TruncatedSeries) -> Result<BorelResult> {
    borel_apply(&BorelFn::Exp, u, t, s, g)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpPairReport {
    pub defect: f64,
    /// sum of the certified tails of both applications
    pub tail_slack: f64,
    pub consistent: bool,
}

/// Applies e^{u} then e^{−u} through the midpoint and measures the distance
/// to the restriction of g.
pub fn exp_pair_check(u: &LocalOperator, t: f64, s: f64, g: &TruncatedSeries) -> Result<ExpPairReport> {
    let m = 0.5 * (t + s);
    let fwd = borel_apply(&BorelFn::Exp, u, t, m, g)?;
    let back = borel_apply(&BorelFn::NegExp, u, m, s, &fwd.series)?;
    let diff = back.series.sub(&g.restrict_to(s)?)?;
    let defect = diff.poly_norm(s);
    let tail_slack = back.series.tail() + fwd.series.tail_at(s);
    Ok(ExpPairReport { defect, tail_slack, consistent: defect <= tail_slack + 1e-12 * g.majorant_norm(t)? })
}

#[derive(Clone, Debug)]
pub struct ProductReport {
    pub series: TruncatedSeries,
    pub ratios: Vec<f64>,
    pub sigma: f64,
    /// σ/(1−σ), or ∞ when σ ≥ 1
    pub bound: f64,
    /// |g_result − ι g|_{t_N} / |g|_{t_0}
    pub observed: f64,
    pub holds: bool,
}

/// Applies e^{u_0}, …, e^{u_N} through the radii t_0 > t_1 > … > t_{N+1}.
pub fn product_of_exponentials(us: &[LocalOperator], radii: &[f64], g: &TruncatedSeries) -> Result<ProductReport> {
    if radii.len() != us.len() + 1 {
        return input("product_of_exponentials needs one more radius than operators");
    }
    if radii.windows(2).any(|w| !(w[1] < w[0])) {
        return input("radii must be strictly decreasing");
    }
    let mut cur = g.clone();
    let mut ratios = Vec::with_capacity(us.len());
    for (i, u) in us.iter().enumerate() {
        let res = exp_apply(u, radii[i], radii[i + 1], &cur).map_err(|e| match e {
            Error::OutsideDisc { ratio, limit } => Error::Step {
                index: i,
                detail: format!("‖u‖/λ = {ratio} is not below {limit}"),
            },
            other => other,
        })?;
        ratios.push(res.ratio);
        cur = res.series;
    }
    let sigma: f64 = ratios.iter().sum();
    let bound = if sigma < 1.0 { sigma / (1.0 - sigma) } else { f64::INFINITY };
    let last = *radii.last().expect("non-empty");
    let g0 = g.majorant_norm(radii[0])?;
    let diff = cur.sub(&g.restrict_to(last)?)?;
    let observed = if g0 > 0.0 { diff.majorant_norm(last)? / g0 } else { 0.0 };
    Ok(ProductReport { series: cur, holds: sigma < 1.0 && observed <= bound * (1.0 + 1e-12) + 1e-300, ratios, sigma, bound, observed })
}

/// Certified ratio for the derivation c·d/dz used by shift tests.
pub fn constant_field(c: Complex64, cap: usize, r: f64) -> Result<LocalOperator> {
    certify_vector_field(TruncatedSeries::from_complex(cap, r, &[c]))
}
