//! Positive sequences, Bruno sums, the Bruno transform and tame pairs.
//!
//! Everything is evaluated in log-space: the schedules built here routinely
//! reach magnitudes far below `f64::MIN_POSITIVE`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, input, Result};

/// Depth used for the inner truncation of the Bruno transform when a caller
/// only asks for a window.
pub const TRANSFORM_DEPTH: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// A positive sequence given by a closed-form family or by data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PositiveSequence {
    /// a_n = q^n
    Geometric { q: f64 },
    /// a_n = c
    Constant { c: f64 },
    /// a_n = exp(±alpha^n)
    ExpPower { sign: Sign, alpha: f64 },
    /// a_n = eps^(2^n), the prototypical strict sequence
    DoubleExp { eps: f64 },
    Tabulated { values: Vec<f64> },
    /// tabulated natural logarithms
    LogTabulated { logs: Vec<f64> },
    Product { factors: Vec<PositiveSequence> },
    Sum { terms: Vec<PositiveSequence> },
    Power { base: Box<PositiveSequence>, exponent: f64 },
    /// a_n = exp(ln_factor) * base_n
    Scaled { base: Box<PositiveSequence>, ln_factor: f64 },
}

/// Bound on the tail Σ_{j≥m} |ln a_j| / 2^{j+1}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Tail {
    Bound(f64),
    Divergent,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    Constant,
    None,
}

fn pow2(n: usize) -> f64 {
    (2.0f64).powi(n as i32)
}

/// ln(e^a + e^b) without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

impl PositiveSequence {
    pub fn geometric(q: f64) -> Self {
        PositiveSequence::Geometric { q }
    }

    pub fn constant(c: f64) -> Self {
        PositiveSequence::Constant { c }
    }

    pub fn exp_power(sign: Sign, alpha: f64) -> Self {
        PositiveSequence::ExpPower { sign, alpha }
    }

    pub fn double_exp(eps: f64) -> Self {
        PositiveSequence::DoubleExp { eps }
    }

    pub fn tabulated(values: Vec<f64>) -> Self {
        PositiveSequence::Tabulated { values }
    }

    pub fn log_tabulated(logs: Vec<f64>) -> Self {
        PositiveSequence::LogTabulated { logs }
    }

    pub fn times(self, other: PositiveSequence) -> Self {
        PositiveSequence::Product { factors: vec![self, other] }
    }

    pub fn plus(self, other: PositiveSequence) -> Self {
        PositiveSequence::Sum { terms: vec![self, other] }
    }

    pub fn pow(self, exponent: f64) -> Self {
        PositiveSequence::Power { base: Box::new(self), exponent }
    }

    pub fn scaled(self, factor: f64) -> Self {
        self.scaled_ln(factor.ln())
    }

    pub fn scaled_ln(self, ln_factor: f64) -> Self {
        PositiveSequence::Scaled { base: Box::new(self), ln_factor }
    }

    pub fn reciprocal(self) -> Self {
        self.pow(-1.0)
    }

    /// Parse the compact CLI notation `geometric:2`, `exp_power:-1.5`,
    /// `constant:3`, `double_exp:0.5`, or a JSON description.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec.starts_with('{') {
            let seq: PositiveSequence = serde_json::from_str(spec)?;
            seq.validate()?;
            return Ok(seq);
        }
        let (name, arg) = spec
            .split_once(':')
            .ok_or_else(|| crate::Error::Input(format!("cannot parse sequence `{spec}`")))?;
        let x: f64 = arg
            .parse()
            .map_err(|_| crate::Error::Input(format!("bad number in `{spec}`")))?;
        let seq = match name {
            "geometric" => Self::geometric(x),
            "constant" => Self::constant(x),
            "double_exp" => Self::double_exp(x),
            "exp_power" => {
                let sign = if x < 0.0 { Sign::Minus } else { Sign::Plus };
                Self::exp_power(sign, x.abs())
            }
            _ => return input(format!("unknown sequence family `{name}`")),
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |c: bool, msg: &str| if c { Ok(()) } else { input(msg.to_string()) };
        match self {
            PositiveSequence::Geometric { q } => ok(q.is_finite() && *q > 0.0, "geometric: q must be positive"),
            PositiveSequence::Constant { c } => ok(c.is_finite() && *c > 0.0, "constant: c must be positive"),
            PositiveSequence::ExpPower { alpha, .. } => {
                ok(alpha.is_finite() && *alpha > 0.0, "exp_power: alpha must be positive")
            }
            PositiveSequence::DoubleExp { eps } => {
                ok(eps.is_finite() && *eps > 0.0 && *eps <= 1.0, "double_exp: eps must lie in (0,1]")
            }
            PositiveSequence::Tabulated { values } => {
                for (i, v) in values.iter().enumerate() {
                    if !(v.is_finite() && *v > 0.0) {
                        return input(format!("tabulated value {i} = {v} is not positive"));
                    }
                }
                Ok(())
            }
            PositiveSequence::LogTabulated { logs } => {
                ok(logs.iter().all(|l| !l.is_nan() && *l < f64::INFINITY), "log_tabulated: bad entry")
            }
            PositiveSequence::Product { factors } => factors.iter().try_for_each(|f| f.validate()),
            PositiveSequence::Sum { terms } => {
                ok(!terms.is_empty(), "sum: no terms")?;
                terms.iter().try_for_each(|f| f.validate())
            }
            PositiveSequence::Power { base, exponent } => {
                ok(exponent.is_finite(), "power: exponent must be finite")?;
                base.validate()
            }
            PositiveSequence::Scaled { base, ln_factor } => {
                ok(ln_factor.is_finite(), "scaled: factor must be positive and finite")?;
                base.validate()
            }
        }
    }

    /// Natural logarithm of a_n.
    pub fn ln(&self, n: usize) -> Result<f64> {
        let v = match self {
            PositiveSequence::Geometric { q } => n as f64 * q.ln(),
            PositiveSequence::Constant { c } => c.ln(),
            PositiveSequence::ExpPower { sign, alpha } => sign.factor() * alpha.powi(n as i32),
            PositiveSequence::DoubleExp { eps } => pow2(n) * eps.ln(),
            PositiveSequence::Tabulated { values } => match values.get(n) {
                Some(v) if *v > 0.0 => v.ln(),
                Some(v) => return input(format!("tabulated value {n} = {v} is not positive")),
                None => return input(format!("tabulated sequence has no entry {n}")),
            },
            PositiveSequence::LogTabulated { logs } => match logs.get(n) {
                Some(l) => *l,
                None => return input(format!("tabulated sequence has no entry {n}")),
            },
            PositiveSequence::Product { factors } => {
                let mut s = 0.0;
                for f in factors {
                    s += f.ln(n)?;
                }
                s
            }
            PositiveSequence::Sum { terms } => {
                let mut s = f64::NEG_INFINITY;
                for t in terms {
                    s = log_add_exp(s, t.ln(n)?);
                }
                s
            }
            PositiveSequence::Power { base, exponent } => exponent * base.ln(n)?,
            PositiveSequence::Scaled { base, ln_factor } => ln_factor + base.ln(n)?,
        };
        if v.is_nan() {
            return input(format!("sequence term {n} is not a positive number"));
        }
        Ok(v)
    }

    pub fn value(&self, n: usize) -> Result<f64> {
        Ok(self.ln(n)?.exp())
    }

    /// ln a_0, …, ln a_{len-1}
    pub fn logs(&self, len: usize) -> Result<Vec<f64>> {
        (0..len).map(|n| self.ln(n)).collect()
    }

    /// Upper bound for Σ_{j≥m} |ln a_j| / 2^{j+1}.
    pub fn log_tail(&self, m: usize) -> Tail {
        let geo = 1.0 / pow2(m);
        match self {
            PositiveSequence::Geometric { q } => Tail::Bound(q.ln().abs() * (m as f64 + 1.0) * geo),
            PositiveSequence::Constant { c } => Tail::Bound(c.ln().abs() * geo),
            PositiveSequence::ExpPower { alpha, .. } => {
                if *alpha >= 2.0 {
                    Tail::Divergent
                } else {
                    Tail::Bound(alpha.powi(m as i32) / pow2(m + 1) / (1.0 - alpha / 2.0))
                }
            }
            PositiveSequence::DoubleExp { eps } => {
                if *eps == 1.0 {
                    Tail::Bound(0.0)
                } else {
                    Tail::Divergent
                }
            }
            PositiveSequence::Tabulated { .. } | PositiveSequence::LogTabulated { .. } => Tail::Unknown,
            PositiveSequence::Product { factors } => {
                let mut s = 0.0;
                for f in factors {
                    match f.log_tail(m) {
                        Tail::Bound(b) => s += b,
                        // a divergent factor may cancel against another one
                        _ => return Tail::Unknown,
                    }
                }
                Tail::Bound(s)
            }
            PositiveSequence::Sum { terms } => {
                // |ln Σ x_i| ≤ Σ |ln x_i| + ln(#terms)
                let mut s = (terms.len() as f64).ln() * geo;
                for t in terms {
                    match t.log_tail(m) {
                        Tail::Bound(b) => s += b,
                        _ => return Tail::Unknown,
                    }
                }
                Tail::Bound(s)
            }
            PositiveSequence::Power { base, exponent } => match base.log_tail(m) {
                Tail::Bound(b) => Tail::Bound(exponent.abs() * b),
                Tail::Divergent if *exponent != 0.0 => Tail::Divergent,
                Tail::Divergent => Tail::Bound(0.0),
                Tail::Unknown => Tail::Unknown,
            },
            PositiveSequence::Scaled { base, ln_factor } => match base.log_tail(m) {
                Tail::Bound(b) => Tail::Bound(b + ln_factor.abs() * geo),
                other => other,
            },
        }
    }

    /// Monotonicity of a_0..a_{len-1}, with exact comparisons.
    pub fn monotonicity(&self, len: usize) -> Result<Monotonicity> {
        let keys: Vec<f64> = match self {
            PositiveSequence::Tabulated { values } => {
                if values.len() < len {
                    return input(format!("tabulated sequence has only {} entries", values.len()));
                }
                values[..len].to_vec()
            }
            _ => self.logs(len)?,
        };
        Ok(monotonicity_of(&keys))
    }
}

pub(crate) fn monotonicity_of(xs: &[f64]) -> Monotonicity {
    let mut up = true;
    let mut down = true;
    for w in xs.windows(2) {
        if w[1] < w[0] {
            up = false;
        }
        if w[1] > w[0] {
            down = false;
        }
    }
    match (up, down) {
        (true, true) => Monotonicity::Constant,
        (true, false) => Monotonicity::Increasing,
        (false, true) => Monotonicity::Decreasing,
        (false, false) => Monotonicity::None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrunoVerdict {
    Bruno,
    NotBruno,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BrunoCertificate {
    pub partial_sum: f64,
    pub depth: usize,
    pub tail_bound: Option<f64>,
    pub verdict: BrunoVerdict,
    pub monotonicity: Monotonicity,
}

/// Partial Bruno sum Σ_{k≤depth} |ln a_k|/2^{k+1} with a closed-form tail
/// when the family provides one.
pub fn bruno_check(a: &PositiveSequence, depth: usize) -> Result<BrunoCertificate> {
    if depth < 1 {
        return input("bruno_check: depth must be at least 1");
    }
    a.validate()?;
    let mut partial_sum = 0.0;
    let mut logs = Vec::with_capacity(depth + 1);
    for k in 0..=depth {
        let l = a.ln(k)?;
        if !l.is_finite() {
            return input(format!("term {k} is not a positive finite number"));
        }
        logs.push(l);
        partial_sum += l.abs() / pow2(k + 1);
    }
    let (tail_bound, verdict) = match a.log_tail(depth + 1) {
        Tail::Bound(t) if (partial_sum + t).is_finite() => (Some(t), BrunoVerdict::Bruno),
        Tail::Bound(t) => (Some(t), BrunoVerdict::Inconclusive),
        Tail::Divergent => (None, BrunoVerdict::NotBruno),
        Tail::Unknown => (None, BrunoVerdict::Inconclusive),
    };
    let monotonicity = match a {
        PositiveSequence::Tabulated { values } => monotonicity_of(&values[..=depth]),
        _ => monotonicity_of(&logs),
    };
    Ok(BrunoCertificate { partial_sum, depth, tail_bound, verdict, monotonicity })
}

/// Value of the Bruno transform a^π_n with an enclosure.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BrunoTransform {
    pub n: usize,
    pub depth: usize,
    /// ln of the truncated product (an upper bound since a ≥ 1)
    pub log_value: f64,
    /// ln of the lower end of the enclosure, -inf when no tail bound exists
    pub log_lower: f64,
    pub value: f64,
    pub lower: f64,
    pub enclosed: bool,
}

impl BrunoTransform {
    pub fn log_width(&self) -> f64 {
        self.log_value - self.log_lower
    }
}

/// a^π_n = ∏_{k≥0} a_{k+n}^{-1/2^{k+1}}, truncated after `depth` factors.
pub fn bruno_transform(a: &PositiveSequence, n: usize, depth: usize) -> Result<BrunoTransform> {
    if depth < 1 {
        return input("bruno_transform: depth must be at least 1");
    }
    let mut s = 0.0;
    let mut prev = f64::NEG_INFINITY;
    for k in 0..depth {
        let l = a.ln(k + n)?;
        if l < 0.0 {
            return domain(format!("bruno_transform needs a ≥ 1, but a_{} < 1", k + n));
        }
        if l < prev {
            return domain(format!("bruno_transform needs a increasing, but a_{} < a_{}", k + n, k + n - 1));
        }
        prev = l;
        s += l / pow2(k + 1);
    }
    let log_value = -s;
    let (log_lower, enclosed) = match a.log_tail(n + depth) {
        Tail::Bound(t) => (log_value - pow2(n) * t, true),
        _ => (f64::NEG_INFINITY, false),
    };
    Ok(BrunoTransform {
        n,
        depth,
        log_value,
        log_lower,
        value: log_value.exp(),
        lower: log_lower.exp(),
        enclosed,
    })
}

/// Log-space defect of the identity a^π_{n+1} = a_n (a^π_n)², together
/// with the combined enclosure width it must stay under.
pub fn transform_recursion_defect(a: &PositiveSequence, n: usize, depth: usize) -> Result<(f64, f64)> {
    let t0 = bruno_transform(a, n, depth)?;
    let t1 = bruno_transform(a, n + 1, depth)?;
    let ln_a = a.ln(n)?;
    let defect = (t1.log_value - ln_a - 2.0 * t0.log_value).abs();
    let rounding = 1e-12 * (t1.log_value.abs() + ln_a.abs() + 2.0 * t0.log_value.abs()) + 1e-300;
    Ok((defect, t1.log_width() + 2.0 * t0.log_width() + rounding))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TamePairReport {
    pub window: usize,
    /// star_holds[n] ⇔ a_n b_n² ≤ b_{n+1}, for n < window
    pub star_holds: Vec<bool>,
    pub a_ge_one: bool,
    pub b_le_one: bool,
    pub bounds_hold: bool,
    /// heuristic: b_window < b_0 and b non-increasing over the last quarter
    pub vanishing: bool,
    pub first_violation: Option<usize>,
    pub tame: bool,
}

/// Checks (⋆) a_n b_n² ≤ b_{n+1} index by index, plus a ≥ 1 and b ≤ 1.
pub fn tame_check(a: &PositiveSequence, b: &PositiveSequence, window: usize) -> Result<TamePairReport> {
    let la = a.logs(window + 1)?;
    let lb = b.logs(window + 1)?;
    Ok(tame_check_logs(&la, &lb))
}

/// Same as [`tame_check`] on already evaluated logarithms (equal lengths).
pub fn tame_check_logs(la: &[f64], lb: &[f64]) -> TamePairReport {
    let len = la.len().min(lb.len());
    let window = len.saturating_sub(1);
    let star_holds: Vec<bool> = (0..window).map(|n| la[n] + 2.0 * lb[n] <= lb[n + 1]).collect();
    let a_ge_one = la[..len].iter().all(|&l| l >= 0.0);
    let b_le_one = lb[..len].iter().all(|&l| l <= 0.0);
    let quarter = (3 * len) / 4;
    let vanishing = len > 1
        && lb[len - 1] < lb[0]
        && lb[quarter.min(len - 1)..len].windows(2).all(|w| w[1] <= w[0]);
    let first_violation = star_holds.iter().position(|h| !h);
    let bounds_hold = a_ge_one && b_le_one;
    TamePairReport {
        window,
        tame: first_violation.is_none() && bounds_hold,
        star_holds,
        a_ge_one,
        b_le_one,
        bounds_hold,
        vanishing,
        first_violation,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TameBrunoVerdict {
    BrunoConsistent,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TameBrunoReport {
    pub tame: bool,
    pub hypothesis_holds: bool,
    /// (M, Σ_{k<M} ln a_k/2^{k+1}, ln b_M/2^M − ln b_0, holds)
    pub certificate: Vec<(usize, f64, f64, bool)>,
    pub certificate_holds: bool,
    pub verdict: TameBrunoVerdict,
}

/// Emits Σ_{k<M} ln a_k/2^{k+1} ≤ ln b_M/2^M − ln b_0 for M ≤ window.
///
/// The hypothesis ln(b_n)/2^n → 0 is judged on the window: the ratio must be
/// non-increasing over the second half and end below 1e-3 of its maximum.
pub fn tame_implies_bruno(a: &PositiveSequence, b: &PositiveSequence, window: usize) -> Result<TameBrunoReport> {
    let report = tame_check(a, b, window)?;
    let la = a.logs(window + 1)?;
    let lb = b.logs(window + 1)?;
    let ratios: Vec<f64> = (0..=window).map(|n| lb[n].abs() / pow2(n)).collect();
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    let half = window / 2;
    let hypothesis_holds = ratios[half..].windows(2).all(|w| w[1] <= w[0]) && ratios[window] <= 1e-3 * max;

    let mut certificate = Vec::with_capacity(window);
    let mut lhs = 0.0;
    for m in 1..=window {
        lhs += la[m - 1] / pow2(m);
        let rhs = lb[m] / pow2(m) - lb[0];
        let slack = 1e-12 * (1.0 + lhs.abs() + rhs.abs());
        certificate.push((m, lhs, rhs, lhs <= rhs + slack));
    }
    let certificate_holds = certificate.iter().all(|c| c.3);
    let verdict = if report.tame && hypothesis_holds && certificate_holds {
        TameBrunoVerdict::BrunoConsistent
    } else {
        TameBrunoVerdict::Inconclusive
    };
    Ok(TameBrunoReport { tame: report.tame, hypothesis_holds, certificate, certificate_holds, verdict })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TamingEpsilon {
    pub epsilon: f64,
    pub log_epsilon: f64,
    /// index where the infimum is attained
    pub argmin: usize,
    pub window: usize,
}

/// inf over n ≤ window of the lower enclosure of (a^π_n)².
pub fn taming_epsilon(a: &PositiveSequence, window: usize) -> Result<TamingEpsilon> {
    let cert = bruno_check(a, window.max(1))?;
    if cert.verdict == BrunoVerdict::NotBruno {
        return domain("taming_epsilon: the sequence is not a Bruno sequence");
    }
    let mut best = f64::INFINITY;
    let mut argmin = 0;
    for n in 0..=window {
        let t = bruno_transform(a, n, TRANSFORM_DEPTH)?;
        let l = 2.0 * t.log_lower;
        if l < best {
            best = l;
            argmin = n;
        }
    }
    if best == f64::NEG_INFINITY {
        return domain("taming_epsilon: no tail bound, the enclosure has no positive lower end");
    }
    Ok(TamingEpsilon { epsilon: best.exp(), log_epsilon: best, argmin, window })
}

/// Model iteration x_{n+1} = ½(a_n x_n² + b_n x_n) evaluated in log-space.
pub fn model_iteration(
    a: &PositiveSequence,
    b: &PositiveSequence,
    x0: f64,
    steps: usize,
) -> Result<crate::trace::IterationTrace> {
    use crate::trace::{IterationTrace, Status, StepRecord};
    if !(x0 >= 0.0 && x0.is_finite()) {
        return input("model_iteration: x0 must be a finite non-negative number");
    }
    let la = a.logs(steps + 1)?;
    let lb = b.logs(steps + 1)?;
    let tame = tame_check_logs(&la, &lb).tame;
    let hypotheses = tame && x0.ln() <= lb[0];
    let mut trace = IterationTrace::new("model");
    if !tame {
        trace.note("(a,b) is not tame on the window; x ≤ b is not asserted");
    }
    let mut lx = x0.ln();
    let mut violations = 0;
    let mut diverged = false;
    for n in 0..=steps {
        let within = lx <= lb[n] + 1e-12 * lb[n].abs().max(1.0);
        if hypotheses && !within {
            violations += 1;
        }
        let mut rec = StepRecord::new(n);
        rec.r_norm = Some(lx.exp());
        rec.log_r = Some(lx);
        rec.b_n = Some(lb[n].exp());
        rec.log_b = Some(lb[n]);
        rec.a_n = Some(la[n].exp());
        rec.checks_passed = within;
        trace.push(rec);
        if n == steps {
            break;
        }
        lx = lx + log_add_exp(la[n] + lx, lb[n]) - std::f64::consts::LN_2;
        if lx.is_nan() || lx > 700.0 {
            diverged = true;
            trace.note(format!("overflow after step {n}"));
            break;
        }
    }
    trace.status = if diverged {
        Status::Diverged
    } else if hypotheses && violations > 0 {
        trace.note(format!("{violations} violations of x_n ≤ b_n under a tame pair"));
        Status::Inconsistent
    } else if hypotheses {
        Status::Certified
    } else {
        Status::Uncertified
    };
    Ok(trace)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LemmaRhoReport {
    pub rho: PositiveSequence,
    /// ln σ_n for n ≤ window + 1
    pub log_sigma: Vec<f64>,
    pub k_const: f64,
    pub halvings: usize,
    pub c_epsilon: f64,
    pub conclusion1: TamePairReport,
    /// ρ_n a'_n σ_n^{-l} < b_n
    pub conclusion2: Vec<bool>,
    pub failures: Vec<usize>,
    pub passed: bool,
}

impl LemmaRhoReport {
    pub fn sigma(&self, n: usize) -> f64 {
        self.log_sigma[n].exp()
    }
}

/// Parameters of the ρ-construction.
#[derive(Clone, Debug)]
pub struct LemmaRhoParams {
    pub k: f64,
    pub l: f64,
    pub k_const: f64,
    pub alpha: f64,
    pub window: usize,
    pub auto_tune: bool,
}

/// ln σ_n for σ_n = 1 − ρ_n^{1/2^n}.
pub fn log_sigma_from_rho(log_rho: f64, n: usize) -> f64 {
    (-(log_rho / pow2(n)).exp_m1()).ln()
}

/// Builds ρ_n = K b_n c_n e^{−α^n} and σ_n = 1 − ρ_n^{1/2^n}, where c tames
/// a(a')², and verifies that (aσ^{−k}, ρa'σ^{−l}) is tame and ρa'σ^{−l} < b.
pub fn lemma_rho(
    a: &PositiveSequence,
    aprime: &PositiveSequence,
    b: &PositiveSequence,
    params: &LemmaRhoParams,
) -> Result<LemmaRhoReport> {
    let LemmaRhoParams { k, l, k_const, alpha, window, auto_tune } = *params;
    if !(alpha > 1.0 && alpha < 2.0) {
        return input("lemma_rho: alpha must lie in (1,2)");
    }
    if !(k_const > 0.0 && k_const < 1.0) {
        return input("lemma_rho: K must lie in (0,1)");
    }
    for (name, s) in [("a", a), ("a'", aprime)] {
        if bruno_check(s, window)?.verdict == BrunoVerdict::NotBruno {
            return domain(format!("lemma_rho: {name} is not a Bruno sequence"));
        }
    }
    let strict = tame_check(&PositiveSequence::constant(1.0), b, window + 1)?;
    if !strict.tame || !strict.vanishing {
        return domain("lemma_rho: b is not strict");
    }
    let big_a = a.clone().times(aprime.clone().pow(2.0));
    let eps = taming_epsilon(&big_a, window + 1)?;
    let c = b.clone().scaled_ln(eps.log_epsilon);
    let la = a.logs(window + 2)?;
    let lap = aprime.logs(window + 2)?;
    let lb = b.logs(window + 2)?;

    let max_halvings = if auto_tune { 64 } else { 0 };
    let mut kk = k_const;
    let mut last = None;
    for halvings in 0..=max_halvings {
        let rho = PositiveSequence::Product {
            factors: vec![b.clone(), c.clone(), PositiveSequence::exp_power(Sign::Minus, alpha)],
        }
        .scaled(kk);
        let lrho = rho.logs(window + 2)?;
        let lsig: Vec<f64> = lrho.iter().enumerate().map(|(n, &r)| log_sigma_from_rho(r, n)).collect();
        let left: Vec<f64> = (0..=window + 1).map(|n| la[n] - k * lsig[n]).collect();
        let right: Vec<f64> = (0..=window + 1).map(|n| lrho[n] + lap[n] - l * lsig[n]).collect();
        let conclusion1 = tame_check_logs(&left[..=window], &right[..=window]);
        let conclusion2: Vec<bool> = (0..=window).map(|n| right[n] < lb[n]).collect();
        let mut failures: Vec<usize> = conclusion1
            .star_holds
            .iter()
            .enumerate()
            .filter(|(_, h)| !**h)
            .map(|(n, _)| n)
            .collect();
        failures.extend(conclusion2.iter().enumerate().filter(|(_, h)| !**h).map(|(n, _)| n));
        failures.sort_unstable();
        failures.dedup();
        let passed = conclusion1.tame && failures.is_empty();
        let report = LemmaRhoReport {
            rho,
            log_sigma: lsig,
            k_const: kk,
            halvings,
            c_epsilon: eps.epsilon,
            conclusion1,
            conclusion2,
            failures,
            passed,
        };
        if passed {
            return Ok(report);
        }
        last = Some(report);
        kk /= 2.0;
    }
    Ok(last.expect("at least one attempt"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_tail_matches_direct_sum() {
        let a = PositiveSequence::geometric(3.0);
        let Tail::Bound(t) = a.log_tail(10) else { panic!() };
        let direct: f64 = (10..400).map(|j| j as f64 * 3f64.ln() / pow2(j + 1)).sum();
        assert!((t - direct).abs() < 1e-14);
    }

    #[test]
    fn exp_power_tail_matches_direct_sum() {
        let a = PositiveSequence::exp_power(Sign::Plus, 1.5);
        let Tail::Bound(t) = a.log_tail(5) else { panic!() };
        let direct: f64 = (5..400).map(|j| 1.5f64.powi(j as i32) / pow2(j + 1)).sum();
        assert!((t - direct).abs() < 1e-12);
    }

    #[test]
    fn json_roundtrip() {
        let s: PositiveSequence = serde_json::from_str(r#"{"family":"geometric","q":2.0}"#).unwrap();
        assert_eq!(s, PositiveSequence::geometric(2.0));
        let t: PositiveSequence = serde_json::from_str(r#"{"family":"tabulated","values":[1,2,4]}"#).unwrap();
        assert_eq!(t.value(2).unwrap(), 4.0);
        let back = serde_json::to_string(&t).unwrap();
        assert_eq!(serde_json::from_str::<PositiveSequence>(&back).unwrap(), t);
    }

    #[test]
    fn parse_compact_forms() {
        assert_eq!(
            PositiveSequence::parse("exp_power:-1.5").unwrap(),
            PositiveSequence::exp_power(Sign::Minus, 1.5)
        );
        assert!(PositiveSequence::parse("geometric:-2").is_err());
        assert!(PositiveSequence::parse("nonsense").is_err());
    }

    #[test]
    fn non_positive_tabulated_is_input_error() {
        let a = PositiveSequence::tabulated(vec![1.0, 0.0, 2.0]);
        assert!(matches!(bruno_check(&a, 2), Err(crate::Error::Input(_))));
    }

    #[test]
    fn monotonicity_flags() {
        assert_eq!(PositiveSequence::geometric(2.0).monotonicity(10).unwrap(), Monotonicity::Increasing);
        assert_eq!(PositiveSequence::constant(1.0).monotonicity(10).unwrap(), Monotonicity::Constant);
        assert_eq!(
            PositiveSequence::tabulated(vec![1.0, 3.0, 2.0]).monotonicity(3).unwrap(),
            Monotonicity::None
        );
    }
}
