//! Truncated power series and univariate Fourier series with a certified
//! majorant tail.
//!
//! A series stores its coefficients up to a total-degree cap `D`, a scalar
//! `tail` bounding the ℓ¹ norm of everything beyond the stored part at
//! `ref_radius`, and `tail_order`: every monomial of that remainder has total
//! degree (or |k| for Fourier) at least `tail_order`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, input, Error, Result};

pub const DEFAULT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Taylor,
    Fourier,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    MajorantSup,
    Hilbert,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormValue {
    pub kind: NormKind,
    pub radius: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSeries {
    dim: usize,
    cap: usize,
    basis: Basis,
    ref_radius: f64,
    coeffs: Vec<Complex64>,
    tail: f64,
    tail_order: usize,
}

/// All multi-indices of `dim` variables with total degree ≤ `cap`, in
/// graded order.
pub fn multi_indices(dim: usize, cap: usize) -> Vec<Vec<usize>> {
    fn rec(dim: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == dim {
            out.push(cur.clone());
            return;
        }
        for i in 0..=left {
            cur.push(i);
            rec(dim, left - i, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, cap, &mut Vec::with_capacity(dim), &mut out);
    out.sort_by_key(|i| i.iter().sum::<usize>());
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut b = 1.0;
    for i in 0..k.min(n - k) {
        b = b * (n - i) as f64 / (i + 1) as f64;
    }
    b
}

impl TruncatedSeries {
    pub fn zero(dim: usize, cap: usize, ref_radius: f64) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        TruncatedSeries {
            dim,
            cap,
            basis: Basis::Taylor,
            ref_radius,
            coeffs: vec![Complex64::new(0.0, 0.0); (cap + 1).pow(dim as u32)],
            tail: 0.0,
            tail_order: cap + 1,
        }
    }

    pub fn zero_fourier(cap: usize, width: f64) -> Self {
        TruncatedSeries {
            dim: 1,
            cap,
            basis: Basis::Fourier,
            ref_radius: width,
            coeffs: vec![Complex64::new(0.0, 0.0); 2 * cap + 1],
            tail: 0.0,
            tail_order: cap + 1,
        }
    }

    /// Univariate Taylor series from real coefficients a_0, a_1, …
    pub fn from_real(cap: usize, ref_radius: f64, coeffs: &[f64]) -> Self {
        let c: Vec<Complex64> = coeffs.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::from_complex(cap, ref_radius, &c)
    }

    /// Univariate Taylor series; coefficients beyond the cap are folded into
    /// the tail.
    pub fn from_complex(cap: usize, ref_radius: f64, coeffs: &[Complex64]) -> Self {
        let mut s = Self::zero(1, cap, ref_radius);
        for (n, c) in coeffs.iter().enumerate() {
            if n <= cap {
                s.coeffs[n] = *c;
            } else if c.norm() > 0.0 {
                s.tail += c.norm() * ref_radius.powi(n as i32);
                s.tail_order = s.tail_order.min(n);
            }
        }
        s
    }

    /// Fourier series from modes k = −cap..=cap.
    pub fn from_fourier(cap: usize, width: f64, modes: &[(i64, Complex64)]) -> Self {
        let mut s = Self::zero_fourier(cap, width);
        for &(k, c) in modes {
            if k.unsigned_abs() as usize <= cap {
                s.coeffs[(k + cap as i64) as usize] += c;
            } else if c.norm() > 0.0 {
                s.tail += c.norm() * (k.unsigned_abs() as f64 * width).exp();
                s.tail_order = s.tail_order.min(k.unsigned_abs() as usize);
            }
        }
        s
    }

    pub fn monomial(dim: usize, cap: usize, ref_radius: f64, index: &[usize], c: Complex64) -> Self {
        let mut s = Self::zero(dim, cap, ref_radius);
        s.add_term(index, c);
        s
    }

    pub fn constant(dim: usize, cap: usize, ref_radius: f64, c: f64) -> Self {
        Self::monomial(dim, cap, ref_radius, &vec![0; dim], Complex64::new(c, 0.0))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn ref_radius(&self) -> f64 {
        self.ref_radius
    }

    pub fn tail(&self) -> f64 {
        self.tail
    }

    pub fn tail_order(&self) -> usize {
        self.tail_order
    }

    pub fn with_tail(mut self, tail: f64, tail_order: usize) -> Self {
        assert!(tail >= 0.0 && tail.is_finite(), "tail must be a finite non-negative number");
        self.tail = tail;
        self.tail_order = if tail > 0.0 { tail_order } else { self.cap + 1 };
        self
    }

    fn flat(&self, index: &[usize]) -> Option<usize> {
        if index.len() != self.dim || index.iter().sum::<usize>() > self.cap {
            return None;
        }
        let mut f = 0;
        for &i in index.iter().rev() {
            f = f * (self.cap + 1) + i;
        }
        Some(f)
    }

    /// Coefficient of z^I; zero beyond the cap.
    pub fn coeff(&self, index: &[usize]) -> Complex64 {
        assert_eq!(self.basis, Basis::Taylor, "use `mode` for Fourier series");
        self.flat(index).map(|f| self.coeffs[f]).unwrap_or_default()
    }

    /// Univariate coefficient a_n.
    pub fn c(&self, n: usize) -> Complex64 {
        self.coeff(&[n])
    }

    pub fn mode(&self, k: i64) -> Complex64 {
        assert_eq!(self.basis, Basis::Fourier, "use `coeff` for Taylor series");
        if k.unsigned_abs() as usize > self.cap {
            return Complex64::default();
        }
        self.coeffs[(k + self.cap as i64) as usize]
    }

    pub fn set_coeff(&mut self, index: &[usize], c: Complex64) {
        let f = self.flat(index).expect("index beyond the degree cap");
        self.coeffs[f] = c;
    }

    /// Adds c·z^I; terms beyond the cap go to the tail.
    pub fn add_term(&mut self, index: &[usize], c: Complex64) {
        match self.flat(index) {
            Some(f) => self.coeffs[f] += c,
            None => {
                let deg: usize = index.iter().sum();
                self.tail += c.norm() * self.ref_radius.powi(deg as i32);
                self.tail_order = self.tail_order.min(deg);
            }
        }
    }

    pub fn set_mode(&mut self, k: i64, c: Complex64) {
        assert!(k.unsigned_abs() as usize <= self.cap, "mode beyond the cap");
        self.coeffs[(k + self.cap as i64) as usize] = c;
    }

    /// (degree or |k|, coefficient) for every stored slot.
    pub fn terms(&self) -> Vec<(Vec<i64>, usize, Complex64)> {
        match self.basis {
            Basis::Taylor => multi_indices(self.dim, self.cap)
                .into_iter()
                .map(|i| {
                    let c = self.coeff(&i);
                    let deg = i.iter().sum();
                    (i.into_iter().map(|x| x as i64).collect(), deg, c)
                })
                .collect(),
            Basis::Fourier => (-(self.cap as i64)..=self.cap as i64)
                .map(|k| (vec![k], k.unsigned_abs() as usize, self.mode(k)))
                .collect(),
        }
    }

    fn weight(&self, deg: usize, t: f64) -> f64 {
        match self.basis {
            Basis::Taylor => t.powi(deg as i32),
            Basis::Fourier => (deg as f64 * t).exp(),
        }
    }

    /// Norm of the stored coefficients only.
    pub fn poly_norm(&self, t: f64) -> f64 {
        self.terms().iter().map(|(_, d, c)| c.norm() * self.weight(*d, t)).sum()
    }

    /// Tail contribution at radius t ≤ ref_radius.
    pub fn tail_at(&self, t: f64) -> f64 {
        if self.tail == 0.0 {
            return 0.0;
        }
        let m = self.tail_order as i32;
        match self.basis {
            Basis::Taylor => self.tail * (t / self.ref_radius).powi(m),
            Basis::Fourier => self.tail * (m as f64 * (t - self.ref_radius)).exp(),
        }
    }

    fn check_radius(&self, t: f64) -> Result<()> {
        if !(t > 0.0 || (t == 0.0 && self.basis == Basis::Fourier)) {
            return domain(format!("radius {t} must be positive"));
        }
        if t > self.ref_radius * (1.0 + 1e-15) {
            return domain(format!("radius {t} exceeds the certified radius {}", self.ref_radius));
        }
        Ok(())
    }

    pub fn majorant(&self, t: f64) -> Result<NormValue> {
        self.check_radius(t)?;
        Ok(NormValue { kind: NormKind::MajorantSup, radius: t, value: self.poly_norm(t) + self.tail_at(t) })
    }

    /// Majorant norm Σ|a_I| t^{|I|} + tail contribution.
    pub fn majorant_norm(&self, t: f64) -> Result<f64> {
        Ok(self.majorant(t)?.value)
    }

    /// Norm at the reference radius.
    pub fn norm(&self) -> f64 {
        self.poly_norm(self.ref_radius) + self.tail
    }

    /// Hilbert norm with C(I) = π^d/∏(1+i_k); exact data only.
    pub fn hilbert(&self, t: f64) -> Result<NormValue> {
        if self.basis != Basis::Taylor {
            return domain("hilbert norm is defined for Taylor series only");
        }
        if self.tail > 0.0 {
            return domain("hilbert norm needs exact data, the tail is nonzero");
        }
        if t <= 0.0 {
            return domain("radius must be positive");
        }
        let pd = std::f64::consts::PI.powi(self.dim as i32);
        let mut s = 0.0;
        for idx in multi_indices(self.dim, self.cap) {
            let a = self.coeff(&idx).norm_sqr();
            if a == 0.0 {
                continue;
            }
            let prod: f64 = idx.iter().map(|&i| 1.0 + i as f64).product();
            let deg: usize = idx.iter().sum();
            s += a * pd / prod * t.powi(2 * (self.dim + deg) as i32);
        }
        Ok(NormValue { kind: NormKind::Hilbert, radius: t, value: s.sqrt() })
    }

    pub fn hilbert_norm(&self, t: f64) -> Result<f64> {
        Ok(self.hilbert(t)?.value)
    }

    /// Same coefficients, certified at a smaller radius.
    pub fn restrict_to(&self, s: f64) -> Result<Self> {
        if s > self.ref_radius {
            return Err(Error::Order(format!("cannot restrict from {} up to {s}", self.ref_radius)));
        }
        if !(s > 0.0 || (s == 0.0 && self.basis == Basis::Fourier)) {
            return domain("restriction radius must be positive");
        }
        let mut out = self.clone();
        out.tail = self.tail_at(s);
        out.ref_radius = s;
        Ok(out)
    }

    fn compatible(&self, other: &Self) -> Result<()> {
        if self.basis != other.basis {
            return input("basis mismatch");
        }
        if self.dim != other.dim || self.cap != other.cap {
            return input("dimension or degree cap mismatch");
        }
        Ok(())
    }

    /// Brings both operands to the smaller reference radius.
    fn aligned(&self, other: &Self) -> Result<(Self, Self)> {
        self.compatible(other)?;
        let r = self.ref_radius.min(other.ref_radius);
        Ok((self.restrict_to(r)?, other.restrict_to(r)?))
    }

    fn merge_tail(&mut self, tail: f64, order: usize) {
        if tail > 0.0 {
            self.tail_order = if self.tail > 0.0 { self.tail_order.min(order) } else { order };
            self.tail += tail;
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let (mut f, g) = self.aligned(other)?;
        for (a, b) in f.coeffs.iter_mut().zip(&g.coeffs) {
            *a += *b;
        }
        f.merge_tail(g.tail, g.tail_order);
        Ok(f)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        for a in out.coeffs.iter_mut() {
            *a *= c;
        }
        out.tail *= c.norm();
        if out.tail == 0.0 {
            out.tail_order = out.cap + 1;
        }
        out
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.scale(Complex64::new(c, 0.0))
    }

    /// Lowest degree carrying a coefficient of modulus > tol, ignoring the tail.
    fn stored_order(&self, tol: f64) -> usize {
        self.terms()
            .iter()
            .filter(|(_, _, c)| c.norm() > tol)
            .map(|(_, d, _)| *d)
            .min()
            .unwrap_or(self.cap + 1)
    }

    /// Product with the overflow beyond the cap majorized at the common
    /// reference radius.
    pub fn multiply(&self, other: &Self) -> Result<Self> {
        let (f, g) = self.aligned(other)?;
        let r = f.ref_radius;
        let mut out = match f.basis {
            Basis::Taylor => Self::zero(f.dim, f.cap, r),
            Basis::Fourier => Self::zero_fourier(f.cap, r),
        };
        let mut overflow = 0.0;
        let mut overflow_deg = usize::MAX;
        let ft = f.terms();
        let gt = g.terms();
        for (i, di, a) in &ft {
            if *a == Complex64::default() {
                continue;
            }
            for (j, dj, b) in &gt {
                if *b == Complex64::default() {
                    continue;
                }
                let prod = a * b;
                match f.basis {
                    Basis::Taylor => {
                        let idx: Vec<usize> = i.iter().zip(j).map(|(x, y)| (x + y) as usize).collect();
                        if di + dj <= f.cap {
                            let fl = out.flat(&idx).expect("in range");
                            out.coeffs[fl] += prod;
                        } else {
                            overflow += prod.norm() * r.powi((di + dj) as i32);
                            overflow_deg = overflow_deg.min(di + dj);
                        }
                    }
                    Basis::Fourier => {
                        let k = i[0] + j[0];
                        if k.unsigned_abs() as usize <= f.cap {
                            out.coeffs[(k + f.cap as i64) as usize] += prod;
                        } else {
                            overflow += prod.norm() * (k.unsigned_abs() as f64 * r).exp();
                        }
                    }
                }
            }
        }
        let (nf, ng) = (f.poly_norm(r), g.poly_norm(r));
        let mut tail = 0.0;
        let mut order = usize::MAX;
        let fourier = f.basis == Basis::Fourier;
        if overflow > 0.0 {
            tail += overflow;
            order = order.min(if fourier { 0 } else { overflow_deg });
        }
        if g.tail > 0.0 && nf > 0.0 {
            tail += nf * g.tail;
            order = order.min(if fourier { 0 } else { g.tail_order + f.stored_order(0.0) });
        }
        if f.tail > 0.0 && ng > 0.0 {
            tail += ng * f.tail;
            order = order.min(if fourier { 0 } else { f.tail_order + g.stored_order(0.0) });
        }
        if f.tail > 0.0 && g.tail > 0.0 {
            tail += f.tail * g.tail;
            order = order.min(if fourier { 0 } else { f.tail_order + g.tail_order });
        }
        out.merge_tail(tail, order);
        Ok(out)
    }

    /// Smallest sup_{n≥m} n θ^{n−1} (Taylor) or n e^{−n w} (Fourier) factor.
    fn derivative_factor(&self, r_out: f64) -> f64 {
        let m = self.tail_order.max(1);
        let term = |n: usize| -> f64 {
            match self.basis {
                Basis::Taylor => n as f64 * (r_out / self.ref_radius).powi(n as i32 - 1) / self.ref_radius,
                Basis::Fourier => n as f64 * (-(n as f64) * (self.ref_radius - r_out)).exp(),
            }
        };
        // n·x^{n−1} is unimodal in n, so scan until it starts falling
        let mut best = term(m);
        let mut n = m + 1;
        loop {
            let v = term(n);
            if v <= best {
                break;
            }
            best = v;
            n += 1;
        }
        best
    }

    /// Default output radius of a derivative: unchanged without a tail,
    /// otherwise θr with θ = (m−1)/m (or r − 1/m for Fourier).
    pub fn derivative_radius(&self) -> f64 {
        if self.tail == 0.0 {
            return self.ref_radius;
        }
        let m = self.tail_order.max(2) as f64;
        match self.basis {
            Basis::Taylor => self.ref_radius * (m - 1.0) / m,
            Basis::Fourier => (self.ref_radius - 1.0 / m).max(0.5 * self.ref_radius),
        }
    }

    pub fn derivative(&self, axis: usize) -> Result<Self> {
        self.derivative_to(axis, self.derivative_radius())
    }

    /// ∂/∂z_axis, certified at `r_out` ≤ ref_radius.
    pub fn derivative_to(&self, axis: usize, r_out: f64) -> Result<Self> {
        if axis >= self.dim {
            return input(format!("axis {axis} out of range for dimension {}", self.dim));
        }
        if r_out > self.ref_radius || (self.tail > 0.0 && r_out >= self.ref_radius) {
            return domain("derivative needs an output radius strictly inside the certified radius");
        }
        let mut out = self.clone();
        out.ref_radius = r_out;
        match self.basis {
            Basis::Taylor => {
                for c in out.coeffs.iter_mut() {
                    *c = Complex64::default();
                }
                for idx in multi_indices(self.dim, self.cap) {
                    if idx[axis] == 0 {
                        continue;
                    }
                    let mut lower = idx.clone();
                    lower[axis] -= 1;
                    let c = self.coeff(&idx) * idx[axis] as f64;
                    out.set_coeff(&lower, c);
                }
            }
            Basis::Fourier => {
                for k in -(self.cap as i64)..=self.cap as i64 {
                    out.set_mode(k, self.mode(k) * Complex64::new(0.0, k as f64));
                }
            }
        }
        if self.tail > 0.0 {
            out.tail = self.tail * self.derivative_factor(r_out);
            out.tail_order = match self.basis {
                Basis::Taylor => self.tail_order.saturating_sub(1),
                Basis::Fourier => self.tail_order,
            };
        }
        Ok(out)
    }

    /// f / z_axis for f whose I_axis = 0 part is below `tol`.
    pub fn divide_by_coordinate(&self, axis: usize, tol: f64) -> Result<Self> {
        if self.basis != Basis::Taylor {
            return input("division by a coordinate needs a Taylor series");
        }
        if axis >= self.dim {
            return input(format!("axis {axis} out of range for dimension {}", self.dim));
        }
        if self.tail > 0.0 && (self.dim > 1 || self.tail_order == 0) {
            return Err(Error::Division("the tail may contain terms not divisible by the coordinate".into()));
        }
        let r = self.ref_radius;
        let mut out = Self::zero(self.dim, self.cap, r);
        let mut residue = 0.0;
        for idx in multi_indices(self.dim, self.cap) {
            let c = self.coeff(&idx);
            if idx[axis] == 0 {
                if c.norm() > tol {
                    return Err(Error::Division(format!(
                        "coefficient {idx:?} = {c} exceeds the tolerance {tol}"
                    )));
                }
                residue += c.norm() * r.powi(idx.iter().sum::<usize>() as i32);
                continue;
            }
            let mut lower = idx.clone();
            lower[axis] -= 1;
            out.set_coeff(&lower, c);
        }
        if self.tail > 0.0 {
            out.merge_tail(self.tail / r, self.tail_order - 1);
        }
        if residue > 0.0 {
            out.merge_tail(residue / r, 0);
        }
        Ok(out)
    }

    /// Keeps the total degrees (or |k|) in [k, l).
    pub fn cutoff(&self, k: usize, l: usize) -> Result<Self> {
        if k > l {
            return input(format!("cutoff needs k ≤ l, got [{k}, {l})"));
        }
        let mut out = self.clone();
        match self.basis {
            Basis::Taylor => {
                for idx in multi_indices(self.dim, self.cap) {
                    let d: usize = idx.iter().sum();
                    if d < k || d >= l {
                        out.set_coeff(&idx, Complex64::default());
                    }
                }
            }
            Basis::Fourier => {
                for m in -(self.cap as i64)..=self.cap as i64 {
                    let d = m.unsigned_abs() as usize;
                    if d < k || d >= l {
                        out.set_mode(m, Complex64::default());
                    }
                }
            }
        }
        if self.tail > 0.0 && l <= self.tail_order {
            out.tail = 0.0;
            out.tail_order = out.cap + 1;
        } else if self.tail > 0.0 {
            out.tail_order = self.tail_order.max(k);
        }
        Ok(out)
    }

    /// Lowest degree with a coefficient above `tol`, or the tail order when
    /// the tail exceeds `tol`; `cap + 1` when neither exists.
    pub fn order(&self, tol: f64) -> usize {
        let stored = self.stored_order(tol);
        if self.tail > tol {
            stored.min(self.tail_order)
        } else {
            stored
        }
    }

    /// f(z + c) for a univariate Taylor series, certified at r − |c|.
    pub fn shift(&self, c: Complex64) -> Result<Self> {
        if self.basis != Basis::Taylor || self.dim != 1 {
            return input("shift is defined for univariate Taylor series");
        }
        if c.norm() >= self.ref_radius {
            return domain(format!("|c| = {} must be below the radius {}", c.norm(), self.ref_radius));
        }
        let mut out = Self::zero(1, self.cap, self.ref_radius - c.norm());
        for n in 0..=self.cap {
            let a = self.c(n);
            if a == Complex64::default() {
                continue;
            }
            for j in 0..=n {
                out.coeffs[j] += a * binomial(n, j) * c.powu((n - j) as u32);
            }
        }
        if self.tail > 0.0 {
            out.merge_tail(self.tail, 0);
        }
        Ok(out)
    }

    /// 1/f for a univariate Taylor series with f(0) ≠ 0.
    pub fn inverse(&self) -> Result<Self> {
        if self.basis != Basis::Taylor || self.dim != 1 {
            return input("inverse is implemented for univariate Taylor series");
        }
        let a0 = self.c(0);
        if a0.norm() == 0.0 {
            return Err(Error::Division("constant term vanishes".into()));
        }
        let r = self.ref_radius;
        let cap = self.cap;
        let mut b = vec![Complex64::default(); cap + 1];
        // majorant series 1/(|a0|(1 − ĥ)) with ĥ = Σ_{j≥1}|a_j/a0| z^j
        let mut m = vec![0.0; cap + 1];
        b[0] = 1.0 / a0;
        m[0] = 1.0 / a0.norm();
        for n in 1..=cap {
            let mut s = Complex64::default();
            let mut sm = 0.0;
            for j in 1..=n {
                s += self.c(j) * b[n - j];
                sm += self.c(j).norm() * m[n - j];
            }
            b[n] = -s / a0;
            sm /= a0.norm();
            m[n] = sm;
        }
        let nh = (self.poly_norm(r) - a0.norm()) / a0.norm();
        let th = self.tail / a0.norm();
        if nh + th >= 1.0 {
            return domain(format!("inverse: |f/f(0) − 1| = {} is not below 1 at radius {r}", nh + th));
        }
        let full = 1.0 / (a0.norm() * (1.0 - nh));
        let partial: f64 = (0..=cap).map(|n| m[n] * r.powi(n as i32)).sum();
        let trunc_tail = (full - partial).max(0.0);
        let mut out = Self::from_complex(cap, r, &b);
        if trunc_tail > 0.0 {
            out.merge_tail(trunc_tail, cap + 1);
        }
        if self.tail > 0.0 {
            let t = self.tail / (a0.norm().powi(2) * (1.0 - nh - th) * (1.0 - nh));
            out.merge_tail(t, self.tail_order);
        }
        Ok(out)
    }

    /// Univariate Taylor evaluation of the stored part.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        assert!(self.basis == Basis::Taylor && self.dim == 1);
        let mut acc = Complex64::default();
        for n in (0..=self.cap).rev() {
            acc = acc * z + self.c(n);
        }
        acc
    }

    /// Fourier evaluation of the stored part at x.
    pub fn eval_fourier(&self, x: f64) -> Complex64 {
        assert_eq!(self.basis, Basis::Fourier);
        (-(self.cap as i64)..=self.cap as i64)
            .map(|k| self.mode(k) * Complex64::from_polar(1.0, k as f64 * x))
            .sum()
    }

    /// Largest coefficient difference against another series of the same shape.
    pub fn max_coeff_diff(&self, other: &Self) -> Result<f64> {
        self.compatible(other)?;
        Ok(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }

    pub fn is_zero(&self) -> bool {
        self.tail == 0.0 && self.coeffs.iter().all(|c| *c == Complex64::default())
    }

    /// Same data with a different cap; dropped terms go to the tail.
    pub fn with_cap(&self, cap: usize) -> Self {
        let mut out = match self.basis {
            Basis::Taylor => Self::zero(self.dim, cap, self.ref_radius),
            Basis::Fourier => Self::zero_fourier(cap, self.ref_radius),
        };
        for (i, _, c) in self.terms() {
            if c == Complex64::default() {
                continue;
            }
            match self.basis {
                Basis::Taylor => {
                    let idx: Vec<usize> = i.iter().map(|&x| x as usize).collect();
                    out.add_term(&idx, c);
                }
                Basis::Fourier => {
                    let k = i[0];
                    if k.unsigned_abs() as usize <= cap {
                        out.set_mode(k, c);
                    } else {
                        out.merge_tail(c.norm() * (k.unsigned_abs() as f64 * self.ref_radius).exp(), k.unsigned_abs() as usize);
                    }
                }
            }
        }
        out.merge_tail(self.tail, self.tail_order);
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Serialize, Deserialize)]
struct SeriesJson {
    dim: usize,
    cap: usize,
    ref_radius: f64,
    basis: Basis,
    coeffs: Vec<Vec<f64>>,
    tail: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tail_order: Option<usize>,
}

impl Serialize for TruncatedSeries {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let coeffs = self
            .terms()
            .into_iter()
            .filter(|(_, _, c)| *c != Complex64::default())
            .map(|(i, _, c)| {
                let mut row: Vec<f64> = i.iter().map(|&x| x as f64).collect();
                row.push(c.re);
                row.push(c.im);
                row
            })
            .collect();
        SeriesJson {
            dim: self.dim,
            cap: self.cap,
            ref_radius: self.ref_radius,
            basis: self.basis,
            coeffs,
            tail: self.tail,
            tail_order: (self.tail > 0.0).then_some(self.tail_order),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for TruncatedSeries {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = SeriesJson::deserialize(de)?;
        if j.dim == 0 || !(j.ref_radius > 0.0) || !(j.tail >= 0.0) {
            return Err(D::Error::custom("invalid series header"));
        }
        let mut s = match j.basis {
            Basis::Taylor => TruncatedSeries::zero(j.dim, j.cap, j.ref_radius),
            Basis::Fourier if j.dim == 1 => TruncatedSeries::zero_fourier(j.cap, j.ref_radius),
            Basis::Fourier => return Err(D::Error::custom("fourier series must be univariate")),
        };
        for row in &j.coeffs {
            if row.len() != j.dim + 2 {
                return Err(D::Error::custom("coefficient row has the wrong length"));
            }
            let c = Complex64::new(row[j.dim], row[j.dim + 1]);
            match j.basis {
                Basis::Taylor => {
                    if row[..j.dim].iter().any(|&x| x < 0.0 || x.fract() != 0.0) {
                        return Err(D::Error::custom("bad multi-index"));
                    }
                    let idx: Vec<usize> = row[..j.dim].iter().map(|&x| x as usize).collect();
                    s.add_term(&idx, c);
                }
                Basis::Fourier => {
                    let k = row[0] as i64;
                    if k.unsigned_abs() as usize > j.cap {
                        return Err(D::Error::custom("mode beyond the cap"));
                    }
                    s.set_mode(k, s.mode(k) + c);
                }
            }
        }
        let order = j.tail_order.unwrap_or(j.cap + 1);
        s.merge_tail(j.tail, order);
        Ok(s)
    }
}
