//! Finite ordered bases, sections of series over them, and the norm-map
//! operations: restriction, rescaling, kolmogorification and its opposite.

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::series::TruncatedSeries;

/// Finite set of points in ℝⁿ ordered componentwise. A plain radius is a
/// one-component point; an (n, t) pair is a two-component point. The last
/// component is always the radius used to evaluate norms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteBase {
    points: Vec<Vec<f64>>,
}

impl FiniteBase {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = points.first() else {
            return input("a base needs at least one point");
        };
        let len = first.len();
        if len == 0 {
            return input("base points need at least one component");
        }
        for p in &points {
            if p.len() != len {
                return input("base points have different numbers of components");
            }
            if p.iter().any(|x| !x.is_finite()) || p[len - 1] <= 0.0 {
                return input("base points must be finite with a positive radius");
            }
        }
        let base = FiniteBase { points };
        // componentwise order is reflexive and transitive; antisymmetry fails
        // exactly on repeated points
        for i in 0..base.len() {
            for j in 0..i {
                if base.geq(i, j) && base.geq(j, i) {
                    return input(format!("points {j} and {i} coincide, the order is not antisymmetric"));
                }
            }
        }
        Ok(base)
    }

    /// A chain of radii.
    pub fn radii(radii: &[f64]) -> Result<Self> {
        Self::new(radii.iter().map(|&t| vec![t]).collect())
    }

    /// Points (n, t) of ℕ × grid.
    pub fn graded(levels: usize, radii: &[f64]) -> Result<Self> {
        let mut pts = Vec::new();
        for n in 0..levels {
            for &t in radii {
                pts.push(vec![n as f64, t]);
            }
        }
        Self::new(pts)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn radius(&self, i: usize) -> f64 {
        *self.points[i].last().expect("non-empty point")
    }

    /// points[i] ≥ points[j] componentwise
    pub fn geq(&self, i: usize, j: usize) -> bool {
        self.points[i].iter().zip(&self.points[j]).all(|(a, b)| a >= b)
    }

    pub fn comparable(&self, i: usize, j: usize) -> bool {
        self.geq(i, j) || self.geq(j, i)
    }

    pub fn down_set(&self, i: usize) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.geq(i, j)).collect()
    }

    pub fn up_set(&self, i: usize) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.geq(j, i)).collect()
    }
}

/// Restriction from radius t to s ≤ t: coefficients unchanged, tail rescaled.
pub fn restrict(f: &TruncatedSeries, t: f64, s: f64) -> Result<TruncatedSeries> {
    if s > t {
        return Err(Error::Order(format!("restriction must go down, got {t} -> {s}")));
    }
    if t > f.ref_radius() {
        return Err(Error::Order(format!("source radius {t} exceeds the certified radius {}", f.ref_radius())));
    }
    f.restrict_to(s)
}

/// A section of the series bundle over a finite base.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Section {
    pub base: FiniteBase,
    pub values: Vec<TruncatedSeries>,
    pub norms: Vec<f64>,
}

impl Section {
    pub fn new(base: FiniteBase, values: Vec<TruncatedSeries>) -> Result<Self> {
        if values.len() != base.len() {
            return input("a section needs exactly one value per base point");
        }
        let norms = values
            .iter()
            .enumerate()
            .map(|(i, v)| v.majorant_norm(base.radius(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Section { base, values, norms })
    }

    /// The section b ↦ ι f restricted to every point.
    pub fn horizontal_from(base: FiniteBase, f: &TruncatedSeries) -> Result<Self> {
        let values = (0..base.len()).map(|i| f.restrict_to(base.radius(i))).collect::<Result<Vec<_>>>()?;
        Self::new(base, values)
    }

    /// Restriction from a to b agrees with the value at b up to the two tail
    /// enclosures, for every comparable pair.
    pub fn is_horizontal(&self) -> Result<bool> {
        for a in 0..self.base.len() {
            for b in 0..self.base.len() {
                if a == b || !self.base.geq(a, b) {
                    continue;
                }
                let (ta, tb) = (self.base.radius(a), self.base.radius(b));
                let ra = restrict(&self.values[a], ta, tb)?;
                let diff = ra.sub(&self.values[b])?;
                if diff.poly_norm(tb) > ra.tail() + self.values[b].tail_at(tb) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    pub fn add(&self, other: &Section) -> Result<Section> {
        if self.base != other.base {
            return input("sections live over different bases");
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a.add(b)).collect::<Result<Vec<_>>>()?;
        Section::new(self.base.clone(), values)
    }

    pub fn scale(&self, c: f64) -> Result<Section> {
        Section::new(self.base.clone(), self.values.iter().map(|v| v.scale_real(c)).collect())
    }

    pub fn restrict_all(&self, factor: f64) -> Result<Section> {
        let pts = (0..self.base.len())
            .map(|i| {
                let mut p = self.base.point(i).to_vec();
                *p.last_mut().expect("non-empty") *= factor;
                p
            })
            .collect();
        let base = FiniteBase::new(pts)?;
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| restrict(v, self.base.radius(i), base.radius(i)))
            .collect::<Result<Vec<_>>>()?;
        Section::new(base, values)
    }
}

/// sup over A of the cached pointwise norms.
pub fn sup_norm_over(s: &Section, subset: &[usize]) -> Result<f64> {
    if subset.is_empty() {
        return input("sup norm over an empty set");
    }
    let mut m: f64 = 0.0;
    for &i in subset {
        let v = *s.norms.get(i).ok_or_else(|| Error::Input(format!("point {i} is not in the base")))?;
        m = m.max(v);
    }
    Ok(m)
}

fn check_len(norms: &[f64], base: &FiniteBase) -> Result<()> {
    if norms.len() != base.len() {
        return input("one norm per base point is required");
    }
    Ok(())
}

/// Norm at b becomes the sup over the down-set of b.
pub fn kolmogorify(norms: &[f64], base: &FiniteBase) -> Result<Vec<f64>> {
    check_len(norms, base)?;
    Ok((0..base.len()).map(|i| base.down_set(i).iter().map(|&j| norms[j]).fold(f64::MIN, f64::max)).collect())
}

/// Norm at b becomes the sup over the up-set of b.
pub fn opposite_kolmogorify(norms: &[f64], base: &FiniteBase) -> Result<Vec<f64>> {
    check_len(norms, base)?;
    Ok((0..base.len()).map(|i| base.up_set(i).iter().map(|&j| norms[j]).fold(f64::MIN, f64::max)).collect())
}

/// a ≥ b ⇒ norm(b) ≤ norm(a): restrictions have norm at most one.
pub fn is_kolmogorov(norms: &[f64], base: &FiniteBase) -> bool {
    (0..base.len()).all(|a| (0..base.len()).all(|b| !base.geq(a, b) || norms[b] <= norms[a]))
}

pub fn is_increasing(weights: &[f64], base: &FiniteBase) -> bool {
    is_kolmogorov(weights, base)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RescaleReport {
    pub norms: Vec<f64>,
    pub weight_increasing: bool,
    pub kolmogorov: bool,
}

/// Pointwise λ(b)·|−|_b.
pub fn rescale(norms: &[f64], lambda: &[f64], base: &FiniteBase) -> Result<RescaleReport> {
    check_len(norms, base)?;
    check_len(lambda, base)?;
    if lambda.iter().any(|&l| !(l > 0.0)) {
        return input("rescaling weights must be positive");
    }
    let out: Vec<f64> = norms.iter().zip(lambda).map(|(n, l)| n * l).collect();
    let weight_increasing = is_increasing(lambda, base);
    let kolmogorov = is_kolmogorov(&out, base);
    if weight_increasing && is_kolmogorov(norms, base) {
        assert!(kolmogorov, "increasing weights preserve the Kolmogorov property");
    }
    Ok(RescaleReport { norms: out, weight_increasing, kolmogorov })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_kolmogorify() {
        let base = FiniteBase::radii(&[0.5, 1.0]).unwrap();
        assert_eq!(kolmogorify(&[3.0, 2.0], &base).unwrap(), vec![3.0, 3.0]);
        assert_eq!(opposite_kolmogorify(&[3.0, 2.0], &base).unwrap(), vec![3.0, 2.0]);
        assert_eq!(opposite_kolmogorify(&[2.0, 3.0], &base).unwrap(), vec![3.0, 3.0]);
    }

    #[test]
    fn duplicate_points_rejected() {
        assert!(FiniteBase::radii(&[0.5, 0.5]).is_err());
    }

    #[test]
    fn rescale_by_radius() {
        let base = FiniteBase::radii(&[0.5, 1.0]).unwrap();
        let r = rescale(&[1.0, 1.0], &[0.5, 1.0], &base).unwrap();
        assert_eq!(r.norms, vec![0.5, 1.0]);
        assert!(r.kolmogorov);
        let bad = rescale(&[1.0, 1.0], &[2.0, 1.0], &base).unwrap();
        assert!(!bad.kolmogorov);
        assert!(is_kolmogorov(&kolmogorify(&bad.norms, &base).unwrap(), &base));
    }

    #[test]
    fn upward_restriction_is_order_error() {
        let f = TruncatedSeries::from_real(4, 1.0, &[1.0, 1.0]);
        assert!(matches!(restrict(&f, 0.5, 0.7), Err(Error::Order(_))));
    }
}
