use kamkit::kolmogorov::*;
use kamkit::series::TruncatedSeries;
use kamkit::Error;
use proptest::prelude::*;

fn sample() -> TruncatedSeries {
    TruncatedSeries::from_real(6, 1.0, &[0.3, -1.0, 0.5, 0.0, 0.25]).with_tail(1e-3, 7)
}

#[test]
fn restrict_examples() {
    let f = sample();
    for s in [0.2, 0.7, 1.0] {
        let g = restrict(&f, 1.0, s).unwrap();
        assert!(g.majorant_norm(s).unwrap() <= f.majorant_norm(1.0).unwrap());
    }
    assert_eq!(restrict(&f, 1.0, 1.0).unwrap(), f);
    let chain = restrict(&restrict(&f, 1.0, 0.7).unwrap(), 0.7, 0.4).unwrap();
    let direct = restrict(&f, 1.0, 0.4).unwrap();
    assert_eq!(chain.max_coeff_diff(&direct).unwrap(), 0.0);
    assert!(chain.tail() <= direct.tail() * (1.0 + 1e-15));
    assert!(matches!(restrict(&f, 0.4, 0.7), Err(Error::Order(_))));
}

#[test]
fn sup_norm_examples() {
    let base = FiniteBase::radii(&[0.25, 0.5, 0.75, 1.0]).unwrap();
    let s = Section::horizontal_from(base.clone(), &sample()).unwrap();
    assert!(s.is_horizontal().unwrap());
    assert_eq!(sup_norm_over(&s, &[2]).unwrap(), s.norms[2]);
    let all: Vec<usize> = (0..4).collect();
    let top = sample().majorant_norm(1.0).unwrap();
    assert_eq!(sup_norm_over(&s, &all).unwrap(), top);
    assert_eq!(s.norms[3], top);
    let zero = Section::horizontal_from(base, &TruncatedSeries::zero(1, 6, 1.0)).unwrap();
    assert_eq!(sup_norm_over(&zero, &all).unwrap(), 0.0);
    assert!(matches!(sup_norm_over(&zero, &[]), Err(Error::Input(_))));
}

#[test]
fn non_horizontal_section_is_detected() {
    let base = FiniteBase::radii(&[0.5, 1.0]).unwrap();
    let a = TruncatedSeries::from_real(4, 1.0, &[1.0, 1.0]);
    let b = TruncatedSeries::from_real(4, 0.5, &[1.0, 2.0]);
    let s = Section::new(base, vec![b, a]).unwrap();
    assert!(!s.is_horizontal().unwrap());
}

#[test]
fn kolmogorify_examples() {
    let base = FiniteBase::radii(&[0.5, 1.0]).unwrap();
    assert_eq!(kolmogorify(&[1.0, 2.0], &base).unwrap(), vec![1.0, 2.0]);
    let k = kolmogorify(&[3.0, 2.0], &base).unwrap();
    assert_eq!(k, vec![3.0, 3.0]);
    assert_eq!(kolmogorify(&k, &base).unwrap(), k);
}

#[test]
fn opposite_kolmogorify_examples() {
    let base = FiniteBase::radii(&[0.5, 1.0]).unwrap();
    assert_eq!(opposite_kolmogorify(&[2.0, 1.0], &base).unwrap(), vec![2.0, 1.0]);
    let k = opposite_kolmogorify(&[2.0, 3.0], &base).unwrap();
    assert_eq!(k, vec![3.0, 3.0]);
    assert_eq!(opposite_kolmogorify(&k, &base).unwrap(), k);
}

#[test]
fn rescale_examples() {
    let base = FiniteBase::radii(&[0.5, 1.0]).unwrap();
    let id = rescale(&[1.0, 3.0], &[1.0, 1.0], &base).unwrap();
    assert_eq!(id.norms, vec![1.0, 3.0]);
    let lin = rescale(&[1.0, 1.0], &[0.5, 1.0], &base).unwrap();
    assert_eq!(lin.norms, vec![0.5, 1.0]);
    assert!(lin.kolmogorov && lin.weight_increasing);
    let dec = rescale(&[1.0, 1.0], &[2.0, 1.0], &base).unwrap();
    assert!(!dec.kolmogorov && !dec.weight_increasing);
    let repaired = kolmogorify(&dec.norms, &base).unwrap();
    assert!(is_kolmogorov(&repaired, &base));
    assert!(rescale(&[1.0, 1.0], &[0.0, 1.0], &base).is_err());
}

#[test]
fn base_construction() {
    let g = FiniteBase::graded(3, &[0.5, 1.0]).unwrap();
    assert_eq!(g.len(), 6);
    // (1, 0.5) and (0, 1.0) are incomparable
    let i = (0..6).find(|&i| g.point(i) == [1.0, 0.5]).unwrap();
    let j = (0..6).find(|&j| g.point(j) == [0.0, 1.0]).unwrap();
    assert!(!g.comparable(i, j));
    assert_eq!(g.down_set(i).len(), 2);
    assert!(FiniteBase::new(vec![]).is_err());
    assert!(FiniteBase::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    assert!(FiniteBase::radii(&[1.0, 1.0]).is_err());
    assert!(FiniteBase::radii(&[-1.0]).is_err());
}

#[test]
fn section_json_dump() {
    let base = FiniteBase::radii(&[0.5, 1.0]).unwrap();
    let s = Section::horizontal_from(base, &sample()).unwrap();
    let json = serde_json::to_string(&s).unwrap();
    let back: Section = serde_json::from_str(&json).unwrap();
    assert_eq!(back.values, s.values);
    assert_eq!(back.base, s.base);
}

fn chain() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::btree_set(1u32..1000, 1..8).prop_map(|s| s.into_iter().map(|x| x as f64 / 1000.0).collect())
}

fn sorted_norms(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..10.0, len).prop_map(|mut v| {
        v.sort_by(f64::total_cmp);
        v
    })
}

proptest! {
    #[test]
    fn kolmogorified_top_is_unchanged(radii in chain(), seed in sorted_norms(8)) {
        let base = FiniteBase::radii(&radii).unwrap();
        let norms = seed[..radii.len()].to_vec();
        prop_assert!(is_kolmogorov(&norms, &base));
        let k = kolmogorify(&norms, &base).unwrap();
        prop_assert_eq!(k[radii.len() - 1], norms[radii.len() - 1]);
        prop_assert_eq!(k, norms);
    }

    #[test]
    fn kolmogorify_is_monotone_and_idempotent(pts in prop::collection::vec((0u8..4, 1u32..100), 1..10), norms in prop::collection::vec(0.0f64..5.0, 10)) {
        let mut pts: Vec<Vec<f64>> = pts.into_iter().map(|(n, t)| vec![n as f64, t as f64 / 100.0]).collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup();
        let base = FiniteBase::new(pts).unwrap();
        let norms = &norms[..base.len()];
        let k = kolmogorify(norms, &base).unwrap();
        prop_assert!(is_kolmogorov(&k, &base));
        prop_assert_eq!(kolmogorify(&k, &base).unwrap(), k.clone());
        // brute force over down-sets
        for i in 0..base.len() {
            let m = (0..base.len()).filter(|&j| base.geq(i, j)).map(|j| norms[j]).fold(f64::MIN, f64::max);
            prop_assert_eq!(k[i], m);
        }
        let o = opposite_kolmogorify(norms, &base).unwrap();
        prop_assert_eq!(opposite_kolmogorify(&o, &base).unwrap(), o);
    }

    #[test]
    fn restriction_and_scaling_keep_horizontality(radii in chain(), c in prop::collection::vec(-1.0f64..1.0, 6), tail in 0.0f64..0.01, factor in 0.1f64..1.0, k in -3.0f64..3.0) {
        let f = TruncatedSeries::from_real(5, 1.0, &c).with_tail(tail, 6);
        let s = Section::horizontal_from(FiniteBase::radii(&radii).unwrap(), &f).unwrap();
        prop_assert!(s.is_horizontal().unwrap());
        prop_assert!(s.restrict_all(factor).unwrap().is_horizontal().unwrap());
        prop_assert!(s.scale(k).unwrap().is_horizontal().unwrap());
        // restriction never raises the norm
        let r = s.restrict_all(factor).unwrap();
        for i in 0..radii.len() {
            prop_assert!(r.norms[i] <= s.norms[i] * (1.0 + 1e-15));
        }
    }

    #[test]
    fn bounded_section_norm_is_a_norm(radii in chain(), a in prop::collection::vec(-1.0f64..1.0, 6), b in prop::collection::vec(-1.0f64..1.0, 6), k in -4.0f64..4.0) {
        let base = FiniteBase::radii(&radii).unwrap();
        let all: Vec<usize> = (0..radii.len()).collect();
        let sa = Section::horizontal_from(base.clone(), &TruncatedSeries::from_real(5, 1.0, &a)).unwrap();
        let sb = Section::horizontal_from(base, &TruncatedSeries::from_real(5, 1.0, &b)).unwrap();
        let na = sup_norm_over(&sa, &all).unwrap();
        let nb = sup_norm_over(&sb, &all).unwrap();
        let nsum = sup_norm_over(&sa.add(&sb).unwrap(), &all).unwrap();
        prop_assert!(nsum <= (na + nb) * (1.0 + 1e-14));
        let nk = sup_norm_over(&sa.scale(k).unwrap(), &all).unwrap();
        prop_assert!((nk - k.abs() * na).abs() <= 1e-13 * (1.0 + nk));
    }

    #[test]
    fn increasing_weights_keep_kolmogorov(radii in chain(), seed in sorted_norms(8), w in sorted_norms(8)) {
        let base = FiniteBase::radii(&radii).unwrap();
        let n = radii.len();
        let lambda: Vec<f64> = w[..n].iter().map(|x| x + 0.1).collect();
        let r = rescale(&seed[..n], &lambda, &base).unwrap();
        prop_assert!(r.weight_increasing);
        prop_assert!(r.kolmogorov);
    }
}
