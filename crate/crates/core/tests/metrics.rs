use abdo_core::metrics::{dice, distance_transform, hausdorff, hd95, percentile};
use abdo_core::volume::{BinaryMask, Geometry};
use proptest::prelude::*;

fn coords(shape: [usize; 3]) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for z in 0..shape[2] {
        for y in 0..shape[1] {
            for x in 0..shape[0] {
                out.push([x, y, z]);
            }
        }
    }
    out
}

fn dist(a: [usize; 3], b: [usize; 3], s: [f64; 3]) -> f64 {
    (0..3).map(|i| ((a[i] as f64 - b[i] as f64) * s[i]).powi(2)).sum::<f64>().sqrt()
}

fn mask_strategy() -> impl Strategy<Value = (Geometry, Vec<bool>, Vec<bool>)> {
    (
        prop::array::uniform3(1usize..9),
        prop::array::uniform3(0.5f64..3.0),
    )
        .prop_flat_map(|(shape, spacing)| {
            let n = shape.iter().product::<usize>();
            (
                Just(Geometry::with_spacing(shape, spacing).unwrap()),
                prop::collection::vec(any::<bool>(), n),
                prop::collection::vec(any::<bool>(), n),
            )
        })
}

fn ensure_nonempty(mut bits: Vec<bool>) -> Vec<bool> {
    if !bits.iter().any(|&b| b) {
        bits[0] = true;
    }
    bits
}

/// Copies `m` into a grid grown by `pad` voxels at the low end and `extra`
/// at the high end.
fn embed(m: &BinaryMask, pad: [usize; 3], extra: [usize; 3]) -> BinaryMask {
    let s = m.geometry().shape();
    let shape = [0, 1, 2].map(|i| s[i] + pad[i] + extra[i]);
    let g = Geometry::with_spacing(shape, m.geometry().spacing()).unwrap();
    BinaryMask::from_fn(g, |x, y, z| {
        let p = [x, y, z];
        (0..3).all(|i| p[i] >= pad[i] && p[i] - pad[i] < s[i]) && m.get(x - pad[0], y - pad[1], z - pad[2])
    })
    .unwrap()
}

#[test]
fn edt_matches_brute_force_on_anisotropic_grids() {
    let g = Geometry::with_spacing([7, 5, 6], [0.7, 1.9, 3.1]).unwrap();
    let seeds = [[0, 0, 0], [6, 4, 5], [3, 2, 1]];
    let m = BinaryMask::from_fn(g.clone(), |x, y, z| seeds.contains(&[x, y, z])).unwrap();
    let d = distance_transform(&m).unwrap();
    for p in coords(g.shape()) {
        let want = seeds.iter().map(|&s| dist(p, s, g.spacing())).fold(f64::INFINITY, f64::min);
        assert!((d.get(p[0], p[1], p[2]) - want).abs() < 1e-12, "{p:?}");
    }
}

#[test]
fn single_voxel_masks_are_their_own_surface() {
    let g = Geometry::with_spacing([10, 1, 1], [2.0, 1.0, 1.0]).unwrap();
    let a = BinaryMask::from_fn(g.clone(), |x, _, _| x == 1).unwrap();
    let b = BinaryMask::from_fn(g, |x, _, _| x == 8).unwrap();
    assert_eq!(hd95(&a, &b).unwrap(), Some(14.0));
    assert_eq!(hausdorff(&a, &b).unwrap(), Some(14.0));
    assert_eq!(dice(&a, &b).unwrap(), Some(0.0));
}

#[test]
fn percentile_interpolates_between_order_statistics() {
    let mut v = vec![4.0, 1.0, 3.0, 2.0];
    assert_eq!(percentile(&mut v, 0.0), Some(1.0));
    assert_eq!(percentile(&mut v, 50.0), Some(2.5));
    assert!((percentile(&mut v, 95.0).unwrap() - 3.85).abs() < 1e-12);
    assert_eq!(percentile(&mut v, 100.0), Some(4.0));
    assert_eq!(percentile(&mut [], 50.0), None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_are_symmetric((g, a, b) in mask_strategy()) {
        let a = BinaryMask::new(g.clone(), ensure_nonempty(a)).unwrap();
        let b = BinaryMask::new(g, ensure_nonempty(b)).unwrap();
        prop_assert_eq!(dice(&a, &b).unwrap(), dice(&b, &a).unwrap());
        prop_assert_eq!(hd95(&a, &b).unwrap(), hd95(&b, &a).unwrap());
        let (h95, hmax) = (hd95(&a, &b).unwrap().unwrap(), hausdorff(&a, &b).unwrap().unwrap());
        prop_assert!(h95 <= hmax + 1e-12);
        let d = dice(&a, &b).unwrap().unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn identical_masks_score_perfectly((g, a, _b) in mask_strategy()) {
        let a = BinaryMask::new(g, ensure_nonempty(a)).unwrap();
        prop_assert_eq!(dice(&a, &a).unwrap(), Some(1.0));
        prop_assert_eq!(hd95(&a, &a).unwrap(), Some(0.0));
    }

    #[test]
    fn metrics_are_translation_invariant(
        (g, a, b) in mask_strategy(),
        pad in prop::array::uniform3(0usize..4),
        extra in prop::array::uniform3(0usize..4),
    ) {
        let a = BinaryMask::new(g.clone(), ensure_nonempty(a)).unwrap();
        let b = BinaryMask::new(g, ensure_nonempty(b)).unwrap();
        let (ea, eb) = (embed(&a, pad, extra), embed(&b, pad, extra));
        prop_assert_eq!(dice(&a, &b).unwrap(), dice(&ea, &eb).unwrap());
        let (h, eh) = (hd95(&a, &b).unwrap().unwrap(), hd95(&ea, &eb).unwrap().unwrap());
        prop_assert!((h - eh).abs() < 1e-9, "{} vs {}", h, eh);
    }

    #[test]
    fn empty_masks_give_no_value((g, a, _b) in mask_strategy()) {
        let a = BinaryMask::new(g.clone(), ensure_nonempty(a)).unwrap();
        let empty = BinaryMask::new(g.clone(), vec![false; g.len()]).unwrap();
        prop_assert_eq!(dice(&a, &empty).unwrap(), None);
        prop_assert_eq!(hd95(&empty, &a).unwrap(), None);
        prop_assert!(distance_transform(&empty).is_err());
    }
}
