//! Patch partitioning and random Fourier features against the exact RBF kernel.

use cvxattn_core::features::{patchify, rff_init, rff_transform, unpatchify, PatchSpec, RffMap};
use cvxattn_core::numkernel::{Mat, RngStream};
use proptest::prelude::*;

const DIM: usize = 6;

fn map(m: usize, gamma: f64, seed: u64) -> RffMap {
    let spec = PatchSpec::new(DIM, 1, 1).unwrap();
    rff_init(&spec, m, gamma, &mut RngStream::new(seed)).unwrap()
}

fn phi(x: &[f64], map: &RffMap) -> Vec<f64> {
    rff_transform(&[x.to_vec()], map).unwrap().row(0).to_vec()
}

fn rbf(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn points(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = RngStream::new(seed);
    (0..n)
        .map(|_| (0..DIM).map(|_| 0.5 * rng.next_normal()).collect())
        .collect()
}

fn mean_kernel_error(m: usize, gamma: f64, seed: u64, pts: &[Vec<f64>]) -> f64 {
    let map = map(m, gamma, seed);
    let pairs = pts.len() / 2;
    (0..pairs)
        .map(|i| {
            let (x, y) = (&pts[2 * i], &pts[2 * i + 1]);
            (dot(&phi(x, &map), &phi(y, &map)) - rbf(x, y, gamma)).abs()
        })
        .sum::<f64>()
        / pairs as f64
}

#[test]
fn inner_products_approximate_rbf_kernel() {
    let pts = points(200, 1);
    let err = mean_kernel_error(2048, 0.5, 9, &pts);
    assert!(err <= 0.05, "mean kernel error {err}");
}

#[test]
fn self_inner_product_near_one() {
    let map = map(4096, 1.0, 4);
    for x in points(20, 2) {
        let k = dot(&phi(&x, &map), &phi(&x, &map));
        assert!((0.95..=1.05).contains(&k), "{k}");
    }
}

#[test]
fn error_shrinks_with_dimension() {
    let pts = points(100, 3);
    let avg = |m: usize| {
        (0..20)
            .map(|s| mean_kernel_error(m, 0.5, 100 + s, &pts))
            .sum::<f64>()
            / 20.0
    };
    let (small, large) = (avg(64), avg(4096));
    assert!(small > large, "m=64 error {small} vs m=4096 error {large}");
}

#[test]
fn weight_variance_matches_two_gamma() {
    let map = map(2048, 1.0, 17);
    let w = map.w().as_slice();
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64;
    assert!((1.9..=2.1).contains(&var), "variance {var}");
    let b = map.b();
    assert!(b
        .iter()
        .all(|&v| (0.0..2.0 * std::f64::consts::PI).contains(&v)));
}

#[test]
fn transform_is_deterministic() {
    let spec = PatchSpec::new(4, 10, 10).unwrap();
    let a = rff_init(&spec, 3, 1.0, &mut RngStream::new(8)).unwrap();
    let b = rff_init(&spec, 3, 1.0, &mut RngStream::new(8)).unwrap();
    assert_eq!(a, b);
    let x = Mat::from_vec(4, 10, (0..40).map(|i| (i as f64).sin()).collect()).unwrap();
    let p = patchify(&x, &spec).unwrap();
    let q1 = rff_transform(&p, &a).unwrap();
    let q2 = rff_transform(&p, &b).unwrap();
    assert_eq!(q1.as_slice(), q2.as_slice());
}

fn shape_strategy() -> impl Strategy<Value = (usize, usize, usize)> {
    // (channels, patches, frames per patch)
    (1usize..6, 1usize..8, 1usize..5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn patch_round_trip((c, p, fpp) in shape_strategy(), seed in any::<u64>()) {
        let t = p * fpp;
        let spec = PatchSpec::new(c, t, p).unwrap();
        let mut rng = RngStream::new(seed);
        let x = Mat::from_vec(c, t, (0..c * t).map(|_| rng.next_normal()).collect()).unwrap();
        let patches = patchify(&x, &spec).unwrap();
        prop_assert_eq!(patches.len(), p);
        prop_assert!(patches.iter().all(|v| v.len() == c * fpp));
        prop_assert_eq!(unpatchify(&patches, &spec).unwrap(), x);
    }

    #[test]
    fn features_are_bounded(
        (c, p, fpp) in shape_strategy(),
        m in 1usize..12,
        gamma in 0.01f64..5.0,
        seed in any::<u64>(),
    ) {
        let t = p * fpp;
        let spec = PatchSpec::new(c, t, p).unwrap();
        let mut rng = RngStream::new(seed);
        let map = rff_init(&spec, m, gamma, &mut rng).unwrap();
        let x = Mat::from_vec(c, t, (0..c * t).map(|_| 10.0 * rng.next_normal()).collect()).unwrap();
        let q = rff_transform(&patchify(&x, &spec).unwrap(), &map).unwrap();
        prop_assert_eq!(q.shape(), (p, m));
        let bound = (2.0 / m as f64).sqrt();
        prop_assert!(q.as_slice().iter().all(|v| v.abs() <= bound));
    }
}

#[test]
fn non_divisible_patches_rejected() {
    assert!(PatchSpec::new(4, 10, 3).is_err());
    let spec = PatchSpec::new(1, 4, 2).unwrap();
    assert!(rff_init(&spec, 0, 1.0, &mut RngStream::new(0)).is_err());
    assert!(rff_init(&spec, 3, 0.0, &mut RngStream::new(0)).is_err());
}
