//! Simplex, L1 and nuclear-ball projections against independent oracles.

use cvxattn_core::numkernel::{Mat, RngStream};
use cvxattn_core::projections::{
    half_squared_distance_gradient, l1_ball_project_nonneg, nuclear_ball_project, simplex_project,
    squared_distance_to_simplex,
};
use proptest::prelude::*;

/// Michelot's active-set iteration: drop coordinates that fall below the
/// current threshold until the active set is stable.
fn michelot(s: &[f64]) -> Vec<f64> {
    let mut active: Vec<usize> = (0..s.len()).collect();
    loop {
        let theta = (active.iter().map(|&i| s[i]).sum::<f64>() - 1.0) / active.len() as f64;
        let keep: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&i| s[i] - theta > 0.0)
            .collect();
        if keep.len() == active.len() {
            let mut out = vec![0.0; s.len()];
            for &i in &active {
                out[i] = s[i] - theta;
            }
            return out;
        }
        active = keep;
    }
}

/// Enumerates every support set and returns the one satisfying the KKT
/// conditions of `min ||x - s||^2` over the simplex.
fn kkt_exhaustive(s: &[f64]) -> Vec<f64> {
    let p = s.len();
    for mask in 1u32..(1 << p) {
        let support: Vec<usize> = (0..p).filter(|i| mask & (1 << i) != 0).collect();
        let theta = (support.iter().map(|&i| s[i]).sum::<f64>() - 1.0) / support.len() as f64;
        let primal = support.iter().all(|&i| s[i] - theta >= -1e-12);
        let dual = (0..p)
            .filter(|i| mask & (1 << i) == 0)
            .all(|j| s[j] - theta <= 1e-12);
        if primal && dual {
            let mut x = vec![0.0; p];
            for &i in &support {
                x[i] = (s[i] - theta).max(0.0);
            }
            return x;
        }
    }
    unreachable!("some support always satisfies KKT")
}

fn proj(s: &[f64]) -> Vec<f64> {
    simplex_project(s).unwrap().values().to_vec()
}

fn vec_strategy(min: usize, max: usize) -> impl Strategy<Value = Vec<f64>> {
    (min..=max).prop_flat_map(|p| prop::collection::vec(-10.0f64..10.0, p))
}

fn pair_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..=30).prop_flat_map(|p| {
        (
            prop::collection::vec(-10.0f64..10.0, p),
            prop::collection::vec(-10.0f64..10.0, p),
        )
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn matches_michelot(s in vec_strategy(1, 30)) {
        let got = proj(&s);
        for (g, e) in got.iter().zip(michelot(&s)) {
            prop_assert!((g - e).abs() <= 1e-9, "{got:?}");
        }
    }

    #[test]
    fn matches_kkt_enumeration(s in vec_strategy(1, 8)) {
        let got = proj(&s);
        for (g, e) in got.iter().zip(kkt_exhaustive(&s)) {
            prop_assert!((g - e).abs() <= 1e-9);
        }
    }

    #[test]
    fn output_on_simplex(s in vec_strategy(1, 30)) {
        let x = proj(&s);
        prop_assert!(x.iter().all(|&v| v >= 0.0));
        prop_assert!((x.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn idempotent(s in vec_strategy(1, 30)) {
        let once = proj(&s);
        let twice = proj(&once);
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn shift_invariant(s in vec_strategy(1, 30), c in -50.0f64..50.0) {
        let shifted: Vec<f64> = s.iter().map(|v| v + c).collect();
        for (a, b) in proj(&s).iter().zip(proj(&shifted)) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn firmly_nonexpansive((v, w) in pair_strategy()) {
        let dp = diff(&proj(&v), &proj(&w));
        let dx = diff(&v, &w);
        let dp2 = dot(&dp, &dp);
        prop_assert!(dp2 <= dot(&dp, &dx) + 1e-12);
        prop_assert!(dp2.sqrt() <= dot(&dx, &dx).sqrt() + 1e-12);
    }

    #[test]
    fn squared_distance_is_convex((a, b) in pair_strategy(), t in 0.0f64..=1.0) {
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        let lhs = squared_distance_to_simplex(&mid).unwrap();
        let rhs = t * squared_distance_to_simplex(&a).unwrap()
            + (1.0 - t) * squared_distance_to_simplex(&b).unwrap();
        prop_assert!(lhs <= rhs + 1e-9 * (1.0 + rhs));
    }

    #[test]
    fn half_distance_gradient_matches_differences(s in vec_strategy(1, 12)) {
        let g = half_squared_distance_gradient(&s).unwrap();
        let f = |x: &[f64]| 0.5 * squared_distance_to_simplex(x).unwrap();
        let h = 1e-6;
        for i in 0..s.len() {
            let mut up = s.clone();
            let mut dn = s.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (f(&up) - f(&dn)) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-5, "coord {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn l1_projection_matches_scaled_simplex(
        sigma in prop::collection::vec(0.0f64..20.0, 1..12),
        radius in 0.1f64..30.0,
    ) {
        let got = l1_ball_project_nonneg(&sigma, radius).unwrap();
        let total: f64 = sigma.iter().sum();
        if total <= radius {
            prop_assert_eq!(&got, &sigma);
        } else {
            // On the boundary, projecting onto {x >= 0, sum x = R} equals
            // R times the simplex projection of sigma / R.
            let scaled: Vec<f64> = sigma.iter().map(|v| v / radius).collect();
            for (g, e) in got.iter().zip(michelot(&scaled)) {
                prop_assert!((g - radius * e).abs() <= 1e-9 * radius.max(1.0));
            }
        }
    }
}

#[test]
fn thousand_vectors_match_michelot() {
    let mut rng = RngStream::new(2024);
    for _ in 0..1000 {
        let p = 2 + rng.below(29);
        let s: Vec<f64> = (0..p).map(|_| 3.0 * rng.next_normal()).collect();
        for (g, e) in proj(&s).iter().zip(michelot(&s)) {
            assert!((g - e).abs() <= 1e-9);
        }
    }
}

#[test]
fn vertex_pair_contracts_strictly() {
    let a = proj(&[5.0, 0.0]);
    let b = proj(&[9.0, 0.0]);
    assert_eq!(a, vec![1.0, 0.0]);
    assert_eq!(a, b);
}

/// Orthonormal columns from Gram-Schmidt on Gaussian vectors.
fn random_orthonormal(rows: usize, cols: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    while basis.len() < cols {
        let mut v: Vec<f64> = (0..rows).map(|_| rng.next_normal()).collect();
        for b in &basis {
            let c = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-8 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

/// `U diag(sigma) V^T` with random orthonormal factors; its nuclear norm is
/// exactly `sum(sigma)` up to rounding.
fn with_spectrum(rows: usize, cols: usize, sigma: &[f64], rng: &mut RngStream) -> Mat {
    let u = random_orthonormal(rows, sigma.len(), rng);
    let v = random_orthonormal(cols, sigma.len(), rng);
    let mut m = Mat::zeros(rows, cols);
    for (k, &s) in sigma.iter().enumerate() {
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] += s * u[k][i] * v[k][j];
            }
        }
    }
    m
}

#[test]
fn nuclear_projection_beats_random_feasible_points() {
    let mut rng = RngStream::new(77);
    let (rows, cols, radius) = (6, 3, 2.0);
    let a = Mat::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| 2.0 * rng.next_normal()).collect(),
    )
    .unwrap();
    let p = nuclear_ball_project(&a, radius).unwrap();
    assert!(p.nuclear_norm().unwrap() <= radius + 1e-9);
    let residual = a.sub(&p).unwrap();
    let best = residual.frobenius_norm();
    for _ in 0..10_000 {
        // Random spectrum inside the L1 ball of the given radius.
        let raw: Vec<f64> = (0..cols).map(|_| rng.next_f64()).collect();
        let scale = radius * rng.next_f64() / raw.iter().sum::<f64>();
        let sigma: Vec<f64> = raw.iter().map(|v| v * scale).collect();
        let c = with_spectrum(rows, cols, &sigma, &mut rng);
        assert!(best <= a.sub(&c).unwrap().frobenius_norm() + 1e-9);
        // Variational inequality: <A - P, C - P> <= 0 for every feasible C.
        let inner = dot(residual.as_slice(), c.sub(&p).unwrap().as_slice());
        assert!(inner <= 1e-9, "inner product {inner}");
    }
}

#[test]
fn nuclear_projection_diagonal_oracle_exact() {
    // Values chosen so the threshold arithmetic is exact in binary.
    let cases: [(&[f64], f64, &[f64]); 3] = [
        (&[3.0, 1.0, 0.5], 2.0, &[2.0, 0.0, 0.0]),
        (&[4.0, 3.0, 1.0], 5.0, &[3.0, 2.0, 0.0]),
        (&[2.5, 1.5, 1.0, 0.5], 3.5, &[2.0, 1.0, 0.5, 0.0]),
    ];
    for (d, radius, expected) in cases {
        let got = nuclear_ball_project(&Mat::from_diag(d), radius).unwrap();
        assert_eq!(got, Mat::from_diag(expected), "diag {d:?} radius {radius}");
    }
}

#[test]
fn nuclear_projection_preserves_singular_vectors() {
    let mut rng = RngStream::new(5);
    let sigma = [4.0, 2.0, 1.0];
    let a = with_spectrum(8, 3, &sigma, &mut rng);
    let p = nuclear_ball_project(&a, 3.0).unwrap();
    // Threshold 1.5 leaves the spectrum (2.5, 0.5, 0).
    let svd = cvxattn_core::numkernel::svd_thin(&p).unwrap();
    assert!((svd.sigma[0] - 2.5).abs() < 1e-9, "{:?}", svd.sigma);
    assert!((svd.sigma[1] - 0.5).abs() < 1e-9);
    assert!(svd.sigma[2].abs() < 1e-9);
    assert!((p.nuclear_norm().unwrap() - 3.0).abs() < 1e-9);
}
