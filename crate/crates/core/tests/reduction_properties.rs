use dmkrr_core::reduction::{PcaReducer, PcaTarget};
use dmkrr_core::Matrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `k` orthonormal random vectors of length `n`, all orthogonal to `avoid`.
fn orthonormal(n: usize, k: usize, avoid: Option<&[f64]>, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut fixed: Vec<Vec<f64>> = Vec::new();
    if let Some(a) = avoid {
        let r = dot(a, a).sqrt();
        fixed.push(a.iter().map(|v| v / r).collect());
    }
    while out.len() < k {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for u in fixed.iter().chain(&out) {
                let c = dot(&v, u);
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= c * b);
            }
        }
        let r = dot(&v, &v).sqrt();
        out.push(v.into_iter().map(|a| a / r).collect());
    }
    out
}

/// Centered-known spectrum: `X = mean + sum_i s_i u_i v_i^T` with `v_i` orthogonal to ones.
fn synthetic(n: usize, m: usize, s: &[f64], seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let us = orthonormal(n, s.len(), None, &mut rng);
    let vs = orthonormal(m, s.len(), Some(&vec![1.0; m]), &mut rng);
    let mean: Vec<f64> = (0..n).map(|i| (i as f64 * 0.01).sin() * 3.0).collect();
    Matrix::from_fn(n, m, |i, j| {
        mean[i]
            + s.iter()
                .zip(&us)
                .zip(&vs)
                .map(|((s, u), v)| s * u[i] * v[j])
                .sum::<f64>()
    })
}

#[test]
fn round_trip_error_equals_singular_tail() {
    let s: Vec<f64> = (0..60).map(|i| 10.0 * 0.85f64.powi(i)).collect();
    let x = synthetic(500, 300, &s, 4);
    for r in [5, 10, 20] {
        let p = PcaReducer::fit(&x, PcaTarget::Rank(r)).unwrap();
        let back = p.reconstruct_all(&p.reduce_all(&x).unwrap()).unwrap();
        let err = back
            .as_slice()
            .iter()
            .zip(x.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let tail = s[r..].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(((err - tail) / tail).abs() < 1e-8, "r={r}: {err} vs {tail}");
        for (a, b) in p.singular_values().iter().zip(&s) {
            assert!((a - b).abs() < 1e-10 * s[0]);
        }
    }
}

#[test]
fn energy_accounting() {
    let s: Vec<f64> = (0..30).map(|i| 5.0 / (1.0 + i as f64)).collect();
    let x = synthetic(80, 120, &s, 6);
    for r in [1, 4, 17, 30] {
        let p = PcaReducer::fit(&x, PcaTarget::Rank(r)).unwrap();
        let sv = p.singular_values();
        let total: f64 = sv.iter().map(|v| v * v).sum();
        let kept: f64 = sv[..r].iter().map(|v| v * v).sum();
        assert!((kept / total - p.energy()).abs() < 1e-12);
    }
}

#[test]
fn hand_built_rank_three() {
    let u = [
        [0.5, 0.5, 0.5, 0.5],
        [0.5, -0.5, 0.5, -0.5],
        [0.5, 0.5, -0.5, -0.5],
    ];
    let a = [3.0, -3.0, 3.0, -3.0];
    let b = [2.0, 2.0, -2.0, -2.0];
    let c = [1.0, -1.0, -1.0, 1.0];
    let mean = [1.0, 2.0, 3.0, 4.0];
    let x = Matrix::from_fn(4, 4, |i, j| {
        mean[i] + a[j] * u[0][i] + b[j] * u[1][i] + c[j] * u[2][i]
    });
    let p = PcaReducer::fit(&x, PcaTarget::Energy(1.0)).unwrap();
    assert_eq!(p.rank(), 3);
    assert!((p.sigma1() - 6.0).abs() < 1e-12);
    for (m, e) in p.mean().iter().zip(mean) {
        assert!((m - e).abs() < 1e-14);
    }
    for j in 0..4 {
        let xt = p.reduce(x.col(j)).unwrap();
        for (k, coef) in [a[j], b[j], c[j]].iter().enumerate() {
            // basis vectors are determined up to sign
            assert!((xt[k].abs() - coef.abs() / 6.0).abs() < 1e-12);
        }
        let back = p.reconstruct(&xt).unwrap();
        for (v, w) in back.iter().zip(x.col(j)) {
            assert!((v - w).abs() < 1e-12);
        }
    }
}

#[test]
fn rank_three_plus_noise_selects_three() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let base = synthetic(40, 200, &[9.0, 6.0, 4.0], 13);
    let noise: Vec<f64> = (0..40 * 200)
        .map(|_| 1e-4 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let x = Matrix::from_col_major(
        40,
        200,
        base.as_slice()
            .iter()
            .zip(&noise)
            .map(|(a, b)| a + b)
            .collect(),
    )
    .unwrap();
    let p = PcaReducer::fit(&x, PcaTarget::Energy(0.999)).unwrap();
    assert_eq!(p.rank(), 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn reduce_after_reconstruct_is_identity(xt in prop::collection::vec(-2.0f64..2.0, 4)) {
        let s = [7.0, 3.0, 2.0, 1.0, 0.5];
        let p = PcaReducer::fit(&synthetic(12, 40, &s, 21), PcaTarget::Rank(4)).unwrap();
        let back = p.reduce(&p.reconstruct(&xt).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&xt) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }
}
