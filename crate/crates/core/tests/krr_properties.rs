#![allow(clippy::needless_range_loop)]

use dmkrr_core::kernels::gram;
use dmkrr_core::krr::{build_pairs, EstimatorForm, KrrModel, TrainingPairs};
use dmkrr_core::systems::{gen_lorenz63, Lorenz63Params};
use dmkrr_core::{KernelKind, Matrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense Gaussian elimination with partial pivoting, independent of the crate's solver.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

fn random_pairs(seed: u64, count: usize, n: usize) -> TrainingPairs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = Matrix::from_fn(n, count, |_, _| rng.random_range(-2.0..2.0));
    let targets = Matrix::from_fn(n, count, |_, _| rng.random_range(-1.0..1.0));
    TrainingPairs {
        inputs,
        targets,
        form: EstimatorForm::Direct,
        dt: 0.1,
    }
}

#[test]
fn solution_matches_dense_oracle() {
    for kind in [KernelKind::Rbf, KernelKind::Dm] {
        let p = random_pairs(3, 30, 3);
        let (eps, lam) = (0.5, 1e-3);
        let m = KrrModel::fit(&p, kind, eps, lam).unwrap();
        let k = gram(kind, &p.inputs, eps).unwrap();
        let a: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                (0..30)
                    .map(|j| k.get(i, j) + if i == j { lam } else { 0.0 })
                    .collect()
            })
            .collect();
        for comp in 0..3 {
            let oracle = dense_solve(a.clone(), p.targets.row(comp));
            let got = m.alpha().row(comp);
            let scale = oracle.iter().fold(1.0f64, |s, v| s.max(v.abs()));
            for (g, o) in got.iter().zip(&oracle) {
                assert!((g - o).abs() < 1e-10 * scale, "{kind}: {g} vs {o}");
            }
        }
    }
}

#[test]
fn interpolation_limit() {
    // 50 well-separated points
    let p = random_pairs(11, 50, 3);
    let m = KrrModel::fit(&p, KernelKind::Rbf, 0.05, 1e-10).unwrap();
    for j in 0..50 {
        let y = m.predict_step(p.inputs.col(j)).unwrap();
        let err: f64 = y
            .iter()
            .zip(p.targets.col(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-6, "point {j}: {err}");
    }
}

#[test]
fn lorenz_snippet_fits_targets() {
    let t = gen_lorenz63(&Lorenz63Params::default(), [1.0, 2.0, 20.0], 21, 0.01, 0).unwrap();
    for kind in [KernelKind::Rbf, KernelKind::Dm] {
        let p = build_pairs(
            std::slice::from_ref(&t),
            EstimatorForm::SkipConnection,
            0.01,
        )
        .unwrap();
        assert_eq!(p.len(), 20);
        let m = KrrModel::fit(&p, kind, 0.5, 1e-8).unwrap();
        for j in 0..p.len() {
            let y = m.predict_step(p.inputs.col(j)).unwrap();
            let err: f64 = y
                .iter()
                .zip(t.col(j + 1))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(err < 1e-5, "{kind} point {j}: {err}");
        }
    }
}

#[test]
fn skip_form_adds_identity() {
    let t = gen_lorenz63(&Lorenz63Params::default(), [1.0, 1.0, 1.0], 400, 0.01, 100).unwrap();
    let skip_pairs = build_pairs(
        std::slice::from_ref(&t),
        EstimatorForm::SkipConnection,
        0.01,
    )
    .unwrap();
    let mut incr_pairs = skip_pairs.clone();
    incr_pairs.form = EstimatorForm::Direct;
    for kind in [KernelKind::Rbf, KernelKind::Dm] {
        let skip = KrrModel::fit(&skip_pairs, kind, 2.0, 1e-6).unwrap();
        let incr = KrrModel::fit(&incr_pairs, kind, 2.0, 1e-6).unwrap();
        assert_eq!(skip.alpha(), incr.alpha());
        let r = skip.rollout(t.col(0), 100).unwrap();
        let mut x = t.col(0).to_vec();
        for i in 1..=100 {
            let d = incr.predict_step(&x).unwrap();
            x.iter_mut().zip(&d).for_each(|(a, b)| *a += b);
            let col = r.states.col(i);
            for (a, b) in col.iter().zip(&x) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn linear_in_targets(seed in 0u64..1000, eps in 0.2f64..3.0) {
        let p = random_pairs(seed, 15, 2);
        let mut p2 = p.clone();
        p2.targets = p.targets.map(|v| 2.0 * v);
        for kind in [KernelKind::Rbf, KernelKind::Dm] {
            let a = KrrModel::fit(&p, kind, eps, 1e-4).unwrap();
            let b = KrrModel::fit(&p2, kind, eps, 1e-4).unwrap();
            let scale = a.alpha().as_slice().iter().fold(1.0f64, |m, v| m.max(v.abs()));
            prop_assert!(a.alpha().map(|v| 2.0 * v).max_abs_diff(b.alpha()) <= 1e-12 * scale);
        }
    }

    #[test]
    fn permutation_invariant(seed in 0u64..1000, shift in 1usize..14) {
        let p = random_pairs(seed, 15, 2);
        let idx: Vec<usize> = (0..15).map(|i| (i + shift) % 15).collect();
        let q = p.select(&idx);
        let z = [0.3, -0.4];
        for kind in [KernelKind::Rbf, KernelKind::Dm] {
            let a = KrrModel::fit(&p, kind, 1.0, 1e-3).unwrap().predict_step(&z).unwrap();
            let b = KrrModel::fit(&q, kind, 1.0, 1e-3).unwrap().predict_step(&z).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn validated_lorenz_rollout_stays_finite() {
    use dmkrr_core::validation::{
        heuristic_reference, make_range, random_search, HeuristicMode, Metric, SearchSpec,
    };
    let t = gen_lorenz63(
        &Lorenz63Params::default(),
        [1.0, 1.0, 1.0],
        8000,
        0.01,
        4000,
    )
    .unwrap();
    let train = t.subcols(0, 512);
    let val = vec![t.subcols(600, 1500)];
    let p = build_pairs(
        std::slice::from_ref(&train),
        EstimatorForm::SkipConnection,
        0.01,
    )
    .unwrap();
    let h = heuristic_reference(&train, HeuristicMode::Chaotic, 3).unwrap();
    let spec = SearchSpec {
        range: make_range(&h, 1e-2, 1e-4).unwrap(),
        trials: 32,
        metric: Metric::Vpt {
            gamma: 0.3,
            lyapunov: 0.91,
        },
        seed: 1,
    };
    let out = random_search(&p, KernelKind::Dm, &val, &spec).unwrap();
    let r = out.model.rollout(t.col(2200), 2500).unwrap();
    assert!(!r.diverged());
    assert_eq!(r.states.ncols(), 2501);
    assert!(r.states.is_finite());
}
