use std::f64::consts::{FRAC_PI_2, PI};

use dmkrr_core::krr::{build_pairs, EstimatorForm};
use dmkrr_core::metrics::component_std;
use dmkrr_core::systems::*;
use dmkrr_core::Matrix;
use proptest::prelude::*;

#[test]
fn lorenz_step_matches_oracles() {
    let f = Lorenz63Params::default().field();
    let x = rk4_step(f, &[1.0, 1.0, 1.0], 0.01);
    let rk4 = [1.0125671910736112, 1.2599177989452743, 0.9848909717916053];
    let exact = [1.0125657329784097, 1.2599200262523373, 0.9848910449164658];
    for ((a, b), c) in x.iter().zip(rk4).zip(exact) {
        assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        // one-step truncation error
        assert!((a - c).abs() < 5e-6, "{a} vs {c}");
    }
}

fn lorenz_endpoint(x0: &[f64], dt: f64) -> Vec<f64> {
    let steps = (1.0 / dt).round() as usize;
    let t = integrate(Lorenz63Params::default().field(), x0, dt, steps).unwrap();
    t.col(steps).to_vec()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Geometric mean over 20 consecutive unit-time windows on the attractor of
/// err(0.01) / err(0.005), errors taken against dt = 1e-5.
fn rk4_order_ratio() -> f64 {
    let t = gen_lorenz63(
        &Lorenz63Params::default(),
        [1.0, 1.0, 1.0],
        6001,
        0.01,
        4000,
    )
    .unwrap();
    let logs: Vec<f64> = (0..20)
        .map(|w| {
            let x0 = t.col(100 * w);
            let r = lorenz_endpoint(x0, 1e-5);
            (dist(&lorenz_endpoint(x0, 0.01), &r) / dist(&lorenz_endpoint(x0, 0.005), &r)).ln()
        })
        .collect();
    (logs.iter().sum::<f64>() / logs.len() as f64).exp()
}

#[test]
fn rk4_is_fourth_order() {
    let ratio = rk4_order_ratio();
    assert!((12.0..=20.0).contains(&ratio), "{ratio}");
    assert!((ratio - 17.49498790606205).abs() < 1e-3, "{ratio}");
}

#[test]
fn lorenz_unit_time_from_fixed_start() {
    let x = lorenz_endpoint(&[1.0, 1.0, 1.0], 0.00125);
    let oracle = [-9.378570010925356, -8.357033788426984, 29.362325337363725];
    assert!(dist(&x, &oracle) < 2e-8);
}

#[test]
fn lorenz_long_run_statistics() {
    let t = gen_lorenz63(
        &Lorenz63Params::default(),
        [1.0, 1.0, 1.0],
        204_000,
        0.01,
        4000,
    )
    .unwrap();
    assert_eq!(t.ncols(), 200_000);
    let oracle = [7.919835613023836, 9.019190548020523, 8.646246458363654];
    for (s, o) in component_std(&t).iter().zip(oracle) {
        assert!((s - o).abs() < 0.1 * o, "{s} vs {o}");
    }
}

#[test]
fn rigid_body_drift_is_fourth_order_without_renormalization() {
    let f = RigidBodyParams::default().field();
    let z0 = {
        let v = [0.3f64, 0.5, 0.8];
        let r = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.map(|a| a / r)
    };
    let drift = |dt: f64| {
        let steps = (10.0 / dt).round() as usize;
        let t = integrate(f, &z0, dt, steps).unwrap();
        let r: f64 = t.col(steps).iter().map(|a| a * a).sum::<f64>().sqrt();
        (r - 1.0).abs()
    };
    let (d1, d2) = (drift(0.02), drift(0.01));
    assert!(d2 < 1e-8, "{d2}");
    assert!(d1 / d2 > 8.0, "{d1} / {d2}");
}

#[test]
fn rigid_body_ensemble_shapes() {
    let ics = sphere_grid(100);
    let trajs = gen_rigid_body(&RigidBodyParams::default(), &ics, 0.01, 10_000).unwrap();
    assert_eq!(trajs.len(), 100);
    for t in &trajs {
        for c in t.columns() {
            let r: f64 = c.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!((r - 1.0).abs() < 1e-14);
        }
    }
    let expected: usize = trajs.iter().map(|t| t.ncols() - 1).sum();
    let pairs = build_pairs(&trajs, EstimatorForm::SkipConnection, 0.01).unwrap();
    assert_eq!(pairs.len(), expected);
    let data = TrajectoryDataset::new(trajs, 0.01, "rigid_body", 0).unwrap();
    assert_eq!(data.total_states(), expected + 100);
}

proptest! {
    #[test]
    fn torus_embedding_separates_parameters(
        t1 in 0.0f64..FRAC_PI_2, p1 in 0.0f64..PI,
        t2 in 0.0f64..FRAC_PI_2, p2 in 0.0f64..PI,
        n in prop::sample::select(vec![3usize, 7, 15]),
    ) {
        prop_assume!((t1 - t2).abs().max((p1 - p2).abs()) >= 0.01);
        let a = torus_embed(t1, p1, n).unwrap();
        let b = torus_embed(t2, p2, n).unwrap();
        let d: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        prop_assert!(d > 1e-6);
    }
}

#[test]
fn ks_dealiasing_keeps_top_third_empty() {
    let p = KsParams::chaotic();
    let ic: Vec<f64> = sine_profile(&p, 3.0)
        .iter()
        .zip(sine_profile(&p, 7.0))
        .map(|(a, b)| a + 0.5 * b)
        .collect();
    let mut solver = KsSolver::new(p).unwrap();
    let mut v = solver.to_spectral(&ic);
    solver.step(&mut v);
    let n = p.grid as i64;
    let tail: f64 = v
        .iter()
        .enumerate()
        .filter(|(j, _)| {
            let m = if (*j as i64) < n / 2 {
                *j as i64
            } else {
                *j as i64 - n
            };
            (m.abs() as f64) > n as f64 / 3.0
        })
        .map(|(_, c)| c.norm_sqr())
        .sum();
    assert!(tail.sqrt() < 1e-10, "{tail}");
}

#[test]
fn ks_matches_reference_integrator() {
    let p = KsParams::chaotic();
    let ic: Vec<f64> = p
        .grid_points()
        .iter()
        .map(|s| {
            let w = 2.0 * PI * s / p.length;
            w.sin() + 0.5 * (2.0 * w).cos() + 0.3 * (3.0 * w).sin()
        })
        .collect();
    let t = gen_ks(&ic, &p, 1000, 1000, 0).unwrap();
    let u = t.col(1);
    let oracle = [
        -0.23599248824502972,
        -0.15326106899625702,
        -0.076971844369499,
        -0.00805379710053944,
        0.05233280656629402,
        0.10272678086053061,
        0.1415233308464503,
        0.16736355675497938,
    ];
    for (a, b) in u.iter().zip(oracle) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
    let norm: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    assert!((norm - 8.552444241261812).abs() < 1e-8);
}

#[test]
fn ks_downsampling_consistency() {
    let p = KsParams::chaotic();
    let ic = sine_profile(&p, 2.0);
    let fine = gen_ks(&ic, &p, 1000, 10, 0).unwrap();
    let coarse_p = KsParams {
        dt_solver: 10.0 * p.dt_solver,
        ..p
    };
    let coarse = gen_ks(&ic, &coarse_p, 100, 1, 0).unwrap();
    assert_eq!(fine.ncols(), coarse.ncols());
    let scale = fine.frobenius_norm();
    assert!(fine.max_abs_diff(&coarse) < 1e-3 * scale);
    assert!(fine.max_abs_diff(&coarse) > 0.0);
}

#[test]
fn ks_chaotic_lyapunov_rate() {
    let p = KsParams::chaotic();
    let ic = sine_profile(&p, 8.0);
    let warm = gen_ks(&ic, &p, 50_000, 50_000, 0).unwrap();
    let mut solver = KsSolver::new(p).unwrap();
    let mut a = solver.to_spectral(warm.col(1));
    let d0 = 1e-8;
    let mut pert = warm.col(1).to_vec();
    pert[0] += d0;
    let mut b = solver.to_spectral(&pert);
    // Benettin renormalization every 1000 steps over t = 3000
    let mut log_growth = 0.0;
    let (blocks, per) = (300, 1000);
    let mut ua = vec![0.0; p.grid];
    let mut ub = vec![0.0; p.grid];
    for _ in 0..blocks {
        for _ in 0..per {
            solver.step(&mut a);
            solver.step(&mut b);
        }
        solver.to_physical(&a, &mut ua);
        solver.to_physical(&b, &mut ub);
        let d: f64 = ua
            .iter()
            .zip(&ub)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        log_growth += (d / d0).ln();
        let scaled: Vec<f64> = ua
            .iter()
            .zip(&ub)
            .map(|(x, y)| x + (y - x) * d0 / d)
            .collect();
        b = solver.to_spectral(&scaled);
    }
    let lambda = log_growth / (blocks as f64 * per as f64 * p.dt_solver);
    assert!((0.0215..=0.086).contains(&lambda), "{lambda}");
}

#[test]
fn dataset_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lorenz.bin");
    let t = gen_lorenz63(&Lorenz63Params::default(), [1.0, 1.0, 1.0], 1000, 0.01, 0).unwrap();
    let d = TrajectoryDataset::new(vec![t], 0.01, "lorenz63", 3).unwrap();
    d.save(&path).unwrap();
    assert_eq!(TrajectoryDataset::load(&path).unwrap(), d);
    let bytes = std::fs::read(&path).unwrap();
    d.save(&path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
}

#[test]
fn segments_reproduce_prefix() {
    let t = Matrix::from_fn(2, 103, |i, j| (i * 1000 + j) as f64);
    let segs = segment(&t, 25).unwrap();
    let joined: Vec<f64> = segs.iter().flat_map(|s| s.as_slice().to_vec()).collect();
    assert_eq!(joined, t.subcols(0, 100).into_vec());
}
