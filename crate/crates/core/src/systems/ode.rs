//! Fixed-step RK4 integration of the Lorenz-63 and rigid-body systems.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;

/// One classical Runge-Kutta step of `dx/dt = f(x)`; `f` writes into its second argument.
pub fn rk4_step(f: impl Fn(&[f64], &mut [f64]), x: &[f64], dt: f64) -> Vec<f64> {
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    f(x, &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    f(&tmp, &mut k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    f(&tmp, &mut k3);
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    f(&tmp, &mut k4);
    (0..n)
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Integrates `steps` RK4 steps; the result holds `steps + 1` states starting at `x0`.
pub fn integrate(
    f: impl Fn(&[f64], &mut [f64]),
    x0: &[f64],
    dt: f64,
    steps: usize,
) -> Result<Matrix> {
    integrate_with(f, x0, dt, steps, |_| {})
}

/// Like [`integrate`], applying `project` to every new state (e.g. renormalization).
pub fn integrate_with(
    f: impl Fn(&[f64], &mut [f64]),
    x0: &[f64],
    dt: f64,
    steps: usize,
    mut project: impl FnMut(&mut [f64]),
) -> Result<Matrix> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", format!("must be positive, got {dt}")));
    }
    if let Some(index) = x0.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "initial condition",
            index,
        });
    }
    let n = x0.len();
    let mut data = Vec::with_capacity(n * (steps + 1));
    data.extend_from_slice(x0);
    let mut x = x0.to_vec();
    for step in 1..=steps {
        x = rk4_step(&f, &x, dt);
        project(&mut x);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { step });
        }
        data.extend_from_slice(&x);
    }
    Matrix::from_col_major(n, steps + 1, data)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lorenz63Params {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for Lorenz63Params {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
        }
    }
}

impl Lorenz63Params {
    pub fn field(&self) -> impl Fn(&[f64], &mut [f64]) + Copy {
        let Self { sigma, rho, beta } = *self;
        move |x, dx| {
            dx[0] = sigma * (x[1] - x[0]);
            dx[1] = x[0] * (rho - x[2]) - x[1];
            dx[2] = x[0] * x[1] - beta * x[2];
        }
    }
}

/// Lorenz-63 trajectory of `steps` states (including `ic`) with the first `discard` dropped.
pub fn gen_lorenz63(
    params: &Lorenz63Params,
    ic: [f64; 3],
    steps: usize,
    dt: f64,
    discard: usize,
) -> Result<Matrix> {
    if steps <= discard {
        return Err(invalid(
            "steps",
            format!("{steps} states leave nothing after discarding {discard}"),
        ));
    }
    let traj = integrate(params.field(), &ic, dt, steps - 1)?;
    Ok(traj.subcols(discard, steps - discard))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidBodyParams {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for RigidBodyParams {
    fn default() -> Self {
        Self {
            c1: 0.5,
            c2: -7.0 / 8.0,
            c3: 3.0 / 8.0,
        }
    }
}

impl RigidBodyParams {
    pub fn field(&self) -> impl Fn(&[f64], &mut [f64]) + Copy {
        let Self { c1, c2, c3 } = *self;
        move |z, dz| {
            dz[0] = c1 * z[1] * z[2];
            dz[1] = c2 * z[0] * z[2];
            dz[2] = c3 * z[0] * z[1];
        }
    }
}

fn normalize(z: &mut [f64]) {
    let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    z.iter_mut().for_each(|v| *v /= r);
}

/// Rigid-body path on the unit sphere, renormalized after every step.
pub fn rigid_body_path(
    params: &RigidBodyParams,
    z0: [f64; 3],
    dt: f64,
    steps: usize,
) -> Result<Matrix> {
    let mut z = z0;
    let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid(
            "z0",
            "initial condition must be a nonzero finite vector",
        ));
    }
    normalize(&mut z);
    integrate_with(params.field(), &z, dt, steps, normalize)
}

/// Length of the first period of a closed orbit, if one closes within the path.
///
/// The return is taken at the first local minimum of `|z_t - z_0|` after step
/// 100 whose distance is below `max(1e-3, 2 * largest step length)`; a fixed
/// 1e-3 radius can be jumped over when a single step is longer than that.
pub fn first_return(path: &Matrix) -> Option<usize> {
    let z0 = path.col(0);
    let dist = |t: usize| {
        path.col(t)
            .iter()
            .zip(z0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let max_step = (1..path.ncols())
        .map(|t| {
            path.col(t)
                .iter()
                .zip(path.col(t - 1))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max);
    let tol = (2.0 * max_step).max(1e-3);
    (101..path.ncols().saturating_sub(1)).find(|&t| {
        let d = dist(t);
        d < tol && d <= dist(t - 1) && d <= dist(t + 1)
    })
}

/// Integrates each initial condition up to `steps` steps and truncates after one period.
///
/// The returned trajectory ends at the return state, so its last column
/// nearly repeats the first.
pub fn gen_rigid_body(
    params: &RigidBodyParams,
    ics: &[[f64; 3]],
    dt: f64,
    steps: usize,
) -> Result<Vec<Matrix>> {
    use rayon::prelude::*;
    ics.par_iter()
        .enumerate()
        .map(|(j, &z0)| {
            let path = rigid_body_path(params, z0, dt, steps)?;
            Ok(match first_return(&path) {
                Some(t) => path.subcols(0, t + 1),
                None => {
                    log::warn!("rigid body trajectory {j}: no period within {steps} steps, keeping the full path");
                    path
                }
            })
        })
        .collect()
}

/// `count` nearly uniform points on the unit sphere (Fibonacci lattice).
pub fn sphere_grid(count: usize) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let a = golden * i as f64;
            [r * a.cos(), r * a.sin(), z]
        })
        .collect()
}

/// `count` independent uniform points on the unit sphere.
pub fn sphere_random(count: usize, rng: &mut impl rand::Rng) -> Vec<[f64; 3]> {
    use rand_distr::{Distribution, StandardNormal};
    (0..count)
        .map(|_| loop {
            let mut z: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
            let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r > 1e-12 {
                z.iter_mut().for_each(|v| *v /= r);
                break z;
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_is_identity() {
        let x = [1.0, -2.0];
        assert_eq!(rk4_step(|_, d| d.fill(0.0), &x, 0.3), x.to_vec());
    }

    #[test]
    fn exponential_growth_taylor() {
        let y = rk4_step(|x, d| d[0] = x[0], &[1.0], 0.1);
        assert!((y[0] - 1.1051708333333332).abs() < 1e-15);
    }

    #[test]
    fn lorenz_fixed_point_and_z_axis() {
        let p = Lorenz63Params::default();
        let t = gen_lorenz63(&p, [0.0; 3], 50, 0.01, 0).unwrap();
        assert!(t.as_slice().iter().all(|v| *v == 0.0));
        let t = gen_lorenz63(&p, [0.0, 0.0, 5.0], 500, 0.01, 10).unwrap();
        assert_eq!(t.ncols(), 490);
        assert!(t.columns().all(|c| c[0] == 0.0 && c[1] == 0.0));
        assert!(t.get(2, 489) < t.get(2, 0));
        assert!(gen_lorenz63(&p, [1.0; 3], 10, 0.01, 10).is_err());
    }

    #[test]
    fn rigid_body_stays_on_sphere() {
        let p = RigidBodyParams::default();
        let path = rigid_body_path(&p, [0.3, 0.5, 0.8], 0.01, 2000).unwrap();
        for c in path.columns() {
            let r = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((r - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn rigid_body_period_detected() {
        let p = RigidBodyParams::default();
        let trajs = gen_rigid_body(&p, &[[0.1, 0.2, 0.97]], 0.01, 20_000).unwrap();
        let t = &trajs[0];
        assert!(t.ncols() < 20_001);
        let gap: f64 = t
            .col(t.ncols() - 1)
            .iter()
            .zip(t.col(0))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(gap < 1e-2, "{gap}");
    }

    #[test]
    fn sphere_samplers_are_unit() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for z in sphere_grid(37)
            .into_iter()
            .chain(sphere_random(37, &mut rng))
        {
            let r: f64 = z.iter().map(|v| v * v).sum();
            assert!((r - 1.0).abs() < 1e-14);
        }
    }
}
