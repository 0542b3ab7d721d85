//! Embedding of sphere states onto tori in odd ambient dimension.

use std::f64::consts::FRAC_PI_2;

use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;

fn check_dim(n: usize) -> Result<()> {
    if n < 3 || n % 2 == 0 {
        return Err(invalid("n", format!("must be odd and >= 3, got {n}")));
    }
    Ok(())
}

/// Maps angles `(theta, phi)` to the torus in `R^n`.
///
/// For `k = 1..=(n-1)/2` the point has the pair
/// `(2 + cos theta) / k * (cos k phi, sin k phi)`; the last component is
/// `sqrt(sum_k k^-2) sin theta`.
pub fn torus_embed(theta: f64, phi: f64, n: usize) -> Result<Vec<f64>> {
    check_dim(n)?;
    let m = (n - 1) / 2;
    let radius = 2.0 + theta.cos();
    let mut x = Vec::with_capacity(n);
    let mut norm2 = 0.0;
    for k in 1..=m {
        let kf = k as f64;
        x.push(radius / kf * (kf * phi).cos());
        x.push(radius / kf * (kf * phi).sin());
        norm2 += 1.0 / (kf * kf);
    }
    x.push(norm2.sqrt() * theta.sin());
    Ok(x)
}

fn check_unit(z: &[f64]) -> Result<()> {
    if z.len() != 3 {
        return Err(Error::Shape(format!(
            "sphere point needs 3 coordinates, got {}",
            z.len()
        )));
    }
    let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !((r - 1.0).abs() <= 1e-8) {
        return Err(Error::Domain(format!(
            "point has norm {r}, not on the unit sphere"
        )));
    }
    Ok(())
}

/// Spherical angles with `theta` in the admissible quarter `[0, pi/2]`.
///
/// `theta = atan2(z2, z1)`, which equals `pi/2` on `z1 = 0`.
pub fn sphere_angles(z: &[f64]) -> Result<(f64, f64)> {
    check_unit(z)?;
    let theta = z[1].atan2(z[0]);
    if !(0.0..=FRAC_PI_2).contains(&theta) {
        return Err(Error::Domain(format!(
            "theta = {theta} lies outside [0, pi/2]"
        )));
    }
    Ok((theta, z[2].clamp(-1.0, 1.0).acos()))
}

/// Torus coordinates of a sphere point in the admissible angle rectangle.
pub fn sphere_to_torus(z: &[f64], n: usize) -> Result<Vec<f64>> {
    check_dim(n)?;
    let (theta, phi) = sphere_angles(z)?;
    torus_embed(theta, phi, n)
}

/// Torus coordinates using the full-circle angle `theta = atan2(z2, z1)` in `(-pi, pi]`.
///
/// Rigid-body orbits cross every sign of `z1 z2`, so trajectory data uses this
/// variant; the map stays continuous along orbits away from the poles.
pub fn sphere_to_torus_full(z: &[f64], n: usize) -> Result<Vec<f64>> {
    check_dim(n)?;
    check_unit(z)?;
    torus_embed(z[1].atan2(z[0]), z[2].clamp(-1.0, 1.0).acos(), n)
}

/// Applies [`sphere_to_torus_full`] to every column.
pub fn embed_trajectory(traj: &Matrix, n: usize) -> Result<Matrix> {
    let cols = traj
        .columns()
        .map(|z| sphere_to_torus_full(z, n))
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_columns(&cols)
}
