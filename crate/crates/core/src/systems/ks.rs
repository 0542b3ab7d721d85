//! Kuramoto-Sivashinsky equation `u_t + u u_s + u_ss + nu u_ssss = 0` on a periodic domain.
//!
//! Pseudospectral ETDRK4: the linear part `k^2 - nu k^4` is integrated
//! exactly, the nonlinear term `-(1/2) (u^2)_s` is evaluated in physical space
//! with 2/3-rule dealiasing, and the ETD coefficients are averaged over a
//! complex contour to avoid cancellation near zero.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;

const CONTOUR_POINTS: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsParams {
    /// Domain length.
    pub length: f64,
    pub nu: f64,
    /// Number of grid points; a power of two.
    pub grid: usize,
    pub dt_solver: f64,
}

impl KsParams {
    pub fn chaotic() -> Self {
        Self {
            length: 22.0,
            nu: 1.0,
            grid: 64,
            dt_solver: 0.01,
        }
    }

    pub fn traveling() -> Self {
        Self {
            length: 2.0 * PI,
            nu: 4.0 / 87.0,
            grid: 64,
            dt_solver: 0.001,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(invalid("length", "must be positive"));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(invalid("nu", "must be positive"));
        }
        if self.grid < 4 || !self.grid.is_power_of_two() {
            return Err(invalid(
                "grid",
                format!("must be a power of two >= 4, got {}", self.grid),
            ));
        }
        if !(self.dt_solver > 0.0 && self.dt_solver.is_finite()) {
            return Err(invalid("dt_solver", "must be positive"));
        }
        Ok(())
    }

    /// Grid coordinates `s_j = j L / grid`.
    pub fn grid_points(&self) -> Vec<f64> {
        (0..self.grid)
            .map(|j| self.length * j as f64 / self.grid as f64)
            .collect()
    }
}

/// Integrator state: ETD coefficients, FFT plans and scratch buffers.
pub struct KsSolver {
    params: KsParams,
    e: Vec<f64>,
    e2: Vec<f64>,
    q: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    f3: Vec<f64>,
    /// `-i k / 2`, zeroed on dealiased modes.
    g: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
    stage: [Vec<Complex64>; 6],
}

impl KsSolver {
    pub fn new(params: KsParams) -> Result<Self> {
        Self::with_dealiasing(params, true)
    }

    pub fn with_dealiasing(params: KsParams, dealias: bool) -> Result<Self> {
        params.validate()?;
        let n = params.grid;
        let h = params.dt_solver;
        let wavenumber = |j: usize| -> i64 {
            if j < n / 2 {
                j as i64
            } else if j == n / 2 {
                0
            } else {
                j as i64 - n as i64
            }
        };
        let scale = 2.0 * PI / params.length;
        let mut e = vec![0.0; n];
        let mut e2 = vec![0.0; n];
        let mut q = vec![0.0; n];
        let mut f1 = vec![0.0; n];
        let mut f2 = vec![0.0; n];
        let mut f3 = vec![0.0; n];
        let mut g = vec![Complex64::new(0.0, 0.0); n];
        let roots: Vec<Complex64> = (1..=CONTOUR_POINTS)
            .map(|j| Complex64::from_polar(1.0, PI * (j as f64 - 0.5) / CONTOUR_POINTS as f64))
            .collect();
        let mp = CONTOUR_POINTS as f64;
        for j in 0..n {
            let m = wavenumber(j);
            let k = scale * m as f64;
            let lin = k * k - params.nu * k.powi(4);
            e[j] = (h * lin).exp();
            e2[j] = (h * lin / 2.0).exp();
            let (mut sq, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
            for r in &roots {
                let lr = Complex64::new(h * lin, 0.0) + r;
                let ex = lr.exp();
                let lr3 = lr * lr * lr;
                sq += (((lr / 2.0).exp() - 1.0) / lr).re;
                s1 += ((-4.0 - lr + ex * (4.0 - 3.0 * lr + lr * lr)) / lr3).re;
                s2 += ((2.0 + lr + ex * (lr - 2.0)) / lr3).re;
                s3 += ((-4.0 - 3.0 * lr - lr * lr + ex * (4.0 - lr)) / lr3).re;
            }
            q[j] = h * sq / mp;
            f1[j] = h * s1 / mp;
            f2[j] = h * s2 / mp;
            f3[j] = h * s3 / mp;
            let keep = !dealias || (m.unsigned_abs() as f64) <= n as f64 / 3.0;
            if keep {
                g[j] = Complex64::new(0.0, -0.5 * k);
            }
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scratch_len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        let zero = vec![Complex64::new(0.0, 0.0); n];
        Ok(Self {
            params,
            e,
            e2,
            q,
            f1,
            f2,
            f3,
            g,
            fwd,
            inv,
            buf: zero.clone(),
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            stage: std::array::from_fn(|_| zero.clone()),
        })
    }

    pub fn params(&self) -> &KsParams {
        &self.params
    }

    /// Spectrum of a physical-space profile.
    pub fn to_spectral(&mut self, u: &[f64]) -> Vec<Complex64> {
        let mut v: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fwd.process_with_scratch(&mut v, &mut self.scratch);
        hermitian(&mut v);
        v
    }

    /// Physical-space profile of a spectrum.
    pub fn to_physical(&mut self, v: &[Complex64], u: &mut [f64]) {
        self.buf.copy_from_slice(v);
        self.inv
            .process_with_scratch(&mut self.buf, &mut self.scratch);
        let inv_n = 1.0 / self.params.grid as f64;
        for (ui, b) in u.iter_mut().zip(&self.buf) {
            *ui = b.re * inv_n;
        }
    }

    /// `g * FFT(u^2)` where `u` is the physical profile of `v`.
    fn nonlinear(&mut self, v: &[Complex64], out: &mut [Complex64]) {
        let inv_n = 1.0 / self.params.grid as f64;
        self.buf.copy_from_slice(v);
        self.inv
            .process_with_scratch(&mut self.buf, &mut self.scratch);
        for b in self.buf.iter_mut() {
            let u = b.re * inv_n;
            *b = Complex64::new(u * u, 0.0);
        }
        self.fwd
            .process_with_scratch(&mut self.buf, &mut self.scratch);
        for ((o, b), g) in out.iter_mut().zip(&self.buf).zip(&self.g) {
            *o = b * g;
        }
    }

    /// Advances the spectrum by one solver step.
    pub fn step(&mut self, v: &mut [Complex64]) {
        let n = self.params.grid;
        let mut st = std::mem::take(&mut self.stage);
        let [nv, a, na, b, nb, nc] = &mut st;
        self.nonlinear(v, nv);
        for j in 0..n {
            a[j] = v[j] * self.e2[j] + nv[j] * self.q[j];
        }
        self.nonlinear(a, na);
        for j in 0..n {
            b[j] = v[j] * self.e2[j] + na[j] * self.q[j];
        }
        self.nonlinear(b, nb);
        // reuse `a` for the third stage
        for j in 0..n {
            a[j] = a[j] * self.e2[j] + (nb[j] * 2.0 - nv[j]) * self.q[j];
        }
        self.nonlinear(a, nc);
        for j in 0..n {
            v[j] = v[j] * self.e[j]
                + nv[j] * self.f1[j]
                + (na[j] + nb[j]) * (2.0 * self.f2[j])
                + nc[j] * self.f3[j];
        }
        hermitian(v);
        self.stage = st;
    }
}

/// Projects a spectrum onto real profiles with a zero Nyquist mode.
///
/// Roundoff otherwise leaves an imaginary profile that evolves under the
/// linear operator alone and grows at the unstable rates.
fn hermitian(v: &mut [Complex64]) {
    let n = v.len();
    v[0].im = 0.0;
    v[n / 2] = Complex64::new(0.0, 0.0);
    for j in 1..n / 2 {
        let avg = (v[j] + v[n - j].conj()) * 0.5;
        v[j] = avg;
        v[n - j] = avg.conj();
    }
}

/// Integrates `steps` solver steps from `ic` and samples the profile.
///
/// Kept samples are the raw states with indices `discard + j * downsample`
/// for `j = 0, 1, ...` up to `steps`; column `j` is the profile at time
/// `(discard + j * downsample) * dt_solver`.
pub fn gen_ks(
    ic: &[f64],
    params: &KsParams,
    steps: usize,
    downsample: usize,
    discard: usize,
) -> Result<Matrix> {
    params.validate()?;
    if ic.len() != params.grid {
        return Err(Error::Shape(format!(
            "initial profile has {} points, grid has {}",
            ic.len(),
            params.grid
        )));
    }
    if let Some(index) = ic.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "initial profile",
            index,
        });
    }
    if downsample == 0 {
        return Err(invalid("downsample", "must be at least 1"));
    }
    if discard > steps {
        return Err(invalid(
            "discard",
            format!("{discard} exceeds the {steps} steps"),
        ));
    }
    let mut solver = KsSolver::new(*params)?;
    let n = params.grid;
    let kept = (steps - discard) / downsample + 1;
    let mut data = Vec::with_capacity(n * kept);
    let mut v = solver.to_spectral(ic);
    let mut u = ic.to_vec();
    let keep = |i: usize| i >= discard && (i - discard) % downsample == 0;
    if keep(0) {
        data.extend_from_slice(&u);
    }
    for i in 1..=steps {
        solver.step(&mut v);
        if v.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::BlowUp { step: i });
        }
        if keep(i) {
            solver.to_physical(&v, &mut u);
            data.extend_from_slice(&u);
        }
    }
    Matrix::from_col_major(n, kept, data)
}

/// `sin(2 pi m s / L)` sampled on the grid.
pub fn sine_profile(params: &KsParams, m: f64) -> Vec<f64> {
    params
        .grid_points()
        .into_iter()
        .map(|s| (2.0 * PI * m * s / params.length).sin())
        .collect()
}
