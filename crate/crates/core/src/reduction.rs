//! PCA by truncated SVD of centered snapshots.
//!
//! Reduced coordinates are `x~ = U_r^T (x - mean) / sigma_1`, so the leading
//! mode has unit scale while the rest keep their relative size.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcaTarget {
    Rank(usize),
    /// Smallest rank whose cumulative squared singular values reach this fraction.
    Energy(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaReducer {
    mean: Vec<f64>,
    basis: Matrix,
    sigma1: f64,
    energy: f64,
    singular_values: Vec<f64>,
}

impl PcaReducer {
    /// Fits on `snapshots`, one state per column.
    pub fn fit(snapshots: &Matrix, target: PcaTarget) -> Result<Self> {
        let (n, m) = snapshots.shape();
        if m < 2 {
            return Err(invalid("snapshots", "need at least 2 snapshots"));
        }
        if let Some(index) = snapshots.first_non_finite_col() {
            return Err(Error::NonFinite {
                what: "snapshot",
                index,
            });
        }
        let mean: Vec<f64> = (0..n)
            .map(|i| snapshots.row(i).iter().sum::<f64>() / m as f64)
            .collect();
        let centered = faer::Mat::from_fn(n, m, |i, j| snapshots.get(i, j) - mean[i]);
        let svd = centered.thin_svd().map_err(|e| Error::Eigen {
            size: n.max(m),
            reason: format!("SVD did not converge: {e:?}"),
        })?;
        let s = svd.S().column_vector();
        let singular_values: Vec<f64> = (0..s.nrows()).map(|k| s[k]).collect();
        let sigma1 = singular_values.first().copied().unwrap_or(0.0);
        let scale = mean.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        if !(sigma1 > 1e-14 * scale * (m as f64).sqrt()) {
            return Err(Error::Degenerate("snapshots have no variance".into()));
        }
        let total: f64 = singular_values.iter().map(|v| v * v).sum();
        let cumulative: Vec<f64> = singular_values
            .iter()
            .scan(0.0, |acc, v| {
                *acc += v * v;
                Some(*acc / total)
            })
            .collect();
        let max_rank = n.min(m);
        let rank = match target {
            PcaTarget::Rank(r) => {
                if r == 0 || r > max_rank {
                    return Err(invalid(
                        "rank",
                        format!("must be in 1..={max_rank}, got {r}"),
                    ));
                }
                r
            }
            PcaTarget::Energy(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(invalid("energy", format!("must be in (0, 1], got {f}")));
                }
                cumulative
                    .iter()
                    .position(|&c| c >= f - 1e-12)
                    .map_or(max_rank, |k| k + 1)
            }
        };
        let u = svd.U();
        let basis = Matrix::from_fn(n, rank, |i, j| u[(i, j)]);
        Ok(Self {
            mean,
            basis,
            sigma1,
            energy: cumulative[rank - 1],
            singular_values,
        })
    }

    /// Rebuilds a reducer from stored parts.
    pub fn from_parts(
        mean: Vec<f64>,
        basis: Matrix,
        sigma1: f64,
        energy: f64,
        singular_values: Vec<f64>,
    ) -> Result<Self> {
        if basis.nrows() != mean.len() || basis.ncols() == 0 {
            return Err(Error::Shape("basis must be n x r with r >= 1".into()));
        }
        if !(sigma1 > 0.0 && sigma1.is_finite()) {
            return Err(invalid("sigma1", "must be positive"));
        }
        if !(energy > 0.0 && energy <= 1.0 + 1e-12) {
            return Err(invalid("energy", "must be in (0, 1]"));
        }
        Ok(Self {
            mean,
            basis,
            sigma1,
            energy,
            singular_values,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Orthonormal `n x r` basis.
    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn sigma1(&self) -> f64 {
        self.sigma1
    }

    /// Fraction of squared singular values retained.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// All singular values of the centered training matrix, descending.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn reduce(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "state has dimension {}, reducer expects {}",
                x.len(),
                self.dim()
            )));
        }
        let inv = 1.0 / self.sigma1;
        Ok(self
            .basis
            .columns()
            .map(|u| {
                u.iter()
                    .zip(x.iter().zip(&self.mean))
                    .map(|(ui, (xi, mi))| ui * (xi - mi))
                    .sum::<f64>()
                    * inv
            })
            .collect())
    }

    pub fn reconstruct(&self, xt: &[f64]) -> Result<Vec<f64>> {
        if xt.len() != self.rank() {
            return Err(Error::Shape(format!(
                "reduced state has dimension {}, rank is {}",
                xt.len(),
                self.rank()
            )));
        }
        let mut x = self.mean.clone();
        for (u, c) in self.basis.columns().zip(xt) {
            let a = self.sigma1 * c;
            x.iter_mut().zip(u).for_each(|(xi, ui)| *xi += a * ui);
        }
        Ok(x)
    }

    pub fn reduce_all(&self, states: &Matrix) -> Result<Matrix> {
        let cols = states
            .columns()
            .map(|c| self.reduce(c))
            .collect::<Result<Vec<_>>>()?;
        if cols.is_empty() {
            return Ok(Matrix::zeros(self.rank(), 0));
        }
        Matrix::from_columns(&cols)
    }

    pub fn reconstruct_all(&self, reduced: &Matrix) -> Result<Matrix> {
        let cols = reduced
            .columns()
            .map(|c| self.reconstruct(c))
            .collect::<Result<Vec<_>>>()?;
        if cols.is_empty() {
            return Ok(Matrix::zeros(self.dim(), 0));
        }
        Matrix::from_columns(&cols)
    }
}
