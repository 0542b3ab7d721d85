//! Correlation-sum dimension scan and reference hyperparameters.

use faer::Side;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{check_points, rbf_gram, SqDistances};
use crate::matrix::Matrix;

/// Default bandwidth grid: 64 log-spaced values on `[1e-6, 1e2]`.
pub fn default_eta_grid() -> Vec<f64> {
    log_grid(1e-6, 1e2, 64)
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionCurve {
    pub etas: Vec<f64>,
    /// `S(eta)`, the mean of `exp(-d^2 / (L^2 eta))` over all ordered pairs.
    pub sums: Vec<f64>,
    /// `2 dlog S / dlog eta`.
    pub dims: Vec<f64>,
    pub max_dist: f64,
}

/// Scans the correlation sum over `etas`.
pub fn dimension_scan(points: &Matrix, etas: &[f64]) -> Result<DimensionCurve> {
    let dists = SqDistances::new(points)?;
    scan_with_distances(&dists, etas)
}

pub fn scan_with_distances(dists: &SqDistances, etas: &[f64]) -> Result<DimensionCurve> {
    let n = dists.len();
    if n < 2 {
        return Err(invalid("points", "need at least 2 points"));
    }
    if etas.len() < 3 {
        return Err(invalid("etas", "need at least 3 bandwidths"));
    }
    if etas.iter().any(|e| !(*e > 0.0 && e.is_finite())) || etas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("etas", "must be positive and strictly increasing"));
    }
    let l2 = dists.max();
    if l2 == 0.0 {
        return Err(Error::Degenerate("all points are identical".into()));
    }
    // strict upper triangle, scaled by L^2
    let pairs: Vec<f64> = (1..n)
        .flat_map(|j| (0..j).map(move |i| (i, j)))
        .map(|(i, j)| dists.get(i, j) / l2)
        .collect();
    let n2 = (n * n) as f64;
    let sums: Vec<f64> = etas
        .par_iter()
        .map(|&eta| {
            let inv = 1.0 / eta;
            let off: f64 = pairs.iter().map(|r| (-r * inv).exp()).sum();
            (n as f64 + 2.0 * off) / n2
        })
        .collect();
    let log_s: Vec<f64> = sums.iter().map(|s| s.ln()).collect();
    let log_e: Vec<f64> = etas.iter().map(|e| e.ln()).collect();
    let m = etas.len();
    let dims = (0..m)
        .map(|i| {
            let (a, b) = match i {
                0 => (0, 1),
                _ if i == m - 1 => (m - 2, m - 1),
                _ => (i - 1, i + 1),
            };
            2.0 * (log_s[b] - log_s[a]) / (log_e[b] - log_e[a])
        })
        .collect();
    Ok(DimensionCurve {
        etas: etas.to_vec(),
        sums,
        dims,
        max_dist: l2.sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeuristicMode {
    Manifold,
    Chaotic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeuristicResult {
    pub eta_star: f64,
    pub d_star: f64,
    pub eps_star: f64,
    #[serde(rename = "L")]
    pub max_dist: f64,
    pub lam_star: f64,
}

/// Reference lengthscale and ridge parameter from the data geometry.
pub fn heuristic_reference(
    points: &Matrix,
    mode: HeuristicMode,
    ambient_n: usize,
) -> Result<HeuristicResult> {
    check_points(points, "points")?;
    let dists = SqDistances::new(points)?;
    heuristic_with_distances(&dists, mode, ambient_n, &default_eta_grid())
}

pub fn heuristic_with_distances(
    dists: &SqDistances,
    mode: HeuristicMode,
    ambient_n: usize,
    etas: &[f64],
) -> Result<HeuristicResult> {
    if ambient_n == 0 {
        return Err(invalid("ambient_n", "must be positive"));
    }
    let curve = scan_with_distances(dists, etas)?;
    if curve.dims.iter().any(|d| !d.is_finite()) {
        return Err(Error::Degenerate("dimension curve is not finite".into()));
    }
    let best = curve.dims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let hits: Vec<usize> = (0..curve.dims.len())
        .filter(|&i| curve.dims[i] == best)
        .collect();
    if hits.len() > 1 {
        log::warn!(
            "dimension estimate peaks at {} bandwidths; using the smallest",
            hits.len()
        );
    }
    let idx = hits[0];
    let eta_star = curve.etas[idx];
    let d_star = best;
    if !(d_star > 0.0) {
        return Err(Error::Degenerate(format!(
            "dimension estimate {d_star} is not positive"
        )));
    }
    let l2 = curve.max_dist * curve.max_dist;
    let eps_star = match mode {
        HeuristicMode::Manifold => {
            5.0 / (2.0 * ambient_n as f64) * (l2 * eta_star).powf(1.0 / d_star)
        }
        HeuristicMode::Chaotic => 250.0 * l2 * eta_star,
    };
    let lam_star = min_eigenvalue(&rbf_gram(dists, eps_star))?.abs();
    log::info!(
        "heuristic: eta* = {eta_star:.3e}, d* = {d_star:.3}, eps* = {eps_star:.3e}, lambda* = {lam_star:.3e}"
    );
    Ok(HeuristicResult {
        eta_star,
        d_star,
        eps_star,
        max_dist: curve.max_dist,
        lam_star,
    })
}

/// Smallest eigenvalue of a symmetric matrix by full decomposition.
pub fn min_eigenvalue(sym: &Matrix) -> Result<f64> {
    let n = sym.ncols();
    let vals = sym
        .to_faer()
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Eigen {
            size: n,
            reason: format!("{e:?}"),
        })?;
    vals.into_iter()
        .reduce(f64::min)
        .ok_or_else(|| invalid("matrix", "empty"))
}

/// Hyperparameter box `[eps_lo, eps_hi] x [lam_lo, lam_hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchRange {
    pub eps_lo: f64,
    pub eps_hi: f64,
    pub lam_lo: f64,
    pub lam_hi: f64,
}

impl SearchRange {
    pub fn new(eps_lo: f64, eps_hi: f64, lam_lo: f64, lam_hi: f64) -> Result<Self> {
        let r = Self {
            eps_lo,
            eps_hi,
            lam_lo,
            lam_hi,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !(pos(self.eps_lo) && pos(self.eps_hi) && self.eps_lo < self.eps_hi) {
            return Err(invalid(
                "range",
                format!("bad eps interval [{}, {}]", self.eps_lo, self.eps_hi),
            ));
        }
        if !(pos(self.lam_lo) && pos(self.lam_hi) && self.lam_lo <= self.lam_hi) {
            return Err(invalid(
                "range",
                format!("bad lambda interval [{}, {}]", self.lam_lo, self.lam_hi),
            ));
        }
        Ok(())
    }

    pub fn contains(&self, eps: f64, lam: f64) -> bool {
        (self.eps_lo..=self.eps_hi).contains(&eps) && (self.lam_lo..=self.lam_hi).contains(&lam)
    }
}

/// Box around the reference values: `eps* x [min(d, 1/d), max(d, 1/d)]` and `[lam*, lam* / d_lam]`.
pub fn make_range(reference: &HeuristicResult, d_eps: f64, d_lam: f64) -> Result<SearchRange> {
    if !(d_eps > 0.0 && d_eps.is_finite() && d_eps != 1.0) {
        return Err(invalid(
            "d_eps",
            format!("must be positive and not 1, got {d_eps}"),
        ));
    }
    if !(d_lam > 0.0 && d_lam <= 1.0) {
        return Err(invalid("d_lam", format!("must be in (0, 1], got {d_lam}")));
    }
    let lo = d_eps.min(1.0 / d_eps);
    let mut lam = reference.lam_star;
    if lam == 0.0 {
        log::warn!("reference ridge is zero; using machine epsilon instead");
        lam = f64::EPSILON;
    }
    SearchRange::new(
        reference.eps_star * lo,
        reference.eps_star / lo,
        lam,
        lam / d_lam,
    )
}
