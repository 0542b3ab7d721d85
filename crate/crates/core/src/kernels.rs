//! Gaussian RBF and diffusion-maps (DM) kernels.
//!
//! The DM kernel is built from the RBF kernel `k~(x, y) = exp(-|x - y|^2 / 4 eps)`
//! by two empirical density normalizations over the anchor set `X`:
//!
//! ```text
//! q(x)     = 1/N sum_j k~(x, x_j)
//! k^(x, y) = k~(x, y) / (q(x) q(y))
//! q^(x)    = 1/N sum_j k^(x, x_j)
//! k(x, y)  = q^(x)^-1/2 k^(x, y) q^(y)^-1/2
//! ```
//!
//! `k` is symmetric and diagonally similar to the Markov matrix
//! `k^(x_i, x_j) / q^(x_i)`, whose rows average to one.
//!
//! Query points off the anchor set get fresh `q(z)` and `q^(z)` computed
//! against the anchors; the anchors' own densities stay frozen.

use faer::Side;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;

/// Densities below this are treated as underflow.
pub const DENSITY_FLOOR: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Rbf,
    Dm,
}

impl KernelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Rbf => "rbf",
            KernelKind::Dm => "dm",
        }
    }
}

impl std::fmt::Display for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rbf" => Ok(KernelKind::Rbf),
            "dm" => Ok(KernelKind::Dm),
            other => Err(invalid("kernel", format!("unknown kernel `{other}`"))),
        }
    }
}

#[inline]
pub fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
pub(crate) fn rbf_from_sq(d2: f64, eps: f64) -> f64 {
    (-d2 / (4.0 * eps)).exp()
}

pub(crate) fn check_eps(eps: f64) -> Result<()> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(invalid("eps", format!("must be finite and > 0, got {eps}")));
    }
    Ok(())
}

pub(crate) fn check_points(points: &Matrix, what: &'static str) -> Result<()> {
    if let Some(index) = points.first_non_finite_col() {
        return Err(Error::NonFinite { what, index });
    }
    Ok(())
}

/// Gaussian RBF kernel `exp(-|x - y|^2 / (4 eps))`.
pub fn rbf_eval(x: &[f64], y: &[f64], eps: f64) -> Result<f64> {
    check_eps(eps)?;
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "points have dimensions {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(rbf_from_sq(sq_dist(x, y), eps))
}

/// Pairwise squared distances of a point set, stored as a full symmetric matrix.
///
/// Distances do not depend on the lengthscale, so a random search computes
/// them once per training set and reuses them for every trial.
#[derive(Clone, Debug)]
pub struct SqDistances {
    d2: Matrix,
}

impl SqDistances {
    pub fn new(points: &Matrix) -> Result<Self> {
        check_points(points, "points")?;
        let n = points.ncols();
        Ok(Self {
            d2: symmetric_from_fn(n, |i, j| sq_dist(points.col(i), points.col(j))),
        })
    }

    pub fn len(&self) -> usize {
        self.d2.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d2.get(i, j)
    }

    pub fn max(&self) -> f64 {
        self.d2.as_slice().iter().copied().fold(0.0, f64::max)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.d2
    }
}

/// Fills the upper triangle (including diagonal) and mirrors it.
fn symmetric_from_fn(n: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    // column j holds entries (i, j) for i <= j
    m.as_mut_slice()
        .par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(j, col)| {
            for (i, v) in col.iter_mut().enumerate().take(j + 1) {
                *v = f(i, j);
            }
        });
    mirror_upper(&mut m);
    m
}

fn mirror_upper(m: &mut Matrix) {
    let n = m.ncols();
    for j in 0..n {
        for i in 0..j {
            let v = m.get(i, j);
            m.set(j, i, v);
        }
    }
}

/// Gram matrix of the requested kernel over `points` (one point per column).
pub fn gram(kind: KernelKind, points: &Matrix, eps: f64) -> Result<Matrix> {
    check_eps(eps)?;
    if points.ncols() < 2 {
        return Err(invalid("points", "a Gram matrix needs at least 2 points"));
    }
    let dists = SqDistances::new(points)?;
    match kind {
        KernelKind::Rbf => Ok(rbf_gram(&dists, eps)),
        KernelKind::Dm => Ok(DmKernelModel::fit_with_distances(points, &dists, eps)?.1),
    }
}

pub fn rbf_gram(dists: &SqDistances, eps: f64) -> Matrix {
    symmetric_from_fn(dists.len(), |i, j| rbf_from_sq(dists.get(i, j), eps))
}

/// Anchors plus cached normalization densities for out-of-sample DM evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct DmKernelModel {
    anchors: Matrix,
    eps: f64,
    q: Vec<f64>,
    qhat: Vec<f64>,
}

impl DmKernelModel {
    pub fn fit(points: &Matrix, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        if points.ncols() < 2 {
            return Err(invalid("points", "DM kernel needs at least 2 anchors"));
        }
        let dists = SqDistances::new(points)?;
        Ok(Self::fit_with_distances(points, &dists, eps)?.0)
    }

    /// Fits the densities and returns the symmetric DM Gram matrix alongside.
    pub fn fit_with_distances(
        points: &Matrix,
        dists: &SqDistances,
        eps: f64,
    ) -> Result<(Self, Matrix)> {
        check_eps(eps)?;
        let n = points.ncols();
        if dists.len() != n {
            return Err(Error::Shape(format!(
                "distance table covers {} points, anchors have {n}",
                dists.len()
            )));
        }
        let inv_n = 1.0 / n as f64;
        let mut k = rbf_gram(dists, eps);

        let q: Vec<f64> = k.columns().map(|c| c.iter().sum::<f64>() * inv_n).collect();
        check_densities(&q, eps)?;
        for j in 0..n {
            for i in 0..=j {
                let v = k.get(i, j) / (q[i] * q[j]);
                k.set(i, j, v);
            }
        }
        mirror_upper(&mut k);

        let qhat: Vec<f64> = k.columns().map(|c| c.iter().sum::<f64>() * inv_n).collect();
        check_densities(&qhat, eps)?;
        for j in 0..n {
            for i in 0..=j {
                let v = k.get(i, j) / (qhat[i] * qhat[j]).sqrt();
                k.set(i, j, v);
            }
        }
        mirror_upper(&mut k);

        Ok((
            Self {
                anchors: points.clone(),
                eps,
                q,
                qhat,
            },
            k,
        ))
    }

    /// Reassembles a model from stored parts, validating the invariants.
    pub fn from_parts(anchors: Matrix, eps: f64, q: Vec<f64>, qhat: Vec<f64>) -> Result<Self> {
        check_eps(eps)?;
        if q.len() != anchors.ncols() || qhat.len() != anchors.ncols() {
            return Err(Error::Shape(
                "density vectors must match anchor count".into(),
            ));
        }
        check_densities(&q, eps)?;
        check_densities(&qhat, eps)?;
        Ok(Self {
            anchors,
            eps,
            q,
            qhat,
        })
    }

    pub fn anchors(&self) -> &Matrix {
        &self.anchors
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn qhat(&self) -> &[f64] {
        &self.qhat
    }

    pub fn len(&self) -> usize {
        self.anchors.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Symmetric DM Gram matrix over the anchors.
    pub fn gram(&self) -> Matrix {
        let n = self.len();
        symmetric_from_fn(n, |i, j| {
            let kt = rbf_from_sq(sq_dist(self.anchors.col(i), self.anchors.col(j)), self.eps);
            kt / (self.q[i] * self.q[j]) / (self.qhat[i] * self.qhat[j]).sqrt()
        })
    }

    /// Markov transition kernel `k^(x_i, x_j) / q^(x_i)` on the anchors.
    pub fn transition(&self, i: usize, j: usize) -> f64 {
        let kt = rbf_from_sq(sq_dist(self.anchors.col(i), self.anchors.col(j)), self.eps);
        kt / (self.q[i] * self.q[j]) / self.qhat[i]
    }

    /// Densities `(q(z), q^(z))` of a query point and its `k~(z, x_j)` row.
    fn query_densities(&self, z: &[f64], ktilde: &mut [f64]) -> Result<(f64, f64)> {
        let n = self.len();
        let inv_n = 1.0 / n as f64;
        let mut qz = 0.0;
        for (j, kt) in ktilde.iter_mut().enumerate() {
            *kt = rbf_from_sq(sq_dist(z, self.anchors.col(j)), self.eps);
            qz += *kt;
        }
        qz *= inv_n;
        if !(qz >= DENSITY_FLOOR) {
            return Err(Error::IllConditionedQuery { value: qz });
        }
        let mut qhz = 0.0;
        for (kt, qj) in ktilde.iter().zip(&self.q) {
            qhz += kt / (qz * qj);
        }
        qhz *= inv_n;
        if !(qhz >= DENSITY_FLOOR) {
            return Err(Error::IllConditionedQuery { value: qhz });
        }
        Ok((qz, qhz))
    }

    /// Cross-kernel block `k(z_i, x_j)` for queries `Z` (one per column): an M x N matrix.
    pub fn cross(&self, queries: &Matrix) -> Result<Matrix> {
        if queries.nrows() != self.anchors.nrows() {
            return Err(Error::Shape(format!(
                "query dimension {} does not match anchor dimension {}",
                queries.nrows(),
                self.anchors.nrows()
            )));
        }
        check_points(queries, "queries")?;
        let (m, n) = (queries.ncols(), self.len());
        let mut out = Matrix::zeros(m, n);
        let mut row = vec![0.0; n];
        for i in 0..m {
            let (qz, qhz) = self.query_densities(queries.col(i), &mut row)?;
            for j in 0..n {
                let khat = row[j] / (qz * self.q[j]);
                out.set(i, j, khat / (qhz * self.qhat[j]).sqrt());
            }
        }
        Ok(out)
    }

    /// Top-`m` eigenpairs of the symmetric DM Gram matrix, sorted by descending eigenvalue.
    ///
    /// The eigenvectors are the `q^^(1/2)`-rescaled eigenvectors of the Markov
    /// matrix; their entries serve as diffusion coordinates of the anchors.
    pub fn eigen(&self, m: usize) -> Result<EigenPairs> {
        let n = self.len();
        if m == 0 || m > n {
            return Err(invalid("m", format!("must be in 1..={n}, got {m}")));
        }
        let g = self.gram().to_faer();
        let evd = g
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Eigen {
                size: n,
                reason: format!("{e:?} (min q^ = {:e})", min(&self.qhat)),
            })?;
        let s = evd.S().column_vector();
        let u = evd.U();
        let mut values = Vec::with_capacity(m);
        let mut vectors = Vec::with_capacity(m);
        for k in (n - m..n).rev() {
            values.push(s[k]);
            vectors.push((0..n).map(|i| u[(i, k)]).collect());
        }
        Ok(EigenPairs { values, vectors })
    }
}

fn min(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn check_densities(d: &[f64], eps: f64) -> Result<()> {
    for (index, &value) in d.iter().enumerate() {
        if !(value >= DENSITY_FLOOR && value.is_finite()) {
            return Err(Error::IllConditionedBandwidth { index, value, eps });
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> Matrix {
        Matrix::from_col_major(1, xs.len(), xs.to_vec()).unwrap()
    }

    #[test]
    fn rbf_hand_values() {
        assert_eq!(rbf_eval(&[0.3, -1.0], &[0.3, -1.0], 1.0).unwrap(), 1.0);
        let v = rbf_eval(&[0.0, 0.0], &[2.0, 0.0], 1.0).unwrap();
        assert!((v - 0.367_879_441_171_442_3).abs() < 1e-15);
        let v = rbf_eval(&[1.0, 2.0, 3.0], &[4.0, 6.0, 3.0], 2.5).unwrap();
        assert!((v - 0.082_084_998_623_898_8).abs() < 1e-15);
    }

    #[test]
    fn rbf_rejects_bad_input() {
        assert!(matches!(
            rbf_eval(&[0.0], &[1.0], 0.0),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            rbf_eval(&[0.0], &[1.0], -2.0),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            rbf_eval(&[0.0], &[1.0, 2.0], 1.0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn rbf_gram_of_duplicates_is_all_ones() {
        let g = gram(KernelKind::Rbf, &line(&[0.7, 0.7]), 0.1).unwrap();
        assert_eq!(g.as_slice(), &[1.0; 4]);
    }

    #[test]
    fn gram_rejects_non_finite() {
        let err = gram(KernelKind::Rbf, &line(&[0.0, f64::NAN, 1.0]), 1.0).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1, .. }));
    }

    #[test]
    fn dm_flat_limit() {
        let x = Matrix::from_columns(&[[0.0, 1.0], [2.0, -1.0], [0.5, 0.5]]).unwrap();
        let g = gram(KernelKind::Dm, &x, 1e12).unwrap();
        for &v in g.as_slice() {
            assert!((v - 1.0).abs() < 1e-10, "{v}");
        }
        let model = DmKernelModel::fit(&x, 1e12).unwrap();
        let eig = model.eigen(3).unwrap();
        assert!((eig.values[0] - 3.0).abs() < 1e-9);
        assert!(eig.values[1].abs() < 1e-9 && eig.values[2].abs() < 1e-9);
    }

    #[test]
    fn dm_identical_points_have_unit_density() {
        let model = DmKernelModel::fit(&line(&[2.0, 2.0, 2.0, 2.0]), 0.01).unwrap();
        assert!(model.q().iter().all(|&q| q == 1.0));
    }

    // Step-by-step normalization chain on X = {0, 1, 3}, eps = 0.5.
    const Q3: [f64; 3] = [
        0.539_213_218_750_291_9,
        0.580_621_980_983_082,
        0.382_148_093_258_285,
    ];
    const QHAT3: [f64; 3] = [
        1.810_196_780_582_221_7,
        1.837_844_278_185_612_6,
        2.503_807_290_189_972,
    ];
    const GRAM3: [[f64; 3]; 3] = [
        [
            1.899_998_032_174_395,
            1.062_139_367_998_776_5,
            0.025_323_239_369_871_013,
        ],
        [
            1.062_139_367_998_776_5,
            1.614_003_020_397_010_4,
            0.284_335_483_709_131,
        ],
        [
            0.025_323_239_369_871_013,
            0.284_335_483_709_131,
            2.734_863_823_009_882,
        ],
    ];

    #[test]
    fn dm_three_point_chain() {
        let x = line(&[0.0, 1.0, 3.0]);
        let model = DmKernelModel::fit(&x, 0.5).unwrap();
        for j in 0..3 {
            assert!((model.q()[j] - Q3[j]).abs() < 1e-14);
            assert!((model.qhat()[j] - QHAT3[j]).abs() < 1e-13);
        }
        let g = gram(KernelKind::Dm, &x, 0.5).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((g.get(i, j) - GRAM3[i][j]).abs() < 1e-13);
            }
        }
        // first density written out term by term
        let q0 = (1.0 + (-0.5f64).exp() + (-4.5f64).exp()) / 3.0;
        assert!((model.q()[0] - q0).abs() < 1e-15);
    }

    #[test]
    fn dm_three_point_query_and_eigen() {
        let model = DmKernelModel::fit(&line(&[0.0, 1.0, 3.0]), 0.5).unwrap();
        let c = model.cross(&line(&[0.5])).unwrap();
        let expect = [
            1.500_115_576_261_022_3,
            1.382_611_982_803_173_3,
            0.089_605_063_601_872_54,
        ];
        for j in 0..3 {
            assert!((c.get(0, j) - expect[j]).abs() < 1e-13);
        }
        let eig = model.eigen(3).unwrap();
        let expect = [3.0, 2.582_600_704_389_685_5, 0.666_264_171_191_601_3];
        for (v, e) in eig.values.iter().zip(expect) {
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn dm_cross_on_anchors_matches_gram() {
        let x = Matrix::from_fn(2, 12, |i, j| ((i * 7 + j * 3) as f64 * 0.37).sin());
        let model = DmKernelModel::fit(&x, 0.2).unwrap();
        let c = model.cross(&x).unwrap();
        assert!(c.max_abs_diff(&model.gram()) < 1e-12);
        let dup = Matrix::from_columns(&[x.col(4), x.col(4), x.col(4)]).unwrap();
        let c = model.cross(&dup).unwrap();
        assert_eq!(c.row(0), c.row(1));
        assert_eq!(c.row(0), c.row(2));
    }

    #[test]
    fn dm_underflow_is_reported() {
        let model = DmKernelModel::fit(&line(&[0.0, 1.0]), 1e-3).unwrap();
        let err = model.cross(&line(&[1e3])).unwrap_err();
        assert!(matches!(err, Error::IllConditionedQuery { .. }));
    }

    #[test]
    fn dm_gram_is_bitwise_symmetric() {
        let x = Matrix::from_fn(3, 40, |i, j| (i + 1) as f64 * (j as f64 * 0.913).cos());
        let g = gram(KernelKind::Dm, &x, 0.3).unwrap();
        for i in 0..40 {
            assert!(g.get(i, i) > 0.0);
            for j in 0..40 {
                assert_eq!(g.get(i, j).to_bits(), g.get(j, i).to_bits());
            }
        }
    }
}
