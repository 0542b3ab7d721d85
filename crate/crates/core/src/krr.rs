//! Kernel ridge regression of one-step solution operators.
//!
//! A model predicts `x(t + dt)` either directly or as `x(t)` plus a learned
//! increment. All `n` output components share one Gram matrix, so a single
//! factorization of `K + lambda I` serves every component.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{
    check_eps, check_points, rbf_from_sq, rbf_gram, sq_dist, DmKernelModel, KernelKind,
    SqDistances, DENSITY_FLOOR,
};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorForm {
    Direct,
    #[serde(alias = "skip")]
    SkipConnection,
}

impl EstimatorForm {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorForm::Direct => "direct",
            EstimatorForm::SkipConnection => "skip_connection",
        }
    }
}

/// Input/output training matrices, one pair per column.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPairs {
    pub inputs: Matrix,
    pub targets: Matrix,
    pub form: EstimatorForm,
    pub dt: f64,
}

impl TrainingPairs {
    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.inputs.nrows()
    }

    /// Keeps only the listed pair columns, in the given order.
    pub fn select(&self, idx: &[usize]) -> TrainingPairs {
        TrainingPairs {
            inputs: self.inputs.select_columns(idx),
            targets: self.targets.select_columns(idx),
            form: self.form,
            dt: self.dt,
        }
    }
}

/// Concatenates shifted pairs from each trajectory (one state per column).
///
/// Trajectory `j` of length `T_j` contributes `T_j - 1` pairs; the final
/// state of a trajectory never appears as an input.
pub fn build_pairs(trajectories: &[Matrix], form: EstimatorForm, dt: f64) -> Result<TrainingPairs> {
    let first = trajectories
        .first()
        .ok_or_else(|| invalid("trajectories", "empty trajectory list"))?;
    let n = first.nrows();
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut count = 0;
    for (k, traj) in trajectories.iter().enumerate() {
        if traj.nrows() != n {
            return Err(Error::Shape(format!(
                "trajectory {k} has dimension {}, expected {n}",
                traj.nrows()
            )));
        }
        if traj.ncols() < 2 {
            return Err(invalid(
                "trajectories",
                format!("trajectory {k} has fewer than 2 states"),
            ));
        }
        for i in 0..traj.ncols() - 1 {
            let (cur, next) = (traj.col(i), traj.col(i + 1));
            inputs.extend_from_slice(cur);
            match form {
                EstimatorForm::Direct => targets.extend_from_slice(next),
                EstimatorForm::SkipConnection => {
                    targets.extend(next.iter().zip(cur).map(|(b, a)| b - a))
                }
            }
            count += 1;
        }
    }
    Ok(TrainingPairs {
        inputs: Matrix::from_col_major(n, count, inputs)?,
        targets: Matrix::from_col_major(n, count, targets)?,
        form,
        dt,
    })
}

/// Rollouts stop once the state norm exceeds this multiple of the largest anchor norm.
pub const DEFAULT_DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
enum Evaluator {
    Rbf,
    Dm {
        model: DmKernelModel,
        inv_q: Vec<f64>,
        /// alpha columns pre-scaled by `1 / (q_j sqrt(q^_j))`.
        scaled_alpha: Matrix,
    },
}

/// A fitted one-step surrogate.
#[derive(Clone, Debug, PartialEq)]
pub struct KrrModel {
    kind: KernelKind,
    form: EstimatorForm,
    eps: f64,
    lambda_reg: f64,
    dt: f64,
    anchors: Matrix,
    alpha: Matrix,
    divergence_bound: f64,
    solve_residual: f64,
    eval: Evaluator,
}

impl KrrModel {
    pub fn fit(pairs: &TrainingPairs, kind: KernelKind, eps: f64, lambda_reg: f64) -> Result<Self> {
        let dists = SqDistances::new(&pairs.inputs)?;
        Self::fit_with_distances(pairs, &dists, kind, eps, lambda_reg)
    }

    /// Same as [`KrrModel::fit`] with precomputed input distances.
    pub fn fit_with_distances(
        pairs: &TrainingPairs,
        dists: &SqDistances,
        kind: KernelKind,
        eps: f64,
        lambda_reg: f64,
    ) -> Result<Self> {
        check_eps(eps)?;
        if !(lambda_reg.is_finite() && lambda_reg >= 0.0) {
            return Err(invalid(
                "lambda_reg",
                format!("must be >= 0, got {lambda_reg}"),
            ));
        }
        if pairs.is_empty() {
            return Err(invalid("pairs", "no training pairs"));
        }
        if pairs.inputs.shape() != pairs.targets.shape() {
            return Err(Error::Shape("inputs and targets differ in shape".into()));
        }
        check_points(&pairs.targets, "targets")?;
        if dists.len() != pairs.len() {
            return Err(Error::Shape("distance table does not match pairs".into()));
        }

        let (gram, dm) = match kind {
            KernelKind::Rbf => (rbf_gram(dists, eps), None),
            KernelKind::Dm => {
                if pairs.len() < 2 {
                    return Err(invalid("pairs", "DM kernel needs at least 2 anchors"));
                }
                let (m, g) = DmKernelModel::fit_with_distances(&pairs.inputs, dists, eps)?;
                (g, Some(m))
            }
        };
        let (alpha, solve_residual) = solve_ridge(&gram, &pairs.targets, lambda_reg)?;
        let bound = DEFAULT_DIVERGENCE_FACTOR * max_norm(&pairs.inputs).max(1.0);
        Ok(Self::assemble(
            kind,
            pairs.form,
            eps,
            lambda_reg,
            pairs.dt,
            pairs.inputs.clone(),
            alpha,
            dm,
            bound,
            solve_residual,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        kind: KernelKind,
        form: EstimatorForm,
        eps: f64,
        lambda_reg: f64,
        dt: f64,
        anchors: Matrix,
        alpha: Matrix,
        dm: Option<DmKernelModel>,
        divergence_bound: f64,
        solve_residual: f64,
    ) -> Self {
        let eval = match dm {
            None => Evaluator::Rbf,
            Some(model) => {
                let inv_q: Vec<f64> = model.q().iter().map(|q| 1.0 / q).collect();
                let mut scaled_alpha = alpha.clone();
                for j in 0..scaled_alpha.ncols() {
                    let s = inv_q[j] / model.qhat()[j].sqrt();
                    scaled_alpha.col_mut(j).iter_mut().for_each(|v| *v *= s);
                }
                Evaluator::Dm {
                    model,
                    inv_q,
                    scaled_alpha,
                }
            }
        };
        Self {
            kind,
            form,
            eps,
            lambda_reg,
            dt,
            anchors,
            alpha,
            divergence_bound,
            solve_residual,
            eval,
        }
    }

    /// Rebuilds a model from serialized parts.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        kind: KernelKind,
        form: EstimatorForm,
        eps: f64,
        lambda_reg: f64,
        dt: f64,
        anchors: Matrix,
        alpha: Matrix,
        densities: Option<(Vec<f64>, Vec<f64>)>,
        divergence_bound: f64,
        solve_residual: f64,
    ) -> Result<Self> {
        check_eps(eps)?;
        if alpha.shape() != anchors.shape() {
            return Err(Error::Shape("alpha must be n x N like the anchors".into()));
        }
        let dm = match (kind, densities) {
            (KernelKind::Rbf, _) => None,
            (KernelKind::Dm, Some((q, qhat))) => {
                Some(DmKernelModel::from_parts(anchors.clone(), eps, q, qhat)?)
            }
            (KernelKind::Dm, None) => {
                return Err(Error::Format("DM model without densities".into()))
            }
        };
        Ok(Self::assemble(
            kind,
            form,
            eps,
            lambda_reg,
            dt,
            anchors,
            alpha,
            dm,
            divergence_bound,
            solve_residual,
        ))
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn form(&self) -> EstimatorForm {
        self.form
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn lambda_reg(&self) -> f64 {
        self.lambda_reg
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.anchors.nrows()
    }

    pub fn anchors(&self) -> &Matrix {
        &self.anchors
    }

    /// Coefficients, `n x N`; row `j` is the coefficient vector of output component `j`.
    pub fn alpha(&self) -> &Matrix {
        &self.alpha
    }

    pub fn dm_model(&self) -> Option<&DmKernelModel> {
        match &self.eval {
            Evaluator::Dm { model, .. } => Some(model),
            Evaluator::Rbf => None,
        }
    }

    pub fn divergence_bound(&self) -> f64 {
        self.divergence_bound
    }

    pub fn set_divergence_bound(&mut self, bound: f64) {
        self.divergence_bound = bound;
    }

    /// Relative residual `|(K + lambda I) a - y| / |y|` of the coefficient solve.
    pub fn solve_residual(&self) -> f64 {
        self.solve_residual
    }

    /// Row `k(x, anchors)` of the fitted kernel.
    pub fn kernel_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_query(x)?;
        match &self.eval {
            Evaluator::Rbf => Ok(self
                .anchors
                .columns()
                .map(|a| rbf_from_sq(sq_dist(x, a), self.eps))
                .collect()),
            Evaluator::Dm { model, .. } => {
                let z = Matrix::from_col_major(x.len(), 1, x.to_vec())?;
                Ok(model.cross(&z)?.row(0))
            }
        }
    }

    fn check_query(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "state has dimension {}, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "state",
                index,
            });
        }
        Ok(())
    }

    /// Evaluates the regression function `f(x) = k(x, X) alpha^T` into `out`.
    fn regress_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|v| *v = 0.0);
        match &self.eval {
            Evaluator::Rbf => {
                for (a, c) in self.anchors.columns().zip(self.alpha.columns()) {
                    let k = rbf_from_sq(sq_dist(x, a), self.eps);
                    axpy(k, c, out);
                }
            }
            Evaluator::Dm {
                inv_q,
                scaled_alpha,
                ..
            } => {
                let (mut s0, mut s1) = (0.0, 0.0);
                for ((a, c), w) in self
                    .anchors
                    .columns()
                    .zip(scaled_alpha.columns())
                    .zip(inv_q)
                {
                    let k = rbf_from_sq(sq_dist(x, a), self.eps);
                    s0 += k;
                    s1 += k * w;
                    axpy(k, c, out);
                }
                let inv_n = 1.0 / self.anchors.ncols() as f64;
                let qz = s0 * inv_n;
                if !(qz >= DENSITY_FLOOR) {
                    return Err(Error::IllConditionedQuery { value: qz });
                }
                let qhz = s1 * inv_n / qz;
                if !(qhz >= DENSITY_FLOOR) {
                    return Err(Error::IllConditionedQuery { value: qhz });
                }
                let scale = 1.0 / (qz * qhz.sqrt());
                out.iter_mut().for_each(|v| *v *= scale);
            }
        }
        Ok(())
    }

    /// One application of the learned solution operator.
    pub fn predict_step(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_query(x)?;
        let mut out = vec![0.0; x.len()];
        self.step_into(x, &mut out)?;
        Ok(out)
    }

    fn step_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.regress_into(x, out)?;
        if self.form == EstimatorForm::SkipConnection {
            out.iter_mut().zip(x).for_each(|(o, xi)| *o += xi);
        }
        Ok(())
    }

    /// Iterates the model `steps` times from `x0`.
    pub fn rollout(&self, x0: &[f64], steps: usize) -> Result<Rollout> {
        self.rollout_until(x0, steps, |_, _| true)
    }

    /// Like [`KrrModel::rollout`], but stops as soon as `keep_going(i, x_i)`
    /// returns false for a newly produced state `x_i`.
    pub fn rollout_until(
        &self,
        x0: &[f64],
        steps: usize,
        mut keep_going: impl FnMut(usize, &[f64]) -> bool,
    ) -> Result<Rollout> {
        self.check_query(x0)?;
        let n = x0.len();
        let mut data = Vec::with_capacity(n * (steps + 1));
        data.extend_from_slice(x0);
        let mut next = vec![0.0; n];
        let mut status = RolloutStatus::Completed;
        for i in 1..=steps {
            let cur = &data[(i - 1) * n..i * n];
            if let Err(e) = self.step_into(cur, &mut next) {
                status = RolloutStatus::Diverged {
                    step: i,
                    reason: e.to_string(),
                };
                break;
            }
            let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !norm.is_finite() || norm > self.divergence_bound {
                status = RolloutStatus::Diverged {
                    step: i,
                    reason: format!("state norm {norm:e} exceeds {:e}", self.divergence_bound),
                };
                break;
            }
            data.extend_from_slice(&next);
            if !keep_going(i, &next) {
                if i < steps {
                    status = RolloutStatus::Stopped { step: i };
                }
                break;
            }
        }
        let cols = data.len() / n;
        Ok(Rollout {
            states: Matrix::from_col_major(n, cols, data)?,
            status,
        })
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

fn max_norm(points: &Matrix) -> f64 {
    points
        .columns()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Solves `(K + lambda I) A = Y^T` for every target row at once.
///
/// Returns the `n x N` coefficients and the relative residual.
fn solve_ridge(gram: &Matrix, targets: &Matrix, lambda: f64) -> Result<(Matrix, f64)> {
    let n_pts = gram.ncols();
    let mut sys = gram.to_faer();
    for i in 0..n_pts {
        sys[(i, i)] += lambda;
    }
    let rhs = Mat::from_fn(n_pts, targets.nrows(), |i, j| targets.get(j, i));
    let mut sol = rhs.clone();
    let used_llt = if lambda > 0.0 {
        match sys.llt(Side::Lower) {
            Ok(llt) => {
                llt.solve_in_place(sol.as_mut());
                true
            }
            Err(_) => false,
        }
    } else {
        log::warn!("lambda_reg = 0: solving with a pivoted LU factorization");
        false
    };
    if !used_llt {
        if lambda > 0.0 {
            log::debug!("Cholesky failed at lambda_reg = {lambda:e}; falling back to pivoted LU");
        }
        sol = rhs.clone();
        sys.partial_piv_lu().solve_in_place(sol.as_mut());
    }
    if !sol.col_iter().all(|c| c.iter().all(|v| v.is_finite())) {
        return Err(Error::Solver {
            lambda,
            reason: "factorization produced non-finite coefficients".into(),
        });
    }
    let resid = &sys * &sol - &rhs;
    let denom = rhs.norm_l2().max(f64::MIN_POSITIVE);
    let rel = resid.norm_l2() / denom;
    if !rel.is_finite() {
        return Err(Error::Solver {
            lambda,
            reason: "non-finite residual".into(),
        });
    }
    Ok((Matrix::from_faer(sol.transpose()), rel))
}

#[derive(Clone, Debug, PartialEq)]
pub enum RolloutStatus {
    /// All requested steps were produced.
    Completed,
    /// The caller's predicate ended the rollout at `step`.
    Stopped { step: usize },
    /// The state left the admissible region at `step`; that state is not stored.
    Diverged { step: usize, reason: String },
}

#[derive(Clone, Debug)]
pub struct Rollout {
    /// `n x (k + 1)` states; column 0 is the initial condition.
    pub states: Matrix,
    pub status: RolloutStatus,
}

impl Rollout {
    pub fn diverged(&self) -> bool {
        matches!(self.status, RolloutStatus::Diverged { .. })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(cols: &[[f64; 2]]) -> Matrix {
        Matrix::from_columns(cols).unwrap()
    }

    #[test]
    fn pairs_direct_and_skip() {
        let t = traj(&[[1.0, 0.0], [2.0, 1.0], [4.0, 3.0]]);
        let d = build_pairs(std::slice::from_ref(&t), EstimatorForm::Direct, 0.1).unwrap();
        assert_eq!(d.inputs, traj(&[[1.0, 0.0], [2.0, 1.0]]));
        assert_eq!(d.targets, traj(&[[2.0, 1.0], [4.0, 3.0]]));
        let s = build_pairs(&[t], EstimatorForm::SkipConnection, 0.1).unwrap();
        assert_eq!(s.targets, traj(&[[1.0, 1.0], [2.0, 2.0]]));
    }

    #[test]
    fn pairs_block_ordered_by_trajectory() {
        let a = Matrix::from_fn(1, 4, |_, j| j as f64);
        let b = Matrix::from_fn(1, 4, |_, j| 10.0 + j as f64);
        let p = build_pairs(&[a, b], EstimatorForm::Direct, 1.0).unwrap();
        assert_eq!(p.len(), 6);
        assert_eq!(p.inputs.row(0), vec![0.0, 1.0, 2.0, 10.0, 11.0, 12.0]);
        assert_eq!(p.targets.row(0), vec![1.0, 2.0, 3.0, 11.0, 12.0, 13.0]);
    }

    #[test]
    fn pairs_errors() {
        assert!(build_pairs(&[], EstimatorForm::Direct, 1.0).is_err());
        let short = Matrix::zeros(2, 1);
        assert!(build_pairs(&[short], EstimatorForm::Direct, 1.0).is_err());
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(3, 3);
        assert!(matches!(
            build_pairs(&[a, b], EstimatorForm::Direct, 1.0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn single_pair_interpolates() {
        let pairs = TrainingPairs {
            inputs: traj(&[[0.5, -0.5]]),
            targets: traj(&[[3.0, 7.0]]),
            form: EstimatorForm::Direct,
            dt: 1.0,
        };
        let m = KrrModel::fit(&pairs, KernelKind::Rbf, 1.0, 0.0).unwrap();
        assert_eq!(m.alpha().col(0), &[3.0, 7.0]);
    }

    #[test]
    fn large_ridge_shrinks_alpha() {
        let t = Matrix::from_fn(2, 12, |i, j| ((i + 2 * j) as f64).sin());
        let pairs = build_pairs(&[t], EstimatorForm::Direct, 1.0).unwrap();
        let a1 = KrrModel::fit(&pairs, KernelKind::Rbf, 0.5, 1e6).unwrap();
        let a2 = KrrModel::fit(&pairs, KernelKind::Rbf, 0.5, 1e7).unwrap();
        let r = a1.alpha().frobenius_norm() / a2.alpha().frobenius_norm();
        assert!((r - 10.0).abs() < 1e-3, "{r}");
    }

    #[test]
    fn zero_alpha_skip_is_identity() {
        let anchors = Matrix::from_fn(3, 5, |i, j| (i * j) as f64);
        let m = KrrModel::from_parts(
            KernelKind::Rbf,
            EstimatorForm::SkipConnection,
            1.0,
            1e-6,
            0.01,
            anchors.clone(),
            Matrix::zeros(3, 5),
            None,
            1e9,
            0.0,
        )
        .unwrap();
        let x = [0.3, -1.2, 2.0];
        assert_eq!(m.predict_step(&x).unwrap(), x.to_vec());
        let r = m.rollout(&x, 4).unwrap();
        assert_eq!(r.states.ncols(), 5);
        assert!(r.states.columns().all(|c| c == x));
        let r = m.rollout(&x, 0).unwrap();
        assert_eq!(r.states.ncols(), 1);
    }

    #[test]
    fn rollout_flags_divergence() {
        // x -> 3x blows past the bound
        let t = Matrix::from_fn(1, 30, |_, j| 3f64.powi(j as i32 % 3) * 0.1);
        let mut pairs = build_pairs(&[t], EstimatorForm::Direct, 1.0).unwrap();
        pairs.targets = pairs.inputs.map(|v| 3.0 * v);
        let mut m = KrrModel::fit(&pairs, KernelKind::Rbf, 1e4, 1e-10).unwrap();
        m.set_divergence_bound(10.0);
        let r = m.rollout(&[0.5], 50).unwrap();
        assert!(r.diverged());
        assert!(r.states.ncols() < 51);
        assert!(r.states.is_finite());
    }

    #[test]
    fn dm_far_query_becomes_divergence() {
        let t = Matrix::from_fn(1, 10, |_, j| j as f64 * 0.1);
        let pairs = build_pairs(&[t], EstimatorForm::SkipConnection, 1.0).unwrap();
        let m = KrrModel::fit(&pairs, KernelKind::Dm, 1e-3, 1e-8).unwrap();
        assert!(matches!(
            m.predict_step(&[1e4]),
            Err(Error::IllConditionedQuery { .. })
        ));
        let r = m.rollout(&[1e4], 3).unwrap();
        assert!(matches!(r.status, RolloutStatus::Diverged { step: 1, .. }));
    }

    #[test]
    fn stopped_rollouts_report_step() {
        let t = Matrix::from_fn(2, 20, |i, j| ((i + j) as f64 * 0.3).cos());
        let pairs =
            build_pairs(std::slice::from_ref(&t), EstimatorForm::SkipConnection, 1.0).unwrap();
        let m = KrrModel::fit(&pairs, KernelKind::Dm, 0.5, 1e-6).unwrap();
        let r = m.rollout_until(t.col(0), 10, |i, _| i < 4).unwrap();
        assert_eq!(r.status, RolloutStatus::Stopped { step: 4 });
        assert_eq!(r.states.ncols(), 5);
    }
}
