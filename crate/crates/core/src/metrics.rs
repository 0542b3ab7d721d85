//! Forecast scores: RMSE, valid prediction time and weighted normalized RMSE.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;

fn check_same_shape(pred: &Matrix, truth: &Matrix) -> Result<()> {
    if pred.shape() != truth.shape() {
        return Err(Error::Shape(format!(
            "prediction is {:?}, truth is {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    Ok(())
}

/// Root mean square over all `n * T` entries.
pub fn rmse(pred: &Matrix, truth: &Matrix) -> Result<f64> {
    check_same_shape(pred, truth)?;
    let count = pred.as_slice().len();
    if count == 0 {
        return Err(invalid("pred", "empty trajectory"));
    }
    let sum: f64 = pred
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sum / count as f64).sqrt())
}

/// Parameters of the valid-prediction-time score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VptConfig {
    pub gamma: f64,
    pub lyapunov: f64,
    pub dt: f64,
    pub sigma: Vec<f64>,
}

impl VptConfig {
    pub fn new(gamma: f64, lyapunov: f64, dt: f64, sigma: Vec<f64>) -> Result<Self> {
        let cfg = Self {
            gamma,
            lyapunov,
            dt,
            sigma,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Uses the per-component (population) standard deviation of `truth`.
    pub fn for_truth(truth: &Matrix, gamma: f64, lyapunov: f64, dt: f64) -> Result<Self> {
        Self::new(gamma, lyapunov, dt, component_std(truth))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(invalid("gamma", "must be positive"));
        }
        if !(self.lyapunov > 0.0 && self.lyapunov.is_finite()) {
            return Err(invalid("lyapunov", "must be positive"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", "must be positive"));
        }
        if self.sigma.is_empty() {
            return Err(invalid("sigma", "empty"));
        }
        if let Some(k) = self.sigma.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(invalid(
                "sigma",
                format!("component {k} has non-positive spread {}", self.sigma[k]),
            ));
        }
        Ok(())
    }

    /// Normalized error `E` between one predicted and one true state.
    pub fn normalized_error(&self, pred: &[f64], truth: &[f64]) -> f64 {
        let n = truth.len();
        let s: f64 = pred
            .iter()
            .zip(truth)
            .zip(&self.sigma)
            .map(|((p, t), s)| {
                let e = (p - t) / s;
                e * e
            })
            .sum();
        (s / n as f64).sqrt()
    }

    pub fn to_lyapunov_time(&self, steps: usize) -> f64 {
        self.lyapunov * self.dt * steps as f64
    }
}

/// Population standard deviation of every row.
pub fn component_std(traj: &Matrix) -> Vec<f64> {
    let t = traj.ncols() as f64;
    (0..traj.nrows())
        .map(|k| {
            let row = traj.row(k);
            let mean = row.iter().sum::<f64>() / t;
            (row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t).sqrt()
        })
        .collect()
}

/// Valid prediction time in Lyapunov units.
///
/// Counts the longest run of steps `1..=i` whose normalized error stays at or
/// below `gamma`. Columns missing from a truncated prediction count as failures.
pub fn vpt(pred: &Matrix, truth: &Matrix, cfg: &VptConfig) -> Result<f64> {
    cfg.validate()?;
    if truth.ncols() == 0 {
        return Err(invalid("truth", "empty trajectory"));
    }
    if pred.nrows() != truth.nrows() || cfg.sigma.len() != truth.nrows() {
        return Err(Error::Shape(format!(
            "prediction has {} rows, truth {}, sigma {}",
            pred.nrows(),
            truth.nrows(),
            cfg.sigma.len()
        )));
    }
    if pred.ncols() > truth.ncols() {
        return Err(Error::Shape("prediction is longer than truth".into()));
    }
    let mut tracker = VptTracker::new(cfg);
    for i in 1..pred.ncols() {
        if !tracker.push(pred.col(i), truth.col(i)) {
            break;
        }
    }
    Ok(tracker.vpt())
}

/// Incremental VPT for rollouts that can stop at the first threshold crossing.
#[derive(Clone, Debug)]
pub struct VptTracker<'a> {
    cfg: &'a VptConfig,
    valid_steps: usize,
    failed: bool,
}

impl<'a> VptTracker<'a> {
    pub fn new(cfg: &'a VptConfig) -> Self {
        Self {
            cfg,
            valid_steps: 0,
            failed: false,
        }
    }

    /// Feeds the next step (index 1, 2, ...); returns false once the run has ended.
    pub fn push(&mut self, pred: &[f64], truth: &[f64]) -> bool {
        if self.failed {
            return false;
        }
        let e = self.cfg.normalized_error(pred, truth);
        if e <= self.cfg.gamma {
            self.valid_steps += 1;
            true
        } else {
            self.failed = true;
            false
        }
    }

    pub fn valid_steps(&self) -> usize {
        self.valid_steps
    }

    pub fn vpt(&self) -> f64 {
        self.cfg.to_lyapunov_time(self.valid_steps)
    }
}

/// Normalized weights `w_i = exp(t_i - t_T)` scaled to unit Euclidean norm.
pub fn time_weights(times: &[f64]) -> Result<Vec<f64>> {
    let last = *times.last().ok_or_else(|| invalid("times", "empty"))?;
    if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("times", "must be finite and strictly increasing"));
    }
    let w: Vec<f64> = times.iter().map(|t| (t - last).exp()).collect();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(w.into_iter().map(|v| v / norm).collect())
}

/// Time-weighted error relative to the size of the truths, pooled over trajectories.
pub fn wnrmse(preds: &[Matrix], truths: &[Matrix], times: &[f64]) -> Result<f64> {
    if preds.len() != truths.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} truths",
            preds.len(),
            truths.len()
        )));
    }
    if truths.is_empty() {
        return Err(invalid("truths", "empty list"));
    }
    let w = time_weights(times)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (p, t) in preds.iter().zip(truths) {
        check_same_shape(p, t)?;
        if t.ncols() != w.len() {
            return Err(Error::Shape(format!(
                "trajectory has {} steps, {} timestamps given",
                t.ncols(),
                w.len()
            )));
        }
        for (i, wi) in w.iter().enumerate() {
            let (pc, tc) = (p.col(i), t.col(i));
            let err: f64 = pc.iter().zip(tc).map(|(a, b)| (a - b) * (a - b)).sum();
            num += wi * wi * err;
            den += tc.iter().map(|v| v * v).sum::<f64>();
        }
    }
    if den == 0.0 {
        return Err(Error::Degenerate(
            "all truths are zero; the normalized error is undefined".into(),
        ));
    }
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[f64]) -> Matrix {
        Matrix::from_col_major(1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn rmse_cases() {
        let a = Matrix::from_fn(2, 2, |i, j| (i + j) as f64);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        assert_eq!(rmse(&row(&[4.0]), &row(&[1.0])).unwrap(), 3.0);
        assert_eq!(rmse(&a.map(|v| v + 1.0), &a).unwrap(), 1.0);
        assert!(rmse(&row(&[1.0]), &row(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn vpt_prefix_stops_at_first_failure() {
        let cfg = VptConfig::new(0.3, 1.0, 1.0, vec![1.0]).unwrap();
        let truth = row(&[0.0; 5]);
        let pred = row(&[0.0, 0.1, 0.2, 0.5, 0.1]);
        assert_eq!(vpt(&pred, &truth, &cfg).unwrap(), 2.0);
    }

    #[test]
    fn vpt_perfect_and_immediate_failure() {
        let truth = Matrix::from_fn(2, 11, |i, j| (i * j) as f64 * 0.1);
        let cfg = VptConfig::new(0.5, 0.9, 0.01, vec![1.0, 2.0]).unwrap();
        let full = vpt(&truth, &truth, &cfg).unwrap();
        assert!((full - 0.9 * 0.01 * 10.0).abs() < 1e-15);
        let bad = truth.map(|v| v + 5.0);
        assert_eq!(vpt(&bad, &truth, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn vpt_truncated_prediction() {
        let truth = Matrix::from_fn(1, 10, |_, j| j as f64);
        let cfg = VptConfig::new(0.3, 1.0, 1.0, vec![1.0]).unwrap();
        let pred = truth.subcols(0, 4);
        assert_eq!(vpt(&pred, &truth, &cfg).unwrap(), 3.0);
    }

    #[test]
    fn vpt_rejects_bad_sigma() {
        assert!(VptConfig::new(0.3, 1.0, 1.0, vec![0.0]).is_err());
        assert!(VptConfig::for_truth(&row(&[2.0, 2.0, 2.0]), 0.3, 1.0, 1.0).is_err());
    }

    #[test]
    fn population_std() {
        let s = component_std(&row(&[1.0, 3.0]));
        assert_eq!(s, vec![1.0]);
    }

    #[test]
    fn wnrmse_two_step() {
        let t = [0.0, 1.0];
        let got = wnrmse(&[row(&[1.5, 2.5])], &[row(&[1.0, 2.0])], &t).unwrap();
        assert!((got - 0.22360679774997894).abs() < 1e-15, "{got}");
        let w = time_weights(&t).unwrap();
        let e = (-1f64).exp();
        let norm = (1.0 + e * e).sqrt();
        assert!((w[0] - e / norm).abs() < 1e-16 && (w[1] - 1.0 / norm).abs() < 1e-16);
    }

    #[test]
    fn wnrmse_single_step_is_relative_error() {
        let p = Matrix::from_col_major(2, 1, vec![1.0, 1.0]).unwrap();
        let t = Matrix::from_col_major(2, 1, vec![3.0, 4.0]).unwrap();
        let got = wnrmse(std::slice::from_ref(&p), std::slice::from_ref(&t), &[7.0]).unwrap();
        let expect = (4.0f64 + 9.0).sqrt() / 5.0;
        assert!((got - expect).abs() < 1e-15);
        assert_eq!(
            wnrmse(std::slice::from_ref(&t), std::slice::from_ref(&t), &[7.0]).unwrap(),
            0.0
        );
    }

    #[test]
    fn wnrmse_errors() {
        let z = row(&[0.0, 0.0]);
        assert!(matches!(
            wnrmse(
                std::slice::from_ref(&z),
                std::slice::from_ref(&z),
                &[0.0, 1.0]
            ),
            Err(Error::Degenerate(_))
        ));
        assert!(wnrmse(
            std::slice::from_ref(&z),
            std::slice::from_ref(&z),
            &[1.0, 0.0]
        )
        .is_err());
    }
}
