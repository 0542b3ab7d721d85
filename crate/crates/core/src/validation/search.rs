//! Dynamic-aware random search over `(eps, lambda_reg)`.
//!
//! Every trial fits a model on the training pairs and scores free rollouts
//! against the validation trajectories, so hyperparameters are judged on
//! multi-step forecasts rather than one-step fit quality.

use std::cmp::Ordering;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{KernelKind, SqDistances};
use crate::krr::{KrrModel, TrainingPairs};
use crate::matrix::Matrix;
use crate::metrics::{rmse, wnrmse, VptConfig, VptTracker};

use super::heuristic::SearchRange;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Metric {
    Rmse,
    /// Valid prediction time; sigma comes from each scored trajectory.
    Vpt {
        gamma: f64,
        lyapunov: f64,
    },
    Wnrmse,
}

impl Metric {
    pub fn maximize(&self) -> bool {
        matches!(self, Metric::Vpt { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Rmse => "rmse",
            Metric::Vpt { .. } => "vpt",
            Metric::Wnrmse => "wnrmse",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SearchStatus {
    #[serde(rename = "ok")]
    Ok,
    #[serde(rename = "diverged")]
    Diverged,
    #[serde(rename = "solver-failed")]
    SolverFailed,
}

impl SearchStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SearchStatus::Ok => "ok",
            SearchStatus::Diverged => "diverged",
            SearchStatus::SolverFailed => "solver-failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub trial: usize,
    pub eps: f64,
    #[serde(rename = "lambda")]
    pub lam: f64,
    /// Mean validation score; NaN unless `status` is ok.
    pub score: f64,
    pub status: SearchStatus,
}

#[derive(Clone, Debug)]
pub struct SearchSpec {
    pub range: SearchRange,
    pub trials: usize,
    pub metric: Metric,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub model: KrrModel,
    pub records: Vec<SearchRecord>,
    pub best: usize,
}

impl SearchOutcome {
    pub fn best_record(&self) -> &SearchRecord {
        &self.records[self.best]
    }
}

/// Hyperparameters of trial `t`: log-uniform draws from a ChaCha stream keyed by `t`.
pub fn sample_trial(range: &SearchRange, seed: u64, trial: usize) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    let mut log_uniform = |lo: f64, hi: f64| {
        if lo == hi {
            return lo;
        }
        let v = rng.random_range(lo.ln()..hi.ln()).exp();
        v.clamp(lo, hi)
    };
    let eps = log_uniform(range.eps_lo, range.eps_hi);
    let lam = log_uniform(range.lam_lo, range.lam_hi);
    (eps, lam)
}

/// Result of scoring one model on a validation set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ValidationScore {
    Score(f64),
    Diverged,
}

fn check_validation(val: &[Matrix], dim: usize) -> Result<()> {
    if val.is_empty() {
        return Err(invalid("validation", "need at least one trajectory"));
    }
    for (k, v) in val.iter().enumerate() {
        if v.nrows() != dim {
            return Err(Error::Shape(format!(
                "validation trajectory {k} has dimension {}, expected {dim}",
                v.nrows()
            )));
        }
        if v.ncols() < 2 {
            return Err(invalid(
                "validation",
                format!("trajectory {k} has fewer than 2 states"),
            ));
        }
        if !v.is_finite() {
            return Err(Error::NonFinite {
                what: "validation trajectory",
                index: k,
            });
        }
    }
    Ok(())
}

/// Rolls the model out from the first state of each trajectory and averages the metric.
pub fn validation_score(
    model: &KrrModel,
    val: &[Matrix],
    metric: &Metric,
) -> Result<ValidationScore> {
    check_validation(val, model.dim())?;
    let mut total = 0.0;
    for truth in val {
        let steps = truth.ncols() - 1;
        let score = match *metric {
            Metric::Vpt { gamma, lyapunov } => {
                let cfg = VptConfig::for_truth(truth, gamma, lyapunov, model.dt())?;
                let mut tracker = VptTracker::new(&cfg);
                let r = model
                    .rollout_until(truth.col(0), steps, |i, x| tracker.push(x, truth.col(i)))?;
                if r.diverged() {
                    return Ok(ValidationScore::Diverged);
                }
                tracker.vpt()
            }
            Metric::Rmse | Metric::Wnrmse => {
                let r = model.rollout(truth.col(0), steps)?;
                if r.diverged() {
                    return Ok(ValidationScore::Diverged);
                }
                if *metric == Metric::Rmse {
                    rmse(&r.states, truth)?
                } else {
                    let times: Vec<f64> =
                        (0..truth.ncols()).map(|i| i as f64 * model.dt()).collect();
                    wnrmse(&[r.states], std::slice::from_ref(truth), &times)?
                }
            }
        };
        total += score;
    }
    Ok(ValidationScore::Score(total / val.len() as f64))
}

fn run_trial(
    pairs: &TrainingPairs,
    dists: &SqDistances,
    kind: KernelKind,
    val: &[Matrix],
    spec: &SearchSpec,
    trial: usize,
) -> SearchRecord {
    let (eps, lam) = sample_trial(&spec.range, spec.seed, trial);
    let mut rec = SearchRecord {
        trial,
        eps,
        lam,
        score: f64::NAN,
        status: SearchStatus::SolverFailed,
    };
    let model = match KrrModel::fit_with_distances(pairs, dists, kind, eps, lam) {
        Ok(m) => m,
        Err(e) => {
            log::debug!("trial {trial}: fit failed at eps={eps:e}, lambda={lam:e}: {e}");
            return rec;
        }
    };
    match validation_score(&model, val, &spec.metric) {
        Ok(ValidationScore::Score(s)) if s.is_finite() => {
            rec.score = s;
            rec.status = SearchStatus::Ok;
        }
        Ok(_) => rec.status = SearchStatus::Diverged,
        Err(e) => log::debug!("trial {trial}: scoring failed: {e}"),
    }
    rec
}

/// Orders ok records from best to worst; ties prefer smaller lambda, then smaller eps.
pub fn compare_records(a: &SearchRecord, b: &SearchRecord, maximize: bool) -> Ordering {
    let by_score = if maximize {
        b.score.total_cmp(&a.score)
    } else {
        a.score.total_cmp(&b.score)
    };
    by_score
        .then(a.lam.total_cmp(&b.lam))
        .then(a.eps.total_cmp(&b.eps))
}

/// Index of the best ok record, if any.
pub fn select_best(records: &[SearchRecord], metric: &Metric) -> Option<usize> {
    (0..records.len())
        .filter(|&i| records[i].status == SearchStatus::Ok)
        .min_by(|&i, &j| compare_records(&records[i], &records[j], metric.maximize()))
}

/// Random search; trials run in parallel but the outcome depends only on `spec.seed`.
pub fn random_search(
    pairs: &TrainingPairs,
    kind: KernelKind,
    val: &[Matrix],
    spec: &SearchSpec,
) -> Result<SearchOutcome> {
    let dists = SqDistances::new(&pairs.inputs)?;
    random_search_with_distances(pairs, &dists, kind, val, spec)
}

pub fn random_search_with_distances(
    pairs: &TrainingPairs,
    dists: &SqDistances,
    kind: KernelKind,
    val: &[Matrix],
    spec: &SearchSpec,
) -> Result<SearchOutcome> {
    if spec.trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    spec.range.validate()?;
    check_validation(val, pairs.dim())?;
    if let Metric::Vpt { gamma, lyapunov } = spec.metric {
        for v in val {
            VptConfig::for_truth(v, gamma, lyapunov, pairs.dt)?;
        }
    }

    let records: Vec<SearchRecord> = (0..spec.trials)
        .into_par_iter()
        .map(|t| run_trial(pairs, dists, kind, val, spec, t))
        .collect();

    let Some(best) = select_best(&records, &spec.metric) else {
        return Err(Error::NoViableModel {
            trials: spec.trials,
            records,
        });
    };
    let ok = records
        .iter()
        .filter(|r| r.status == SearchStatus::Ok)
        .count();
    let r = &records[best];
    log::info!(
        "{kind} search: {ok}/{} trials ok, best {}={:.6e} at eps={:.4e}, lambda={:.4e}",
        spec.trials,
        spec.metric.name(),
        r.score,
        r.eps,
        r.lam
    );
    let model = KrrModel::fit_with_distances(pairs, dists, kind, r.eps, r.lam)?;
    Ok(SearchOutcome {
        model,
        records,
        best,
    })
}

/// Writes records as CSV with columns `trial,eps,lambda,score,status`.
pub fn write_records_csv<W: Write>(records: &[SearchRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
