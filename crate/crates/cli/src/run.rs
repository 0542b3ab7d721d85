//! The `run` pipeline: heuristic, search range, random search, refit, test.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use dmkrr_core::metrics::{rmse, wnrmse, VptConfig, VptTracker};
use dmkrr_core::systems::sample_subsets;
use dmkrr_core::validation::{
    default_eta_grid, heuristic_with_distances, make_range, random_search_with_distances,
    write_records_csv, SearchSpec,
};
use dmkrr_core::{
    build_pairs, DmKernelModel, EstimatorForm, KrrModel, Matrix, Metric, PcaReducer, PcaTarget,
    SearchRecord, SearchStatus, Snapshot, SqDistances, TrainingPairs,
};
use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, SubsetMode};
use crate::data::{self, stream, ExperimentData, TrainSource};
use crate::error::CliError;
use crate::summary::{Num, Stats, SubsetSummary, Summary};

const STREAM_SUBSETS: u64 = 20;
const STREAM_PREFIX_VAL: u64 = 40;
const STREAM_POOL: u64 = 60;
const STREAM_SEARCH: u64 = 100;

/// One training set with its validation trajectories, before any reduction.
struct SubsetPlan {
    start: Option<usize>,
    pairs: TrainingPairs,
    /// States the reducer is fitted on.
    states: Matrix,
    val: Vec<Matrix>,
}

fn plan_subsets(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
) -> Result<Vec<SubsetPlan>, CliError> {
    let p = &cfg.protocol;
    let dt = data.dt;
    match &data.train {
        TrainSource::Series(traj) => match p.subset_mode {
            SubsetMode::Windows => {
                let seed = stream(cfg.seed, STREAM_SUBSETS).next_u64();
                let subs = sample_subsets(traj, p.subsets, p.n_train, p.n_val, p.val_count, seed)
                    .map_err(|e| CliError::Data(e.to_string()))?;
                subs.into_iter()
                    .map(|s| {
                        Ok(SubsetPlan {
                            start: Some(s.start),
                            pairs: build_pairs(std::slice::from_ref(&s.train), cfg.form, dt)?,
                            states: s.train,
                            val: s.val,
                        })
                    })
                    .collect()
            }
            SubsetMode::Prefix => {
                let len = traj.ncols();
                if p.n_train > len || p.n_val > len {
                    return Err(CliError::Data(format!(
                        "training block has {len} states, need {} for training and {} per validation",
                        p.n_train, p.n_val
                    )));
                }
                let train = traj.subcols(0, p.n_train);
                (0..p.subsets)
                    .map(|k| {
                        let mut rng = stream(cfg.seed, STREAM_PREFIX_VAL + k as u64);
                        let val = (0..p.val_count)
                            .map(|_| traj.subcols(rng.random_range(0..=len - p.n_val), p.n_val))
                            .collect();
                        Ok(SubsetPlan {
                            start: Some(0),
                            pairs: build_pairs(std::slice::from_ref(&train), cfg.form, dt)?,
                            states: train.clone(),
                            val,
                        })
                    })
                    .collect()
            }
        },
        TrainSource::Ensemble { train, val } => {
            let pool = build_pairs(train, cfg.form, dt)?;
            if p.n_train > pool.len() {
                return Err(CliError::Data(format!(
                    "{} training pairs requested, only {} available",
                    p.n_train,
                    pool.len()
                )));
            }
            if val.len() < p.val_count || val.iter().any(|v| v.ncols() < p.n_val) {
                return Err(CliError::Data("not enough validation data".into()));
            }
            let val: Vec<Matrix> = val[..p.val_count]
                .iter()
                .map(|v| v.subcols(0, p.n_val))
                .collect();
            (0..p.subsets)
                .map(|k| {
                    let mut idx: Vec<usize> = (0..pool.len()).collect();
                    idx.shuffle(&mut stream(cfg.seed, STREAM_POOL + k as u64));
                    idx.truncate(p.n_train);
                    let pairs = pool.select(&idx);
                    Ok(SubsetPlan {
                        start: None,
                        states: pairs.inputs.clone(),
                        pairs,
                        val: val.clone(),
                    })
                })
                .collect()
        }
    }
}

/// Expresses training pairs in reduced coordinates.
fn reduce_pairs(pairs: &TrainingPairs, red: &PcaReducer) -> Result<TrainingPairs, CliError> {
    let next = match pairs.form {
        EstimatorForm::Direct => pairs.targets.clone(),
        EstimatorForm::SkipConnection => {
            let mut y = pairs.inputs.clone();
            for (a, b) in y.as_mut_slice().iter_mut().zip(pairs.targets.as_slice()) {
                *a += b;
            }
            y
        }
    };
    let inputs = red.reduce_all(&pairs.inputs)?;
    let mut targets = red.reduce_all(&next)?;
    if pairs.form == EstimatorForm::SkipConnection {
        for (t, x) in targets.as_mut_slice().iter_mut().zip(inputs.as_slice()) {
            *t -= x;
        }
    }
    Ok(TrainingPairs {
        inputs,
        targets,
        form: pairs.form,
        dt: pairs.dt,
    })
}

/// Test score of one trajectory and whether its rollout diverged.
pub fn score_trajectory(
    model: &KrrModel,
    truth: &Matrix,
    metric: &Metric,
    dt: f64,
) -> Result<(f64, bool), CliError> {
    let steps = truth.ncols() - 1;
    match *metric {
        Metric::Vpt { gamma, lyapunov } => {
            let cfg = VptConfig::for_truth(truth, gamma, lyapunov, dt)?;
            let mut tracker = VptTracker::new(&cfg);
            let r =
                model.rollout_until(truth.col(0), steps, |i, x| tracker.push(x, truth.col(i)))?;
            Ok((tracker.vpt(), r.diverged()))
        }
        Metric::Rmse | Metric::Wnrmse => {
            let r = model.rollout(truth.col(0), steps)?;
            if r.diverged() {
                return Ok((f64::INFINITY, true));
            }
            let score = if *metric == Metric::Rmse {
                rmse(&r.states, truth)?
            } else {
                let times: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
                wnrmse(&[r.states], std::slice::from_ref(truth), &times)?
            };
            Ok((score, false))
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path.display(), e))
}

fn write_search(path: &Path, records: &[SearchRecord]) -> Result<(), CliError> {
    write_records_csv(records, create(path)?)?;
    Ok(())
}

/// Everything `run` produced, for callers that want more than the files.
pub struct RunOutput {
    pub summary: Summary,
    pub dir: PathBuf,
    /// Per subset, per test trajectory scores.
    pub scores: Vec<Vec<f64>>,
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let data = data::build(cfg)?;
    run_with_data(cfg, &data)
}

pub fn run_with_data(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<RunOutput, CliError> {
    let dir = cfg.resolved_output_dir();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(dir.display(), e))?;
    let cfg_path = dir.join("config.toml");
    std::fs::write(&cfg_path, cfg.to_toml()).map_err(|e| CliError::io(cfg_path.display(), e))?;

    let p = &cfg.protocol;
    let test_metric = cfg.test_metric();
    let plans = plan_subsets(cfg, data)?;
    let mut subsets = Vec::with_capacity(plans.len());
    let mut all_scores = Vec::with_capacity(plans.len());
    let mut scores_csv = csv::Writer::from_writer(create(&dir.join("test_scores.csv"))?);
    scores_csv
        .write_record(["subset", "trajectory", "score", "status"])
        .map_err(csv_err)?;
    let mut pca_rank = None;

    for (k, plan) in plans.into_iter().enumerate() {
        let reducer = match &cfg.pca {
            Some(pc) => {
                let target = match (pc.rank, pc.energy) {
                    (Some(r), _) => PcaTarget::Rank(r),
                    (None, Some(e)) => PcaTarget::Energy(e),
                    (None, None) => unreachable!("validated config"),
                };
                let red = PcaReducer::fit(&plan.states, target)?;
                info!(
                    "subset {k}: PCA rank {} keeps {:.6} of the energy",
                    red.rank(),
                    red.energy()
                );
                pca_rank = Some(red.rank());
                Some(red)
            }
            None => None,
        };
        let (pairs, val, tests) = match &reducer {
            Some(red) => (
                reduce_pairs(&plan.pairs, red)?,
                plan.val
                    .iter()
                    .map(|v| red.reduce_all(v))
                    .collect::<Result<Vec<_>, _>>()?,
                data.test
                    .iter()
                    .map(|t| red.reduce_all(t))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            None => (plan.pairs, plan.val, data.test.clone()),
        };

        let dists = SqDistances::new(&pairs.inputs)?;
        let h = heuristic_with_distances(&dists, p.heuristic, pairs.dim(), &default_eta_grid())?;
        let range = make_range(&h, p.d_eps, p.d_lam)?;
        info!(
            "subset {k}: {} pairs, d* = {:.3}, eps* = {:.4e}, lam* = {:.4e}",
            pairs.len(),
            h.d_star,
            h.eps_star,
            h.lam_star
        );
        let spec = SearchSpec {
            range,
            trials: p.trials,
            metric: cfg.validation,
            seed: stream(cfg.seed, STREAM_SEARCH + k as u64).next_u64(),
        };
        let search_path = dir.join(format!("search_subset{k:03}.csv"));
        let outcome = match random_search_with_distances(&pairs, &dists, cfg.kernel, &val, &spec) {
            Ok(o) => o,
            Err(dmkrr_core::Error::NoViableModel { trials, records }) => {
                write_search(&search_path, &records)?;
                scores_csv
                    .flush()
                    .map_err(|e| CliError::io("test_scores.csv", e))?;
                return Err(CliError::NoModel { subset: k, trials });
            }
            Err(e) => return Err(e.into()),
        };
        write_search(&search_path, &outcome.records)?;
        let best = outcome.best_record().clone();
        let count = |s: SearchStatus| outcome.records.iter().filter(|r| r.status == s).count();
        info!(
            "subset {k}: best trial {} eps = {:.4e} lambda = {:.4e} score = {}",
            best.trial, best.eps, best.lam, best.score
        );

        let model = outcome.model;
        let results: Vec<(f64, bool)> = tests
            .par_iter()
            .map(|t| score_trajectory(&model, t, &test_metric, data.dt))
            .collect::<Result<_, _>>()?;
        let scores: Vec<f64> = results.iter().map(|r| r.0).collect();
        let diverged = results.iter().filter(|r| r.1).count();
        if diverged > 0 {
            warn!("subset {k}: {diverged} test rollouts diverged");
        }
        for (j, (s, d)) in results.iter().enumerate() {
            scores_csv
                .write_record([
                    k.to_string(),
                    j.to_string(),
                    s.to_string(),
                    if *d { "diverged" } else { "ok" }.to_string(),
                ])
                .map_err(csv_err)?;
        }
        let stats = Stats::of(&scores);
        info!(
            "subset {k}: test {} = {}",
            test_metric.name(),
            stats.table_cell()
        );

        if cfg.output.snapshots {
            let snap = Snapshot {
                model: model.clone(),
                reducer: reducer.clone(),
            };
            snap.save(dir.join(format!("model_subset{k:03}.dmkrr")))?;
        }
        if k == 0 && cfg.output.dump_trajectories > 0 {
            dump_trajectories(
                &dir,
                &model,
                reducer.as_ref(),
                &tests,
                cfg.output.dump_trajectories,
            )?;
        }

        if k == 0 && cfg.output.diffusion_coords > 0 {
            match model.dm_model() {
                Some(dm) => write_diffusion_coords(&dir, dm, cfg.output.diffusion_coords)?,
                None => warn!("diffusion coordinates need the DM kernel; skipped"),
            }
        }

        subsets.push(SubsetSummary {
            index: k,
            start: plan.start,
            pairs: pairs.len(),
            heuristic: h,
            range,
            best_trial: best.trial,
            eps: best.eps,
            lambda: best.lam,
            val_score: Num(best.score),
            ok_trials: count(SearchStatus::Ok),
            diverged_trials: count(SearchStatus::Diverged),
            failed_trials: count(SearchStatus::SolverFailed),
            solve_residual: Num(model.solve_residual()),
            test: stats,
            test_diverged: diverged,
        });
        all_scores.push(scores);
    }
    scores_csv
        .flush()
        .map_err(|e| CliError::io("test_scores.csv", e))?;

    let means: Vec<f64> = subsets.iter().map(|s| s.test.mean.0).collect();
    let pooled: Vec<f64> = all_scores.iter().flatten().copied().collect();
    let test = Stats::of(&means);
    let mut echo = cfg.clone();
    echo.output_dir = None;
    let summary = Summary {
        name: cfg.name.clone(),
        system: data.system.clone(),
        kernel: cfg.kernel,
        form: cfg.form,
        seed: cfg.seed,
        n_train: p.n_train,
        n_val: p.n_val,
        val_count: p.val_count,
        trials: p.trials,
        test_count: data.test.len(),
        test_len: p.test_len,
        dt: data.dt,
        dim: data.dim(),
        pca_rank,
        validation_metric: cfg.validation,
        test_metric,
        table: test.table_cell(),
        test,
        segments: Stats::of(&pooled),
        subsets,
        config: echo,
    };
    let path = dir.join("summary.json");
    std::fs::write(&path, summary.to_json()).map_err(|e| CliError::io(path.display(), e))?;
    info!(
        "{}: {} {} = {}",
        cfg.name,
        cfg.kernel,
        test_metric.name(),
        summary.table
    );
    Ok(RunOutput {
        summary,
        dir,
        scores: all_scores,
    })
}

/// Anchors with their leading DM eigenvectors; the first row holds the eigenvalues.
fn write_diffusion_coords(dir: &Path, dm: &DmKernelModel, m: usize) -> Result<(), CliError> {
    let pairs = dm.eigen(m.min(dm.len()))?;
    let mut w = csv::Writer::from_writer(create(&dir.join("diffusion_coords.csv"))?);
    let d = dm.anchors().nrows();
    let mut header = vec!["anchor".to_string()];
    header.extend((0..d).map(|i| format!("x{i}")));
    header.extend((0..pairs.values.len()).map(|i| format!("phi{i}")));
    w.write_record(&header).map_err(csv_err)?;
    let mut row = vec!["eigenvalue".to_string()];
    row.extend((0..d).map(|_| String::new()));
    row.extend(pairs.values.iter().map(|v| v.to_string()));
    w.write_record(&row).map_err(csv_err)?;
    for (j, x) in dm.anchors().columns().enumerate() {
        let mut row = vec![j.to_string()];
        row.extend(x.iter().map(|v| v.to_string()));
        row.extend(pairs.vectors.iter().map(|v| v[j].to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()
        .map_err(|e| CliError::io("diffusion_coords.csv", e))?;
    Ok(())
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Report(format!("CSV write failed: {e}"))
}

/// Writes truth and prediction of the first `count` test trajectories plus a gnuplot script.
fn dump_trajectories(
    dir: &Path,
    model: &KrrModel,
    reducer: Option<&PcaReducer>,
    tests: &[Matrix],
    count: usize,
) -> Result<(), CliError> {
    let count = count.min(tests.len());
    let mut w = csv::Writer::from_writer(create(&dir.join("trajectories.csv"))?);
    let lift = |m: &Matrix| -> Result<Matrix, CliError> {
        match reducer {
            Some(r) => Ok(r.reconstruct_all(m)?),
            None => Ok(m.clone()),
        }
    };
    let dim = lift(&tests[0].subcols(0, 1))?.nrows();
    let mut header = vec!["trajectory".to_string(), "step".into(), "source".into()];
    header.extend((0..dim).map(|i| format!("x{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for (j, truth) in tests[..count].iter().enumerate() {
        let r = model.rollout(truth.col(0), truth.ncols() - 1)?;
        for (source, m) in [("truth", lift(truth)?), ("pred", lift(&r.states)?)] {
            for (step, c) in m.columns().enumerate() {
                let mut row = vec![j.to_string(), step.to_string(), source.to_string()];
                row.extend(c.iter().map(|v| v.to_string()));
                w.write_record(&row).map_err(csv_err)?;
            }
        }
    }
    w.flush().map_err(|e| CliError::io("trajectories.csv", e))?;
    let script = format!(
        "# gnuplot -p plot.gp\n\
         set datafile separator ','\n\
         set xlabel 'step'\n\
         set ylabel 'x0'\n\
         plot for [s=0:{last}] 'trajectories.csv' every ::1 using ((column(1)==s && strcol(3) eq 'truth') ? $2 : 1/0):4 with lines lc s+1 title sprintf('truth %d', s), \\\n\
         \x20    for [s=0:{last}] 'trajectories.csv' every ::1 using ((column(1)==s && strcol(3) eq 'pred') ? $2 : 1/0):4 with lines lc s+1 dt 2 title sprintf('pred %d', s)\n",
        last = count - 1
    );
    let path = dir.join("plot.gp");
    std::fs::write(&path, script).map_err(|e| CliError::io(path.display(), e))?;
    Ok(())
}
