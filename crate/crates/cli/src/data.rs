//! Dataset generation and loading for each benchmark system.

use std::path::Path;

use dmkrr_core::systems::{
    embed_trajectory, gen_ks, gen_lorenz63, gen_rigid_body, rigid_body_path, segment, sine_profile,
    sphere_grid, sphere_random, KsParams, Lorenz63Params, RigidBodyParams, TrajectoryDataset,
};
use dmkrr_core::Matrix;
use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SystemConfig};
use crate::error::CliError;

// RNG streams derived from the experiment seed.
const STREAM_TRAIN_IC: u64 = 10;
const STREAM_TEST_IC: u64 = 11;
const STREAM_VAL_IC: u64 = 12;

/// Where training and validation data come from.
#[derive(Clone, Debug, PartialEq)]
pub enum TrainSource {
    /// One long trajectory, sliced into subsets.
    Series(Matrix),
    /// Independent training orbits plus dedicated validation trajectories.
    Ensemble {
        train: Vec<Matrix>,
        val: Vec<Matrix>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentData {
    pub system: String,
    pub dt: f64,
    pub train: TrainSource,
    pub test: Vec<Matrix>,
}

impl ExperimentData {
    pub fn dim(&self) -> usize {
        self.test[0].nrows()
    }
}

pub(crate) fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

fn lorenz_ic(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [
        rng.random_range(-15.0..15.0),
        rng.random_range(-15.0..15.0),
        rng.random_range(5.0..45.0),
    ]
}

fn take_tests(long: &Matrix, count: usize, len: usize) -> Result<Vec<Matrix>, CliError> {
    let segs = segment(long, len)?;
    if segs.len() < count {
        return Err(CliError::Data(format!(
            "test trajectory yields {} segments of {len}, need {count}",
            segs.len()
        )));
    }
    Ok(segs.into_iter().take(count).collect())
}

/// Builds the data for `cfg`, generating it or loading it from disk.
pub fn build(cfg: &ExperimentConfig) -> Result<ExperimentData, CliError> {
    let p = &cfg.protocol;
    let seed = cfg.seed;
    let data = match &cfg.system {
        SystemConfig::Lorenz63 {
            dt,
            train_steps,
            discard,
        } => {
            let params = Lorenz63Params::default();
            let train_ic = lorenz_ic(&mut stream(seed, STREAM_TRAIN_IC));
            let test_ic = lorenz_ic(&mut stream(seed, STREAM_TEST_IC));
            info!("integrating Lorenz-63 training trajectory from {train_ic:?}");
            let train = gen_lorenz63(&params, train_ic, train_steps + discard, *dt, *discard)?;
            let test_states = p.test_count * p.test_len;
            let test_long = gen_lorenz63(&params, test_ic, test_states + discard, *dt, *discard)?;
            ExperimentData {
                system: "lorenz63".into(),
                dt: *dt,
                train: TrainSource::Series(train),
                test: take_tests(&test_long, p.test_count, p.test_len)?,
            }
        }
        SystemConfig::Torus {
            n,
            dt,
            train_ics,
            horizon,
        } => {
            let rb = RigidBodyParams::default();
            info!("integrating {train_ics} rigid-body orbits");
            let orbits = gen_rigid_body(&rb, &sphere_grid(*train_ics), *dt, *horizon)?;
            let embed = |trajs: Vec<Matrix>| -> Result<Vec<Matrix>, CliError> {
                trajs
                    .iter()
                    .map(|t| embed_trajectory(t, *n).map_err(CliError::from))
                    .collect()
            };
            let paths = |count: usize, len: usize, s: u64| -> Result<Vec<Matrix>, CliError> {
                let ics = sphere_random(count, &mut stream(seed, s));
                ics.iter()
                    .map(|z| rigid_body_path(&rb, *z, *dt, len - 1).map_err(CliError::from))
                    .collect()
            };
            ExperimentData {
                system: "torus".into(),
                dt: *dt,
                train: TrainSource::Ensemble {
                    train: embed(orbits)?,
                    val: embed(paths(p.val_count, p.n_val, STREAM_VAL_IC)?)?,
                },
                test: embed(paths(p.test_count, p.test_len, STREAM_TEST_IC)?)?,
            }
        }
        SystemConfig::KsChaotic {
            raw_steps,
            discard_raw,
            downsample,
            train_mode,
            test_mode,
        } => {
            let params = KsParams::chaotic();
            let dt = params.dt_solver * *downsample as f64;
            info!("integrating KS chaotic training data, {raw_steps} solver steps");
            let train = gen_ks(
                &sine_profile(&params, *train_mode),
                &params,
                *raw_steps,
                *downsample,
                *discard_raw,
            )?;
            let test_raw = discard_raw + p.test_count * p.test_len * downsample;
            let test_long = gen_ks(
                &sine_profile(&params, *test_mode),
                &params,
                test_raw,
                *downsample,
                *discard_raw,
            )?;
            ExperimentData {
                system: "ks_chaotic".into(),
                dt,
                train: TrainSource::Series(train),
                test: take_tests(&test_long, p.test_count, p.test_len)?,
            }
        }
        SystemConfig::KsTraveling {
            raw_steps,
            discard_raw,
            downsample,
            train_samples,
            stride,
        } => {
            let params = KsParams::traveling();
            let ic: Vec<f64> = params
                .grid_points()
                .iter()
                .map(|s| s.sin() + 0.3 * (2.0 * s).cos() + 0.1 * (3.0 * s).sin())
                .collect();
            info!("integrating KS traveling data, {raw_steps} solver steps");
            let all = gen_ks(&ic, &params, *raw_steps, *downsample, *discard_raw)?;
            if *train_samples >= all.ncols() {
                return Err(CliError::Data(format!(
                    "{train_samples} training samples leave no test data out of {}",
                    all.ncols()
                )));
            }
            let idx: Vec<usize> = (0..*train_samples).step_by(*stride).collect();
            let train = all.select_columns(&idx);
            let rest = all.subcols(*train_samples, all.ncols() - train_samples);
            let rest = rest.stride_columns(*stride);
            ExperimentData {
                system: "ks_traveling".into(),
                dt: params.dt_solver * (*downsample * *stride) as f64,
                train: TrainSource::Series(train),
                test: take_tests(&rest, p.test_count, p.test_len)?,
            }
        }
        SystemConfig::External { path } => load(path)?,
    };
    Ok(data)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub name: String,
    pub role: String,
    pub trajectories: usize,
    pub states: usize,
    pub dim: usize,
}

/// Written next to generated datasets; enough to regenerate them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator: String,
    pub system: String,
    pub layout: String,
    pub seed: u64,
    pub dt: f64,
    pub config: ExperimentConfig,
    pub files: Vec<ManifestFile>,
}

pub const MANIFEST: &str = "manifest.json";

/// Writes the datasets and manifest into `dir`.
pub fn save(
    data: &ExperimentData,
    cfg: &ExperimentConfig,
    dir: &Path,
) -> Result<Manifest, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    let mut files = Vec::new();
    let mut write = |role: &str, trajs: Vec<Matrix>| -> Result<(), CliError> {
        let name = format!("{role}.dmkrr");
        let ds = TrajectoryDataset::new(trajs, data.dt, &data.system, cfg.seed)?;
        files.push(ManifestFile {
            name: name.clone(),
            role: role.into(),
            trajectories: ds.len(),
            states: ds.total_states(),
            dim: ds.dim(),
        });
        let path = dir.join(&name);
        ds.save(&path).map_err(CliError::from)
    };
    let layout = match &data.train {
        TrainSource::Series(t) => {
            write("train", vec![t.clone()])?;
            "series"
        }
        TrainSource::Ensemble { train, val } => {
            write("train", train.clone())?;
            write("val", val.clone())?;
            "ensemble"
        }
    };
    write("test", data.test.clone())?;
    let manifest = Manifest {
        generator: format!("dmkrr {}", env!("CARGO_PKG_VERSION")),
        system: data.system.clone(),
        layout: layout.into(),
        seed: cfg.seed,
        dt: data.dt,
        config: cfg.clone(),
        files,
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io(path.display(), e))?;
    Ok(manifest)
}

/// Loads a directory written by [`save`].
pub fn load(dir: &Path) -> Result<ExperimentData, CliError> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let m: Manifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let read = |role: &str| -> Result<Vec<Matrix>, CliError> {
        let f = m
            .files
            .iter()
            .find(|f| f.role == role)
            .ok_or_else(|| CliError::Data(format!("manifest lists no {role} file")))?;
        let ds = TrajectoryDataset::load(dir.join(&f.name))
            .map_err(|e| CliError::Data(e.to_string()))?;
        if ds.dt() != m.dt || ds.system() != m.system {
            return Err(CliError::Data(format!(
                "{} does not match the manifest",
                f.name
            )));
        }
        Ok(ds.into_trajectories())
    };
    let train = match m.layout.as_str() {
        "series" => {
            let mut t = read("train")?;
            if t.len() != 1 {
                return Err(CliError::Data(
                    "series layout needs exactly one training trajectory".into(),
                ));
            }
            TrainSource::Series(t.remove(0))
        }
        "ensemble" => TrainSource::Ensemble {
            train: read("train")?,
            val: read("val")?,
        },
        other => return Err(CliError::Data(format!("unknown layout `{other}`"))),
    };
    let test = read("test")?;
    if test.is_empty() {
        return Err(CliError::Data("no test trajectories".into()));
    }
    Ok(ExperimentData {
        system: m.system,
        dt: m.dt,
        train,
        test,
    })
}
