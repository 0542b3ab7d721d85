//! Experiment configuration files.
//!
//! Configs are TOML. Any field can be overridden from the command line with
//! `--set dotted.key=value`, where the value is parsed as a TOML literal and
//! falls back to a plain string.

use std::path::{Path, PathBuf};

use dmkrr_core::validation::HeuristicMode;
use dmkrr_core::{EstimatorForm, KernelKind, Metric};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Environment variable holding the root for relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "DMKRR_OUTPUT_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub kernel: KernelKind,
    pub form: EstimatorForm,
    /// Relative paths resolve against `$DMKRR_OUTPUT_ROOT`, else `runs/`.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub system: SystemConfig,
    pub protocol: Protocol,
    pub validation: Metric,
    /// Defaults to the validation metric.
    #[serde(default)]
    pub test_metric: Option<Metric>,
    #[serde(default)]
    pub pca: Option<PcaConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    /// Rigid-body orbits on the sphere mapped to a torus in `R^n`.
    Torus {
        n: usize,
        dt: f64,
        /// Grid initial conditions for training; each orbit is cut after one period.
        train_ics: usize,
        /// Integration horizon in steps before the period cut.
        horizon: usize,
    },
    Lorenz63 {
        dt: f64,
        /// States kept in the training trajectory.
        train_steps: usize,
        /// Transient steps dropped from both trajectories.
        discard: usize,
    },
    KsChaotic {
        raw_steps: usize,
        discard_raw: usize,
        downsample: usize,
        /// Training profile `sin(2 pi m s / L)`.
        train_mode: f64,
        test_mode: f64,
    },
    KsTraveling {
        raw_steps: usize,
        discard_raw: usize,
        downsample: usize,
        /// Leading samples reserved for training and validation.
        train_samples: usize,
        /// Sampling stride for both training and test data.
        stride: usize,
    },
    /// Directory written by `dmkrr generate`.
    External { path: PathBuf },
}

impl SystemConfig {
    pub fn tag(&self) -> &'static str {
        match self {
            SystemConfig::Torus { .. } => "torus",
            SystemConfig::Lorenz63 { .. } => "lorenz63",
            SystemConfig::KsChaotic { .. } => "ks_chaotic",
            SystemConfig::KsTraveling { .. } => "ks_traveling",
            SystemConfig::External { .. } => "external",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetMode {
    /// Random windows of `n_train + 2 n_val` states.
    Windows,
    /// Training on the leading states, validation windows anywhere in the training block.
    Prefix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Protocol {
    /// Training states per subset (`N`); ensembles use `N` pairs.
    pub n_train: usize,
    /// States per validation trajectory.
    pub n_val: usize,
    pub val_count: usize,
    pub subsets: usize,
    pub trials: usize,
    pub d_eps: f64,
    pub d_lam: f64,
    pub heuristic: HeuristicMode,
    pub test_count: usize,
    /// States per test trajectory.
    pub test_len: usize,
    #[serde(default = "default_subset_mode")]
    pub subset_mode: SubsetMode,
}

fn default_subset_mode() -> SubsetMode {
    SubsetMode::Windows
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcaConfig {
    #[serde(default)]
    pub rank: Option<usize>,
    #[serde(default)]
    pub energy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Test trajectories of the first subset dumped for plotting.
    #[serde(default)]
    pub dump_trajectories: usize,
    #[serde(default = "yes")]
    pub snapshots: bool,
    /// Leading DM eigenvectors of the first subset written as diffusion coordinates.
    #[serde(default)]
    pub diffusion_coords: usize,
}

fn yes() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dump_trajectories: 0,
            snapshots: true,
            diffusion_coords: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut doc: toml::Table = text
            .parse()
            .map_err(|e| CliError::Config(format!("invalid TOML: {e}")))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: Self = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn test_metric(&self) -> Metric {
        self.test_metric.unwrap_or(self.validation)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let p = &self.protocol;
        for (name, v) in [
            ("protocol.n_train", p.n_train),
            ("protocol.n_val", p.n_val),
            ("protocol.val_count", p.val_count),
            ("protocol.subsets", p.subsets),
            ("protocol.trials", p.trials),
            ("protocol.test_count", p.test_count),
            ("protocol.test_len", p.test_len),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if p.n_train < 2 || p.n_val < 2 || p.test_len < 2 {
            return bad("trajectories need at least 2 states".into());
        }
        if !(p.d_eps > 0.0 && p.d_eps.is_finite()) {
            return bad(format!("protocol.d_eps must be positive, got {}", p.d_eps));
        }
        if !(p.d_lam > 0.0 && p.d_lam <= 1.0) {
            return bad(format!("protocol.d_lam must be in (0, 1], got {}", p.d_lam));
        }
        for m in [self.validation, self.test_metric()] {
            if let Metric::Vpt { gamma, lyapunov } = m {
                if !(gamma > 0.0 && lyapunov > 0.0) {
                    return bad("VPT needs positive gamma and lyapunov".into());
                }
            }
        }
        if let Some(pca) = &self.pca {
            match (pca.rank, pca.energy) {
                (Some(r), None) if r > 0 => {}
                (None, Some(e)) if e > 0.0 && e <= 1.0 => {}
                _ => return bad("pca needs exactly one of rank > 0 or energy in (0, 1]".into()),
            }
        }
        match &self.system {
            SystemConfig::Torus {
                n,
                dt,
                train_ics,
                horizon,
            } => {
                if *n < 3 || n % 2 == 0 {
                    return bad(format!("torus dimension must be odd and >= 3, got {n}"));
                }
                if !(*dt > 0.0) || *train_ics == 0 || *horizon < 2 {
                    return bad("torus needs dt > 0, train_ics > 0 and horizon >= 2".into());
                }
            }
            SystemConfig::Lorenz63 {
                dt, train_steps, ..
            } => {
                if !(*dt > 0.0) || *train_steps < 2 {
                    return bad("lorenz63 needs dt > 0 and train_steps >= 2".into());
                }
            }
            SystemConfig::KsChaotic {
                raw_steps,
                discard_raw,
                downsample,
                ..
            } => {
                if *downsample == 0 || discard_raw >= raw_steps {
                    return bad(
                        "ks_chaotic needs downsample > 0 and discard_raw < raw_steps".into(),
                    );
                }
            }
            SystemConfig::KsTraveling {
                raw_steps,
                discard_raw,
                downsample,
                train_samples,
                stride,
            } => {
                if *downsample == 0
                    || *stride == 0
                    || discard_raw >= raw_steps
                    || *train_samples < 2
                {
                    return bad(
                        "ks_traveling needs positive downsample, stride and train_samples".into(),
                    );
                }
            }
            SystemConfig::External { .. } => {}
        }
        Ok(())
    }

    /// Output directory after applying the output root.
    pub fn resolved_output_dir(&self) -> PathBuf {
        let dir = self
            .output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(&self.name));
        if dir.is_absolute() {
            return dir;
        }
        let root = std::env::var_os(OUTPUT_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"));
        root.join(dir)
    }
}

/// Applies one `dotted.key=value` override to a TOML table.
pub fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not key=value")))?;
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key `{key}`")));
    }
    let (last, parents) = parts.split_last().expect("non-empty key");
    let mut table = doc;
    for p in parents {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{p}` in `{key}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
