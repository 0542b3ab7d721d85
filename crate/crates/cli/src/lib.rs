//! Experiment runner for kernel ridge regression surrogates.
//!
//! Configs describe a benchmark system, a validation protocol and the test
//! metric. [`run::run`] executes one config and writes a results bundle;
//! [`report`] merges bundles into comparison tables.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod error;
pub mod report;
pub mod run;
pub mod summary;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use summary::{Stats, Summary};

use std::path::{Path, PathBuf};

/// Generates the datasets of `cfg` into `dir`.
pub fn generate(cfg: &ExperimentConfig, dir: &Path) -> Result<data::Manifest, CliError> {
    if matches!(cfg.system, config::SystemConfig::External { .. }) {
        return Err(CliError::Config(
            "`generate` needs a built-in system, not external data".into(),
        ));
    }
    let d = data::build(cfg)?;
    data::save(&d, cfg, dir)
}

/// Default dataset directory of a config.
pub fn data_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.resolved_output_dir().join("data")
}
