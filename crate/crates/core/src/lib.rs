//! Kernel ridge regression surrogates for dynamical systems.
//!
//! Models learn the one-step map `x(t) -> x(t + dt)` from trajectory data with
//! either a Gaussian RBF kernel or a diffusion-maps kernel, and are tuned by a
//! random search that scores multi-step rollouts.
//!
//! States are stored one per column in [`Matrix`]. Dense linear algebra runs
//! single-threaded, and parallel loops write to fixed slots, so results do not
//! depend on the size of the thread pool.

// `!(x > 0.0)` style guards are meant to catch NaN too; index loops mirror the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

mod binio;
pub mod error;
pub mod kernels;
pub mod krr;
pub mod matrix;
pub mod metrics;
pub mod reduction;
pub mod snapshot;
pub mod systems;
pub mod validation;

pub use error::{Error, Result};
pub use kernels::{gram, DmKernelModel, KernelKind, SqDistances};
pub use krr::{build_pairs, EstimatorForm, KrrModel, Rollout, RolloutStatus, TrainingPairs};
pub use matrix::Matrix;
pub use metrics::{rmse, vpt, wnrmse, VptConfig};
pub use reduction::{PcaReducer, PcaTarget};
pub use snapshot::Snapshot;
pub use systems::TrajectoryDataset;
pub use validation::{
    HeuristicMode, HeuristicResult, Metric, SearchOutcome, SearchRange, SearchRecord, SearchSpec,
    SearchStatus,
};
