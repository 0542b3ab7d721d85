//! Hyperparameter selection: geometric reference values and random search.

mod heuristic;
mod search;

pub use heuristic::{
    default_eta_grid, dimension_scan, heuristic_reference, heuristic_with_distances, log_grid,
    make_range, min_eigenvalue, scan_with_distances, DimensionCurve, HeuristicMode,
    HeuristicResult, SearchRange,
};
pub use search::{
    compare_records, random_search, random_search_with_distances, sample_trial, select_best,
    validation_score, write_records_csv, Metric, SearchOutcome, SearchRecord, SearchSpec,
    SearchStatus, ValidationScore,
};
