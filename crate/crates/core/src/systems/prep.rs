//! Slicing long trajectories into training, validation and test pieces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::matrix::Matrix;

/// Non-overlapping consecutive segments of `seg_len` states; the remainder is dropped.
pub fn segment(traj: &Matrix, seg_len: usize) -> Result<Vec<Matrix>> {
    if seg_len == 0 {
        return Err(invalid("seg_len", "must be positive"));
    }
    if seg_len > traj.ncols() {
        return Err(invalid(
            "seg_len",
            format!("{seg_len} exceeds trajectory length {}", traj.ncols()),
        ));
    }
    Ok((0..traj.ncols() / seg_len)
        .map(|k| traj.subcols(k * seg_len, seg_len))
        .collect())
}

/// One training window with its validation trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct Subset {
    /// Offset of the window in the source trajectory.
    pub start: usize,
    /// First `n_train` states of the window.
    pub train: Matrix,
    /// Validation start offsets relative to the window start.
    pub val_starts: Vec<usize>,
    pub val: Vec<Matrix>,
}

/// Draws `count` windows of `n_train + 2 n_val` states.
///
/// Window starts are uniform over the trajectory. Inside each window,
/// `val_count` validation trajectories of `n_val` states start uniformly in
/// `[n_train, n_train + n_val]`, so they overlap and stay in the trailing block.
pub fn sample_subsets(
    traj: &Matrix,
    count: usize,
    n_train: usize,
    n_val: usize,
    val_count: usize,
    seed: u64,
) -> Result<Vec<Subset>> {
    if n_train == 0 || n_val == 0 {
        return Err(invalid(
            "n_train",
            "training and validation lengths must be positive",
        ));
    }
    let window = n_train + 2 * n_val;
    if window > traj.ncols() {
        return Err(invalid(
            "window",
            format!(
                "window of {window} states exceeds trajectory length {}",
                traj.ncols()
            ),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let start = rng.random_range(0..=traj.ncols() - window);
        let val_starts: Vec<usize> = (0..val_count)
            .map(|_| rng.random_range(n_train..=n_train + n_val))
            .collect();
        out.push(Subset {
            start,
            train: traj.subcols(start, n_train),
            val: val_starts
                .iter()
                .map(|&s| traj.subcols(start + s, n_val))
                .collect(),
            val_starts,
        });
    }
    Ok(out)
}
