//! Deterministic parallel fan-out over independent trajectories.
//!
//! Trajectory `i` of a run with master seed `s` draws from its own stream,
//! seeded by [`trajectory_seed`]`(s, i)`. Trajectories are grouped into
//! fixed batches of [`BATCH_SIZE`]; each batch folds into its own
//! accumulator, and the batch accumulators are merged in index order. Batch
//! boundaries never depend on the worker count, so floating-point results are
//! bit-identical for any thread pool.

use rand::SeedableRng;
use rayon::prelude::*;

use crate::error::Result;
use crate::trajectory::TrajectoryRng;

pub const BATCH_SIZE: usize = 64;

/// Accumulators that can absorb another one of the same kind.
pub trait Merge {
    fn merge(&mut self, other: Self);
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trajectory `index` under `master_seed`.
pub fn trajectory_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master_seed) ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

pub fn trajectory_rng(master_seed: u64, index: u64) -> TrajectoryRng {
    TrajectoryRng::seed_from_u64(trajectory_seed(master_seed, index))
}

/// Stream for drawing the single network of a fixed-unitary run. It uses
/// index `u64::MAX`, which no trajectory reaches.
pub fn network_rng(master_seed: u64) -> TrajectoryRng {
    trajectory_rng(master_seed, u64::MAX)
}

/// Folds `n_samples` trajectories into a single accumulator. `step` receives
/// the accumulator of the current batch, the trajectory index and that
/// trajectory's random stream.
pub fn fold_trajectories<A, I, F>(n_samples: usize, master_seed: u64, init: I, step: F) -> Result<A>
where
    A: Merge + Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, u64, &mut TrajectoryRng) -> Result<()> + Sync,
{
    let n_batches = n_samples.div_ceil(BATCH_SIZE);
    let partials: Vec<Result<A>> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut acc = init();
            let start = b * BATCH_SIZE;
            let end = (start + BATCH_SIZE).min(n_samples);
            for idx in start..end {
                let mut rng = trajectory_rng(master_seed, idx as u64);
                step(&mut acc, idx as u64, &mut rng)?;
            }
            Ok(acc)
        })
        .collect();
    let mut total = init();
    for p in partials {
        total.merge(p?);
    }
    Ok(total)
}

/// Runs `f` for every trajectory and returns the results in index order.
pub fn map_trajectories<T, F>(n_samples: usize, master_seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, &mut TrajectoryRng) -> Result<T> + Sync,
{
    (0..n_samples)
        .into_par_iter()
        .map(|idx| {
            let mut rng = trajectory_rng(master_seed, idx as u64);
            f(idx as u64, &mut rng)
        })
        .collect()
}
