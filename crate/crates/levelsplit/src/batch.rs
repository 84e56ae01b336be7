//! Parallel batches of independent runs.
//!
//! Run `i` is seeded from `(master_seed, i)` alone and results are collected
//! in run order, so the output does not depend on the number of workers.

use std::time::Instant;

use levelsplit_core::rng::run_seed;
use levelsplit_core::{run_sa, ImportanceScheme, ModelSpec, SampleRecord, SplittingMechanism};
use rayon::prelude::*;

pub fn run_batch(
    spec: &ModelSpec,
    scheme: &ImportanceScheme,
    mechanism: &SplittingMechanism,
    runs: u64,
    master_seed: u64,
    workers: usize,
    particle_cap: usize,
) -> levelsplit_core::Result<Vec<SampleRecord>> {
    let one = |i: u64| {
        run_sa(spec, scheme, mechanism, run_seed(master_seed, i), particle_cap).map(|mut r| {
            r.run = i;
            r
        })
    };
    if workers <= 1 {
        return (0..runs).map(one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("failed to start worker pool");
    pool.install(|| (0..runs).into_par_iter().map(one).collect())
}

/// [`run_batch`] together with its wall time in seconds.
pub fn run_timed_batch(
    spec: &ModelSpec,
    scheme: &ImportanceScheme,
    mechanism: &SplittingMechanism,
    runs: u64,
    master_seed: u64,
    workers: usize,
    particle_cap: usize,
) -> levelsplit_core::Result<(Vec<SampleRecord>, f64)> {
    let t = Instant::now();
    let records = run_batch(spec, scheme, mechanism, runs, master_seed, workers, particle_cap)?;
    Ok((records, t.elapsed().as_secs_f64()))
}

/// Worker count used when none is configured.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}
