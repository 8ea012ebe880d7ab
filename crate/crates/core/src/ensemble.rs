//! Deterministic parallel fan-out over per-trajectory random streams.

use rayon::prelude::*;

use crate::rng::RngStream;

/// Runs `f(i, stream_i)` for `i in 0..count`, where stream `i` is
/// `RngStream::new(seed, i)`. Results come back in index order, so the output
/// does not depend on the size of the worker pool.
pub fn run_streams<T, F>(seed: u64, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut RngStream) -> T + Sync + Send,
{
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(seed, i as u64);
            f(i, &mut rng)
        })
        .collect()
}

/// Fallible variant of [`run_streams`]; the first error in index order wins.
pub fn try_run_streams<T, E, F>(seed: u64, count: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize, &mut RngStream) -> Result<T, E> + Sync + Send,
{
    run_streams(seed, count, f).into_iter().collect()
}
