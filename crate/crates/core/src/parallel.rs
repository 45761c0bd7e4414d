//! Order-preserving parallel map over independent work items.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Applies `f` to every item on a pool of `workers` threads and returns the
/// results in input order. `workers == 1` runs inline on the caller's thread.
pub fn par_map<T, R, F>(items: &[T], workers: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if workers == 0 {
        return Err(Error::Config("workers must be at least 1".into()));
    }
    if workers == 1 || items.len() <= 1 {
        return Ok(items.iter().map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}
