//! Parallel map helpers.
//!
//! With the `parallel` feature (default) the data-parallel sections of
//! the crate — feature extraction, window scoring, experiment folds —
//! fan out over rayon. Without it everything runs sequentially through
//! the same call sites. Results are collected in input order, and no
//! floating-point reduction crosses tasks, so both schedules produce
//! bit-identical output.

use crate::error::Result;

#[cfg(feature = "parallel")]
pub(crate) fn try_map<T, U, F>(items: &[T], f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn try_map<T, U, F>(items: &[T], f: F) -> Result<Vec<U>>
where
    F: Fn(&T) -> Result<U>,
{
    items.iter().map(f).collect()
}

/// Caps the worker pool used by the parallel sections. `0` keeps the
/// default (one worker per core). Without the `parallel` feature this
/// is a no-op. Later calls after the pool exists are ignored.
pub fn configure_threads(n: usize) {
    #[cfg(feature = "parallel")]
    {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
    }
}
