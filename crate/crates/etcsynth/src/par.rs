//! Order-preserving maps over independent work items.
//!
//! Batch jobs (plant sweeps, Monte Carlo robustness checks, trajectory
//! batches) funnel through [`batch_map`] so the whole crate switches between
//! the rayon thread pool and a plain sequential loop with the `parallel`
//! feature. Results come back in input order either way, and callers that
//! need randomness derive a per-item generator from the item index, so the
//! two paths produce identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Sequential map, always compiled. Baseline for the benches.
pub fn serial_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(usize, &T) -> R,
{
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Map over `items`, in parallel when the `parallel` feature is enabled.
#[cfg(feature = "parallel")]
pub fn batch_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Map over `items`, in parallel when the `parallel` feature is enabled.
#[cfg(not(feature = "parallel"))]
pub fn batch_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(usize, &T) -> R,
{
    serial_map(items, f)
}

/// Cap the worker count of the global thread pool. Call once, before the
/// first parallel job; later calls are ignored. No-op without `parallel`.
pub fn configure_threads(jobs: usize) {
    #[cfg(feature = "parallel")]
    {
        if jobs > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = jobs;
}
