//! Fan-out of independent paths across worker threads.
//!
//! Results come back ordered by path index regardless of scheduling, so every
//! statistic merged from them is reproducible for any worker count.

use crate::error::Result;

/// Runs `f(0..n)` on up to `workers` threads and returns the results in index order.
/// The first error by index wins.
pub fn par_map<T, F>(n: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    run(n, workers, f).into_iter().collect()
}

#[cfg(feature = "parallel")]
fn run<T, F>(n: usize, workers: usize, f: F) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    if workers <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        Err(_) => (0..n).map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn run<T, F>(n: usize, _workers: usize, f: F) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..n).map(f).collect()
}
