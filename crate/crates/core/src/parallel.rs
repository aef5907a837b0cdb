//! Thread-pool plumbing. With the `parallel` feature the data-parallel loops run
//! on rayon; a pool of one thread (or building without the feature) takes the
//! sequential path. Both paths produce bit-identical results.

use std::ops::Range;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "BIASWEAT_THREADS";

/// Explicit request, else `BIASWEAT_THREADS`, else every available core.
pub fn resolve_threads(requested: Option<usize>) -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    match (requested, cap) {
        (Some(n), Some(cap)) => n.min(cap).max(1),
        (Some(n), None) => n.max(1),
        (None, Some(cap)) => cap.min(available),
        (None, None) => available,
    }
}

/// Runs `f` with `threads` workers available to the parallel helpers below.
#[cfg(feature = "parallel")]
pub fn install<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
    {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn install<R: Send>(_threads: usize, f: impl FnOnce() -> R + Send) -> R {
    f()
}

/// Number of workers visible to the current call.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

pub fn is_parallel() -> bool {
    current_threads() > 1
}

/// Order-preserving map.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}

/// Sums integer contributions over an index range in fixed-size blocks.
pub fn sum_range<F>(range: Range<u64>, block: u64, f: F) -> u64
where
    F: Fn(Range<u64>) -> u64 + Sync + Send,
{
    let block = block.max(1);
    let start = range.start;
    let blocks = (range.end.saturating_sub(start)).div_ceil(block);
    let chunk = |b: u64| {
        let lo = start + b * block;
        f(lo..(lo + block).min(range.end))
    };
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return (0..blocks).into_par_iter().map(chunk).sum();
    }
    (0..blocks).map(chunk).sum()
}
