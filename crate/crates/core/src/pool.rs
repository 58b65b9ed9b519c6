//! Worker pool sized by `GRAD_ALIGN_THREADS` (unset or 0 means one worker
//! per available core).

use std::ops::Range;
use std::sync::OnceLock;

pub const THREADS_ENV: &str = "GRAD_ALIGN_THREADS";

pub fn worker_count() -> usize {
    let requested = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    if requested > 0 {
        requested
    } else {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    }
}

fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(worker_count())
            .build()
            .expect("thread pool")
    })
}

/// Apply `f` to consecutive chunks of `0..len` and return the results in
/// chunk order, whatever the number of workers.
pub fn map_chunks<T, F>(len: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    use rayon::prelude::*;
    let chunk = chunk.max(1);
    let ranges: Vec<Range<usize>> = (0..len.div_ceil(chunk))
        .map(|c| c * chunk..((c + 1) * chunk).min(len))
        .collect();
    if ranges.len() <= 1 || worker_count() == 1 {
        return ranges.into_iter().map(f).collect();
    }
    pool().install(|| ranges.into_par_iter().map(f).collect())
}
