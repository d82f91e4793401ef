//! Data-parallel map over indexed work units.
//!
//! With the `parallel` feature the units run on the rayon pool; without it
//! they run in order on the calling thread. The output is always in index
//! order, so any reduction over it is schedule-independent.

#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..count).map(f).collect()
}

/// Runs `f` with at most `threads` workers (0 keeps the global pool).
/// A no-op wrapper in sequential builds.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    #[cfg(feature = "parallel")]
    if threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("failed to build worker pool");
        return pool.install(f);
    }
    let _ = threads;
    f()
}

/// Split `total` items into fixed-size chunks: `(start, len)` per chunk.
pub(crate) fn chunks(total: usize, chunk: usize) -> Vec<(usize, usize)> {
    (0..total.div_ceil(chunk))
        .map(|c| {
            let start = c * chunk;
            (start, chunk.min(total - start))
        })
        .collect()
}
