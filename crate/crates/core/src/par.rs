//! Data-parallel helpers with a sequential fallback.
//!
//! Work is always split into fixed-size chunks whose results are returned in
//! chunk order, so the parallel and sequential paths produce bit-identical
//! output regardless of thread count.

/// Execution strategy for the data-parallel inner loops.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Exec {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is enabled; otherwise
    /// identical to [`Exec::Sequential`].
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// True when this strategy actually runs on more than one thread.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Applies `f` to consecutive chunks of `items` and collects the results in
/// chunk order.
pub(crate) fn map_chunks<T, R, F>(items: &[T], chunk: usize, exec: Exec, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&[T]) -> R + Sync + Send,
{
    let chunk = chunk.max(1);
    if items.is_empty() {
        return Vec::new();
    }
    #[cfg(feature = "parallel")]
    {
        if exec.is_parallel() && items.len() > chunk {
            use rayon::prelude::*;
            return items.par_chunks(chunk).map(&f).collect();
        }
    }
    let _ = exec;
    items.chunks(chunk).map(f).collect()
}

/// Maps `f` over `0..n` in chunk order, flattening the per-chunk vectors.
pub(crate) fn map_range<R, F>(n: usize, chunk: usize, exec: Exec, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(std::ops::Range<usize>) -> Vec<R> + Sync + Send,
{
    let chunk = chunk.max(1);
    let starts: Vec<usize> = (0..n).step_by(chunk).collect();
    map_chunks(&starts, 1, exec, |s| {
        let start = s[0];
        f(start..(start + chunk).min(n))
    })
    .into_iter()
    .flatten()
    .collect()
}
