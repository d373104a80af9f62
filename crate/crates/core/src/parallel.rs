//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature disabled every helper runs on the calling
//! thread and `Execution::Parallel` behaves like `Execution::Sequential`.
//! Results are always returned in input order, so outputs do not depend on
//! the execution mode.

/// Grid cells handed to one task when filling a grid in parallel.
const CHUNK_CELLS: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether work will actually be spread over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Applies `f` to every item, preserving order.
pub fn map_ordered<T, R, F>(items: &[T], mode: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let _ = mode;
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Fills a row-major `values` buffer (`width` bytes per cell) and its
/// per-cell `prob` vector. `fill(first_cell, values, prob)` receives a
/// contiguous run of cells.
pub fn fill_chunks<F>(values: &mut [u8], prob: &mut [f64], width: usize, fill: F)
where
    F: Fn(usize, &mut [u8], &mut [f64]) + Sync,
{
    let width = width.max(1);
    debug_assert_eq!(values.len(), prob.len() * width);
    #[cfg(feature = "parallel")]
    if prob.len() > CHUNK_CELLS {
        use rayon::prelude::*;
        values
            .par_chunks_mut(CHUNK_CELLS * width)
            .zip(prob.par_chunks_mut(CHUNK_CELLS))
            .enumerate()
            .for_each(|(i, (v, p))| fill(i * CHUNK_CELLS, v, p));
        return;
    }
    let _ = CHUNK_CELLS;
    fill(0, values, prob);
}

/// Runs `f` on a pool limited to `jobs` threads, or on the global pool.
pub fn with_jobs<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if let Some(n) = jobs {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            return pool.install(f);
        }
    }
    let _ = jobs;
    f()
}
