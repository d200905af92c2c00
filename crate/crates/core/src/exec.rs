//! Execution-mode switch for the data-parallel inner loops.
//!
//! Episode generation, per-sample gradient work, and validation scans are all
//! embarrassingly parallel. With the `parallel` feature (default) they run on
//! the rayon global pool; the sequential path is always compiled so the two
//! can be benchmarked against each other. Results are bit-identical in both
//! modes: parallel maps collect in index order and reductions fold left to
//! right. Thread count follows `RAYON_NUM_THREADS`.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

/// Maps `f` over `0..n`, collecting results in index order.
pub fn map_indexed<T, F>(mode: ExecMode, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        ExecMode::Sequential => (0..n).map(f).collect(),
        ExecMode::Parallel => {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                (0..n).map(f).collect()
            }
        }
    }
}

/// Splits `items` into at most `max_chunks` contiguous chunks and maps each
/// chunk; chunk boundaries are independent of thread count.
pub fn map_chunks<T, R, F>(mode: ExecMode, items: &[T], max_chunks: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&[T]) -> R + Sync + Send,
{
    if items.is_empty() {
        return Vec::new();
    }
    let chunk_len = items.len().div_ceil(max_chunks.max(1));
    let chunks: Vec<&[T]> = items.chunks(chunk_len).collect();
    match mode {
        ExecMode::Sequential => chunks.into_iter().map(|c| f(c)).collect(),
        ExecMode::Parallel => {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                chunks.into_par_iter().map(|c| f(c)).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                chunks.into_iter().map(|c| f(c)).collect()
            }
        }
    }
}
