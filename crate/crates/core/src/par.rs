//! Execution policy for the data-parallel kernels.
//!
//! Every hot loop in the crate is written against [`Exec`]. With the
//! `parallel` feature (on by default) `Exec::Parallel` fans work out over
//! the current rayon pool; without it both variants run sequentially.
//! Kernels are arranged so that each output element is produced by exactly
//! one closure call, which keeps results bit-identical across policies.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Exec {
    Sequential,
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
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Calls `f(row_index, row)` for every `width`-sized chunk of `out`.
pub fn for_each_row<T, F>(exec: Exec, out: &mut [T], width: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if width == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        out.par_chunks_mut(width).enumerate().for_each(|(y, row)| f(y, row));
        return;
    }
    let _ = exec;
    out.chunks_mut(width).enumerate().for_each(|(y, row)| f(y, row));
}

/// `(0..n).map(f).collect()` with the requested policy; order is preserved.
pub fn map_indices<R, F>(exec: Exec, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Runs `f` on every element of `items`, in any order.
pub fn for_each<T, F>(exec: Exec, items: &[T], f: F)
where
    T: Sync,
    F: Fn(&T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        items.par_iter().for_each(f);
        return;
    }
    let _ = exec;
    items.iter().for_each(f);
}
