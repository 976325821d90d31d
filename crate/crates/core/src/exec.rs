//! Index-ordered data-parallel helpers.
//!
//! Every helper returns results in index order, so callers can reduce them
//! sequentially and obtain the same bits whether or not rayon is in use.

use std::cell::Cell;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with the parallel path disabled on the current thread.
///
/// Nested helpers called from `f` fall back to plain iteration. This is how the
/// benches and determinism tests compare both paths within a single build.
pub fn with_sequential<R>(f: impl FnOnce() -> R) -> R {
    struct Reset(bool);
    impl Drop for Reset {
        fn drop(&mut self) {
            FORCE_SEQUENTIAL.with(|c| c.set(self.0));
        }
    }
    let prev = FORCE_SEQUENTIAL.with(|c| c.replace(true));
    let _reset = Reset(prev);
    f()
}

/// Whether the helpers in this module will currently use rayon.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.with(Cell::get)
}

/// Evaluates `f(0..n)` and collects the results in index order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Fallible variant of [`map_range`]; the error of the lowest failing index wins.
pub fn try_map_range<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_range(n, f).into_iter().collect()
}

/// Maps a slice in index order.
pub fn map_slice<'a, A, T, F>(items: &'a [A], f: F) -> Vec<T>
where
    A: Sync,
    T: Send,
    F: Fn(&'a A) -> T + Sync + Send,
{
    map_range(items.len(), |i| f(&items[i]))
}
