//! Thin switch between rayon and sequential execution.
//!
//! The `parallel` feature compiles the rayon paths in; the runtime flag picks
//! between them so benchmarks can compare both in one binary. Without the
//! feature everything is sequential regardless of the flag.

/// Map over an index range, optionally in parallel. Results keep index order.
pub fn map_indexed<U, F>(n: usize, parallel: bool, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if parallel && n > 1 {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = parallel;
    (0..n).map(f).collect()
}

/// Map over a slice, optionally in parallel. Results keep input order.
pub fn map_slice<T, U, F>(items: &[T], parallel: bool, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if parallel && items.len() > 1 {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
    }
    let _ = parallel;
    items.iter().map(f).collect()
}

/// True when the crate was built with the rayon backend.
pub fn parallel_available() -> bool {
    cfg!(feature = "parallel")
}
