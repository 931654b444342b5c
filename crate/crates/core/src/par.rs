//! Thin switch between rayon and sequential iteration.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// `(0..n).map(f).collect()`, in parallel when the `parallel` feature is on.
pub(crate) fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Concatenation of `f(i)` over `0..n`, in index order.
pub(crate) fn flat_map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut Vec<T>) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        const CHUNK: usize = 4096;
        let chunks: Vec<Vec<T>> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut out = Vec::new();
                for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    f(i, &mut out);
                }
                out
            })
            .collect();
        chunks.into_iter().flatten().collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut out = Vec::new();
        for i in 0..n {
            f(i, &mut out);
        }
        out
    }
}
