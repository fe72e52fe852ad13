//! Data-parallel iteration helpers.
//!
//! With the `parallel` feature (on by default) [`map_indexed`] fans work out
//! over rayon; without it the same call is a plain sequential loop. Results
//! are always returned in input order, so reductions downstream are
//! deterministic regardless of thread count. [`map_indexed_seq`] is the
//! sequential path kept unconditionally compiled; the criterion benches use
//! it as the baseline against the rayon path.

/// Apply `f` to `0..n`, collecting results in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Apply `f` to `0..n`, collecting results in index order.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Sequential variant of [`map_indexed`], always available.
pub fn map_indexed_seq<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Whether the rayon path is compiled in.
pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let out = map_indexed(100, |i| i * i);
        let expected: Vec<usize> = (0..100).map(|i| i * i).collect();
        assert_eq!(out, expected);
        assert_eq!(map_indexed_seq(100, |i| i * i), expected);
    }
}
