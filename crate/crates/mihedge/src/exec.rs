//! Path-level parallelism helpers.
//!
//! Monte Carlo work in this crate is embarrassingly parallel across paths.
//! Every per-path computation derives its own seed from `(seed, path index)`
//! so results are independent of scheduling, and aggregates are always folded
//! in path-index order, making reports bit-identical across thread counts.
//!
//! With the `parallel` feature (default) `map_indexed` runs on the rayon
//! thread pool; without it both helpers are plain sequential loops.

/// Maps `f` over `0..n` returning results in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Maps `f` over `0..n` returning results in index order.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_indexed_seq(n, f)
}

/// Sequential reference implementation of [`map_indexed`]; always available
/// so benchmarks can compare the two directly.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Installs a global rayon pool with `threads` workers. Call once, before
/// any parallel work; later calls are ignored by rayon.
#[cfg(feature = "parallel")]
pub fn configure_threads(threads: usize) {
    if threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_threads: usize) {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree_in_order() {
        let a = map_indexed(100, |i| i * i);
        let b = map_indexed_seq(100, |i| i * i);
        assert_eq!(a, b);
    }
}
