//! Data-parallel map over independent jobs.
//!
//! Sweeps in this crate (coupling-gain grids, seed batteries, per-node
//! analytics) are embarrassingly parallel: each job owns its state and only
//! the collected output is shared. With the default `parallel` feature the
//! map fans out over a rayon pool; without it the same call runs
//! sequentially, which is useful for single-core targets and for profiling.
//! [`map_seq`] is always available so benchmarks can compare both paths in
//! one build.

/// Maps `f` over `items`, parallel when the `parallel` feature is enabled.
/// Output order matches input order in both modes.
pub fn map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

/// Sequential map with the same signature as [`map`].
pub fn map_seq<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree_in_order() {
        let xs: Vec<u64> = (0..257).collect();
        let sq = |x: u64| x.wrapping_mul(x) ^ 0x9e37;
        assert_eq!(map(xs.clone(), sq), map_seq(xs, sq));
    }
}
