//! Data-parallel helpers over particle rows.
//!
//! With the `parallel` feature (default) these dispatch to rayon; without
//! it they run sequentially. Per-particle RNG substreams make both paths
//! bit-identical.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Apply `f` to each `dim`-sized row of `values`, in place.
#[cfg(feature = "parallel")]
pub fn for_each_row<F>(values: &mut [f64], dim: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    values
        .par_chunks_mut(dim)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

#[cfg(not(feature = "parallel"))]
pub fn for_each_row<F>(values: &mut [f64], dim: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    for_each_row_seq(values, dim, f);
}

/// Sequential reference path, always available (used by the benches).
pub fn for_each_row_seq<F>(values: &mut [f64], dim: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    for (i, row) in values.chunks_mut(dim).enumerate() {
        f(i, row);
    }
}

/// Compute one value per particle index.
#[cfg(feature = "parallel")]
pub fn collect_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn collect_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    collect_indexed_seq(n, f)
}

pub fn collect_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}
