//! Reductions with a fixed association order.
//!
//! Sums are split into chunks of `CHUNK` consecutive indices; each chunk is
//! summed left to right and the chunk partials are then summed left to right.
//! The chunk layout depends only on the problem size, so the result is
//! bit-identical for any rayon pool size.

use rayon::prelude::*;

pub const CHUNK: usize = 4096;

pub fn chunked_sum<F>(n: usize, term: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    if n <= CHUNK {
        return (0..n).map(&term).sum();
    }
    let partials: Vec<f64> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            (lo..hi).map(&term).sum::<f64>()
        })
        .collect();
    partials.iter().sum()
}

pub fn chunked_max<F>(n: usize, term: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    (0..n.div_ceil(CHUNK).max(1))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            (lo..hi).map(&term).fold(f64::NEG_INFINITY, f64::max)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
}
