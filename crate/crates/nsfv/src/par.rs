//! Parallel execution and deterministic reductions.
//!
//! All sums in this crate go through [`tree_sum`]/[`tree_sum_by`], which reduce
//! over a fixed binary tree (split at the midpoint, leaves of `LEAF` elements).
//! The tree shape depends only on the input length, so results are bit-identical
//! across runs, thread counts, and the `parallel` feature flag.
//!
//! With the `parallel` feature (default) the upper levels of the tree and the
//! element maps run on rayon; without it everything runs sequentially on the
//! same tree.

/// Largest range summed by a straight loop at the bottom of the tree.
const LEAF: usize = 64;

/// Cap the global thread pool (first call wins; no-op without the
/// `parallel` feature). Results do not depend on the thread count either
/// way, only throughput does.
pub fn configure_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}

/// Ranges below this length are not worth forking.
#[cfg(feature = "parallel")]
const FORK_THRESHOLD: usize = 4096;

/// Sum of `f(i)` for `i` in `0..len` over a fixed-shape pairwise tree.
pub fn tree_sum_by<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    sum_range(0, len, &f)
}

/// Pairwise-tree sum of a slice.
pub fn tree_sum(values: &[f64]) -> f64 {
    tree_sum_by(values.len(), |i| values[i])
}

fn sum_range<F>(lo: usize, hi: usize, f: &F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let len = hi - lo;
    if len <= LEAF {
        let mut acc = 0.0;
        for i in lo..hi {
            acc += f(i);
        }
        return acc;
    }
    let mid = lo + len / 2;
    let (a, b) = join_sums(lo, mid, hi, f);
    a + b
}

#[cfg(feature = "parallel")]
fn join_sums<F>(lo: usize, mid: usize, hi: usize, f: &F) -> (f64, f64)
where
    F: Fn(usize) -> f64 + Sync,
{
    if hi - lo >= FORK_THRESHOLD {
        rayon::join(|| sum_range(lo, mid, f), || sum_range(mid, hi, f))
    } else {
        (sum_range(lo, mid, f), sum_range(mid, hi, f))
    }
}

#[cfg(not(feature = "parallel"))]
fn join_sums<F>(lo: usize, mid: usize, hi: usize, f: &F) -> (f64, f64)
where
    F: Fn(usize) -> f64 + Sync,
{
    (sum_range(lo, mid, f), sum_range(mid, hi, f))
}

/// Maximum of `f(i)` over `0..len` (`-inf` for an empty range). Order-independent.
pub fn max_by<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if len >= FORK_THRESHOLD {
            return (0..len)
                .into_par_iter()
                .map(&f)
                .reduce(|| f64::NEG_INFINITY, f64::max);
        }
    }
    (0..len).map(f).fold(f64::NEG_INFINITY, f64::max)
}

/// Minimum of `f(i)` over `0..len` (`+inf` for an empty range).
pub fn min_by<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    -max_by(len, |i| -f(i))
}

/// Fill `out[i] = f(i)`, in parallel when available.
pub fn map_into<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if out.len() >= 2048 {
            out.par_iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
            return;
        }
    }
    for (i, v) in out.iter_mut().enumerate() {
        *v = f(i);
    }
}

/// `Vec` of `f(i)` for `i` in `0..len`.
pub fn map_vec<F>(len: usize, f: F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync,
{
    let mut out = vec![0.0; len];
    map_into(&mut out, f);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_sum_matches_reference_on_small_inputs() {
        // Below LEAF the tree is a plain loop, so compare against that directly.
        let v: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let plain: f64 = v.iter().sum();
        assert!((tree_sum(&v) - plain).abs() < 1e-15);
    }

    #[test]
    fn tree_sum_is_independent_of_leaf_boundaries() {
        // Summing a permutation-invariant payload twice must give the exact
        // same bits; the tree shape is a pure function of the length.
        let v: Vec<f64> = (0..10_000).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let a = tree_sum(&v);
        let b = tree_sum_by(v.len(), |i| v[i]);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn extrema_and_map() {
        let v = map_vec(1000, |i| ((i as f64) * 0.37).cos());
        let mx = max_by(v.len(), |i| v[i]);
        let mn = min_by(v.len(), |i| v[i]);
        assert!(v.iter().all(|&x| x <= mx && x >= mn));
    }
}
