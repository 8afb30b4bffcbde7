//! Data-parallel execution helpers.
//!
//! With the `parallel` feature enabled the helpers fan out over rayon's
//! global pool; without it, or with [`Execution::Sequential`], they run in
//! order on the calling thread. Every helper produces results in input
//! order, so both paths are bitwise identical.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many output rows a matrix product stays on one thread.
pub const PARALLEL_ROW_THRESHOLD: usize = 32;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when work will actually be spread over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Applies `f` to each chunk of `out` (of `chunk` elements) with its index.
pub fn for_each_chunk_mut<T, F>(exec: Execution, out: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if chunk == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        if exec.is_parallel() && out.len() / chunk >= PARALLEL_ROW_THRESHOLD {
            out.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
    }
    let _ = exec;
    for (i, c) in out.chunks_mut(chunk).enumerate() {
        f(i, c);
    }
}

/// Maps `f` over mutable items, collecting results in item order.
pub fn map_mut<T, R, F>(exec: Execution, items: &mut [T], f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(&mut T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if exec.is_parallel() && items.len() > 1 {
            return items.par_iter_mut().map(f).collect();
        }
    }
    let _ = exec;
    items.iter_mut().map(f).collect()
}

/// SplitMix64 finalizer; the basis of every derived seed in the crate.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed from a parent seed and a sequence of tags.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_mut_preserves_order_in_both_modes() {
        let mut a: Vec<u64> = (0..100).collect();
        let mut b = a.clone();
        let s = map_mut(Execution::Sequential, &mut a, |x| *x * 3);
        let p = map_mut(Execution::Parallel, &mut b, |x| *x * 3);
        assert_eq!(s, p);
    }

    #[test]
    fn derived_seeds_differ_by_tag() {
        assert_ne!(derive_seed(7, &[0, 1]), derive_seed(7, &[1, 0]));
        assert_eq!(derive_seed(7, &[3]), derive_seed(7, &[3]));
    }
}
