//! Random streams and the data-parallel execution layer.
//!
//! Batch work is cut into fixed-size chunks and chunk `k` always draws from
//! stream `k` of the run's seed, so the result does not depend on how many
//! threads ran it. With the `parallel` feature disabled every call runs
//! sequentially.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Samples per chunk for batch samplers.
pub const CHUNK_SIZE: usize = 1 << 14;

pub const GENERATOR: &str = "chacha8";

/// A seeded, reproducible source of random numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RngStream {
    pub seed: u64,
    pub generator: &'static str,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            seed,
            generator: GENERATOR,
        }
    }

    /// The primary stream (stream 0).
    pub fn rng(&self) -> ChaCha8Rng {
        self.substream(0)
    }

    /// Independent stream `k` under the same seed.
    pub fn substream(&self, k: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(k);
        rng
    }

    /// A derived seed for replication `k`, for runs that need their own
    /// top-level stream.
    pub fn derive(&self, k: u64) -> RngStream {
        // splitmix64 step
        let mut z = self
            .seed
            .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(k.wrapping_add(1)));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        RngStream::new(z ^ (z >> 31))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    /// Parallel when compiled with the `parallel` feature.
    #[default]
    Auto,
    Sequential,
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self != Execution::Sequential
    }
}

/// Splits `0..n` into [`CHUNK_SIZE`] ranges and maps `f(chunk_index, range)`
/// over them, preserving chunk order in the output.
pub fn map_chunks<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, Range<usize>) -> T + Sync + Send,
{
    let ranges: Vec<Range<usize>> = (0..n.div_ceil(CHUNK_SIZE))
        .map(|k| k * CHUNK_SIZE..((k + 1) * CHUNK_SIZE).min(n))
        .collect();
    map_items(&ranges, exec, |k, r| f(k, r.clone()))
}

/// Maps `f(index, item)` over a slice, in parallel when enabled; output
/// order matches input order.
pub fn map_items<I, T, F>(items: &[I], exec: Execution, f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(usize, &I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect();
    }
    let _ = exec;
    items.iter().enumerate().map(|(i, x)| f(i, x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_seed_same_stream() {
        let s = RngStream::new(42);
        let a: Vec<u64> = (0..8).map({
            let mut r = s.rng();
            move |_| r.random()
        }).collect();
        let b: Vec<u64> = (0..8).map({
            let mut r = s.rng();
            move |_| r.random()
        }).collect();
        assert_eq!(a, b);
        let c: u64 = s.substream(1).random();
        assert_ne!(a[0], c);
    }

    #[test]
    fn chunking_is_independent_of_execution_mode() {
        let n = 3 * CHUNK_SIZE + 17;
        let run = |exec| {
            map_chunks(n, exec, |k, r| {
                let mut rng = RngStream::new(9).substream(k as u64);
                r.map(|_| rng.random::<u32>() as u64).sum::<u64>()
            })
        };
        assert_eq!(run(Execution::Sequential), run(Execution::Parallel));
        assert_eq!(run(Execution::Sequential).len(), 4);
    }
}
