//! Worker-count-independent Monte Carlo.
//!
//! Work is cut into fixed-size chunks. Chunk `c` draws from
//! `ChaCha8Rng::seed_from_u64(seed)` on stream `c`, so its numbers do not
//! depend on which thread runs it. Chunk results are merged in chunk order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::ops::Range;

pub const CHUNK: usize = 1024;

pub fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Runs `f(chunk_id, item_range)` over `0..n_items` on `workers` threads and
/// returns the results in chunk order.
pub fn map_chunks<T, F>(n_items: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, Range<usize>) -> T + Sync + Send,
{
    let n_chunks = n_items.div_ceil(CHUNK);
    let job = |c: usize| f(c as u64, c * CHUNK..((c + 1) * CHUNK).min(n_items));
    if workers <= 1 {
        return (0..n_chunks).map(job).collect();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool")
        .install(|| (0..n_chunks).into_par_iter().map(job).collect())
}

/// Streaming mean and variance with pairwise merge.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Welford {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * self.n as f64 * other.n as f64 / n as f64;
        self.n = n;
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.3).collect();
        let mut all = Welford::default();
        xs.iter().for_each(|&x| all.push(x));
        let mut a = Welford::default();
        let mut b = Welford::default();
        xs[..333].iter().for_each(|&x| a.push(x));
        xs[333..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert_eq!(a.n, all.n);
        assert!((a.mean - all.mean).abs() < 1e-12);
        assert!((a.variance() - all.variance()).abs() < 1e-9);
    }

    #[test]
    fn chunks_do_not_depend_on_worker_count() {
        let run = |w| {
            map_chunks(5000, w, |c, r| {
                let mut rng = chunk_rng(9, c);
                r.map(|_| rng.random::<f64>()).sum::<f64>()
            })
        };
        let one = run(1);
        assert_eq!(one.len(), 5);
        assert_eq!(one, run(3));
    }
}
