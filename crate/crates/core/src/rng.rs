//! Deterministic random streams with named sub-streams.
//!
//! Every consumer of randomness gets its own stream derived from the root
//! seed and a label path, so adding or removing one consumer never perturbs
//! the draws seen by another. Splitting depends only on the stream's base
//! seed and the label — never on how many values were already drawn.

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

/// splitmix64 finalizer; stable across platforms and releases.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// FNV-1a over the label bytes mixed into the parent seed.
fn derive(seed: u64, label: &str) -> u64 {
    let mut h = seed ^ 0xcbf29ce484222325;
    for &b in label.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    splitmix64(h)
}

pub struct Rng {
    base: u64,
    stream: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            base: seed,
            stream: ChaCha8Rng::seed_from_u64(splitmix64(seed)),
        }
    }

    /// Child stream for `label`. Derived from this stream's base seed only,
    /// so the child is the same no matter how much the parent has drawn.
    pub fn split(&self, label: &str) -> Rng {
        Rng::new(derive(self.base, label))
    }

    pub fn split_indexed(&self, label: &str, index: u64) -> Rng {
        self.split(&format!("{label}/{index}"))
    }

    pub fn uniform_f64(&mut self) -> f64 {
        self.stream.random::<f64>()
    }

    /// Uniform integer in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index range must be nonempty");
        self.stream.random_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.stream)
    }

    pub fn gamma(&mut self, shape: f64) -> Result<f64> {
        let g = Gamma::new(shape, 1.0)
            .map_err(|e| Error::InvalidArgument(format!("gamma shape {shape}: {e}")))?;
        Ok(g.sample(&mut self.stream))
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.stream);
    }

    /// `k` distinct indices drawn uniformly from `0..n`, returned ascending.
    pub fn sample_without_replacement(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot sample {k} of {n} without replacement");
        let mut pool: Vec<usize> = (0..n).collect();
        // Partial Fisher-Yates: the first k slots end up as the sample.
        for i in 0..k {
            let j = i + self.stream.random_range(0..n - i);
            pool.swap(i, j);
        }
        let mut picked = pool[..k].to_vec();
        picked.sort_unstable();
        picked
    }
}
