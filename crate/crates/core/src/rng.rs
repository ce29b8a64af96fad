//! Counter-keyed random streams.
//!
//! Every stream is addressed by `(seed, purpose label, index)`. The label and
//! seed select a ChaCha8 key, the index selects the ChaCha stream id, so a
//! sample drawn for chunk `k` never depends on which thread produced chunk
//! `k - 1` or on how many chunks were produced before it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::domain::{ProcessKind, Seed};

/// Monte Carlo loops draw samples in fixed-size chunks, one stream per chunk.
pub const CHUNK: usize = 1024;

#[derive(Clone, Debug)]
pub struct Stream {
    rng: ChaCha8Rng,
}

impl Stream {
    pub fn new(seed: Seed, label: &str, index: u64) -> Self {
        let base = mix64(seed.0 ^ fnv1a64(label.as_bytes()));
        let mut key = [0u8; 32];
        let mut state = base;
        for word in key.chunks_exact_mut(8) {
            state = mix64(state.wrapping_add(0x9E37_79B9_7F4A_7C15));
            word.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(index);
        Self { rng }
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.rng.random_range(0..n)
    }

    pub fn sign(&mut self) -> f64 {
        if self.rng.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// One draw of the driving variable of a canonical process.
    pub fn variate(&mut self, kind: ProcessKind) -> f64 {
        match kind {
            ProcessKind::Bernoulli => self.sign(),
            ProcessKind::Gaussian => self.normal(),
        }
    }

    pub fn fill(&mut self, kind: ProcessKind, out: &mut [f64]) {
        for x in out.iter_mut() {
            *x = self.variate(kind);
        }
    }
}

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

// splitmix64 finalizer
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `per_sample` for `samples` draws split into [`CHUNK`]-sized chunks,
/// each chunk on its own stream, and returns the values in sample order.
///
/// The output is identical for any rayon pool size.
pub fn sample_values<F>(seed: Seed, label: &str, samples: usize, per_sample: F) -> Vec<f64>
where
    F: Fn(&mut Stream) -> f64 + Sync,
{
    use rayon::prelude::*;
    let chunks = samples.div_ceil(CHUNK);
    let per_chunk: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut stream = Stream::new(seed, label, c as u64);
            let len = CHUNK.min(samples - c * CHUNK);
            (0..len).map(|_| per_sample(&mut stream)).collect()
        })
        .collect();
    per_chunk.into_iter().flatten().collect()
}

/// Sample mean and standard error of the mean, summed in index order.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_keyed_by_label_and_index() {
        let a: Vec<f64> = {
            let mut s = Stream::new(Seed(1), "x", 0);
            (0..4).map(|_| s.uniform()).collect()
        };
        let b: Vec<f64> = {
            let mut s = Stream::new(Seed(1), "x", 0);
            (0..4).map(|_| s.uniform()).collect()
        };
        let c: Vec<f64> = {
            let mut s = Stream::new(Seed(1), "x", 1);
            (0..4).map(|_| s.uniform()).collect()
        };
        let d: Vec<f64> = {
            let mut s = Stream::new(Seed(1), "y", 0);
            (0..4).map(|_| s.uniform()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn chunked_sampling_ignores_pool_size() {
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| sample_values(Seed(9), "pool", 5000, |s| s.normal()))
        };
        let one = run(1);
        let four = run(4);
        assert_eq!(one.len(), 5000);
        assert!(one.iter().zip(&four).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn mean_stderr_of_constant_is_exact() {
        let (m, se) = mean_stderr(&[2.0; 10]);
        assert_eq!(m, 2.0);
        assert_eq!(se, 0.0);
    }
}
