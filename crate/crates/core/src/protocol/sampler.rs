//! Deterministic permutation sampling.
//!
//! Permutation `j` is a pure function of `(seed, domain, j)`: a ChaCha8
//! keystream keyed by `(seed, domain)` and positioned on stream `j` drives a
//! Fisher-Yates shuffle. Any subset of indices can be generated in any order,
//! on any thread, with identical results.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Domain used for extensibility permutations. Stability uses the target
/// vocabulary index as its domain.
pub const EXTENSIBILITY_DOMAIN: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub seed: u64,
    pub samples: usize,
    /// Largest N for which full enumeration of N! orderings is allowed.
    pub exact_threshold: usize,
}

impl SamplerConfig {
    pub const DEFAULT_EXACT_THRESHOLD: usize = 6;
    pub const EXTENSIBILITY_SAMPLES_PER_VOCABULARY: usize = 100;
    pub const STABILITY_SAMPLES: usize = 100;

    pub fn new(seed: u64, samples: usize) -> Result<Self> {
        if samples == 0 {
            return Err(Error::ZeroSamples);
        }
        Ok(Self {
            seed,
            samples,
            exact_threshold: Self::DEFAULT_EXACT_THRESHOLD,
        })
    }

    /// 100 x N samples.
    pub fn extensibility_default(seed: u64, vocabularies: usize) -> Self {
        Self {
            seed,
            samples: Self::EXTENSIBILITY_SAMPLES_PER_VOCABULARY * vocabularies.max(1),
            exact_threshold: Self::DEFAULT_EXACT_THRESHOLD,
        }
    }

    pub fn stability_default(seed: u64) -> Self {
        Self {
            seed,
            samples: Self::STABILITY_SAMPLES,
            exact_threshold: Self::DEFAULT_EXACT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PermutationSampler {
    n: usize,
    seed: u64,
    domain: u64,
}

impl PermutationSampler {
    pub fn new(n: usize, seed: u64, domain: u64) -> Self {
        Self { n, seed, domain }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn rng(&self, index: u64) -> ChaCha8Rng {
        stream_rng(self.seed, self.domain, index)
    }

    /// The `index`-th permutation of `0..n`.
    pub fn permutation(&self, index: u64) -> Vec<usize> {
        let mut p: Vec<usize> = (0..self.n).collect();
        if self.n < 2 {
            return p;
        }
        let mut rng = self.rng(index);
        for i in (1..self.n).rev() {
            let k = bounded(&mut rng, i as u64 + 1) as usize;
            p.swap(i, k);
        }
        p
    }

    pub fn iter(&self, count: usize) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..count as u64).map(move |j| self.permutation(j))
    }
}

/// Stream of `config.samples` permutations of `0..n` in the extensibility domain.
pub fn sample_permutations(n: usize, config: &SamplerConfig) -> impl Iterator<Item = Vec<usize>> {
    let s = PermutationSampler::new(n, config.seed, EXTENSIBILITY_DOMAIN);
    (0..config.samples as u64).map(move |j| s.permutation(j))
}

/// ChaCha8 keyed by `(seed, domain)`, positioned on `stream`.
pub(crate) fn stream_rng(seed: u64, domain: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Uniform integer in `0..bound` (bound > 0) by widening multiply with rejection.
pub(crate) fn bounded(rng: &mut impl RngCore, bound: u64) -> u64 {
    debug_assert!(bound > 0);
    let threshold = bound.wrapping_neg() % bound;
    loop {
        let m = u128::from(rng.next_u64()) * u128::from(bound);
        if (m as u64) >= threshold {
            return (m >> 64) as u64;
        }
    }
}

/// Advances `p` to the next lexicographic permutation; false after the last.
pub fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}
