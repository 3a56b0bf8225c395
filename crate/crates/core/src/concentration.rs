//! Vector Hoeffding–Serfling bound for prefix means of a uniformly shuffled
//! list, and its empirical violation rate.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::exec::{ChunkExecutor, Sequential};
use crate::linalg;
use crate::rng;

/// Minimum number of trials accepted by [`empirical_violation_rate`].
pub const MIN_TRIALS: usize = 1000;

const TRIAL_CHUNKS: usize = 64;

/// `G sqrt(8 (1 - (i-1)/n) ln(2/delta) / i)`: with probability at least
/// `1 - delta` the mean of the first `i` entries of a uniform shuffle of
/// `n` vectors of norm at most `G` is within this distance of the full mean.
pub fn hs_bound(i: usize, n: usize, big_g: f64, delta: f64) -> Result<f64> {
    if n < 1 || i < 1 || i > n {
        return Err(Error::BadArgs("prefix length must satisfy 1 <= i <= n"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::BadArgs("delta must lie in (0, 1)"));
    }
    if !(big_g >= 0.0) {
        return Err(Error::BadArgs("G must be nonnegative"));
    }
    let frac = 1.0 - (i as f64 - 1.0) / n as f64;
    Ok(big_g * libm::sqrt(8.0 * frac * libm::log(2.0 / delta) / i as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HsInstance {
    vectors: Vec<Vec<f64>>,
    mean: Vec<f64>,
    pub i: usize,
    pub delta: f64,
    /// Norm bound; the largest vector norm unless raised with [`HsInstance::with_g`].
    pub big_g: f64,
    bound: f64,
}

impl HsInstance {
    pub fn new(vectors: Vec<Vec<f64>>, i: usize, delta: f64) -> Result<Self> {
        let n = vectors.len();
        if n < 2 {
            return Err(Error::BadCount { what: "n", got: n });
        }
        let d = vectors[0].len();
        if d == 0 || vectors.iter().any(|v| v.len() != d) {
            return Err(Error::BadArgs("vectors must share a positive dimension"));
        }
        let mut mean = vec![0.0; d];
        for v in &vectors {
            mean.iter_mut().zip(v).for_each(|(m, x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let big_g = vectors.iter().map(|v| linalg::norm2(v)).fold(0.0, f64::max);
        let bound = hs_bound(i, n, big_g, delta)?;
        Ok(Self {
            vectors,
            mean,
            i,
            delta,
            big_g,
            bound,
        })
    }

    pub fn with_g(mut self, big_g: f64) -> Result<Self> {
        if big_g < self.big_g {
            return Err(Error::BadArgs("G is below the largest vector norm"));
        }
        self.big_g = big_g;
        self.bound = hs_bound(self.i, self.n(), big_g, self.delta)?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.vectors.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// `||(1/i) sum_{j<i} v_{prefix[j]} - mean||`.
    pub fn deviation(&self, prefix: &[usize]) -> f64 {
        let mut acc = vec![0.0; self.mean.len()];
        for &j in prefix {
            acc.iter_mut().zip(&self.vectors[j]).for_each(|(a, x)| *a += x);
        }
        let inv = 1.0 / prefix.len() as f64;
        acc.iter_mut()
            .zip(&self.mean)
            .for_each(|(a, m)| *a = *a * inv - m);
        linalg::norm2(&acc)
    }

    pub fn violates(&self, prefix: &[usize]) -> bool {
        self.deviation(prefix) > self.bound
    }

    /// The length-`i` prefix of trial `trial`'s permutation.
    pub fn trial_prefix(&self, seed: u64, trial: u64) -> Vec<usize> {
        let mut r = rng::stream(seed, &[0x4853, trial]);
        let mut idx: Vec<usize> = (0..self.n()).collect();
        let (head, _) = idx.partial_shuffle(&mut r, self.i);
        head.to_vec()
    }

    pub fn trial_violates(&self, seed: u64, trial: u64) -> bool {
        self.violates(&self.trial_prefix(seed, trial))
    }
}

/// Fraction of `trials` uniform permutations whose prefix mean leaves the bound.
pub fn empirical_violation_rate(instance: &HsInstance, trials: usize, seed: u64) -> Result<f64> {
    empirical_violation_rate_with(instance, trials, seed, &Sequential)
}

pub fn empirical_violation_rate_with<E: ChunkExecutor>(
    instance: &HsInstance,
    trials: usize,
    seed: u64,
    exec: &E,
) -> Result<f64> {
    if trials < MIN_TRIALS {
        return Err(Error::BadCount { what: "trials", got: trials });
    }
    let chunks = TRIAL_CHUNKS.min(trials);
    let counts = exec.map_chunks(chunks, &|c| {
        let start = c * trials / chunks;
        let end = (c + 1) * trials / chunks;
        (start..end)
            .filter(|&t| instance.trial_violates(seed, t as u64))
            .count()
    });
    Ok(counts.iter().sum::<usize>() as f64 / trials as f64)
}

/// `delta + 3 sqrt(delta (1 - delta) / trials)`.
pub fn binomial_allowance(delta: f64, trials: usize) -> f64 {
    delta + 3.0 * libm::sqrt(delta * (1.0 - delta) / trials as f64)
}
