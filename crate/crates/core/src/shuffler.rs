//! Component index streams for each sampling strategy.
//!
//! Indices are 0-based. Epoch `k` of a stream draws from its own generator,
//! keyed by `(seed, k)`, so any block can be produced independently of the
//! others.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Strategy {
    /// i.i.d. uniform indices.
    WithReplacement,
    /// A fresh uniform permutation every epoch.
    RandomShuffle,
    /// One uniform permutation reused by every epoch.
    SingleShuffle,
    /// The given permutation every epoch.
    FixedPermutation(Vec<usize>),
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::WithReplacement => "with_replacement",
            Strategy::RandomShuffle => "random_shuffle",
            Strategy::SingleShuffle => "single_shuffle",
            Strategy::FixedPermutation(_) => "fixed_permutation",
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if n < 2 {
            return Err(Error::BadCount { what: "n", got: n });
        }
        if let Strategy::FixedPermutation(p) = self {
            if !is_permutation(p, n) {
                return Err(Error::BadArgs("fixed permutation is not a bijection on 0..n"));
            }
        }
        Ok(())
    }

    /// Writes the indices of `epoch` (0-based) into `out`, which must hold `n` slots.
    pub fn fill_epoch(&self, n: usize, epoch: usize, seed: u64, out: &mut [usize]) {
        debug_assert_eq!(out.len(), n);
        match self {
            Strategy::WithReplacement => {
                let mut r = epoch_rng(seed, epoch as u64);
                out.iter_mut().for_each(|o| *o = r.gen_range(0..n));
            }
            Strategy::RandomShuffle => {
                let mut r = epoch_rng(seed, epoch as u64);
                identity_into(out);
                out.shuffle(&mut r);
            }
            Strategy::SingleShuffle => {
                let mut r = epoch_rng(seed, 0);
                identity_into(out);
                out.shuffle(&mut r);
            }
            Strategy::FixedPermutation(p) => out.copy_from_slice(p),
        }
    }
}

fn epoch_rng(seed: u64, epoch: u64) -> StreamRng {
    rng::stream(seed, &[0x5348_5546, epoch])
}

fn identity_into(out: &mut [usize]) {
    out.iter_mut().enumerate().for_each(|(i, o)| *o = i);
}

pub fn is_permutation(p: &[usize], n: usize) -> bool {
    if p.len() != n {
        return false;
    }
    let mut seen = alloc::vec![false; n];
    for &i in p {
        if i >= n || seen[i] {
            return false;
        }
        seen[i] = true;
    }
    true
}

/// Full stream of `n * epochs` component indices.
pub fn index_stream(strategy: &Strategy, n: usize, epochs: usize, seed: u64) -> Result<Vec<usize>> {
    strategy.validate(n)?;
    if epochs < 1 {
        return Err(Error::BadCount { what: "K", got: epochs });
    }
    let mut out = alloc::vec![0; n * epochs];
    for (k, block) in out.chunks_mut(n).enumerate() {
        strategy.fill_epoch(n, k, seed, block);
    }
    Ok(out)
}

/// A uniform permutation of `0..n` (Fisher–Yates).
pub fn uniform_permutation<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Advances `p` to the next permutation in lexicographic order; returns
/// `false` (leaving `p` sorted descending) once the last one is reached.
pub fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

pub fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// The permutation of rank `rank` (0-based) in lexicographic order.
pub fn nth_permutation(n: usize, mut rank: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(n);
    for k in (0..n).rev() {
        let f = factorial(k);
        let idx = rank / f;
        rank %= f;
        out.push(pool.remove(idx));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_fixed_permutation_repeats() {
        let s = Strategy::FixedPermutation(alloc::vec![0, 1, 2]);
        assert_eq!(index_stream(&s, 3, 2, 0).unwrap(), alloc::vec![0, 1, 2, 0, 1, 2]);
    }

    #[test]
    fn single_shuffle_blocks_repeat() {
        let st = index_stream(&Strategy::SingleShuffle, 4, 3, 99).unwrap();
        assert_eq!(st[0..4], st[4..8]);
        assert_eq!(st[0..4], st[8..12]);
    }

    #[test]
    fn invalid_arguments() {
        assert!(matches!(
            index_stream(&Strategy::RandomShuffle, 1, 3, 0),
            Err(Error::BadCount { .. })
        ));
        assert!(matches!(
            index_stream(&Strategy::RandomShuffle, 3, 0, 0),
            Err(Error::BadCount { .. })
        ));
        let bad = Strategy::FixedPermutation(alloc::vec![0, 0, 2]);
        assert!(index_stream(&bad, 3, 1, 0).is_err());
    }

    #[test]
    fn lexicographic_enumeration_matches_unranking() {
        let mut p: Vec<usize> = (0..4).collect();
        let mut rank = 0;
        loop {
            assert_eq!(p, nth_permutation(4, rank));
            rank += 1;
            if !next_permutation(&mut p) {
                break;
            }
        }
        assert_eq!(rank, 24);
    }
}
