//! Chunked evaluation with a fixed reduction order.
//!
//! Expensive loops (permutation enumeration, Monte Carlo trials, sweep grid
//! points) are split into numbered chunks. An executor may evaluate the chunks
//! in any order or in parallel, but must hand the results back indexed by
//! chunk so that callers fold them left to right. Results are therefore
//! bit-identical for every executor and worker count.

use alloc::boxed::Box;
use alloc::vec::Vec;

pub trait ChunkExecutor: Sync {
    /// Evaluates `f(0..count)` and returns the results in chunk order.
    fn map_chunks<T: Send>(&self, count: usize, f: &(dyn Fn(usize) -> T + Sync)) -> Vec<T>;
}

/// Runs every chunk on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl ChunkExecutor for Sequential {
    fn map_chunks<T: Send>(&self, count: usize, f: &(dyn Fn(usize) -> T + Sync)) -> Vec<T> {
        (0..count).map(f).collect()
    }
}

impl<E: ChunkExecutor> ChunkExecutor for &E {
    fn map_chunks<T: Send>(&self, count: usize, f: &(dyn Fn(usize) -> T + Sync)) -> Vec<T> {
        (**self).map_chunks(count, f)
    }
}

impl<E: ChunkExecutor + Send> ChunkExecutor for Box<E> {
    fn map_chunks<T: Send>(&self, count: usize, f: &(dyn Fn(usize) -> T + Sync)) -> Vec<T> {
        (**self).map_chunks(count, f)
    }
}
