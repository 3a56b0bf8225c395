//! Rayon-backed chunk executor.

use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};
use shufflelab_core::ChunkExecutor;

use crate::error::{LabError, Result};

/// A dedicated worker pool. Results come back in chunk order, so every
/// pool size produces the same bits.
pub struct Pool {
    pool: ThreadPool,
}

impl Pool {
    /// `threads = 0` lets rayon pick (one per core).
    pub fn new(threads: usize) -> Result<Self> {
        let pool = ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| LabError::Config(e.to_string()))?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl ChunkExecutor for Pool {
    fn map_chunks<T: Send>(&self, count: usize, f: &(dyn Fn(usize) -> T + Sync)) -> Vec<T> {
        self.pool
            .install(|| (0..count).into_par_iter().map(f).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_chunk_order() {
        let p = Pool::new(3).unwrap();
        let out = p.map_chunks(100, &|i| i * i);
        assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
    }
}
