//! Numerical core for studying without-replacement SGD on finite sums.
//!
//! The crate is `no_std` (it needs `alloc`) so the algorithms can be reused
//! anywhere; file formats, parallel executors and the command line live in
//! the companion `shufflelab` crate.
//!
//! Module map:
//!
//! * [`problems`]: synthetic quadratic and PŁ finite-sum problems with
//!   certified constants.
//! * [`shuffler`]: component index streams (with replacement, random
//!   reshuffling, single shuffle, fixed permutation).
//! * [`schedules`]: step-size rules and their epoch requirements.
//! * [`optimizer`]: the epoch loop and iterate selectors.
//! * [`verifier`]: permutation expectations of epoch matrices and the
//!   contraction / progress bound checks built on them.
//! * [`concentration`]: the vector Hoeffding–Serfling bound and its empirical
//!   check.
//! * [`chung`]: Chung-type recursion bounds and their extremal sequences.
//! * [`rates`]: grid sweeps and log-log exponent fits.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod chung;
pub mod concentration;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod optimizer;
pub mod problems;
pub mod rates;
pub mod rng;
pub mod schedules;
pub mod shuffler;
pub mod verifier;

pub use error::{Error, Result};
pub use exec::{ChunkExecutor, Sequential};
pub use linalg::Matrix;
pub use optimizer::{run, select, IterateSelector, Selection, Trajectory};
pub use problems::{
    gen_pl, gen_quadratic, Constants, FiniteSum, PlProblem, Problem, QuadraticComponent,
    QuadraticProblem, QuadraticSpec,
};
pub use schedules::{Schedule, ScheduleKind};
pub use shuffler::{index_stream, Strategy};
