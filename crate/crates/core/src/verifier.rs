//! Permutation expectations for quadratic ensembles and the bound checks
//! built on them.
//!
//! For component Hessians `A_i` and linear terms `b_i`, one epoch with a
//! constant step `eta` and order `pi` maps `x` to `S(pi) x - eta t(pi)` with
//!
//! ```text
//! S(pi) = (I - eta A_pi(n)) ... (I - eta A_pi(1))
//! t(pi) = sum_j (I - eta A_pi(n)) ... (I - eta A_pi(j+1)) b_pi(j)
//! ```
//!
//! Expectations over uniform `pi` are computed either exactly, by walking all
//! `n!` permutations in lexicographic order, or by Monte Carlo with a
//! grouped jackknife standard error. Both split the work into numbered
//! chunks whose partial sums are folded in chunk order, so results do not
//! depend on the executor.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::exec::{ChunkExecutor, Sequential};
use crate::linalg::{self, Matrix};
use crate::problems::QuadraticProblem;
use crate::rng;
use crate::shuffler::{factorial, next_permutation, nth_permutation, uniform_permutation};

/// Largest `n` accepted by exhaustive enumeration.
pub const EXHAUSTIVE_MAX_N: usize = 8;
/// Absolute slack for exact bound checks.
pub const BOUND_TOL: f64 = 1e-10;
/// Standard errors of slack for Monte Carlo bound checks.
pub const MC_SIGMAS: f64 = 5.0;
/// Minimum Monte Carlo sample count.
pub const MC_MIN_SAMPLES: usize = 1000;
/// Permutations sampled by the SingleShuffle check when `n` is too large to enumerate.
pub const SINGLESHUFFLE_SAMPLES: usize = 10_000;

const EXHAUSTIVE_CHUNK: usize = 720;
const JACKKNIFE_GROUPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct PermutationEnsemble {
    mats: Vec<Matrix>,
    vecs: Vec<Vec<f64>>,
    mean: Matrix,
    /// `lambda_min` of the mean Hessian.
    pub mu: f64,
    /// `max(max_i ||A_i||, lambda_max(A))`.
    pub ell: f64,
    /// `max_i ||b_i||`.
    pub big_g: f64,
}

impl PermutationEnsemble {
    pub fn new(mats: Vec<Matrix>, vecs: Vec<Vec<f64>>) -> Result<Self> {
        let n = mats.len();
        if n < 2 {
            return Err(Error::BadCount { what: "n", got: n });
        }
        if vecs.len() != n {
            return Err(Error::BadArgs("need one vector per matrix"));
        }
        let d = mats[0].dim();
        if mats.iter().any(|m| m.dim() != d) || vecs.iter().any(|v| v.len() != d) {
            return Err(Error::BadArgs("ensemble members disagree on dimension"));
        }
        if mats.iter().any(|m| m.asymmetry() > 1e-12) {
            return Err(Error::BadArgs("component matrices must be symmetric"));
        }
        let mut sum = vec![0.0; d];
        for v in &vecs {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
        }
        let scale = vecs.iter().map(|v| linalg::norm2(v)).fold(1.0, f64::max);
        if linalg::norm2(&sum) > 1e-10 * scale {
            return Err(Error::BadArgs("linear terms must sum to zero"));
        }
        let mut mean = Matrix::zeros(d);
        for m in &mats {
            mean.add_assign(m);
        }
        mean.scale(1.0 / n as f64);
        let mean = mean.symmetrized();
        let eig = mean.sym_eigenvalues();
        let mu = eig[0];
        if !(mu > 0.0) {
            return Err(Error::AssumptionUnmet("mean Hessian is not positive definite"));
        }
        let ell = mats.iter().map(|m| m.sym_spectral_norm()).fold(eig[d - 1], f64::max);
        let big_g = vecs.iter().map(|v| linalg::norm2(v)).fold(0.0, f64::max);
        Ok(Self {
            mats,
            vecs,
            mean,
            mu,
            ell,
            big_g,
        })
    }

    pub fn from_problem(p: &QuadraticProblem) -> Result<Self> {
        Self::new(
            p.components.iter().map(|c| c.a.clone()).collect(),
            p.components.iter().map(|c| c.b.clone()).collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.mats.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.dim()
    }

    pub fn kappa(&self) -> f64 {
        self.ell / self.mu
    }

    pub fn matrices(&self) -> &[Matrix] {
        &self.mats
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vecs
    }

    pub fn mean_matrix(&self) -> &Matrix {
        &self.mean
    }

    pub fn has_convex_components(&self) -> bool {
        self.mats.iter().all(|m| m.sym_eigenvalues()[0] >= -1e-12)
    }

    /// `S(pi)`: later factors multiply on the left.
    pub fn epoch_matrix(&self, perm: &[usize], eta: f64) -> Matrix {
        self.epoch_pair(perm, eta).0
    }

    /// `t(pi)`.
    pub fn noise_vector(&self, perm: &[usize], eta: f64) -> Vec<f64> {
        self.epoch_pair(perm, eta).1
    }

    /// `(S(pi), t(pi))` in one pass: `S <- (I - eta A) S`, `t <- (I - eta A) t + b`.
    pub fn epoch_pair(&self, perm: &[usize], eta: f64) -> (Matrix, Vec<f64>) {
        let d = self.dim();
        let mut s = Matrix::identity(d);
        let mut t = vec![0.0; d];
        let mut tmp = vec![0.0; d];
        for &p in perm {
            let step = Matrix::identity(d).add_scaled(-eta, &self.mats[p]);
            s = step.matmul(&s);
            step.matvec_into(&t, &mut tmp);
            for ((ti, a), b) in t.iter_mut().zip(&tmp).zip(&self.vecs[p]) {
                *ti = a + b;
            }
        }
        (s, t)
    }

    /// One epoch of the actual update from `x`; returns the end point and
    /// the largest `max_i ||A_i y + b_i||` over every visited point `y`.
    fn epoch_walk(&self, perm: &[usize], eta: f64, x: &[f64]) -> (Vec<f64>, f64) {
        let d = self.dim();
        let mut x = x.to_vec();
        let mut g = vec![0.0; d];
        let mut gmax = self.max_component_gradient(&x);
        for &p in perm {
            self.mats[p].matvec_into(&x, &mut g);
            for ((xi, gi), bi) in x.iter_mut().zip(&g).zip(&self.vecs[p]) {
                *xi -= eta * (gi + bi);
            }
            gmax = gmax.max(self.max_component_gradient(&x));
        }
        (x, gmax)
    }

    fn max_component_gradient(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut g = vec![0.0; d];
        let mut best = 0.0_f64;
        for (a, b) in self.mats.iter().zip(&self.vecs) {
            a.matvec_into(x, &mut g);
            for (gi, bi) in g.iter_mut().zip(b) {
                *gi += bi;
            }
            best = best.max(linalg::norm2(&g));
        }
        best
    }
}

// ---------------------------------------------------------------------------
// Expectations

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    /// `E[S]`.
    S,
    /// `E[S^T S]`.
    Gram,
    /// `E[S^T S] + eta n A`.
    ShiftedGram,
    /// `E[t]`.
    NoiseMean,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::S => "S",
            Target::Gram => "gram",
            Target::ShiftedGram => "shifted_gram",
            Target::NoiseMean => "noise_mean",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Exhaustive,
    MonteCarlo { samples: usize, seed: u64 },
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Exhaustive => "exhaustive",
            Mode::MonteCarlo { .. } => "monte_carlo",
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        match *self {
            Mode::Exhaustive if n > EXHAUSTIVE_MAX_N => Err(Error::TooLarge {
                n,
                max: EXHAUSTIVE_MAX_N,
            }),
            Mode::MonteCarlo { samples, .. } if samples < MC_MIN_SAMPLES => {
                Err(Error::BadCount { what: "samples", got: samples })
            }
            _ => Ok(()),
        }
    }

    fn chunk_count(&self, n: usize) -> usize {
        match *self {
            Mode::Exhaustive => factorial(n).div_ceil(EXHAUSTIVE_CHUNK),
            Mode::MonteCarlo { samples, .. } => samples.min(JACKKNIFE_GROUPS),
        }
    }

    /// Number of permutations visited.
    pub fn samples(&self, n: usize) -> usize {
        match *self {
            Mode::Exhaustive => factorial(n),
            Mode::MonteCarlo { samples, .. } => samples,
        }
    }

    /// Calls `f` on every permutation of chunk `chunk`.
    fn for_each_in_chunk(&self, n: usize, chunk: usize, mut f: impl FnMut(&[usize])) {
        match *self {
            Mode::Exhaustive => {
                let total = factorial(n);
                let start = chunk * EXHAUSTIVE_CHUNK;
                let end = (start + EXHAUSTIVE_CHUNK).min(total);
                let mut p = nth_permutation(n, start);
                for r in start..end {
                    f(&p);
                    if r + 1 < end {
                        next_permutation(&mut p);
                    }
                }
            }
            Mode::MonteCarlo { samples, seed } => {
                let groups = self.chunk_count(n);
                let start = chunk * samples / groups;
                let end = (chunk + 1) * samples / groups;
                for j in start..end {
                    let mut r = rng::stream(seed, &[0x4D43, j as u64]);
                    let p = uniform_permutation(&mut r, n);
                    f(&p);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Matrix(Matrix),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationResult {
    pub target: Target,
    pub eta: f64,
    pub mode: Mode,
    pub value: Value,
    /// Spectral norm for matrices, Euclidean norm for vectors.
    pub norm: f64,
    /// Jackknife standard error of `norm` (Monte Carlo only).
    pub std_error: Option<f64>,
    pub samples: usize,
}

/// Partial sum of one chunk: flattened target values and a count.
struct Partial {
    sum: Vec<f64>,
    count: usize,
}

fn target_len(target: Target, d: usize) -> usize {
    match target {
        Target::NoiseMean => d,
        _ => d * d,
    }
}

fn accumulate_target(ens: &PermutationEnsemble, target: Target, eta: f64, perm: &[usize], acc: &mut [f64]) {
    let (s, t) = ens.epoch_pair(perm, eta);
    match target {
        Target::S => acc.iter_mut().zip(s.as_slice()).for_each(|(a, v)| *a += v),
        Target::Gram | Target::ShiftedGram => {
            let g = s.gram();
            acc.iter_mut().zip(g.as_slice()).for_each(|(a, v)| *a += v)
        }
        Target::NoiseMean => acc.iter_mut().zip(&t).for_each(|(a, v)| *a += v),
    }
}

/// Turns a mean of raw samples into the target value and its norm.
fn finish_target(ens: &PermutationEnsemble, target: Target, eta: f64, mean: &[f64]) -> (Value, f64) {
    let d = ens.dim();
    match target {
        Target::NoiseMean => {
            let v = mean.to_vec();
            let norm = linalg::norm2(&v);
            (Value::Vector(v), norm)
        }
        Target::S => {
            let m = Matrix::from_row_major(d, mean.to_vec());
            let norm = m.spectral_norm();
            (Value::Matrix(m), norm)
        }
        Target::Gram | Target::ShiftedGram => {
            let mut m = Matrix::from_row_major(d, mean.to_vec());
            if target == Target::ShiftedGram {
                m = m.add_scaled(eta * ens.n() as f64, &ens.mean);
            }
            let norm = m.symmetrized().sym_spectral_norm();
            (Value::Matrix(m), norm)
        }
    }
}

/// Sequential convenience wrapper around [`expectation_with`].
pub fn expectation(ens: &PermutationEnsemble, target: Target, eta: f64, mode: Mode) -> Result<ExpectationResult> {
    expectation_with(ens, target, eta, mode, &Sequential)
}

pub fn expectation_with<E: ChunkExecutor>(
    ens: &PermutationEnsemble,
    target: Target,
    eta: f64,
    mode: Mode,
    exec: &E,
) -> Result<ExpectationResult> {
    if !(eta >= 0.0) {
        return Err(Error::BadArgs("eta must be nonnegative"));
    }
    let n = ens.n();
    mode.validate(n)?;
    let len = target_len(target, ens.dim());
    let chunks = mode.chunk_count(n);
    let partials = exec.map_chunks(chunks, &|c| {
        let mut sum = vec![0.0; len];
        let mut count = 0;
        mode.for_each_in_chunk(n, c, |p| {
            accumulate_target(ens, target, eta, p, &mut sum);
            count += 1;
        });
        Partial { sum, count }
    });
    let mut total = vec![0.0; len];
    let mut count = 0;
    for p in &partials {
        total.iter_mut().zip(&p.sum).for_each(|(t, v)| *t += v);
        count += p.count;
    }
    let mean: Vec<f64> = total.iter().map(|v| v / count as f64).collect();
    let (value, norm) = finish_target(ens, target, eta, &mean);

    let std_error = match mode {
        Mode::Exhaustive => None,
        Mode::MonteCarlo { .. } => {
            // Delete-a-group jackknife of the norm.
            let g = partials.len() as f64;
            let loo: Vec<f64> = partials
                .iter()
                .map(|p| {
                    let rest = (count - p.count) as f64;
                    let m: Vec<f64> = total.iter().zip(&p.sum).map(|(t, s)| (t - s) / rest).collect();
                    finish_target(ens, target, eta, &m).1
                })
                .collect();
            let avg = loo.iter().sum::<f64>() / g;
            let ss: f64 = loo.iter().map(|v| (v - avg) * (v - avg)).sum();
            Some(libm::sqrt((g - 1.0) / g * ss))
        }
    };

    Ok(ExpectationResult {
        target,
        eta,
        mode,
        value,
        norm,
        std_error,
        samples: count,
    })
}

// ---------------------------------------------------------------------------
// Checks

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub lemma: &'static str,
    pub n: usize,
    pub d: usize,
    pub eta: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`.
    pub margin: f64,
    pub mode: &'static str,
    pub samples: usize,
    pub std_error: Option<f64>,
    pub holds: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckReport {
    pub rows: Vec<CheckRow>,
}

impl CheckReport {
    pub fn violations(&self) -> impl Iterator<Item = &CheckRow> {
        self.rows.iter().filter(|r| !r.holds)
    }

    pub fn min_margin(&self) -> f64 {
        self.rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min)
    }

    /// `Err(BoundViolated)` for the worst violating row, if any.
    pub fn ensure(&self) -> Result<()> {
        match self
            .violations()
            .min_by(|a, b| a.margin.total_cmp(&b.margin))
        {
            Some(r) => Err(Error::BoundViolated {
                lemma: r.lemma,
                eta: r.eta,
                margin: r.margin,
            }),
            None => Ok(()),
        }
    }

    pub fn extend(&mut self, other: CheckReport) {
        self.rows.extend(other.rows);
    }
}

pub const LEMMA_CONTRACTION_1: &str = "contraction_1";
pub const LEMMA_CONTRACTION_2: &str = "contraction_2";
pub const LEMMA_CONTRACTION_3: &str = "contraction_3";
pub const LEMMA_NOISE_MEAN: &str = "noise_mean";
pub const LEMMA_SINGLESHUFFLE: &str = "singleshuffle_contraction";
pub const LEMMA_PER_EPOCH: &str = "per_epoch_progress";
pub const LEMMA_PER_EPOCH_QUADRATIC: &str = "per_epoch_quadratic";
pub const LEMMA_AMGM_PROBE: &str = "amgm_probe";

/// Admissible step-size ceilings of each check for an ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// `3/(16 n L) min{1, sqrt(n/kappa)}` (contraction bounds 1 and 2).
    pub contraction: f64,
    /// `1/(8 n L) min{1, sqrt(n/kappa)}` (contraction bound 3).
    pub contraction_3: f64,
    /// `1/(2 n L)`.
    pub noise_mean: f64,
    /// `1/(5 n L kappa)`.
    pub singleshuffle: f64,
    /// `2/L` (per-epoch progress).
    pub progress: f64,
}

impl Thresholds {
    pub fn of(ens: &PermutationEnsemble) -> Self {
        let n = ens.n() as f64;
        let l = ens.ell;
        let kappa = ens.kappa();
        let shrink = 1.0_f64.min(libm::sqrt(n / kappa));
        Self {
            contraction: 3.0 / (16.0 * n * l) * shrink,
            contraction_3: 1.0 / (8.0 * n * l) * shrink,
            noise_mean: 1.0 / (2.0 * n * l),
            singleshuffle: 1.0 / (5.0 * n * l * kappa),
            progress: 2.0 / l,
        }
    }
}

/// `points + 1` evenly spaced step sizes from 0 to `max` inclusive.
pub fn eta_grid(max: f64, points: usize) -> Vec<f64> {
    (0..=points).map(|j| max * j as f64 / points as f64).collect()
}

fn pw(x: f64, k: i32) -> f64 {
    libm::pow(x, k as f64)
}

fn ensure_below(lemma: &'static str, eta: f64, threshold: f64) -> Result<()> {
    if !(eta >= 0.0) || eta > threshold * (1.0 + 1e-12) {
        return Err(Error::EtaAboveThreshold { lemma, eta, threshold });
    }
    Ok(())
}

/// Runs the permutation checks on one ensemble.
#[derive(Debug, Clone)]
pub struct Verifier<'a, E = Sequential> {
    pub ensemble: &'a PermutationEnsemble,
    /// Samples used when `n` is too large to enumerate.
    pub mc_samples: usize,
    pub seed: u64,
    exec: E,
}

impl<'a> Verifier<'a, Sequential> {
    pub fn new(ensemble: &'a PermutationEnsemble) -> Self {
        Self {
            ensemble,
            mc_samples: 20_000,
            seed: 0,
            exec: Sequential,
        }
    }
}

impl<'a, E: ChunkExecutor> Verifier<'a, E> {
    pub fn with_executor<F: ChunkExecutor>(self, exec: F) -> Verifier<'a, F> {
        Verifier {
            ensemble: self.ensemble,
            mc_samples: self.mc_samples,
            seed: self.seed,
            exec,
        }
    }

    pub fn with_samples(mut self, samples: usize, seed: u64) -> Self {
        self.mc_samples = samples;
        self.seed = seed;
        self
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds::of(self.ensemble)
    }

    /// Exhaustive when `n <= 8`, Monte Carlo otherwise.
    pub fn default_mode(&self) -> Mode {
        if self.ensemble.n() <= EXHAUSTIVE_MAX_N {
            Mode::Exhaustive
        } else {
            Mode::MonteCarlo {
                samples: self.mc_samples,
                seed: self.seed,
            }
        }
    }

    pub fn expectation(&self, target: Target, eta: f64) -> Result<ExpectationResult> {
        expectation_with(self.ensemble, target, eta, self.default_mode(), &self.exec)
    }

    fn row(&self, lemma: &'static str, eta: f64, res: &ExpectationResult, rhs: f64) -> CheckRow {
        let lhs = res.norm;
        let holds = match res.std_error {
            None => lhs <= rhs + BOUND_TOL,
            Some(se) => lhs - MC_SIGMAS * se <= rhs + BOUND_TOL,
        };
        CheckRow {
            lemma,
            n: self.ensemble.n(),
            d: self.ensemble.dim(),
            eta,
            lhs,
            rhs,
            margin: rhs - lhs,
            mode: res.mode.name(),
            samples: res.samples,
            std_error: res.std_error,
            holds,
        }
    }

    fn expectation_check(
        &self,
        lemma: &'static str,
        target: Target,
        threshold: f64,
        grid: &[f64],
        rhs: impl Fn(f64) -> f64,
    ) -> Result<CheckReport> {
        for &eta in grid {
            ensure_below(lemma, eta, threshold)?;
        }
        let mut rows = Vec::with_capacity(grid.len());
        for &eta in grid {
            let res = self.expectation(target, eta)?;
            rows.push(self.row(lemma, eta, &res, rhs(eta)));
        }
        Ok(CheckReport { rows })
    }

    /// `||E[S^T S]|| <= 1 - eta n mu`.
    pub fn check_contraction_1(&self, grid: &[f64]) -> Result<CheckReport> {
        let (n, mu) = (self.ensemble.n() as f64, self.ensemble.mu);
        self.expectation_check(LEMMA_CONTRACTION_1, Target::Gram, self.thresholds().contraction, grid, |eta| {
            1.0 - eta * n * mu
        })
    }

    /// `||E[S]|| <= 1 - eta n mu / 2`.
    pub fn check_contraction_2(&self, grid: &[f64]) -> Result<CheckReport> {
        let (n, mu) = (self.ensemble.n() as f64, self.ensemble.mu);
        self.expectation_check(LEMMA_CONTRACTION_2, Target::S, self.thresholds().contraction, grid, |eta| {
            1.0 - eta * n * mu / 2.0
        })
    }

    /// `||E[S^T S] + eta n A|| <= 1 - eta n mu / 2`.
    pub fn check_contraction_3(&self, grid: &[f64]) -> Result<CheckReport> {
        let (n, mu) = (self.ensemble.n() as f64, self.ensemble.mu);
        self.expectation_check(
            LEMMA_CONTRACTION_3,
            Target::ShiftedGram,
            self.thresholds().contraction_3,
            grid,
            |eta| 1.0 - eta * n * mu / 2.0,
        )
    }

    /// `||E[t]|| <= 4 eta n L G`.
    pub fn check_noise_mean(&self, grid: &[f64]) -> Result<CheckReport> {
        let e = self.ensemble;
        let (n, l, g) = (e.n() as f64, e.ell, e.big_g);
        self.expectation_check(LEMMA_NOISE_MEAN, Target::NoiseMean, self.thresholds().noise_mean, grid, |eta| {
            4.0 * eta * n * l * g
        })
    }

    /// `||S(pi)|| <= 1 - eta n mu / 2` for every permutation (every sampled
    /// one when `n > 8`).
    pub fn check_singleshuffle_contraction(&self, grid: &[f64]) -> Result<CheckReport> {
        let e = self.ensemble;
        let threshold = self.thresholds().singleshuffle;
        for &eta in grid {
            ensure_below(LEMMA_SINGLESHUFFLE, eta, threshold)?;
        }
        let n = e.n();
        let mode = if n <= EXHAUSTIVE_MAX_N {
            Mode::Exhaustive
        } else {
            Mode::MonteCarlo {
                samples: SINGLESHUFFLE_SAMPLES,
                seed: self.seed,
            }
        };
        let chunks = mode.chunk_count(n);
        let mut rows = Vec::with_capacity(grid.len());
        for &eta in grid {
            let maxima = self.exec.map_chunks(chunks, &|c| {
                let mut worst = 0.0_f64;
                mode.for_each_in_chunk(n, c, |p| {
                    worst = worst.max(e.epoch_matrix(p, eta).spectral_norm());
                });
                worst
            });
            let lhs = maxima.into_iter().fold(0.0, f64::max);
            let rhs = 1.0 - eta * n as f64 * e.mu / 2.0;
            rows.push(CheckRow {
                lemma: LEMMA_SINGLESHUFFLE,
                n,
                d: e.dim(),
                eta,
                lhs,
                rhs,
                margin: rhs - lhs,
                mode: mode.name(),
                samples: mode.samples(n),
                std_error: None,
                holds: lhs <= rhs + BOUND_TOL,
            });
        }
        Ok(CheckReport { rows })
    }

    /// Expected squared distance after one epoch from `x_start`, and the
    /// gradient bound `G` over every point visited by any permutation.
    fn epoch_second_moment(&self, x_start: &[f64], eta: f64, mode: Mode) -> Result<(f64, f64, usize)> {
        let e = self.ensemble;
        let n = e.n();
        mode.validate(n)?;
        let parts = self.exec.map_chunks(mode.chunk_count(n), &|c| {
            let mut sum = 0.0;
            let mut gmax = 0.0_f64;
            let mut count = 0usize;
            mode.for_each_in_chunk(n, c, |p| {
                let (x, g) = e.epoch_walk(p, eta, x_start);
                sum += linalg::norm2_sq(&x);
                gmax = gmax.max(g);
                count += 1;
            });
            (sum, gmax, count)
        });
        let (mut sum, mut gmax, mut count) = (0.0, 0.0_f64, 0usize);
        for (s, g, c) in parts {
            sum += s;
            gmax = gmax.max(g);
            count += c;
        }
        Ok((sum / count as f64, gmax, count))
    }

    fn progress_preconditions(&self, lemma: &'static str, x_start: &[f64], eta: f64) -> Result<()> {
        if x_start.len() != self.ensemble.dim() {
            return Err(Error::BadArgs("start point has the wrong dimension"));
        }
        if !self.ensemble.has_convex_components() {
            return Err(Error::AssumptionUnmet("per-epoch bounds need convex components"));
        }
        ensure_below(lemma, eta, self.thresholds().progress)
    }

    fn progress_row(&self, lemma: &'static str, eta: f64, lhs: f64, rhs: f64, mode: Mode) -> CheckRow {
        CheckRow {
            lemma,
            n: self.ensemble.n(),
            d: self.ensemble.dim(),
            eta,
            lhs,
            rhs,
            margin: rhs - lhs,
            mode: mode.name(),
            samples: mode.samples(self.ensemble.n()),
            std_error: None,
            holds: lhs <= rhs + BOUND_TOL,
        }
    }

    /// One-epoch progress bound for convex components:
    ///
    /// ```text
    /// E||x+ - x*||^2 <= (1 - 3 n eta mu / 4 + n^2 eta^2 L^2) ||x - x*||^2
    ///                   - 2 n eta (1 - 4 n eta kappa L) (F(x) - F*)
    ///                   + 20 n^2 eta^3 kappa L G^2 + 5 n^3 eta^4 L^2 G^2
    /// ```
    ///
    /// `G` bounds the component gradients on every point the epoch can
    /// visit from `x_start`.
    pub fn check_per_epoch_progress(&self, x_start: &[f64], eta: f64, mode: Mode) -> Result<CheckReport> {
        self.progress_preconditions(LEMMA_PER_EPOCH, x_start, eta)?;
        let e = self.ensemble;
        let (lhs, g, _) = self.epoch_second_moment(x_start, eta, mode)?;
        let n = e.n() as f64;
        let (mu, l, kappa) = (e.mu, e.ell, e.kappa());
        let dist2 = linalg::norm2_sq(x_start);
        let gap = 0.5 * e.mean.quad_form(x_start);
        let g2 = g * g;
        let rhs = (1.0 - 0.75 * n * eta * mu + n * n * eta * eta * l * l) * dist2
            - 2.0 * n * eta * (1.0 - 4.0 * n * eta * kappa * l) * gap
            + 20.0 * n * n * pw(eta, 3) * kappa * l * g2
            + 5.0 * pw(n, 3) * pw(eta, 4) * l * l * g2;
        Ok(CheckReport {
            rows: vec![self.progress_row(LEMMA_PER_EPOCH, eta, lhs, rhs, mode)],
        })
    }

    /// One-epoch progress bound for quadratic `F` with convex components:
    ///
    /// ```text
    /// E||x+ - x*||^2 <= (1 - 3 n eta mu / 2 + 5 n^2 eta^2 L^2 + 8 n^3 eta^3 kappa L^3) ||x - x*||^2
    ///                   + 10 n^3 eta^4 L^2 G^2 + 40 n^4 eta^5 kappa L^3 G^2 + 32 n eta^3 kappa L G^2
    /// ```
    pub fn check_per_epoch_quadratic(&self, x_start: &[f64], eta: f64, mode: Mode) -> Result<CheckReport> {
        self.progress_preconditions(LEMMA_PER_EPOCH_QUADRATIC, x_start, eta)?;
        let e = self.ensemble;
        let (lhs, g, _) = self.epoch_second_moment(x_start, eta, mode)?;
        let n = e.n() as f64;
        let (mu, l, kappa) = (e.mu, e.ell, e.kappa());
        let dist2 = linalg::norm2_sq(x_start);
        let g2 = g * g;
        let rhs = (1.0 - 1.5 * n * eta * mu
            + 5.0 * n * n * eta * eta * l * l
            + 8.0 * pw(n, 3) * pw(eta, 3) * kappa * pw(l, 3))
            * dist2
            + 10.0 * pw(n, 3) * pw(eta, 4) * l * l * g2
            + 40.0 * pw(n, 4) * pw(eta, 5) * kappa * pw(l, 3) * g2
            + 32.0 * n * pw(eta, 3) * kappa * l * g2;
        Ok(CheckReport {
            rows: vec![self.progress_row(LEMMA_PER_EPOCH_QUADRATIC, eta, lhs, rhs, mode)],
        })
    }

    /// Reports `||E[S^T S]|| - (1 - eta n mu)` for arbitrary step sizes.
    /// Never flags a violation.
    pub fn amgm_probe(&self, grid: &[f64]) -> Result<CheckReport> {
        let (n, mu) = (self.ensemble.n() as f64, self.ensemble.mu);
        let mut rows = Vec::with_capacity(grid.len());
        for &eta in grid {
            if !(eta >= 0.0) {
                return Err(Error::BadArgs("eta must be nonnegative"));
            }
            let res = self.expectation(Target::Gram, eta)?;
            let mut row = self.row(LEMMA_AMGM_PROBE, eta, &res, 1.0 - eta * n * mu);
            row.holds = true;
            rows.push(row);
        }
        Ok(CheckReport { rows })
    }
}
