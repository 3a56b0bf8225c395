//! Grid sweeps over `(n, K)`, log-log exponent fits and method comparisons.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use alloc::format;

use crate::error::{Error, Result};
use crate::exec::ChunkExecutor;
use crate::optimizer::{run, select, IterateSelector};
use crate::problems::{certify_pl_constant, FiniteSum, PlProblem, Problem, QuadraticSpec};
use crate::rng::sub_seed;
use crate::schedules::{Schedule, ScheduleKind};
use crate::shuffler::Strategy;

/// Generator settings of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Quadratic {
        d: usize,
        mu: f64,
        ell: f64,
        noise_scale: f64,
        convex_components: bool,
        grad_scale: f64,
    },
    Pl {
        perturb_scale: f64,
    },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Quadratic { .. } => "quadratic",
            Family::Pl { .. } => "pl",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Family::Quadratic { d, .. } => *d,
            Family::Pl { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sampling {
    WithReplacement,
    RandomShuffle,
    SingleShuffle,
}

impl Sampling {
    pub fn strategy(self) -> Strategy {
        match self {
            Sampling::WithReplacement => Strategy::WithReplacement,
            Sampling::RandomShuffle => Strategy::RandomShuffle,
            Sampling::SingleShuffle => Strategy::SingleShuffle,
        }
    }

    pub fn name(self) -> &'static str {
        self.strategy().name()
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "with_replacement" | "sgd" => Some(Sampling::WithReplacement),
            "random_shuffle" => Some(Sampling::RandomShuffle),
            "single_shuffle" => Some(Sampling::SingleShuffle),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Method {
    pub sampling: Sampling,
    pub schedule: ScheduleKind,
    /// Used by the varying schedules.
    pub alpha: Option<f64>,
    /// Used by the constant schedule.
    pub eta: Option<f64>,
}

impl Method {
    pub fn label(&self) -> String {
        format!("{}+{}", self.sampling.name(), self.schedule.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub family: Family,
    pub method: Method,
    pub selector: IterateSelector,
    pub n_values: Vec<usize>,
    pub k_values: Vec<usize>,
    pub trials: usize,
    /// One problem per `n` (expectation over the algorithm's randomness
    /// only) instead of a fresh problem per trial.
    pub fixed_problem: bool,
    /// Start point; defaults to all ones for quadratics and the reference
    /// start for PŁ problems.
    pub x0: Option<Vec<f64>>,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(&n) = self.n_values.iter().find(|&&n| n < 2) {
            return Err(Error::BadCount { what: "n", got: n });
        }
        if let Some(&k) = self.k_values.iter().find(|&&k| k < 1) {
            return Err(Error::BadCount { what: "K", got: k });
        }
        if self.n_values.is_empty() || self.k_values.is_empty() {
            return Err(Error::BadArgs("grid needs at least one n and one K"));
        }
        if self.trials < 1 {
            return Err(Error::BadCount { what: "trials", got: self.trials });
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != self.family.dim() {
                return Err(Error::BadArgs("start point has the wrong dimension"));
            }
        }
        Ok(())
    }

    /// The configured start point, or the family default.
    pub fn start(&self, problem: &Problem) -> Vec<f64> {
        match (&self.x0, problem) {
            (Some(x), _) => x.clone(),
            (None, Problem::Pl(p)) => vec![p.start],
            (None, Problem::Quadratic(q)) => vec![1.0; q.d],
        }
    }
}

/// Seed of the problem used by `trial` at size `n`.
pub fn problem_seed(base_seed: u64, n: usize, trial: usize, fixed_problem: bool) -> u64 {
    let t = if fixed_problem { 0 } else { trial as u64 + 1 };
    sub_seed(base_seed, &[0x5052_4f42, n as u64, t])
}

/// Seed of the optimizer run for `(n, K, trial)`.
pub fn run_seed(base_seed: u64, n: usize, k: usize, trial: usize) -> u64 {
    sub_seed(base_seed, &[0x5255_4e00, n as u64, k as u64, trial as u64])
}

/// Draws the problem for `(n, trial)` of a family. `mu_pl` is needed for PŁ.
pub fn make_problem(family: &Family, n: usize, seed: u64, mu_pl: Option<f64>) -> Result<Problem> {
    match *family {
        Family::Quadratic {
            d,
            mu,
            ell,
            noise_scale,
            convex_components,
            grad_scale,
        } => Ok(QuadraticSpec::new(n, d, mu, ell)
            .noise(noise_scale)
            .convex(convex_components)
            .grad_scale(grad_scale)
            .generate(seed)?
            .into()),
        Family::Pl { perturb_scale } => {
            let mu_pl = match mu_pl {
                Some(m) => m,
                None => certify_pl_constant()?,
            };
            Ok(PlProblem::generate(n, perturb_scale, seed, mu_pl)?.into())
        }
    }
}

/// Values of one `(n, K, trial)` run under every selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRecord {
    pub n: usize,
    pub k: usize,
    pub trial: usize,
    pub seed: u64,
    pub last: f64,
    pub best: f64,
    pub tail: f64,
    /// `max ||x_i^k||` over the run.
    pub max_iterate_norm: f64,
    pub nonfinite: bool,
}

impl RunRecord {
    pub fn value(&self, selector: IterateSelector) -> f64 {
        match selector {
            IterateSelector::Last => self.last,
            IterateSelector::BestEndOfEpoch => self.best,
            IterateSelector::TailAverage => self.tail,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub k: usize,
    pub trials: usize,
    /// Mean of the selector's value over finite trials (NaN if none).
    pub mean: f64,
    pub stderr: f64,
    pub requirement_met: bool,
    /// Trials that diverged.
    pub nonfinite: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub family: &'static str,
    pub method: Method,
    pub selector: IterateSelector,
    pub rows: Vec<SweepRow>,
    pub runs: Vec<RunRecord>,
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let m = values.len();
    if m == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    if m == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1) as f64;
    (mean, libm::sqrt(var / m as f64))
}

/// Runs `trials` independent runs at every `(n, K)` of the grid.
pub fn sweep<E: ChunkExecutor>(grid: &GridSpec, base_seed: u64, exec: &E) -> Result<SweepTable> {
    grid.validate()?;
    let mu_pl = match grid.family {
        Family::Pl { .. } => Some(certify_pl_constant()?),
        Family::Quadratic { .. } => None,
    };
    let per_n = if grid.fixed_problem { 1 } else { grid.trials };
    let jobs_p = grid.n_values.len() * per_n;
    let problems: Vec<Result<Problem>> = exec.map_chunks(jobs_p, &|j| {
        let (ni, t) = (j / per_n, j % per_n);
        let n = grid.n_values[ni];
        make_problem(&grid.family, n, problem_seed(base_seed, n, t, grid.fixed_problem), mu_pl)
    });
    let problems: Vec<Problem> = problems.into_iter().collect::<Result<_>>()?;

    let nk = grid.k_values.len();
    let trials = grid.trials;
    let jobs = grid.n_values.len() * nk * trials;
    let records: Vec<Result<RunRecord>> = exec.map_chunks(jobs, &|j| {
        let trial = j % trials;
        let ki = (j / trials) % nk;
        let ni = j / (trials * nk);
        let (n, k) = (grid.n_values[ni], grid.k_values[ki]);
        let problem = &problems[ni * per_n + if grid.fixed_problem { 0 } else { trial }];
        single_run(grid, problem, n, k, trial, run_seed(base_seed, n, k, trial))
    });
    let runs: Vec<RunRecord> = records.into_iter().collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(grid.n_values.len() * nk);
    for (ni, &n) in grid.n_values.iter().enumerate() {
        for (ki, &k) in grid.k_values.iter().enumerate() {
            let start = (ni * nk + ki) * trials;
            let block = &runs[start..start + trials];
            let values: Vec<f64> = block
                .iter()
                .filter(|r| !r.nonfinite)
                .map(|r| r.value(grid.selector))
                .collect();
            let (mean, stderr) = mean_stderr(&values);
            let c = problems[ni * per_n].constants();
            let schedule = Schedule::build(grid.method.schedule, c.mu, c.ell, n, k, grid.method.alpha, grid.method.eta)?;
            rows.push(SweepRow {
                n,
                k,
                trials,
                mean,
                stderr,
                requirement_met: schedule.requirement(n, k),
                nonfinite: trials - values.len(),
                seed: base_seed,
            });
        }
    }
    Ok(SweepTable {
        family: grid.family.name(),
        method: grid.method,
        selector: grid.selector,
        rows,
        runs,
    })
}

fn single_run(grid: &GridSpec, problem: &Problem, n: usize, k: usize, trial: usize, seed: u64) -> Result<RunRecord> {
    let c = problem.constants();
    let m = &grid.method;
    let schedule = Schedule::build(m.schedule, c.mu, c.ell, n, k, m.alpha, m.eta)?;
    let x0 = grid.start(problem);
    let mut rec = RunRecord {
        n,
        k,
        trial,
        seed,
        last: f64::NAN,
        best: f64::NAN,
        tail: f64::NAN,
        max_iterate_norm: f64::NAN,
        nonfinite: false,
    };
    match run(problem, &m.sampling.strategy(), &schedule, k, &x0, seed) {
        Ok(t) => {
            rec.last = select(&t, IterateSelector::Last, problem).value;
            rec.best = select(&t, IterateSelector::BestEndOfEpoch, problem).value;
            rec.tail = select(&t, IterateSelector::TailAverage, problem).value;
            rec.max_iterate_norm = t.max_iterate_norm;
        }
        Err(Error::NonFinite { .. }) => rec.nonfinite = true,
        Err(e) => return Err(e),
    }
    Ok(rec)
}

// ---------------------------------------------------------------------------
// Fits

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    N,
    K,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::N => "n",
            Axis::K => "K",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "n" | "N" => Some(Axis::N),
            "K" | "k" => Some(Axis::K),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub axis: Axis,
    /// Value of the other variable.
    pub fixed: usize,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

pub const MIN_FIT_POINTS: usize = 4;

/// Least squares of `ln y` on `ln x`; returns `(slope, intercept, r^2)`.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() {
        return Err(Error::BadArgs("x and y lengths differ"));
    }
    if xs.len() < MIN_FIT_POINTS {
        return Err(Error::TooFewPoints {
            need: MIN_FIT_POINTS,
            got: xs.len(),
        });
    }
    for (&x, &y) in xs.iter().zip(ys) {
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::NonPositiveMean { at: x, value: y });
        }
        if !(x > 0.0) {
            return Err(Error::BadArgs("axis values must be positive"));
        }
    }
    let lx: Vec<f64> = xs.iter().map(|&x| libm::log(x)).collect();
    let ly: Vec<f64> = ys.iter().map(|&y| libm::log(y)).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::BadArgs("axis values must not all be equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) };
    Ok((slope, intercept, r2))
}

/// Fits the exponent along `axis` using the rows whose other variable
/// equals `fixed`.
pub fn fit_exponent(rows: &[SweepRow], axis: Axis, fixed: usize) -> Result<RateFit> {
    let mut pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| match axis {
            Axis::N => r.k == fixed,
            Axis::K => r.n == fixed,
        })
        .map(|r| {
            let x = match axis {
                Axis::N => r.n,
                Axis::K => r.k,
            };
            (x as f64, r.mean)
        })
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (slope, intercept, r_squared) = fit_power_law(&xs, &ys)?;
    Ok(RateFit {
        axis,
        fixed,
        slope,
        intercept,
        r_squared,
        points: xs.len(),
    })
}

// ---------------------------------------------------------------------------
// Comparison

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub method: String,
    pub n: usize,
    pub k: usize,
    /// Gradient evaluations `nK`.
    pub budget: usize,
    pub mean: f64,
    pub stderr: f64,
    /// `mean` over the first method's mean at the same point.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodFit {
    pub method: String,
    pub fit: RateFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub fits: Vec<MethodFit>,
}

/// Sweeps every grid with the same base seed (so methods share problems)
/// and lines the tables up point by point. The first grid is the reference
/// for ratios; points missing from it get a NaN ratio.
pub fn compare_methods<E: ChunkExecutor>(grids: &[GridSpec], base_seed: u64, exec: &E) -> Result<Comparison> {
    let mut tables = Vec::with_capacity(grids.len());
    for g in grids {
        let t = sweep(g, base_seed, exec)?;
        tables.push((g.method.label(), t.rows));
    }
    Ok(compare_tables(&tables))
}

/// The comparison step of [`compare_methods`] on labelled sweep rows.
pub fn compare_tables(tables: &[(String, Vec<SweepRow>)]) -> Comparison {
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    let reference = tables.first().map(|t| &t.1);
    for (label, table) in tables {
        for r in table {
            let base = reference
                .and_then(|rt| rt.iter().find(|q| q.n == r.n && q.k == r.k))
                .map(|q| q.mean)
                .unwrap_or(f64::NAN);
            rows.push(ComparisonRow {
                method: label.clone(),
                n: r.n,
                k: r.k,
                budget: r.n * r.k,
                mean: r.mean,
                stderr: r.stderr,
                ratio: r.mean / base,
            });
        }
        let mut ns: Vec<usize> = table.iter().map(|r| r.n).collect();
        ns.sort_unstable();
        ns.dedup();
        for n in ns {
            if let Ok(fit) = fit_exponent(table, Axis::K, n) {
                fits.push(MethodFit {
                    method: label.clone(),
                    fit,
                });
            }
        }
        let mut ks: Vec<usize> = table.iter().map(|r| r.k).collect();
        ks.sort_unstable();
        ks.dedup();
        for k in ks {
            if let Ok(fit) = fit_exponent(table, Axis::N, k) {
                fits.push(MethodFit {
                    method: label.clone(),
                    fit,
                });
            }
        }
    }
    Comparison { rows, fits }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;

    fn planted(ns: &[usize], ks: &[usize], f: impl Fn(f64, f64) -> f64) -> Vec<SweepRow> {
        let mut rows = Vec::new();
        for &n in ns {
            for &k in ks {
                rows.push(SweepRow {
                    n,
                    k,
                    trials: 1,
                    mean: f(n as f64, k as f64),
                    stderr: 0.0,
                    requirement_met: true,
                    nonfinite: 0,
                    seed: 0,
                });
            }
        }
        rows
    }

    #[test]
    fn planted_power_law() {
        let rows = planted(&[10], &[8, 16, 32, 64, 128], |_, k| 3.5 / (k * k));
        let fit = fit_exponent(&rows, Axis::K, 10).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(fit.points, 5);
    }

    #[test]
    fn two_term_model_regimes() {
        let model = |n: f64, k: f64| 1.0 / (n * n * k * k) + 1.0 / (n * k * k * k);
        let small_n = planted(&[2], &[1000, 2000, 4000, 8000], model);
        let s = fit_exponent(&small_n, Axis::K, 2).unwrap().slope;
        assert!((s + 2.0).abs() < 0.05, "{s}");
        let big_n = planted(&[100_000], &[10, 20, 40, 80], model);
        let s = fit_exponent(&big_n, Axis::K, 100_000).unwrap().slope;
        assert!((s + 3.0).abs() < 0.05, "{s}");
    }

    #[test]
    fn fit_errors() {
        let rows = planted(&[10], &[8, 16, 32], |_, k| 1.0 / k);
        assert!(matches!(
            fit_exponent(&rows, Axis::K, 10),
            Err(Error::TooFewPoints { need: 4, got: 3 })
        ));
        let rows = planted(&[10], &[8, 16, 32, 64], |_, k| if k > 20.0 { 0.0 } else { 1.0 });
        assert!(matches!(
            fit_exponent(&rows, Axis::K, 10),
            Err(Error::NonPositiveMean { .. })
        ));
    }

    fn small_grid(trials: usize) -> GridSpec {
        GridSpec {
            family: Family::Quadratic {
                d: 2,
                mu: 1.0,
                ell: 2.0,
                noise_scale: 0.5,
                convex_components: true,
                grad_scale: 1.0,
            },
            method: Method {
                sampling: Sampling::RandomShuffle,
                schedule: ScheduleKind::ConstQuadratic,
                alpha: None,
                eta: None,
            },
            selector: IterateSelector::Last,
            n_values: vec![4],
            k_values: vec![8],
            trials,
            fixed_problem: true,
            x0: None,
        }
    }

    #[test]
    fn single_point_matches_direct_run() {
        let g = small_grid(1);
        let t = sweep(&g, 11, &Sequential).unwrap();
        let p = make_problem(&g.family, 4, problem_seed(11, 4, 0, true), None).unwrap();
        let c = p.constants();
        let s = Schedule::const_quadratic(c.mu, c.ell, 4, 8);
        let traj = run(&p, &Strategy::RandomShuffle, &s, 8, &[1.0, 1.0], run_seed(11, 4, 8, 0)).unwrap();
        assert_eq!(t.rows[0].mean, select(&traj, IterateSelector::Last, &p).value);
        assert_eq!(t.rows.len(), 1);
    }

    #[test]
    fn sweep_is_deterministic() {
        let g = small_grid(5);
        assert_eq!(sweep(&g, 3, &Sequential).unwrap(), sweep(&g, 3, &Sequential).unwrap());
    }

    #[test]
    fn identical_methods_have_unit_ratio() {
        let g = small_grid(3);
        let c = compare_methods(&[g.clone(), g], 5, &Sequential).unwrap();
        assert_eq!(c.rows.len(), 2);
        assert!(c.rows.iter().all(|r| r.ratio == 1.0));
    }
}
