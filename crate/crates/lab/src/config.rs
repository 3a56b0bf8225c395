//! TOML run configuration.
//!
//! Every section is optional and every key has a default; unknown keys are
//! rejected. The seed can be overridden with `SHUFFLELAB_SEED`.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use shufflelab_core::optimizer::IterateSelector;
use shufflelab_core::rates::{Axis, Family, GridSpec, Method, Sampling};
use shufflelab_core::schedules::ScheduleKind;
use shufflelab_core::shuffler::Strategy;

use crate::error::{LabError, Result};

pub const DEFAULT_SEED: u64 = 20240611;
pub const SEED_ENV: &str = "SHUFFLELAB_SEED";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Directory for every file a command writes.
    pub output: PathBuf,
    /// Worker threads; 0 uses one per core.
    pub threads: usize,
    pub problem: ProblemConfig,
    pub method: MethodConfig,
    pub sweep: SweepConfig,
    pub verify: VerifyConfig,
    pub fit: FitConfig,
    pub report: ReportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            output: PathBuf::from("out"),
            threads: 0,
            problem: ProblemConfig::default(),
            method: MethodConfig::default(),
            sweep: SweepConfig::default(),
            verify: VerifyConfig::default(),
            fit: FitConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    /// `quadratic` or `pl`.
    pub family: String,
    pub n: usize,
    pub d: usize,
    pub mu: f64,
    pub ell: f64,
    pub noise: f64,
    pub convex: bool,
    pub grad_scale: f64,
    pub perturb_scale: f64,
    pub fixed_problem: bool,
    pub x0: Option<Vec<f64>>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            family: "quadratic".into(),
            n: 32,
            d: 3,
            mu: 1.0,
            ell: 2.0,
            noise: 1.0,
            convex: false,
            grad_scale: 1.0,
            perturb_scale: 1.0,
            fixed_problem: true,
            x0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodConfig {
    /// `with_replacement`, `random_shuffle`, `single_shuffle` or `fixed_permutation`.
    pub strategy: String,
    pub schedule: String,
    pub alpha: Option<f64>,
    pub eta: Option<f64>,
    pub epochs: usize,
    /// `last`, `best` or `tail_average`.
    pub selector: String,
    /// Order used by `fixed_permutation` (0-based).
    pub permutation: Option<Vec<usize>>,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            strategy: "random_shuffle".into(),
            schedule: "const_quadratic".into(),
            alpha: None,
            eta: None,
            epochs: 100,
            selector: "last".into(),
            permutation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub n_values: Vec<usize>,
    pub k_values: Vec<usize>,
    pub trials: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_values: vec![16, 32, 64, 128],
            k_values: vec![64, 128, 256, 512],
            trials: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Random ensembles for the contraction checks.
    pub ensembles: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub d_max: usize,
    pub mu: f64,
    /// Largest `L / mu` drawn.
    pub kappa_max: f64,
    /// Largest perturbation size, as a fraction of `L`.
    pub noise: f64,
    pub eta_points: usize,
    pub mc_samples: usize,
    /// Convex ensembles for the per-epoch progress checks.
    pub progress_ensembles: usize,
    pub start_points: usize,
    pub start_radius: f64,
    pub progress_eta_points: usize,
    /// Largest probed step, in units of `1/L`.
    pub probe_eta_max: f64,
    pub chung_tuples: usize,
    pub integral_pairs: usize,
    pub hs_n: Vec<usize>,
    pub hs_delta: Vec<f64>,
    pub hs_trials: usize,
    pub hs_dim: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            ensembles: 200,
            n_min: 2,
            n_max: 6,
            d_max: 4,
            mu: 1.0,
            kappa_max: 4.0,
            noise: 0.9,
            eta_points: 8,
            mc_samples: 20_000,
            progress_ensembles: 100,
            start_points: 20,
            start_radius: 3.0,
            progress_eta_points: 5,
            probe_eta_max: 1.0,
            chung_tuples: 500,
            integral_pairs: 100,
            hs_n: vec![10, 50, 200],
            hs_delta: vec![0.2, 0.05, 0.01],
            hs_trials: 100_000,
            hs_dim: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Sweep table to read.
    pub input: PathBuf,
    /// `n` or `K`.
    pub axis: String,
    /// Values of the other variable to fit at; empty means all of them.
    pub fixed: Vec<usize>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::from("out/sweep.csv"),
            axis: "K".into(),
            fixed: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Sweep tables; the first is the reference for ratios.
    pub inputs: Vec<PathBuf>,
}

fn bad(msg: impl Into<String>) -> LabError {
    LabError::Config(msg.into())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| bad(e.to_string()))
    }

    /// Reads `path` (defaults when `None`), applies the seed override and
    /// returns the raw bytes for hashing.
    pub fn load(path: Option<&Path>) -> Result<(Self, Vec<u8>)> {
        let (mut cfg, raw) = match path {
            Some(p) => {
                let raw = std::fs::read(p).map_err(|e| bad(format!("{}: {e}", p.display())))?;
                let text = std::str::from_utf8(&raw).map_err(|_| bad("config is not UTF-8"))?;
                (Self::parse(text)?, raw)
            }
            None => (Self::default(), Vec::new()),
        };
        if let Ok(s) = std::env::var(SEED_ENV) {
            cfg.seed = s
                .trim()
                .parse()
                .map_err(|_| bad(format!("{SEED_ENV} is not an unsigned integer: {s:?}")))?;
        }
        Ok((cfg, raw))
    }

    pub fn family(&self) -> Result<Family> {
        let p = &self.problem;
        match p.family.as_str() {
            "quadratic" => Ok(Family::Quadratic {
                d: p.d,
                mu: p.mu,
                ell: p.ell,
                noise_scale: p.noise,
                convex_components: p.convex,
                grad_scale: p.grad_scale,
            }),
            "pl" => Ok(Family::Pl {
                perturb_scale: p.perturb_scale,
            }),
            other => Err(bad(format!("unknown problem family {other:?}"))),
        }
    }

    pub fn schedule_kind(&self) -> Result<ScheduleKind> {
        ScheduleKind::from_name(&self.method.schedule)
            .ok_or_else(|| bad(format!("unknown schedule {:?}", self.method.schedule)))
    }

    pub fn selector(&self) -> Result<IterateSelector> {
        IterateSelector::from_name(&self.method.selector)
            .ok_or_else(|| bad(format!("unknown selector {:?}", self.method.selector)))
    }

    pub fn strategy(&self) -> Result<Strategy> {
        let m = &self.method;
        match m.strategy.as_str() {
            "fixed_permutation" => {
                let p = m.permutation.clone().unwrap_or_else(|| (0..self.problem.n).collect());
                Ok(Strategy::FixedPermutation(p))
            }
            s => Sampling::from_name(s)
                .map(Sampling::strategy)
                .ok_or_else(|| bad(format!("unknown strategy {s:?}"))),
        }
    }

    pub fn method(&self) -> Result<Method> {
        let sampling = Sampling::from_name(&self.method.strategy)
            .ok_or_else(|| bad(format!("strategy {:?} cannot be swept", self.method.strategy)))?;
        Ok(Method {
            sampling,
            schedule: self.schedule_kind()?,
            alpha: self.method.alpha,
            eta: self.method.eta,
        })
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let g = GridSpec {
            family: self.family()?,
            method: self.method()?,
            selector: self.selector()?,
            n_values: self.sweep.n_values.clone(),
            k_values: self.sweep.k_values.clone(),
            trials: self.sweep.trials,
            fixed_problem: self.problem.fixed_problem,
            x0: self.problem.x0.clone(),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn fit_axis(&self) -> Result<Axis> {
        Axis::from_name(&self.fit.axis).ok_or_else(|| bad(format!("unknown axis {:?}", self.fit.axis)))
    }
}
