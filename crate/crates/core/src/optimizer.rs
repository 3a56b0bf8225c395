//! The epoch loop `x <- x - eta * grad f_{sigma(i)}(x)` and iterate selection.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::problems::FiniteSum;
use crate::schedules::Schedule;
use crate::shuffler::Strategy;

/// End-of-epoch record of one run. Entry `k` (0-based) holds `x_0^{k+1}`:
/// index 0 is the start point and index `K` the final iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub iterates: Vec<Vec<f64>>,
    /// `F(x_0^k) - F*`.
    pub subopt: Vec<f64>,
    /// Squared distance to the solution set.
    pub dist2: Vec<f64>,
    /// Largest `||x_i^k||` over every inner iterate.
    pub max_iterate_norm: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.iterates.last().expect("trajectory is never empty")
    }
}

/// Runs `epochs` passes from `x0`. The step at epoch `k`, position `i` uses
/// `schedule.eta(k, i)` and the component picked by `strategy`.
pub fn run<P: FiniteSum + ?Sized>(
    problem: &P,
    strategy: &Strategy,
    schedule: &Schedule,
    epochs: usize,
    x0: &[f64],
    seed: u64,
) -> Result<Trajectory> {
    let n = problem.n();
    let d = problem.dim();
    strategy.validate(n)?;
    if epochs < 1 {
        return Err(Error::BadCount { what: "K", got: epochs });
    }
    if schedule.n != n {
        return Err(Error::BadArgs("schedule and problem disagree on n"));
    }
    if x0.len() != d {
        return Err(Error::BadArgs("start point has the wrong dimension"));
    }

    let fstar = problem.optimum_value();
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; d];
    let mut order = vec![0usize; n];
    let mut iterates = Vec::with_capacity(epochs + 1);
    let mut subopt = Vec::with_capacity(epochs + 1);
    let mut dist2 = Vec::with_capacity(epochs + 1);
    let mut max_norm = norm(&x);

    let record = |x: &[f64], iterates: &mut Vec<Vec<f64>>, subopt: &mut Vec<f64>, dist2: &mut Vec<f64>| {
        iterates.push(x.to_vec());
        subopt.push(problem.objective(x) - fstar);
        let dist = problem.distance_to_solution_set(x);
        dist2.push(dist * dist);
    };
    record(&x, &mut iterates, &mut subopt, &mut dist2);

    for k in 1..=epochs {
        strategy.fill_epoch(n, k - 1, seed, &mut order);
        for (pos, &comp) in order.iter().enumerate() {
            let eta = schedule.eta(k, pos + 1);
            problem.component_gradient(comp, &x, &mut grad);
            for (xi, g) in x.iter_mut().zip(&grad) {
                *xi -= eta * g;
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    epoch: k,
                    iteration: pos + 1,
                });
            }
            max_norm = max_norm.max(norm(&x));
        }
        record(&x, &mut iterates, &mut subopt, &mut dist2);
    }

    Ok(Trajectory {
        iterates,
        subopt,
        dist2,
        max_iterate_norm: max_norm,
        epochs,
        seed,
    })
}

fn norm(x: &[f64]) -> f64 {
    crate::linalg::norm2(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IterateSelector {
    Last,
    /// `argmin_k F(x_0^k)` over all `K + 1` records, earliest on ties.
    BestEndOfEpoch,
    /// Mean of `x_0^k` for `k` in `ceil(K/2) ..= K`.
    TailAverage,
}

impl IterateSelector {
    pub fn name(self) -> &'static str {
        match self {
            IterateSelector::Last => "last",
            IterateSelector::BestEndOfEpoch => "best",
            IterateSelector::TailAverage => "tail_average",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "last" => Some(IterateSelector::Last),
            "best" | "best_end_of_epoch" => Some(IterateSelector::BestEndOfEpoch),
            "tail_average" | "tail" => Some(IterateSelector::TailAverage),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub iterate: Vec<f64>,
    /// `F(iterate) - F*`.
    pub value: f64,
    /// 1-based epoch index of the pick (`None` for averages).
    pub epoch: Option<usize>,
}

pub fn select<P: FiniteSum + ?Sized>(
    trajectory: &Trajectory,
    selector: IterateSelector,
    problem: &P,
) -> Selection {
    let last_index = trajectory.iterates.len() - 1;
    match selector {
        IterateSelector::Last => Selection {
            iterate: trajectory.iterates[last_index].clone(),
            value: trajectory.subopt[last_index],
            epoch: Some(last_index + 1),
        },
        IterateSelector::BestEndOfEpoch => {
            let mut best = 0;
            for (k, &v) in trajectory.subopt.iter().enumerate() {
                if v < trajectory.subopt[best] {
                    best = k;
                }
            }
            Selection {
                iterate: trajectory.iterates[best].clone(),
                value: trajectory.subopt[best],
                epoch: Some(best + 1),
            }
        }
        IterateSelector::TailAverage => {
            let epochs = trajectory.epochs;
            let first = epochs.div_ceil(2);
            // x_0^k is stored at index k - 1.
            let window = &trajectory.iterates[first - 1..epochs];
            let d = window[0].len();
            let mut avg = vec![0.0; d];
            for x in window {
                for (a, v) in avg.iter_mut().zip(x) {
                    *a += v;
                }
            }
            let inv = 1.0 / window.len() as f64;
            avg.iter_mut().for_each(|a| *a *= inv);
            let value = problem.objective(&avg) - problem.optimum_value();
            Selection {
                iterate: avg,
                value,
                epoch: None,
            }
        }
    }
}
