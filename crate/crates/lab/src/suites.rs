//! Verification suites: randomized ensembles and parameter grids fed to the
//! core checks.
//!
//! Every draw is keyed by `(seed, suite tag, index)`, so a suite's rows do
//! not depend on the executor or on which other suites ran.

use rand::Rng;
use shufflelab_core::chung::{
    chung_bound_1, chung_bound_1_sharp, chung_bound_2, chung_bound_2ext, chung_extremal_1, chung_extremal_2,
    integral_approx_check, ChungParams, ChungParams2, Extension, IntegralReport,
};
use shufflelab_core::concentration::{binomial_allowance, empirical_violation_rate_with, HsInstance};
use shufflelab_core::rng::{stream, sub_seed, StreamRng};
use shufflelab_core::verifier::{eta_grid, CheckRow, PermutationEnsemble, Verifier};
use shufflelab_core::{ChunkExecutor, QuadraticSpec};

use crate::config::VerifyConfig;
use crate::error::{LabError, Result};
use crate::formats::{ChungRow, HsRow};

const TAG_CONTRACTION: u64 = 0x434f_4e54;
const TAG_PROGRESS: u64 = 0x5052_4f47;
const TAG_CHUNG: u64 = 0x4348_554e;
const TAG_INTEGRAL: u64 = 0x494e_5447;
const TAG_HS: u64 = 0x4853_4752;

/// Margin below which a Chung bound counts as violated.
pub const CHUNG_TOL: f64 = 1e-12;

pub fn validate(cfg: &VerifyConfig) -> Result<()> {
    let bad = |m: &str| Err(LabError::Config(format!("verify: {m}")));
    if cfg.n_min < 2 || cfg.n_max < cfg.n_min {
        return bad("need 2 <= n_min <= n_max");
    }
    if cfg.d_max < 1 || cfg.d_max > 16 {
        return bad("d_max must be in 1..=16");
    }
    if !(cfg.mu > 0.0) || !(cfg.kappa_max >= 1.0) {
        return bad("need mu > 0 and kappa_max >= 1");
    }
    if !(0.0..1.0).contains(&cfg.noise) {
        return bad("noise must lie in [0, 1)");
    }
    if cfg.eta_points < 1 || cfg.progress_eta_points < 1 {
        return bad("eta grids need at least one point");
    }
    if cfg.start_points < 1 || !(cfg.start_radius > 0.0) {
        return bad("need start_points >= 1 and start_radius > 0");
    }
    if !(cfg.probe_eta_max > 0.0) {
        return bad("probe_eta_max must be positive");
    }
    if cfg.hs_dim < 1 || cfg.hs_n.iter().any(|&n| n < 4) {
        return bad("hs_n entries must be at least 4 and hs_dim at least 1");
    }
    if cfg.hs_delta.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
        return bad("hs_delta entries must lie in (0, 1)");
    }
    Ok(())
}

/// Ensemble `index`: `n`, `d`, `kappa` and the perturbation size are drawn
/// from the configured ranges. `convex` asks for PSD components.
pub fn draw_ensemble(cfg: &VerifyConfig, seed: u64, tag: u64, index: usize, convex: bool) -> Result<PermutationEnsemble> {
    let mut r = stream(seed, &[tag, index as u64]);
    let n = r.gen_range(cfg.n_min..=cfg.n_max);
    let d = r.gen_range(1..=cfg.d_max);
    let kappa = r.gen_range(1.0..=cfg.kappa_max);
    let ell = cfg.mu * kappa;
    let noise = r.gen_range(0.0..=cfg.noise) * ell;
    let q = QuadraticSpec::new(n, d, cfg.mu, ell)
        .noise(noise)
        .convex(convex)
        .generate(sub_seed(seed, &[tag, index as u64, 1]))?;
    Ok(PermutationEnsemble::from_problem(&q)?)
}

/// Ensemble `e` of the contraction and probe suites; even indices have
/// convex components.
pub fn contraction_ensemble(cfg: &VerifyConfig, seed: u64, e: usize) -> Result<PermutationEnsemble> {
    draw_ensemble(cfg, seed, TAG_CONTRACTION, e, e.is_multiple_of(2))
}

fn flatten(parts: Vec<Result<Vec<CheckRow>>>) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    for p in parts {
        rows.extend(p?);
    }
    Ok(rows)
}

/// All five permutation-expectation checks on every ensemble, each on an
/// even grid from 0 to its step-size threshold.
pub fn contraction<E: ChunkExecutor>(cfg: &VerifyConfig, seed: u64, exec: &E) -> Result<Vec<CheckRow>> {
    let parts = exec.map_chunks(cfg.ensembles, &|e| {
        let ens = contraction_ensemble(cfg, seed, e)?;
        let v = Verifier::new(&ens).with_samples(cfg.mc_samples, sub_seed(seed, &[TAG_CONTRACTION, e as u64, 2]));
        let t = v.thresholds();
        let pts = cfg.eta_points;
        let mut rows = Vec::new();
        rows.extend(v.check_contraction_1(&eta_grid(t.contraction, pts))?.rows);
        rows.extend(v.check_contraction_2(&eta_grid(t.contraction, pts))?.rows);
        rows.extend(v.check_contraction_3(&eta_grid(t.contraction_3, pts))?.rows);
        rows.extend(v.check_noise_mean(&eta_grid(t.noise_mean, pts))?.rows);
        rows.extend(v.check_singleshuffle_contraction(&eta_grid(t.singleshuffle, pts))?.rows);
        Ok(rows)
    });
    flatten(parts)
}

/// The AM-GM probe on the contraction ensembles, with steps up to
/// `probe_eta_max / L`. Rows never count as violations.
pub fn probe<E: ChunkExecutor>(cfg: &VerifyConfig, seed: u64, exec: &E) -> Result<Vec<CheckRow>> {
    let parts = exec.map_chunks(cfg.ensembles, &|e| {
        let ens = contraction_ensemble(cfg, seed, e)?;
        let v = Verifier::new(&ens).with_samples(cfg.mc_samples, sub_seed(seed, &[TAG_CONTRACTION, e as u64, 2]));
        Ok(v.amgm_probe(&eta_grid(cfg.probe_eta_max / ens.ell, cfg.eta_points))?.rows)
    });
    flatten(parts)
}

fn point_in_ball(r: &mut StreamRng, d: usize, radius: f64) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..d).map(|_| r.gen_range(-1.0..1.0)).collect();
        let s: f64 = x.iter().map(|v| v * v).sum();
        if s <= 1.0 && s > 0.0 {
            return x.into_iter().map(|v| v * radius).collect();
        }
    }
}

/// Both one-epoch progress inequalities on convex-component ensembles, at
/// random start points and steps `j/points * 2/L`, `j = 1..=points`.
pub fn progress<E: ChunkExecutor>(cfg: &VerifyConfig, seed: u64, exec: &E) -> Result<Vec<CheckRow>> {
    let parts = exec.map_chunks(cfg.progress_ensembles, &|e| {
        let ens = draw_ensemble(cfg, seed, TAG_PROGRESS, e, true)?;
        let v = Verifier::new(&ens).with_samples(cfg.mc_samples, sub_seed(seed, &[TAG_PROGRESS, e as u64, 2]));
        let mode = v.default_mode();
        let top = v.thresholds().progress;
        let mut r = stream(seed, &[TAG_PROGRESS, e as u64, 3]);
        let mut rows = Vec::new();
        for _ in 0..cfg.start_points {
            let x = point_in_ball(&mut r, ens.dim(), cfg.start_radius);
            for j in 1..=cfg.progress_eta_points {
                let eta = top * j as f64 / cfg.progress_eta_points as f64;
                rows.extend(v.check_per_epoch_progress(&x, eta, mode)?.rows);
                rows.extend(v.check_per_epoch_quadratic(&x, eta, mode)?.rows);
            }
        }
        Ok(rows)
    });
    flatten(parts)
}

fn chung_row(lemma: &'static str, xi_k: f64, bound: f64) -> ChungRow {
    let margin = bound - xi_k;
    ChungRow {
        lemma,
        xi_k,
        bound,
        margin,
        holds: margin >= -CHUNG_TOL,
        ..ChungRow::default()
    }
}

/// Random tuples for the single-sequence lemma (loose and sharp forms),
/// the epoch-level variant and its extension, each checked against the
/// equality recursion.
pub fn chung(cfg: &VerifyConfig, seed: u64) -> Result<Vec<ChungRow>> {
    let mut rows = Vec::with_capacity(4 * cfg.chung_tuples);
    for t in 0..cfg.chung_tuples {
        let mut r = stream(seed, &[TAG_CHUNG, 1, t as u64]);
        let beta = r.gen_range(0.1..3.0);
        let p = ChungParams {
            k0: r.gen_range(0.5..50.0),
            alpha: beta + r.gen_range(0.1..4.0),
            beta,
            a: r.gen_range(0.0..10.0),
            xi0: r.gen_range(0.0..10.0),
            epochs: r.gen_range(1..=400),
        };
        let xi = chung_extremal_1(&p)?;
        for (lemma, bound) in [("chung_1", chung_bound_1(&p)?), ("chung_1_sharp", chung_bound_1_sharp(&p)?)] {
            rows.push(ChungRow {
                k0: p.k0,
                alpha: p.alpha,
                beta: p.beta,
                xi0: p.xi0,
                a: Some(p.a),
                epochs: p.epochs,
                ..chung_row(lemma, xi, bound)
            });
        }
    }
    for (lemma, tag) in [("chung_2", 2u64), ("chung_2ext", 3)] {
        for t in 0..cfg.chung_tuples {
            let mut r = stream(seed, &[TAG_CHUNG, tag, t as u64]);
            let beta = r.gen_range(0.1..2.0);
            let alpha = beta + r.gen_range(0.1..3.0);
            let mut p = ChungParams2 {
                k0: r.gen_range(0.5..30.0),
                alpha,
                beta,
                xi0: r.gen_range(0.0..5.0),
                epochs: r.gen_range(1..=60),
                n: r.gen_range(2..=12),
                eps: r.gen_range(0.0..1.0),
                a1: r.gen_range(0.0..3.0),
                a2: r.gen_range(0.0..3.0),
                ext: None,
            };
            let bound = if tag == 3 {
                p.ext = Some(Extension {
                    a3: r.gen_range(0.0..3.0),
                    gamma: r.gen_range(0.05..0.95) * alpha,
                });
                chung_bound_2ext(&p)?
            } else {
                chung_bound_2(&p)?
            };
            let xi = chung_extremal_2(&p)?;
            rows.push(ChungRow {
                k0: p.k0,
                alpha: p.alpha,
                beta: p.beta,
                gamma: p.ext.map(|e| e.gamma),
                xi0: p.xi0,
                a1: Some(p.a1),
                a2: Some(p.a2),
                a3: p.ext.map(|e| e.a3),
                n: Some(p.n),
                eps: Some(p.eps),
                epochs: p.epochs,
                ..chung_row(lemma, xi, bound)
            });
        }
    }
    Ok(rows)
}

/// The sum/integral sandwich for `1/(k0+x)` and `(k0+x)^(alpha-beta-1)`,
/// both with closed-form antiderivatives.
pub fn integral(cfg: &VerifyConfig, seed: u64) -> Result<Vec<(&'static str, IntegralReport)>> {
    let mut out = Vec::with_capacity(2 * cfg.integral_pairs);
    for t in 0..cfg.integral_pairs {
        let mut r = stream(seed, &[TAG_INTEGRAL, t as u64]);
        let m: u64 = r.gen_range(1..=50);
        let n: u64 = m + r.gen_range(1..=500);
        let k0: f64 = r.gen_range(0.5..20.0);
        let beta: f64 = r.gen_range(0.1..3.0);
        let alpha = beta + r.gen_range(0.1..4.0);
        let p = alpha - beta - 1.0;

        let f = move |x: f64| 1.0 / (k0 + x);
        let big_f = move |x: f64| (k0 + x).ln();
        out.push(("inverse", integral_approx_check(&f, Some(&big_f), m, n)?));

        let g = move |x: f64| (k0 + x).powf(p);
        let big_g = move |x: f64| (k0 + x).powf(p + 1.0) / (p + 1.0);
        out.push(("power", integral_approx_check(&g, Some(&big_g), m, n)?));
    }
    Ok(out)
}

fn hs_family(name: &'static str, n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    match name {
        "adversarial" => (0..n).map(|j| vec![if j % 2 == 0 { 1.0 } else { -1.0 }]).collect(),
        _ => {
            let mut r = stream(seed, &[TAG_HS, n as u64]);
            (0..n).map(|_| point_in_ball(&mut r, dim, 1.0)).collect()
        }
    }
}

/// Violation rates of the Hoeffding–Serfling bound over the configured
/// grid, for alternating `±G` scalars and uniform points in the unit ball.
pub fn concentration<E: ChunkExecutor>(cfg: &VerifyConfig, seed: u64, exec: &E) -> Result<Vec<HsRow>> {
    let mut rows = Vec::new();
    for family in ["adversarial", "random"] {
        for &n in &cfg.hs_n {
            let vectors = hs_family(family, n, cfg.hs_dim, seed);
            for q in 1..=3 {
                let i = (q * n / 4).max(1);
                for &delta in &cfg.hs_delta {
                    let inst = HsInstance::new(vectors.clone(), i, delta)?;
                    let fam_tag = if family == "adversarial" { 1 } else { 2 };
                    let trial_seed = sub_seed(seed, &[TAG_HS, fam_tag, n as u64, i as u64]);
                    let rate = empirical_violation_rate_with(&inst, cfg.hs_trials, trial_seed, exec)?;
                    let allowance = binomial_allowance(delta, cfg.hs_trials);
                    rows.push(HsRow {
                        family,
                        n,
                        i,
                        delta,
                        big_g: inst.big_g,
                        trials: cfg.hs_trials,
                        rate,
                        bound: inst.bound(),
                        allowance,
                        holds: rate <= allowance,
                    });
                }
            }
        }
    }
    Ok(rows)
}
