use proptest::prelude::*;

use shufflelab_core::chung::{
    chung_bound_1, chung_bound_1_sharp, chung_bound_2, chung_extremal_1, chung_extremal_2, ChungParams,
    ChungParams2, Extension,
};
use shufflelab_core::concentration::HsInstance;
use shufflelab_core::linalg::{norm2, Matrix};
use shufflelab_core::optimizer::{run, select, IterateSelector};
use shufflelab_core::problems::{certify_pl_constant, gen_quadratic, pl_base, pl_base_derivative, PlProblem};
use shufflelab_core::rates::{fit_exponent, Axis, SweepRow};
use shufflelab_core::schedules::{Schedule, ScheduleKind};
use shufflelab_core::shuffler::{index_stream, is_permutation, Strategy};
use shufflelab_core::verifier::{expectation, eta_grid, Mode, PermutationEnsemble, Target, Verifier};
use shufflelab_core::FiniteSum;

fn mu_pl() -> f64 {
    use std::sync::OnceLock;
    static MU: OnceLock<f64> = OnceLock::new();
    *MU.get_or_init(|| certify_pl_constant().unwrap())
}

fn finite_difference_check<P: FiniteSum>(p: &P, x: &[f64]) {
    let g = p.full_gradient(x);
    let h = 1e-6;
    for j in 0..x.len() {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += h;
        xm[j] -= h;
        let fd = (p.objective(&xp) - p.objective(&xm)) / (2.0 * h);
        let scale = g[j].abs().max(1.0);
        assert!((fd - g[j]).abs() <= 1e-6 * scale, "fd {fd} vs {}", g[j]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_quadratics_meet_their_constants(
        n in 2usize..12, d in 1usize..5, mu in 0.1f64..2.0, spread in 1.0f64..4.0,
        noise in 0.0f64..1.0, convex: bool, seed: u64,
    ) {
        let ell = mu * spread;
        let p = gen_quadratic(n, d, mu, ell, noise * ell, convex, seed).unwrap();
        let eig = p.mean_matrix().sym_eigenvalues();
        prop_assert!((eig[0] - mu).abs() <= 1e-9);
        prop_assert!(p.components.iter().all(|c| c.a.sym_spectral_norm() <= p.ell + 1e-9));
        let mut sum = vec![0.0; d];
        for c in &p.components {
            sum.iter_mut().zip(&c.b).for_each(|(s, b)| *s += b);
        }
        prop_assert!(norm2(&sum) <= 1e-10);
        if convex {
            prop_assert!(p.has_convex_components());
        }
    }

    #[test]
    fn quadratic_gradients_match_objective(n in 2usize..8, d in 1usize..5, seed: u64, x in proptest::collection::vec(-3.0f64..3.0, 4)) {
        let p = gen_quadratic(n, d, 1.0, 3.0, 1.0, false, seed).unwrap();
        let x = &x[..d];
        finite_difference_check(&p, x);
        prop_assert!(p.objective(x) - p.optimum_value() >= 0.0);
    }

    #[test]
    fn pl_gradients_match_objective(n in 2usize..10, seed: u64, x in -6.0f64..6.0) {
        let p = PlProblem::generate(n, 1.0, seed, mu_pl()).unwrap();
        finite_difference_check(&p, &[x]);
        prop_assert!(p.objective(&[x]) >= p.optimum_value());
        let s: f64 = p.c.iter().sum();
        prop_assert!(s.abs() <= 1e-12);
    }

    #[test]
    fn permutation_blocks(n in 2usize..20, k in 1usize..6, seed: u64, which in 0usize..3) {
        let strat = match which {
            0 => Strategy::RandomShuffle,
            1 => Strategy::SingleShuffle,
            _ => Strategy::FixedPermutation((0..n).rev().collect()),
        };
        let s = index_stream(&strat, n, k, seed).unwrap();
        prop_assert!(s.chunks(n).all(|b| is_permutation(b, n)));
    }

    #[test]
    fn constant_schedules_ignore_position(mu in 0.1f64..2.0, kappa in 1.0f64..50.0, n in 2usize..200, k in 1usize..500) {
        for kind in [ScheduleKind::ConstPl, ScheduleKind::ConstQuadratic, ScheduleKind::ConstTail, ScheduleKind::ConstSingleShuffle] {
            let s = Schedule::build(kind, mu, mu * kappa, n, k, None, None).unwrap();
            prop_assert_eq!(s.eta(1, 1), s.eta(k, n));
        }
    }

    #[test]
    fn runs_are_deterministic_and_best_beats_last(n in 2usize..10, k in 1usize..30, seed: u64) {
        let p = gen_quadratic(n, 2, 1.0, 2.0, 0.5, true, seed).unwrap();
        let s = Schedule::const_quadratic(p.mu, p.ell, n, k);
        let a = run(&p, &Strategy::RandomShuffle, &s, k, &[1.0, -1.0], seed ^ 7).unwrap();
        let b = run(&p, &Strategy::RandomShuffle, &s, k, &[1.0, -1.0], seed ^ 7).unwrap();
        prop_assert_eq!(&a, &b);
        let best = select(&a, IterateSelector::BestEndOfEpoch, &p).value;
        let last = select(&a, IterateSelector::Last, &p).value;
        prop_assert!(best <= last);
    }

    #[test]
    fn gram_expectation_is_symmetric_psd(n in 2usize..6, d in 1usize..4, seed: u64, frac in 0.0f64..1.0, convex: bool) {
        let p = gen_quadratic(n, d, 1.0, 3.0, 1.5, convex, seed).unwrap();
        let e = PermutationEnsemble::from_problem(&p).unwrap();
        let eta = frac / e.ell;
        let r = expectation(&e, Target::Gram, eta, Mode::Exhaustive).unwrap();
        let shufflelab_core::verifier::Value::Matrix(m) = r.value else { unreachable!() };
        prop_assert!(m.asymmetry() <= 1e-12);
        prop_assert!(m.symmetrized().sym_eigenvalues()[0] >= -1e-12);
    }

    #[test]
    fn scalar_expectation_is_the_product(a in proptest::collection::vec(0.1f64..3.0, 2..7), eta in 0.0f64..0.3) {
        let n = a.len();
        let mut b = vec![vec![0.0]; n];
        b[0][0] = 1.0;
        b[1][0] = -1.0;
        let e = PermutationEnsemble::new(a.iter().map(|&v| Matrix::diag(&[v])).collect(), b).unwrap();
        let r = expectation(&e, Target::S, eta, Mode::Exhaustive).unwrap();
        let prod: f64 = a.iter().map(|v| 1.0 - eta * v).product();
        prop_assert!((r.norm - prod.abs()).abs() <= 1e-14);
    }

    #[test]
    fn lemma_checks_hold_on_generated_ensembles(n in 2usize..6, d in 1usize..4, seed: u64, convex: bool) {
        let p = gen_quadratic(n, d, 1.0, 2.5, 1.0, convex, seed).unwrap();
        let e = PermutationEnsemble::from_problem(&p).unwrap();
        let v = Verifier::new(&e);
        let t = v.thresholds();
        v.check_contraction_1(&eta_grid(t.contraction, 5)).unwrap().ensure().unwrap();
        v.check_contraction_2(&eta_grid(t.contraction, 5)).unwrap().ensure().unwrap();
        v.check_contraction_3(&eta_grid(t.contraction_3, 5)).unwrap().ensure().unwrap();
        v.check_noise_mean(&eta_grid(t.noise_mean, 5)).unwrap().ensure().unwrap();
        v.check_singleshuffle_contraction(&eta_grid(t.singleshuffle, 5)).unwrap().ensure().unwrap();
    }

    #[test]
    fn violation_indicator_is_scale_invariant(n in 4usize..30, frac in 0.1f64..1.0, seed: u64) {
        let i = ((n as f64 * frac) as usize).max(1);
        let mut r = shufflelab_core::rng::stream(seed, &[1]);
        use rand::Rng;
        let v: Vec<Vec<f64>> = (0..n).map(|_| vec![r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)]).collect();
        let scaled: Vec<Vec<f64>> = v.iter().map(|x| x.iter().map(|y| y * 7.3).collect()).collect();
        // delta near 1 shrinks the bound so violations actually occur.
        let a = HsInstance::new(v, i, 0.999).unwrap();
        let b = HsInstance::new(scaled, i, 0.999).unwrap();
        for t in 0..200 {
            prop_assert_eq!(a.trial_violates(seed, t), b.trial_violates(seed, t));
        }
    }

    #[test]
    fn chung_bounds_dominate_extremal(
        k0 in 0.5f64..50.0, beta in 0.1f64..3.0, gap in 0.1f64..4.0, a in 0.0f64..10.0,
        xi0 in 0.0f64..10.0, k in 1u64..400,
    ) {
        let p = ChungParams { k0, alpha: beta + gap, beta, a, xi0, epochs: k };
        let xi = chung_extremal_1(&p).unwrap();
        let sharp = chung_bound_1_sharp(&p).unwrap();
        let loose = chung_bound_1(&p).unwrap();
        prop_assert!(sharp - xi >= -1e-12 * xi.max(1.0));
        prop_assert!(sharp <= loose * (1.0 + 1e-12));
        let next = ChungParams { epochs: k + 1, ..p };
        prop_assert!(chung_bound_1(&next).unwrap() <= loose * (1.0 + 1e-12));
    }

    #[test]
    fn chung_variant_dominates_extremal(
        k0 in 0.5f64..30.0, beta in 0.1f64..2.0, gap in 0.1f64..3.0, xi0 in 0.0f64..5.0,
        n in 2u64..12, k in 1u64..60, eps in 0.0f64..1.0, a1 in 0.0f64..3.0, a2 in 0.0f64..3.0,
        a3 in 0.0f64..3.0, gfrac in 0.05f64..0.95,
    ) {
        let alpha = beta + gap;
        let p = ChungParams2 { k0, alpha, beta, xi0, epochs: k, n, eps, a1, a2, ext: None };
        let xi = chung_extremal_2(&p).unwrap();
        prop_assert!(chung_bound_2(&p).unwrap() - xi >= -1e-12 * xi.max(1.0));
        let q = ChungParams2 { ext: Some(Extension { a3, gamma: gfrac * alpha }), ..p };
        let xi = chung_extremal_2(&q).unwrap();
        prop_assert!(chung_bound_2(&q).unwrap() - xi >= -1e-12 * xi.max(1.0));
    }

    #[test]
    fn planted_exponents_are_recovered(c in 0.01f64..100.0, slope in -4.0f64..-0.5) {
        let rows: Vec<SweepRow> = [16usize, 32, 64, 128, 256]
            .iter()
            .map(|&k| SweepRow {
                n: 7, k, trials: 1, mean: c * (k as f64).powf(slope), stderr: 0.0,
                requirement_met: true, nonfinite: 0, seed: 0,
            })
            .collect();
        let fit = fit_exponent(&rows, Axis::K, 7).unwrap();
        prop_assert!((fit.slope - slope).abs() <= 1e-9);
    }
}

#[test]
fn pl_certificate_holds_on_a_grid() {
    let mu = mu_pl();
    for j in 0..10_000 {
        let x = -20.0 + 40.0 * j as f64 / 9_999.0;
        let g = pl_base_derivative(x);
        assert!(0.5 * g * g >= mu * pl_base(x) - 1e-15, "x = {x}");
    }
}

#[test]
fn random_shuffle_is_uniform_over_s3() {
    let epochs = 100_000;
    let s = index_stream(&Strategy::RandomShuffle, 3, epochs, 2024).unwrap();
    let mut counts = [0usize; 6];
    for b in s.chunks(3) {
        let rank = match (b[0], b[1]) {
            (0, 1) => 0,
            (0, _) => 1,
            (1, 0) => 2,
            (1, _) => 3,
            (2, 0) => 4,
            _ => 5,
        };
        counts[rank] += 1;
    }
    let expected = epochs as f64 / 6.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 0.999 quantile of chi-square with 5 degrees of freedom.
    assert!(chi2 < 20.515, "chi2 = {chi2}");
}

#[test]
fn requirement_implies_step_size_conditions() {
    for &kappa in &[1.0, 1.5, 2.0, 4.0, 8.0] {
        for &n in &[2usize, 5, 10, 50, 100, 500] {
            for &k in &[1usize, 10, 100, 1_000, 10_000, 100_000] {
                let (mu, ell) = (0.7, 0.7 * kappa);
                let nf = n as f64;
                let pl = Schedule::const_pl(mu, ell, n, k);
                if pl.requirement_met() {
                    assert!(pl.eta(1, 1) * nf * ell <= 0.2 + 1e-12);
                }
                let q = Schedule::const_quadratic(mu, ell, n, k);
                if q.requirement_met() {
                    let cap = 3.0 / (16.0 * nf * ell) * 1.0f64.min((nf / kappa).sqrt());
                    assert!(q.eta(1, 1) <= cap * (1.0 + 1e-12));
                }
                let ss = Schedule::const_singleshuffle(mu, ell, n, k);
                if ss.requirement_met() {
                    assert!(ss.eta(1, 1) <= 1.0 / (5.0 * nf * ell * kappa) * (1.0 + 1e-12));
                }
            }
        }
    }
}

#[test]
fn with_replacement_distance_decreases_on_average() {
    let p = gen_quadratic(8, 2, 1.0, 2.0, 0.5, true, 5).unwrap();
    // Small enough that twelve epochs stay well above the noise floor.
    let s = Schedule::constant(0.02 / p.ell, p.mu, p.ell, 8, 12).unwrap();
    let mut mean = vec![0.0; 13];
    let seeds = 200;
    for seed in 0..seeds {
        let t = run(&p, &Strategy::WithReplacement, &s, 12, &[3.0, -2.0], seed).unwrap();
        mean.iter_mut().zip(&t.dist2).for_each(|(m, v)| *m += v / seeds as f64);
    }
    for w in mean[2..].windows(2) {
        assert!(w[1] <= w[0], "{mean:?}");
    }
}

#[test]
fn noncommuting_orders_differ() {
    let a1 = Matrix::from_row_major(2, vec![2.0, 0.0, 0.0, 1.0]);
    let a2 = Matrix::from_row_major(2, vec![1.0, 1.0, 1.0, 1.0]);
    let e = PermutationEnsemble::new(vec![a1.clone(), a2.clone()], vec![vec![0.0, 0.0]; 2]).unwrap();
    let eta = 0.1;
    let i = Matrix::identity(2);
    let f1 = i.add_scaled(-eta, &a1);
    let f2 = i.add_scaled(-eta, &a2);
    let s12 = e.epoch_matrix(&[0, 1], eta);
    assert_eq!(s12, f2.matmul(&f1));
    let s21 = e.epoch_matrix(&[1, 0], eta);
    assert_eq!(s21, f1.matmul(&f2));
    assert!(s12.as_slice().iter().zip(s21.as_slice()).any(|(x, y)| (x - y).abs() > 1e-6));
}

#[test]
fn monte_carlo_tracks_exhaustive() {
    let p = gen_quadratic(5, 2, 1.0, 2.5, 1.0, false, 99).unwrap();
    let e = PermutationEnsemble::from_problem(&p).unwrap();
    let eta = 0.05;
    let exact = expectation(&e, Target::Gram, eta, Mode::Exhaustive).unwrap().norm;
    let mut errors = Vec::new();
    for &m in &[1_000usize, 10_000, 100_000] {
        let r = expectation(&e, Target::Gram, eta, Mode::MonteCarlo { samples: m, seed: 3 }).unwrap();
        let se = r.std_error.unwrap();
        assert!((r.norm - exact).abs() <= 5.0 * se + 1e-12, "m = {m}");
        errors.push(se);
    }
    // Standard errors shrink roughly like 1/sqrt(m).
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!(ratio > 10f64.sqrt() / 2.0 && ratio < 10f64.sqrt() * 2.0, "{errors:?}");
    }
}

#[test]
fn amgm_probe_matches_contraction_margins_below_threshold() {
    let p = gen_quadratic(4, 2, 1.0, 2.0, 0.8, false, 8).unwrap();
    let e = PermutationEnsemble::from_problem(&p).unwrap();
    let v = Verifier::new(&e);
    let grid = eta_grid(v.thresholds().contraction, 4);
    let c1 = v.check_contraction_1(&grid).unwrap();
    let probe = v.amgm_probe(&grid).unwrap();
    for (a, b) in c1.rows.iter().zip(&probe.rows) {
        assert_eq!(a.margin, b.margin);
    }
    assert_eq!(probe.rows[0].margin, 0.0);
    let wild = v.amgm_probe(&[0.0, 1.0 / e.ell, 1.9 / e.ell]).unwrap();
    assert_eq!(wild.rows.len(), 3);
    assert!(wild.ensure().is_ok());
}
