//! Synthetic finite-sum problems with certified constants.
//!
//! Two families are provided:
//!
//! * [`QuadraticProblem`]: `f_i(x) = 1/2 x^T A_i x + b_i^T x` with the mean
//!   Hessian pinned to a known spectrum and `sum_i b_i = 0`, so the minimizer
//!   is the origin and `F* = 0`. Components may be nonconvex.
//! * [`PlProblem`]: the scalar nonconvex PŁ cost `F(x) = x^2 + 3 sin^2 x`
//!   split into components `f_i(x) = F(x) + c_i sin x` with `sum_i c_i = 0`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, MAX_DIM};
use crate::rng;

/// Constants a problem is certified to satisfy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    /// Strong convexity (quadratics) or PŁ constant.
    pub mu: f64,
    /// Component smoothness.
    pub ell: f64,
    /// Component gradient bound (at the optimum for quadratics, on the
    /// initial sublevel set for PŁ problems).
    pub big_g: f64,
    pub kappa: f64,
}

/// Uniform access to a finite-sum objective `F = (1/n) sum_i f_i`.
pub trait FiniteSum {
    fn n(&self) -> usize;
    fn dim(&self) -> usize;
    /// Writes `grad f_i(x)` into `out`.
    fn component_gradient(&self, i: usize, x: &[f64], out: &mut [f64]);
    fn objective(&self, x: &[f64]) -> f64;
    fn optimum_value(&self) -> f64;
    fn distance_to_solution_set(&self, x: &[f64]) -> f64;
    fn constants(&self) -> Constants;

    fn full_gradient(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut acc = vec![0.0; d];
        let mut g = vec![0.0; d];
        for i in 0..self.n() {
            self.component_gradient(i, x, &mut g);
            for (a, v) in acc.iter_mut().zip(&g) {
                *a += v;
            }
        }
        let inv = 1.0 / self.n() as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
        acc
    }
}

// ---------------------------------------------------------------------------
// Quadratics

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticComponent {
    pub a: Matrix,
    pub b: Vec<f64>,
}

impl QuadraticComponent {
    pub fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.a.quad_form(x) + linalg::dot(&self.b, x)
    }
}

/// Generator parameters for [`QuadraticProblem`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticSpec {
    pub n: usize,
    pub d: usize,
    pub mu: f64,
    pub ell: f64,
    /// Spectral size of the largest Hessian deviation `A_i - A`.
    pub noise_scale: f64,
    pub convex_components: bool,
    /// Target `G = max_i ||b_i||`.
    pub grad_scale: f64,
}

impl QuadraticSpec {
    pub fn new(n: usize, d: usize, mu: f64, ell: f64) -> Self {
        Self {
            n,
            d,
            mu,
            ell,
            noise_scale: 0.0,
            convex_components: true,
            grad_scale: 1.0,
        }
    }

    pub fn noise(mut self, noise_scale: f64) -> Self {
        self.noise_scale = noise_scale;
        self
    }

    pub fn convex(mut self, convex_components: bool) -> Self {
        self.convex_components = convex_components;
        self
    }

    pub fn grad_scale(mut self, g: f64) -> Self {
        self.grad_scale = g;
        self
    }

    pub fn generate(&self, seed: u64) -> Result<QuadraticProblem> {
        QuadraticProblem::generate(self, seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    pub components: Vec<QuadraticComponent>,
    pub d: usize,
    pub mu: f64,
    /// Certified smoothness: `max(max_i ||A_i||, lambda_max(A))`.
    pub ell: f64,
    pub big_g: f64,
    pub kappa: f64,
    pub seed: u64,
    mean: Matrix,
}

const GEN_RETRIES: usize = 40;
const EIG_TOL: f64 = 1e-9;

/// Generates a quadratic problem; shorthand for [`QuadraticSpec::generate`]
/// with unit gradient scale.
pub fn gen_quadratic(
    n: usize,
    d: usize,
    mu: f64,
    ell: f64,
    noise_scale: f64,
    convex_components: bool,
    seed: u64,
) -> Result<QuadraticProblem> {
    QuadraticSpec::new(n, d, mu, ell)
        .noise(noise_scale)
        .convex(convex_components)
        .generate(seed)
}

impl QuadraticProblem {
    fn generate(spec: &QuadraticSpec, seed: u64) -> Result<Self> {
        let QuadraticSpec { n, d, mu, ell, .. } = *spec;
        if !(1..=MAX_DIM).contains(&d) {
            return Err(Error::BadDimension { got: d, max: MAX_DIM });
        }
        if n < 2 {
            return Err(Error::BadCount { what: "n", got: n });
        }
        if !(mu > 0.0) || !(ell >= mu) || !ell.is_finite() {
            return Err(Error::BadArgs("need 0 < mu <= ell"));
        }
        if !(spec.noise_scale >= 0.0) || !(spec.grad_scale >= 0.0) {
            return Err(Error::BadArgs("noise_scale and grad_scale must be nonnegative"));
        }
        let mut rng = rng::stream(seed, &[0x5155_4144]);

        // Mean Hessian: linear spectrum from mu up to `top`. Leave headroom
        // below ell for the deviations when there are any.
        let top = if d == 1 {
            mu
        } else if spec.noise_scale > 0.0 {
            (ell - spec.noise_scale).max(mu)
        } else {
            ell
        };
        let spectrum: Vec<f64> = (0..d)
            .map(|k| {
                if d == 1 {
                    mu
                } else {
                    mu + (top - mu) * k as f64 / (d - 1) as f64
                }
            })
            .collect();
        let mean = Matrix::diag(&spectrum);

        // Zero-sum symmetric deviations, normalized so the largest has norm noise_scale.
        let mut dev: Vec<Matrix> = (0..n)
            .map(|_| {
                let mut w = Matrix::zeros(d);
                for i in 0..d {
                    for j in 0..=i {
                        let v: f64 = rng.gen_range(-1.0..1.0);
                        w[(i, j)] = v;
                        w[(j, i)] = v;
                    }
                }
                w
            })
            .collect();
        center_matrices(&mut dev);
        let biggest = dev.iter().map(|w| w.sym_spectral_norm()).fold(0.0, f64::max);
        let norm_factor = if spec.noise_scale > 0.0 && biggest > 0.0 {
            spec.noise_scale / biggest
        } else {
            0.0
        };
        dev.iter_mut().for_each(|w| w.scale(norm_factor));

        // Largest shrink factor keeping every component within ell.
        let fits = |s: f64| dev.iter().all(|w| mean.add_scaled(s, w).sym_spectral_norm() <= ell);
        let mut scale = if fits(1.0) {
            1.0
        } else {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if fits(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };

        let mut mats = None;
        for _ in 0..GEN_RETRIES {
            let mut cand: Vec<Matrix> = dev.iter().map(|w| mean.add_scaled(scale, w)).collect();
            if spec.convex_components {
                for a in cand.iter_mut().take(n - 1) {
                    *a = a.sym_eigen().rebuild(|l| l.max(0.0));
                }
                // Restore the exact mean through the last component.
                let mut last = mean.scaled(n as f64);
                for a in cand.iter().take(n - 1) {
                    last.sub_assign(a);
                }
                cand[n - 1] = last.symmetrized();
            }
            if invariants_hold(&cand, &mean, mu, ell, spec.convex_components) {
                mats = Some(cand);
                break;
            }
            scale *= 0.5;
        }
        let mats = mats.ok_or(Error::InfeasibleSpec(
            "component matrices violate mean/norm/convexity invariants",
        ))?;

        // Linear terms: uniform in the unit ball, centered, rescaled to max norm G.
        let mut bs: Vec<Vec<f64>> = (0..n).map(|_| uniform_in_ball(&mut rng, d)).collect();
        center_vectors(&mut bs);
        let bmax = bs.iter().map(|b| linalg::norm2(b)).fold(0.0, f64::max);
        let bfac = if bmax > 0.0 { spec.grad_scale / bmax } else { 0.0 };
        bs.iter_mut().for_each(|b| b.iter_mut().for_each(|v| *v *= bfac));
        center_vectors(&mut bs);
        let big_g = bs.iter().map(|b| linalg::norm2(b)).fold(0.0, f64::max);

        let comp_max = mats.iter().map(|a| a.sym_spectral_norm()).fold(0.0, f64::max);
        let certified_ell = comp_max.max(top);
        let components: Vec<QuadraticComponent> = mats
            .into_iter()
            .zip(bs)
            .map(|(a, b)| QuadraticComponent { a, b })
            .collect();
        let problem = Self {
            mean: mean_of(&components, d),
            components,
            d,
            mu,
            ell: certified_ell,
            big_g,
            kappa: certified_ell / mu,
            seed,
        };
        problem.check_invariants()?;
        Ok(problem)
    }

    /// Assembles a problem from explicit components, deriving the constants.
    pub fn from_components(components: Vec<QuadraticComponent>, seed: u64) -> Result<Self> {
        let n = components.len();
        if n < 2 {
            return Err(Error::BadCount { what: "n", got: n });
        }
        let d = components[0].a.dim();
        if !(1..=MAX_DIM).contains(&d) {
            return Err(Error::BadDimension { got: d, max: MAX_DIM });
        }
        if components.iter().any(|c| c.a.dim() != d || c.b.len() != d) {
            return Err(Error::BadArgs("components disagree on dimension"));
        }
        let mean = mean_of(&components, d);
        let eig = mean.sym_eigenvalues();
        let mu = eig[0];
        if !(mu > 0.0) {
            return Err(Error::AssumptionUnmet("mean Hessian is not positive definite"));
        }
        let ell = components
            .iter()
            .map(|c| c.a.sym_spectral_norm())
            .fold(eig[d - 1], f64::max);
        let big_g = components.iter().map(|c| linalg::norm2(&c.b)).fold(0.0, f64::max);
        Ok(Self {
            components,
            d,
            mu,
            ell,
            big_g,
            kappa: ell / mu,
            seed,
            mean,
        })
    }

    pub fn n(&self) -> usize {
        self.components.len()
    }

    /// `A = (1/n) sum_i A_i`.
    pub fn mean_matrix(&self) -> &Matrix {
        &self.mean
    }

    pub fn has_convex_components(&self) -> bool {
        self.components
            .iter()
            .all(|c| c.a.sym_eigenvalues()[0] >= -1e-12)
    }

    /// Re-verifies the mean spectrum, component norms and `sum b_i = 0`.
    pub fn check_invariants(&self) -> Result<()> {
        let eig = self.mean.sym_eigenvalues();
        if (eig[0] - self.mu).abs() > EIG_TOL || eig[self.d - 1] > self.ell + EIG_TOL {
            return Err(Error::InfeasibleSpec("mean Hessian spectrum out of range"));
        }
        if self
            .components
            .iter()
            .any(|c| c.a.sym_spectral_norm() > self.ell + EIG_TOL)
        {
            return Err(Error::InfeasibleSpec("component Hessian exceeds ell"));
        }
        let mut sum = vec![0.0; self.d];
        for c in &self.components {
            for (s, v) in sum.iter_mut().zip(&c.b) {
                *s += v;
            }
        }
        if linalg::norm2(&sum) > 1e-10 {
            return Err(Error::InfeasibleSpec("linear terms do not sum to zero"));
        }
        Ok(())
    }
}

fn invariants_hold(mats: &[Matrix], mean: &Matrix, mu: f64, ell: f64, convex: bool) -> bool {
    let d = mean.dim();
    let mut acc = Matrix::zeros(d);
    for a in mats {
        acc.add_assign(a);
    }
    acc.scale(1.0 / mats.len() as f64);
    let eig = acc.sym_eigenvalues();
    if (eig[0] - mu).abs() > EIG_TOL || eig[d - 1] > ell + EIG_TOL {
        return false;
    }
    mats.iter().all(|a| {
        let e = a.sym_eigenvalues();
        let norm = e[0].abs().max(e[d - 1].abs());
        norm <= ell + EIG_TOL && (!convex || e[0] >= -1e-12)
    })
}

fn mean_of(components: &[QuadraticComponent], d: usize) -> Matrix {
    let mut acc = Matrix::zeros(d);
    for c in components {
        acc.add_assign(&c.a);
    }
    acc.scale(1.0 / components.len() as f64);
    acc.symmetrized()
}

fn center_matrices(mats: &mut [Matrix]) {
    let d = mats[0].dim();
    let mut mean = Matrix::zeros(d);
    for m in mats.iter() {
        mean.add_assign(m);
    }
    mean.scale(1.0 / mats.len() as f64);
    mats.iter_mut().for_each(|m| m.sub_assign(&mean));
}

fn center_vectors(vs: &mut [Vec<f64>]) {
    let d = vs[0].len();
    let mut mean = vec![0.0; d];
    for v in vs.iter() {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    let inv = 1.0 / vs.len() as f64;
    for v in vs.iter_mut() {
        for (x, m) in v.iter_mut().zip(&mean) {
            *x -= m * inv;
        }
    }
}

fn uniform_in_ball<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if linalg::norm2_sq(&v) <= 1.0 {
            return v;
        }
    }
}

impl FiniteSum for QuadraticProblem {
    fn n(&self) -> usize {
        self.components.len()
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn component_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let c = &self.components[i];
        c.a.matvec_into(x, out);
        for (o, b) in out.iter_mut().zip(&c.b) {
            *o += b;
        }
    }

    fn objective(&self, x: &[f64]) -> f64 {
        0.5 * self.mean.quad_form(x)
    }

    fn optimum_value(&self) -> f64 {
        0.0
    }

    fn distance_to_solution_set(&self, x: &[f64]) -> f64 {
        linalg::norm2(x)
    }

    fn constants(&self) -> Constants {
        Constants {
            mu: self.mu,
            ell: self.ell,
            big_g: self.big_g,
            kappa: self.kappa,
        }
    }
}

// ---------------------------------------------------------------------------
// PŁ family

/// Default start point used when a PŁ problem is built without one.
pub const PL_DEFAULT_START: f64 = 3.0;
/// Half-width of the certification grid.
pub const PL_GRID_RADIUS: f64 = 20.0;
/// Spacing of the certification grid.
pub const PL_GRID_STEP: f64 = 1e-4;
const PL_SAFETY: f64 = 1.0 - 1e-6;

/// `F(x) = x^2 + 3 sin^2 x`.
#[inline]
pub fn pl_base(x: f64) -> f64 {
    let s = libm::sin(x);
    x * x + 3.0 * s * s
}

/// `F'(x) = 2x + 3 sin 2x`.
#[inline]
pub fn pl_base_derivative(x: f64) -> f64 {
    2.0 * x + 3.0 * libm::sin(2.0 * x)
}

/// `F''(x) = 2 + 6 cos 2x`.
#[inline]
pub fn pl_base_second_derivative(x: f64) -> f64 {
    2.0 + 6.0 * libm::cos(2.0 * x)
}

/// Smallest `F'(x)^2 / (2 F(x))` over the certification grid, with the
/// location of the minimum.
pub fn pl_grid_minimum() -> (f64, f64) {
    let steps = libm::round(2.0 * PL_GRID_RADIUS / PL_GRID_STEP) as usize;
    let mut best = (f64::INFINITY, 0.0);
    for j in 0..=steps {
        let x = -PL_GRID_RADIUS + j as f64 * PL_GRID_STEP;
        let f = pl_base(x);
        if f <= 1e-300 {
            continue;
        }
        let g = pl_base_derivative(x);
        let r = g * g / (2.0 * f);
        if r < best.0 {
            best = (r, x);
        }
    }
    best
}

/// Certified PŁ constant of `F`: the grid minimum with a tiny safety factor.
/// Fails if the ratio at the grid boundary is not above the minimum, which
/// would mean the minimizing region extends past the grid.
pub fn certify_pl_constant() -> Result<f64> {
    let (min_ratio, _) = pl_grid_minimum();
    let edge = |x: f64| {
        let g = pl_base_derivative(x);
        g * g / (2.0 * pl_base(x))
    };
    if edge(PL_GRID_RADIUS) <= min_ratio || edge(-PL_GRID_RADIUS) <= min_ratio {
        return Err(Error::InfeasibleSpec("PL ratio minimum reaches the grid boundary"));
    }
    Ok(min_ratio * PL_SAFETY)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlProblem {
    /// Zero-sum perturbation weights.
    pub c: Vec<f64>,
    pub mu_pl: f64,
    pub ell: f64,
    /// Gradient bound on the sublevel set of `start`.
    pub big_g: f64,
    pub start: f64,
    pub seed: u64,
}

/// Draws a PŁ problem with `n` components; `c_i` uniform in
/// `[-perturb_scale, perturb_scale]`, then centered.
pub fn gen_pl(n: usize, perturb_scale: f64, seed: u64) -> Result<PlProblem> {
    let mu_pl = certify_pl_constant()?;
    PlProblem::generate(n, perturb_scale, seed, mu_pl)
}

impl PlProblem {
    /// Like [`gen_pl`] with a precomputed PŁ constant (see
    /// [`certify_pl_constant`]).
    pub fn generate(n: usize, perturb_scale: f64, seed: u64, mu_pl: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::BadCount { what: "n", got: n });
        }
        if !(perturb_scale >= 0.0) || !perturb_scale.is_finite() {
            return Err(Error::BadArgs("perturb_scale must be a nonnegative number"));
        }
        let mut rng = rng::stream(seed, &[0x504C]);
        let mut c: Vec<f64> = (0..n)
            .map(|_| {
                if perturb_scale > 0.0 {
                    rng.gen_range(-perturb_scale..=perturb_scale)
                } else {
                    0.0
                }
            })
            .collect();
        let mean = c.iter().sum::<f64>() / n as f64;
        c.iter_mut().for_each(|v| *v -= mean);
        let cmax = c.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut p = Self {
            c,
            mu_pl,
            ell: 8.0 + cmax,
            big_g: 0.0,
            start: PL_DEFAULT_START,
            seed,
        };
        p.big_g = sublevel_gradient_bound(&p, p.start);
        Ok(p)
    }

    /// Moves the reference start point and recomputes `big_g` for it.
    pub fn with_start(mut self, x0: f64) -> Self {
        self.start = x0;
        self.big_g = sublevel_gradient_bound(&self, x0);
        self
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    /// `f_i'(x) = F'(x) + c_i cos x`.
    #[inline]
    pub fn component_derivative(&self, i: usize, x: f64) -> f64 {
        pl_base_derivative(x) + self.c[i] * libm::cos(x)
    }

    pub fn component_value(&self, i: usize, x: f64) -> f64 {
        pl_base(x) + self.c[i] * libm::sin(x)
    }
}

/// Bound on `max_i |f_i'|` over the sublevel set `{x : F(x) <= F(x0)}`.
///
/// `F` is even and increasing on `[0, inf)`, so the set is `[-r, r]` with
/// `F(r) = F(x0)`; `r` is found by bisection. The maximum is taken on a grid
/// of spacing 1e-3 (plus both endpoints) and inflated by 5%.
pub fn sublevel_gradient_bound(problem: &PlProblem, x0: f64) -> f64 {
    let level = pl_base(x0);
    let mut hi = 1.0_f64;
    while pl_base(hi) < level {
        hi *= 2.0;
    }
    let mut lo = 0.0_f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if pl_base(mid) <= level {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    let r = lo;
    let step = 1e-3;
    let count = libm::ceil(2.0 * r / step) as usize;
    let mut best = 0.0_f64;
    for j in 0..=count {
        let x = (-r + j as f64 * step).min(r);
        for i in 0..problem.n() {
            best = best.max(problem.component_derivative(i, x).abs());
        }
    }
    best * 1.05
}

impl FiniteSum for PlProblem {
    fn n(&self) -> usize {
        self.c.len()
    }

    fn dim(&self) -> usize {
        1
    }

    fn component_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        out[0] = self.component_derivative(i, x[0]);
    }

    fn objective(&self, x: &[f64]) -> f64 {
        pl_base(x[0])
    }

    fn optimum_value(&self) -> f64 {
        0.0
    }

    fn distance_to_solution_set(&self, x: &[f64]) -> f64 {
        x[0].abs()
    }

    fn constants(&self) -> Constants {
        Constants {
            mu: self.mu_pl,
            ell: self.ell,
            big_g: self.big_g,
            kappa: self.ell / self.mu_pl,
        }
    }
}

// ---------------------------------------------------------------------------

/// Either problem family behind one handle.
#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Quadratic(QuadraticProblem),
    Pl(PlProblem),
}

impl Problem {
    pub fn family(&self) -> &'static str {
        match self {
            Problem::Quadratic(_) => "quadratic",
            Problem::Pl(_) => "pl",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Problem::Quadratic(q) => q.seed,
            Problem::Pl(p) => p.seed,
        }
    }

    pub fn as_quadratic(&self) -> Option<&QuadraticProblem> {
        match self {
            Problem::Quadratic(q) => Some(q),
            Problem::Pl(_) => None,
        }
    }
}

impl From<QuadraticProblem> for Problem {
    fn from(q: QuadraticProblem) -> Self {
        Problem::Quadratic(q)
    }
}

impl From<PlProblem> for Problem {
    fn from(p: PlProblem) -> Self {
        Problem::Pl(p)
    }
}

impl FiniteSum for Problem {
    fn n(&self) -> usize {
        match self {
            Problem::Quadratic(q) => FiniteSum::n(q),
            Problem::Pl(p) => FiniteSum::n(p),
        }
    }

    fn dim(&self) -> usize {
        match self {
            Problem::Quadratic(q) => q.dim(),
            Problem::Pl(p) => p.dim(),
        }
    }

    fn component_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        match self {
            Problem::Quadratic(q) => q.component_gradient(i, x, out),
            Problem::Pl(p) => p.component_gradient(i, x, out),
        }
    }

    fn objective(&self, x: &[f64]) -> f64 {
        match self {
            Problem::Quadratic(q) => q.objective(x),
            Problem::Pl(p) => p.objective(x),
        }
    }

    fn optimum_value(&self) -> f64 {
        match self {
            Problem::Quadratic(q) => q.optimum_value(),
            Problem::Pl(p) => p.optimum_value(),
        }
    }

    fn distance_to_solution_set(&self, x: &[f64]) -> f64 {
        match self {
            Problem::Quadratic(q) => q.distance_to_solution_set(x),
            Problem::Pl(p) => p.distance_to_solution_set(x),
        }
    }

    fn constants(&self) -> Constants {
        match self {
            Problem::Quadratic(q) => q.constants(),
            Problem::Pl(p) => p.constants(),
        }
    }
}
