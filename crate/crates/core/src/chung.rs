//! Non-asymptotic Chung-type bounds, their extremal (equality) recursions,
//! and the sum-versus-integral sandwich for monotone functions.

use crate::error::{Error, Result};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if libm::fabs(self.sum) >= libm::fabs(x) {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `sum_{i=from}^{to} 1/(k0 + i)`, compensated.
pub fn harmonic_tail(k0: f64, from: u64, to: u64) -> f64 {
    let mut s = CompensatedSum::default();
    for i in from..=to {
        s.add(1.0 / (k0 + i as f64));
    }
    s.value()
}

/// Parameters of the single-sequence recursion
/// `xi_{k+1} <= exp(-alpha/(k0+k+1)) xi_k + A/(k0+k+1)^{beta+1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChungParams {
    pub k0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub a: f64,
    pub xi0: f64,
    pub epochs: u64,
}

/// Extra noise term `A3/(k0+n(k+1))^{gamma+1}` of the extended recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extension {
    pub a3: f64,
    pub gamma: f64,
}

/// Parameters of the epoch-level recursion: a first epoch contributing
/// `A1`, then per-epoch factors inflated by `exp(eps/k^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChungParams2 {
    pub k0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub xi0: f64,
    pub epochs: u64,
    pub n: u64,
    pub eps: f64,
    pub a1: f64,
    pub a2: f64,
    pub ext: Option<Extension>,
}

fn check_common(k0: f64, alpha: f64, beta: f64, xi0: f64) -> Result<()> {
    if !(k0 > 0.0) {
        return Err(Error::BadParams("k0 must be positive"));
    }
    if !(beta > 0.0) {
        return Err(Error::BadParams("beta must be positive"));
    }
    if !(alpha > beta) {
        return Err(Error::BadParams("alpha must exceed beta"));
    }
    if !(xi0 >= 0.0) {
        return Err(Error::BadParams("xi0 must be nonnegative"));
    }
    Ok(())
}

impl ChungParams {
    pub fn validate(&self) -> Result<()> {
        check_common(self.k0, self.alpha, self.beta, self.xi0)?;
        if !(self.a >= 0.0) {
            return Err(Error::BadParams("A must be nonnegative"));
        }
        Ok(())
    }
}

impl ChungParams2 {
    pub fn validate(&self) -> Result<()> {
        check_common(self.k0, self.alpha, self.beta, self.xi0)?;
        if self.n < 2 {
            return Err(Error::BadParams("n must be at least 2"));
        }
        if !(self.eps >= 0.0) {
            return Err(Error::BadParams("eps must be nonnegative"));
        }
        if !(self.a1 >= 0.0 && self.a2 >= 0.0) {
            return Err(Error::BadParams("A1 and A2 must be nonnegative"));
        }
        if let Some(e) = self.ext {
            if !(e.a3 >= 0.0) {
                return Err(Error::BadParams("A3 must be nonnegative"));
            }
            if !(e.gamma > 0.0) {
                return Err(Error::BadParams("gamma must be positive"));
            }
            if !(e.gamma < self.alpha) {
                return Err(Error::BadParams("gamma must be below alpha"));
            }
        }
        Ok(())
    }
}

fn noise_terms(p: &ChungParams) -> f64 {
    let end = p.k0 + p.epochs as f64;
    let e = libm::exp(p.alpha / (p.k0 + 1.0));
    e * p.a / ((p.alpha - p.beta) * libm::pow(end, p.beta)) + e * p.a / libm::pow(end, p.beta + 1.0)
}

/// `(k0+1)^a xi0/(k0+K)^a + e^{a/(k0+1)} A/((a-b)(k0+K)^b) + e^{a/(k0+1)} A/(k0+K)^{b+1}`.
pub fn chung_bound_1(p: &ChungParams) -> Result<f64> {
    p.validate()?;
    if p.epochs < 1 {
        return Err(Error::BadParams("K must be at least 1"));
    }
    let end = p.k0 + p.epochs as f64;
    let lead = libm::pow((p.k0 + 1.0) / end, p.alpha) * p.xi0;
    Ok(lead + noise_terms(p))
}

/// As [`chung_bound_1`] with the exact leading factor `exp(-alpha sum_{i<=K} 1/(k0+i))`.
pub fn chung_bound_1_sharp(p: &ChungParams) -> Result<f64> {
    p.validate()?;
    if p.epochs < 1 {
        return Err(Error::BadParams("K must be at least 1"));
    }
    let lead = libm::exp(-p.alpha * harmonic_tail(p.k0, 1, p.epochs)) * p.xi0;
    Ok(lead + noise_terms(p))
}

/// Runs the recursion with equality for `K` steps.
pub fn chung_extremal_1(p: &ChungParams) -> Result<f64> {
    p.validate()?;
    let mut xi = p.xi0;
    for k in 0..p.epochs {
        let t = p.k0 + k as f64 + 1.0;
        xi = libm::exp(-p.alpha / t) * xi + p.a / libm::pow(t, p.beta + 1.0);
    }
    Ok(xi)
}

fn ext_terms(p: &ChungParams2, a: f64, exponent: f64) -> f64 {
    let n = p.n as f64;
    let big_n = p.k0 + n * p.epochs as f64;
    let c = libm::exp(p.eps * core::f64::consts::PI * core::f64::consts::PI / 6.0);
    let e = libm::exp(p.alpha / (p.k0 + n + 1.0));
    c / (p.alpha - exponent) * e * a / (n * libm::pow(big_n, exponent)) + c * e * a / libm::pow(big_n, exponent + 1.0)
}

/// Bound for the epoch-level recursion with `c = e^{eps pi^2/6}`, `N = k0 + nK`:
/// `c(k0+1)^a xi0/N^a + c(k0+n+1)^a A1/N^a + (c/(a-b)) e^{a/(k0+n+1)} A2/(n N^b) + c e^{a/(k0+n+1)} A2/N^{b+1}`,
/// plus the matching `A3`, `gamma` terms when an extension is present.
pub fn chung_bound_2(p: &ChungParams2) -> Result<f64> {
    p.validate()?;
    if p.epochs < 1 {
        return Err(Error::BadParams("K must be at least 1"));
    }
    let n = p.n as f64;
    let big_n = p.k0 + n * p.epochs as f64;
    let c = libm::exp(p.eps * core::f64::consts::PI * core::f64::consts::PI / 6.0);
    let mut b = c * libm::pow((p.k0 + 1.0) / big_n, p.alpha) * p.xi0
        + c * libm::pow((p.k0 + n + 1.0) / big_n, p.alpha) * p.a1
        + ext_terms(p, p.a2, p.beta);
    if let Some(e) = p.ext {
        b += ext_terms(p, e.a3, e.gamma);
    }
    Ok(b)
}

/// [`chung_bound_2`] for parameters that must carry an extension.
pub fn chung_bound_2ext(p: &ChungParams2) -> Result<f64> {
    if p.ext.is_none() {
        return Err(Error::BadParams("extended bound needs A3 and gamma"));
    }
    chung_bound_2(p)
}

/// Equality recursion: `xi_1 = exp(-a sum_{i<=n} 1/(k0+i)) xi0 + A1`, then for `k >= 1`
/// `xi_{k+1} = exp(-a sum_{i<=n} 1/(k0+nk+i) + eps/k^2) xi_k + A2/(k0+n(k+1))^{b+1}`
/// (plus `A3/(k0+n(k+1))^{gamma+1}` when extended). Returns `xi_K`.
pub fn chung_extremal_2(p: &ChungParams2) -> Result<f64> {
    p.validate()?;
    if p.epochs == 0 {
        return Ok(p.xi0);
    }
    let n = p.n;
    let mut xi = libm::exp(-p.alpha * harmonic_tail(p.k0, 1, n)) * p.xi0 + p.a1;
    for k in 1..p.epochs {
        let kf = k as f64;
        let decay = -p.alpha * harmonic_tail(p.k0 + (n * k) as f64, 1, n) + p.eps / (kf * kf);
        let t = p.k0 + (n * (k + 1)) as f64;
        let mut noise = p.a2 / libm::pow(t, p.beta + 1.0);
        if let Some(e) = p.ext {
            noise += e.a3 / libm::pow(t, e.gamma + 1.0);
        }
        xi = libm::exp(decay) * xi + noise;
    }
    Ok(xi)
}

// ---------------------------------------------------------------------------
// Integral approximation

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralReport {
    pub m: u64,
    pub n: u64,
    pub sum: f64,
    pub integral: f64,
    pub lower: f64,
    pub upper: f64,
    pub increasing: bool,
    pub holds: bool,
}

/// Checks `int_m^n f + min(f(m), f(n)) <= sum_{i=m}^n f(i) <= int_m^n f + max(f(m), f(n))`
/// for `f` monotone on `[m, n]`. Without an antiderivative the integral comes
/// from adaptive Simpson quadrature to `1e-12`.
pub fn integral_approx_check(
    f: &dyn Fn(f64) -> f64,
    antiderivative: Option<&dyn Fn(f64) -> f64>,
    m: u64,
    n: u64,
) -> Result<IntegralReport> {
    if m < 1 || m >= n {
        return Err(Error::BadArgs("need integers 1 <= m < n"));
    }
    let (a, b) = (m as f64, n as f64);
    let (fm, fn_) = (f(a), f(b));
    let increasing = fn_ >= fm;
    let mut s = CompensatedSum::default();
    let mut prev = fm;
    for i in m..=n {
        let v = f(i as f64);
        let monotone = if increasing { v >= prev } else { v <= prev };
        if !monotone || !v.is_finite() {
            return Err(Error::BadArgs("f is not monotone on [m, n]"));
        }
        prev = v;
        s.add(v);
    }
    let sum = s.value();
    let integral = match antiderivative {
        Some(big_f) => big_f(b) - big_f(a),
        None => adaptive_simpson(f, a, b, 1e-12),
    };
    let (lower, upper) = if increasing {
        (integral + fm, integral + fn_)
    } else {
        (integral + fn_, integral + fm)
    };
    let tol = 1e-10 * libm::fabs(sum).max(1.0);
    let holds = lower - tol <= sum && sum <= upper + tol;
    Ok(IntegralReport {
        m,
        n,
        sum,
        integral,
        lower,
        upper,
        increasing,
        holds,
    })
}

/// Adaptive Simpson quadrature of `f` on `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let c = 0.5 * (a + b);
    let fc = f(c);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
    simpson_step(f, a, b, fa, fb, fc, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fb: f64, fc: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let c = 0.5 * (a + b);
    let (l, r) = (0.5 * (a + c), 0.5 * (c + b));
    let (fl, fr) = (f(l), f(r));
    let left = (c - a) / 6.0 * (fa + 4.0 * fl + fc);
    let right = (b - c) / 6.0 * (fc + 4.0 * fr + fb);
    let delta = left + right - whole;
    if depth == 0 || libm::fabs(delta) <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, c, fa, fc, fl, left, tol / 2.0, depth - 1)
        + simpson_step(f, c, b, fc, fb, fr, right, tol / 2.0, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> ChungParams {
        ChungParams {
            k0: 1.0,
            alpha: 2.0,
            beta: 1.0,
            a: 1.0,
            xi0: 1.0,
            epochs: 3,
        }
    }

    #[test]
    fn bound_1_example() {
        let e = core::f64::consts::E;
        let b = chung_bound_1(&example()).unwrap();
        assert!((b - (0.25 + e / 4.0 + e / 16.0)).abs() < 1e-15);
    }

    #[test]
    fn extremal_1_three_steps() {
        let mut xi = 1.0_f64;
        for t in [2.0_f64, 3.0, 4.0] {
            xi = (-2.0 / t).exp() * xi + 1.0 / (t * t);
        }
        let got = chung_extremal_1(&example()).unwrap();
        assert!((got - xi).abs() < 1e-15);
        assert!((got - 0.322_301_945_494_963).abs() < 1e-14);
        assert!(got <= chung_bound_1_sharp(&example()).unwrap());
    }

    #[test]
    fn zero_steps_and_zero_noise() {
        let mut p = example();
        p.epochs = 0;
        assert_eq!(chung_extremal_1(&p).unwrap(), 1.0);
        p.epochs = 5;
        p.a = 0.0;
        let expected = (-2.0 * harmonic_tail(1.0, 1, 5)).exp();
        assert!((chung_extremal_1(&p).unwrap() - expected).abs() < 1e-15);
        assert_eq!(chung_bound_1(&p).unwrap(), (2.0_f64 / 6.0).powi(2));
    }

    #[test]
    fn alpha_not_above_beta_rejected() {
        let mut p = example();
        p.beta = 2.0;
        assert!(matches!(chung_bound_1(&p), Err(Error::BadParams(_))));
    }

    fn params2() -> ChungParams2 {
        ChungParams2 {
            k0: 3.0,
            alpha: 3.0,
            beta: 1.0,
            xi0: 2.0,
            epochs: 1,
            n: 4,
            eps: 0.5,
            a1: 0.3,
            a2: 0.7,
            ext: None,
        }
    }

    #[test]
    fn one_epoch_uses_first_relation_only() {
        let p = params2();
        let expected = (-3.0 * harmonic_tail(3.0, 1, 4)).exp() * 2.0 + 0.3;
        assert_eq!(chung_extremal_2(&p).unwrap(), expected);
        assert!(expected <= chung_bound_2(&p).unwrap());
    }

    #[test]
    fn zero_extension_matches_plain_variant() {
        let mut p = params2();
        p.epochs = 20;
        let plain = (chung_bound_2(&p).unwrap(), chung_extremal_2(&p).unwrap());
        p.ext = Some(Extension { a3: 0.0, gamma: 1.5 });
        assert_eq!(chung_bound_2ext(&p).unwrap(), plain.0);
        assert_eq!(chung_extremal_2(&p).unwrap(), plain.1);
        p.ext = Some(Extension { a3: 1.0, gamma: 3.0 });
        assert!(chung_bound_2ext(&p).is_err());
    }

    #[test]
    fn harmonic_integral_sandwich() {
        let k0 = 2.5;
        let f = move |x: f64| 1.0 / (k0 + x);
        let big_f = move |x: f64| (k0 + x).ln();
        let r = integral_approx_check(&f, Some(&big_f), 3, 40).unwrap();
        assert!(r.holds && !r.increasing);
        let q = integral_approx_check(&f, None, 3, 40).unwrap();
        assert!((q.integral - r.integral).abs() < 1e-10);
    }

    #[test]
    fn constant_function_is_tight() {
        let f = |_: f64| 2.0;
        let r = integral_approx_check(&f, None, 1, 9).unwrap();
        assert!((r.sum - r.lower).abs() < 1e-12 && (r.sum - r.upper).abs() < 1e-12);
    }
}
