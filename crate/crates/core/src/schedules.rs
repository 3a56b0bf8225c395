//! Step-size rules.
//!
//! Epochs `k` run over `1..=K` and within-epoch indices `i` over `1..=n`,
//! matching the way the rules are usually written. Every rule also reports
//! its epoch requirement, which is advisory: runs below the threshold are
//! allowed and simply flagged.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScheduleKind {
    /// `2 ln(sqrt(n) K) / (mu n K)`, PŁ costs.
    ConstPl,
    /// `2 ln(nK) / (mu n K)`, quadratic costs.
    ConstQuadratic,
    /// `16 ln(nK) / (mu n K)`, quadratic costs with tail averaging.
    ConstTail,
    /// `2 ln(sqrt(n) K) / (mu n K)`, SingleShuffle.
    ConstSingleShuffle,
    /// `(2 alpha / mu) / (k0 + i)` in epoch 1, `(2 alpha / mu) / (k0 + nk)` after, alpha > 2.
    VaryingStronglyConvex,
    /// Same rule as `VaryingStronglyConvex` with alpha > 4.
    VaryingQuadratic,
    /// `2 / (mu (t + 4 kappa))` at global iteration `t`.
    SgdBaseline,
    /// A user-supplied constant.
    Constant,
}

impl ScheduleKind {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::ConstPl => "const_pl",
            ScheduleKind::ConstQuadratic => "const_quadratic",
            ScheduleKind::ConstTail => "const_tail",
            ScheduleKind::ConstSingleShuffle => "const_singleshuffle",
            ScheduleKind::VaryingStronglyConvex => "varying_strongly_convex",
            ScheduleKind::VaryingQuadratic => "varying_quadratic",
            ScheduleKind::SgdBaseline => "sgd_baseline",
            ScheduleKind::Constant => "constant",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "const_pl" => ScheduleKind::ConstPl,
            "const_quadratic" => ScheduleKind::ConstQuadratic,
            "const_tail" => ScheduleKind::ConstTail,
            "const_singleshuffle" => ScheduleKind::ConstSingleShuffle,
            "varying_strongly_convex" => ScheduleKind::VaryingStronglyConvex,
            "varying_quadratic" => ScheduleKind::VaryingQuadratic,
            "sgd_baseline" => ScheduleKind::SgdBaseline,
            "constant" => ScheduleKind::Constant,
            _ => return None,
        })
    }

    pub fn is_constant(self) -> bool {
        matches!(
            self,
            ScheduleKind::ConstPl
                | ScheduleKind::ConstQuadratic
                | ScheduleKind::ConstTail
                | ScheduleKind::ConstSingleShuffle
                | ScheduleKind::Constant
        )
    }
}

/// An immutable step-size rule with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub mu: f64,
    pub ell: f64,
    pub kappa: f64,
    pub n: usize,
    /// Planned number of epochs (only the constant rules use it).
    pub epochs: usize,
    pub alpha: f64,
    pub k0: f64,
    eta_const: f64,
}

impl Schedule {
    fn base(kind: ScheduleKind, mu: f64, ell: f64, n: usize, epochs: usize) -> Self {
        Self {
            kind,
            mu,
            ell,
            kappa: ell / mu,
            n,
            epochs,
            alpha: f64::NAN,
            k0: f64::NAN,
            eta_const: f64::NAN,
        }
    }

    fn constant_rule(kind: ScheduleKind, mu: f64, ell: f64, n: usize, epochs: usize, eta: f64) -> Self {
        let mut s = Self::base(kind, mu, ell, n, epochs);
        s.eta_const = eta;
        s
    }

    pub fn const_pl(mu: f64, ell: f64, n: usize, epochs: usize) -> Self {
        let eta = 2.0 * ln_sqrt_n_k(n, epochs) / (mu * n as f64 * epochs as f64);
        Self::constant_rule(ScheduleKind::ConstPl, mu, ell, n, epochs, eta)
    }

    pub fn const_quadratic(mu: f64, ell: f64, n: usize, epochs: usize) -> Self {
        let eta = 2.0 * ln_nk(n, epochs) / (mu * n as f64 * epochs as f64);
        Self::constant_rule(ScheduleKind::ConstQuadratic, mu, ell, n, epochs, eta)
    }

    pub fn const_tail(mu: f64, ell: f64, n: usize, epochs: usize) -> Self {
        let eta = 16.0 * ln_nk(n, epochs) / (mu * n as f64 * epochs as f64);
        Self::constant_rule(ScheduleKind::ConstTail, mu, ell, n, epochs, eta)
    }

    pub fn const_singleshuffle(mu: f64, ell: f64, n: usize, epochs: usize) -> Self {
        let eta = 2.0 * ln_sqrt_n_k(n, epochs) / (mu * n as f64 * epochs as f64);
        Self::constant_rule(ScheduleKind::ConstSingleShuffle, mu, ell, n, epochs, eta)
    }

    pub fn constant(eta: f64, mu: f64, ell: f64, n: usize, epochs: usize) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::BadArgs("constant step size must be positive and finite"));
        }
        Ok(Self::constant_rule(ScheduleKind::Constant, mu, ell, n, epochs, eta))
    }

    fn varying(kind: ScheduleKind, mu: f64, ell: f64, n: usize, alpha: f64, min_alpha: f64) -> Result<Self> {
        if !(alpha > min_alpha) {
            return Err(Error::BadAlpha { alpha, min: min_alpha });
        }
        let mut s = Self::base(kind, mu, ell, n, 0);
        s.alpha = alpha;
        s.k0 = alpha * s.kappa;
        Ok(s)
    }

    pub fn varying_strongly_convex(mu: f64, ell: f64, n: usize, alpha: f64) -> Result<Self> {
        Self::varying(ScheduleKind::VaryingStronglyConvex, mu, ell, n, alpha, 2.0)
    }

    pub fn varying_quadratic(mu: f64, ell: f64, n: usize, alpha: f64) -> Result<Self> {
        Self::varying(ScheduleKind::VaryingQuadratic, mu, ell, n, alpha, 4.0)
    }

    pub fn sgd_baseline(mu: f64, ell: f64, n: usize, epochs: usize) -> Self {
        Self::base(ScheduleKind::SgdBaseline, mu, ell, n, epochs)
    }

    /// Builds any kind from its name-level parameters. `alpha` is used by the
    /// varying rules and `eta` by `Constant`.
    pub fn build(
        kind: ScheduleKind,
        mu: f64,
        ell: f64,
        n: usize,
        epochs: usize,
        alpha: Option<f64>,
        eta: Option<f64>,
    ) -> Result<Self> {
        Ok(match kind {
            ScheduleKind::ConstPl => Self::const_pl(mu, ell, n, epochs),
            ScheduleKind::ConstQuadratic => Self::const_quadratic(mu, ell, n, epochs),
            ScheduleKind::ConstTail => Self::const_tail(mu, ell, n, epochs),
            ScheduleKind::ConstSingleShuffle => Self::const_singleshuffle(mu, ell, n, epochs),
            ScheduleKind::VaryingStronglyConvex => Self::varying_strongly_convex(
                mu,
                ell,
                n,
                alpha.ok_or(Error::BadArgs("varying schedules need alpha"))?,
            )?,
            ScheduleKind::VaryingQuadratic => Self::varying_quadratic(
                mu,
                ell,
                n,
                alpha.ok_or(Error::BadArgs("varying schedules need alpha"))?,
            )?,
            ScheduleKind::SgdBaseline => Self::sgd_baseline(mu, ell, n, epochs),
            ScheduleKind::Constant => Self::constant(
                eta.ok_or(Error::BadArgs("constant schedule needs eta"))?,
                mu,
                ell,
                n,
                epochs,
            )?,
        })
    }

    /// Step size for epoch `k` (1-based) and within-epoch index `i` (1-based).
    pub fn eta(&self, k: usize, i: usize) -> f64 {
        match self.kind {
            ScheduleKind::VaryingStronglyConvex | ScheduleKind::VaryingQuadratic => {
                let scale = 2.0 * self.alpha / self.mu;
                if k <= 1 {
                    scale / (self.k0 + i as f64)
                } else {
                    scale / (self.k0 + (self.n * k) as f64)
                }
            }
            ScheduleKind::SgdBaseline => {
                let t = (self.n * (k - 1) + i) as f64;
                2.0 / (self.mu * (t + 4.0 * self.kappa))
            }
            _ => self.eta_const,
        }
    }

    /// Whether `(n, K)` satisfies the rule's epoch requirement.
    pub fn requirement(&self, n: usize, epochs: usize) -> bool {
        let kf = epochs as f64;
        let kappa = self.kappa;
        let kappa_factor = 1.0_f64.max(libm::sqrt(kappa / n as f64));
        match self.kind {
            ScheduleKind::ConstPl => kf >= 10.0 * kappa * ln_sqrt_n_k(n, epochs),
            ScheduleKind::ConstQuadratic => {
                kf >= (32.0 / 3.0) * kappa * kappa_factor * ln_nk(n, epochs)
            }
            ScheduleKind::ConstTail => kf >= 128.0 * kappa * kappa_factor * ln_nk(n, epochs),
            ScheduleKind::ConstSingleShuffle => {
                kf >= 10.0 * kappa * kappa * ln_sqrt_n_k(n, epochs)
            }
            ScheduleKind::VaryingStronglyConvex
            | ScheduleKind::VaryingQuadratic
            | ScheduleKind::SgdBaseline
            | ScheduleKind::Constant => true,
        }
    }

    /// `requirement` at the schedule's own `(n, K)`.
    pub fn requirement_met(&self) -> bool {
        self.requirement(self.n, self.epochs)
    }
}

fn ln_nk(n: usize, epochs: usize) -> f64 {
    libm::log(n as f64 * epochs as f64)
}

fn ln_sqrt_n_k(n: usize, epochs: usize) -> f64 {
    libm::log(libm::sqrt(n as f64) * epochs as f64)
}
