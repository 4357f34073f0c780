//! Transfer laws on the unit interval.
//!
//! An EGPD maps `H_ξ(x)^κ` through a cdf `B` on `[0, 1]` whose density must be
//! positive and finite at both endpoints. [`UnitDensity`] is the evaluation
//! surface every such `B` provides; [`Transfer`] is the closed set of laws the
//! library can store in a model file.

use serde::{Deserialize, Serialize};

use crate::bernstein::BernsteinDensity;
use crate::egpd::{EgpdParams, ReciprocalTransfer};

/// Density, cdf and quantile of a law on `[0, 1]`.
///
/// Arguments are assumed to lie in `[0, 1]`; callers validate.
pub trait UnitDensity {
    fn pdf(&self, u: f64) -> f64;

    fn cdf(&self, u: f64) -> f64;

    /// `1 - B(u)` given the complement `c = 1 - u`, for callers that know
    /// `c` more accurately than `u`.
    fn sf_from_complement(&self, c: f64) -> f64 {
        1.0 - self.cdf(1.0 - c)
    }

    /// `B⁻¹(p)` by bisection to `1e-12`; `B` is a cdf so this always brackets.
    fn quantile(&self, p: f64) -> f64 {
        bisect_quantile(|u| self.cdf(u), p)
    }

    /// `(b(0), b(1))`.
    fn endpoints(&self) -> (f64, f64) {
        (self.pdf(0.0), self.pdf(1.0))
    }
}

pub(crate) fn bisect_quantile(cdf: impl Fn(f64) -> f64, p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `b ≡ 1`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UniformTransfer;

impl UnitDensity for UniformTransfer {
    fn pdf(&self, _u: f64) -> f64 {
        1.0
    }
    fn cdf(&self, u: f64) -> f64 {
        u
    }
    fn sf_from_complement(&self, c: f64) -> f64 {
        c
    }
    fn quantile(&self, p: f64) -> f64 {
        p
    }
    fn endpoints(&self) -> (f64, f64) {
        (1.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transfer {
    Uniform,
    Bernstein(BernsteinDensity),
    /// Transfer law of `1/X` for `X` following the boxed parameters.
    Reciprocal { of: Box<EgpdParams> },
}

impl Transfer {
    pub fn as_bernstein(&self) -> Option<&BernsteinDensity> {
        match self {
            Transfer::Bernstein(b) => Some(b),
            _ => None,
        }
    }

    fn with<R>(&self, f: impl FnOnce(&dyn UnitDensity) -> R) -> R {
        match self {
            Transfer::Uniform => f(&UniformTransfer),
            Transfer::Bernstein(b) => f(b),
            Transfer::Reciprocal { of } => f(&ReciprocalTransfer::new(of)),
        }
    }
}

impl UnitDensity for Transfer {
    fn pdf(&self, u: f64) -> f64 {
        self.with(|d| d.pdf(u))
    }
    fn cdf(&self, u: f64) -> f64 {
        self.with(|d| d.cdf(u))
    }
    fn sf_from_complement(&self, c: f64) -> f64 {
        self.with(|d| d.sf_from_complement(c))
    }
    fn quantile(&self, p: f64) -> f64 {
        self.with(|d| d.quantile(p))
    }
    fn endpoints(&self) -> (f64, f64) {
        self.with(|d| d.endpoints())
    }
}
