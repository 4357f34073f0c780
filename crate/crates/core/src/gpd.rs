//! Unit-scale generalized Pareto distribution.
//!
//! `H_ξ(x) = 1 - (1 + ξx)_+^{-1/ξ}`, with the exponential law at `ξ = 0`.
//! All evaluations go through `L(x) = log1p(ξx)/ξ`, the cumulative hazard,
//! which is continuous in `ξ` and loses no precision as `ξ → 0`.

use crate::error::{Error, Result};

/// Below this `|ξ|` the hazard is evaluated by its Taylor series in `ξx`
/// whenever `|ξx|` is small as well.
pub const SMALL_XI: f64 = 1e-6;

/// Cumulative hazard `-log(1 - H_ξ(x))`; `+∞` beyond the upper endpoint
/// when `ξ < 0`.
#[inline]
pub(crate) fn hazard(x: f64, xi: f64) -> f64 {
    let t = xi * x;
    if xi == 0.0 {
        x
    } else if xi.abs() < SMALL_XI && t.abs() < 1e-4 {
        // log1p(t)/ξ = x (1 - t/2 + t²/3 - t³/4 + …)
        x * (1.0 - t * (0.5 - t * (1.0 / 3.0 - t * 0.25)))
    } else if t <= -1.0 {
        f64::INFINITY
    } else {
        t.ln_1p() / xi
    }
}

#[inline]
pub(crate) fn cdf_unchecked(x: f64, xi: f64) -> f64 {
    -(-hazard(x, xi)).exp_m1()
}

#[inline]
pub(crate) fn sf_unchecked(x: f64, xi: f64) -> f64 {
    (-hazard(x, xi)).exp()
}

#[inline]
pub(crate) fn log_pdf_unchecked(x: f64, xi: f64) -> f64 {
    let t = xi * x;
    if t <= -1.0 {
        return f64::NEG_INFINITY;
    }
    // log h = -(1/ξ + 1) log1p(ξx) = -L - log1p(ξx)
    -hazard(x, xi) - t.ln_1p()
}

#[inline]
pub(crate) fn quantile_unchecked(u: f64, xi: f64) -> f64 {
    // y = -log(1-u); H⁻¹(u) = expm1(ξy)/ξ
    let y = -(-u).ln_1p();
    let s = xi * y;
    if xi == 0.0 {
        y
    } else if xi.abs() < SMALL_XI && s.abs() < 1e-4 {
        y * (1.0 + s * (0.5 + s * (1.0 / 6.0 + s / 24.0)))
    } else {
        s.exp_m1() / xi
    }
}

fn check_x(x: f64) -> Result<()> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::domain(format!("GPD argument must be >= 0, got {x}")));
    }
    Ok(())
}

fn check_xi(xi: f64) -> Result<()> {
    if !xi.is_finite() {
        return Err(Error::domain(format!("GPD shape must be finite, got {xi}")));
    }
    Ok(())
}

/// `H_ξ(x)` for `x >= 0`. Returns 1 past the finite endpoint `-1/ξ` when `ξ < 0`.
pub fn gpd_cdf(x: f64, xi: f64) -> Result<f64> {
    check_x(x)?;
    check_xi(xi)?;
    Ok(cdf_unchecked(x, xi))
}

/// `h_ξ(x) = (1 + ξx)_+^{-1/ξ - 1}`.
pub fn gpd_pdf(x: f64, xi: f64) -> Result<f64> {
    check_x(x)?;
    check_xi(xi)?;
    Ok(log_pdf_unchecked(x, xi).exp())
}

/// Survival `1 - H_ξ(x)` computed without cancellation.
pub fn gpd_sf(x: f64, xi: f64) -> Result<f64> {
    check_x(x)?;
    check_xi(xi)?;
    Ok(sf_unchecked(x, xi))
}

/// `H_ξ⁻¹(u) = ((1-u)^{-ξ} - 1)/ξ` for `u ∈ [0, 1)`.
pub fn gpd_quantile(u: f64, xi: f64) -> Result<f64> {
    check_xi(xi)?;
    if !(0.0..1.0).contains(&u) {
        return Err(Error::domain(format!(
            "GPD quantile level must lie in [0, 1), got {u}"
        )));
    }
    Ok(quantile_unchecked(u, xi))
}
