//! Extended generalized Pareto distribution `EGPD(κ, ξ, B)`.
//!
//! `F(x) = B(H_ξ(x)^κ)` and `f(x) = κ h_ξ(x) H_ξ(x)^{κ-1} b(H_ξ(x)^κ)`.
//! `κ` drives the lower tail (`F(x) ~ b(0) x^κ`), `ξ` the upper tail
//! (`1 - F(x) ~ κ b(1) (1 - H_ξ(x))`), and `B` the bulk.
//!
//! When `κ < 1` the density diverges at zero; [`egpd_pdf`] returns `+∞`
//! there. The singularity is integrable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpd;
use crate::rng::{self, Rng};
use crate::transfer::{Transfer, UnitDensity};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgpdParams {
    pub kappa: f64,
    pub xi: f64,
    pub transfer: Transfer,
}

impl EgpdParams {
    pub fn new(kappa: f64, xi: f64, transfer: Transfer) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::domain(format!("kappa must be positive and finite, got {kappa}")));
        }
        if !xi.is_finite() {
            return Err(Error::domain(format!("xi must be finite, got {xi}")));
        }
        Ok(EgpdParams { kappa, xi, transfer })
    }

    /// `EGPD(κ, ξ, uniform)`, i.e. `F = H_ξ^κ`.
    pub fn uniform(kappa: f64, xi: f64) -> Result<Self> {
        Self::new(kappa, xi, Transfer::Uniform)
    }

    #[inline]
    pub(crate) fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let h = gpd::cdf_unchecked(x, self.xi);
        self.transfer.cdf(h.powf(self.kappa))
    }

    /// `1 - F(x)`, accurate in the far upper tail.
    pub(crate) fn sf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        let hbar = gpd::sf_unchecked(x, self.xi);
        // 1 - H^κ = -expm1(κ log1p(-H̄))
        let c = -(self.kappa * (-hbar).ln_1p()).exp_m1();
        self.transfer.sf_from_complement(c)
    }

    #[inline]
    pub(crate) fn log_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return self.pdf_at_zero().ln();
        }
        let h = gpd::cdf_unchecked(x, self.xi);
        let ln_h = h.ln();
        let u = (self.kappa * ln_h).exp();
        self.kappa.ln() + gpd::log_pdf_unchecked(x, self.xi) + (self.kappa - 1.0) * ln_h
            + self.transfer.pdf(u).ln()
    }

    fn pdf_at_zero(&self) -> f64 {
        if self.kappa < 1.0 {
            f64::INFINITY
        } else if self.kappa == 1.0 {
            self.transfer.endpoints().0
        } else {
            0.0
        }
    }

    #[inline]
    pub(crate) fn pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return self.pdf_at_zero();
        }
        self.log_pdf(x).exp()
    }

    /// `F⁻¹(u)` for `u ∈ [0, 1]`; `+∞` at `u = 1` when `ξ ≥ 0`.
    pub(crate) fn quantile(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        let v = self.transfer.quantile(u);
        if v >= 1.0 {
            return if self.xi < 0.0 { -1.0 / self.xi } else { f64::INFINITY };
        }
        gpd::quantile_unchecked(v.powf(1.0 / self.kappa), self.xi)
    }

    /// `F⁻¹(1 - p)`.
    fn upper_quantile(&self, p: f64) -> f64 {
        self.quantile(1.0 - p)
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        loop {
            let x = self.quantile(rng::open_unit(rng));
            if x > 0.0 && x.is_finite() {
                return x;
            }
        }
    }
}

fn check_x(x: f64) -> Result<()> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::domain(format!("EGPD argument must be >= 0, got {x}")));
    }
    Ok(())
}

pub fn egpd_cdf(x: f64, p: &EgpdParams) -> Result<f64> {
    check_x(x)?;
    Ok(p.cdf(x))
}

pub fn egpd_sf(x: f64, p: &EgpdParams) -> Result<f64> {
    check_x(x)?;
    Ok(p.sf(x))
}

pub fn egpd_pdf(x: f64, p: &EgpdParams) -> Result<f64> {
    check_x(x)?;
    Ok(p.pdf(x))
}

pub fn egpd_quantile(u: f64, p: &EgpdParams) -> Result<f64> {
    if !(0.0..1.0).contains(&u) {
        return Err(Error::domain(format!("EGPD quantile level must lie in [0, 1), got {u}")));
    }
    Ok(p.quantile(u))
}

/// `n` independent draws `H_ξ⁻¹(B⁻¹(U)^{1/κ})` from the stream seeded by `seed`.
pub fn egpd_simulate(n: usize, p: &EgpdParams, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::domain("simulation size must be >= 1"));
    }
    let mut rng = rng::seeded(seed);
    Ok((0..n).map(|_| p.sample(&mut rng)).collect())
}

/// Transfer law of `1/X` when `X ~ EGPD(κ, ξ, B)` with `κ, ξ > 0`:
/// `B̃(u) = 1 - F(1 / H_{1/κ}⁻¹(u^ξ))`.
pub struct ReciprocalTransfer<'a> {
    of: &'a EgpdParams,
}

impl<'a> ReciprocalTransfer<'a> {
    pub(crate) fn new(of: &'a EgpdParams) -> Self {
        ReciprocalTransfer { of }
    }

    /// Point of the `1/X` axis that `u` maps to: `H_{1/κ}⁻¹(u^ξ)`.
    fn y_of(&self, u: f64) -> f64 {
        gpd::quantile_unchecked(u.powf(self.of.xi), 1.0 / self.of.kappa)
    }
}

impl UnitDensity for ReciprocalTransfer<'_> {
    fn pdf(&self, u: f64) -> f64 {
        let (b0, b1) = self.endpoints();
        if u <= 0.0 {
            return b0;
        }
        if u >= 1.0 {
            return b1;
        }
        let (kappa, xi) = (self.of.kappa, self.of.xi);
        let y = self.y_of(u);
        if !(y > 0.0 && y.is_finite()) {
            return if y <= 0.0 { b0 } else { b1 };
        }
        // d/du [1 - F(1/y(u))] = f(1/y) / y² · y'(u),  y'(u) = ξ u^{ξ-1} / h_{1/κ}(y)
        let log_dy = xi.ln() + (xi - 1.0) * u.ln() - gpd::log_pdf_unchecked(y, 1.0 / kappa);
        (self.of.log_pdf(1.0 / y) - 2.0 * y.ln() + log_dy).exp()
    }

    fn cdf(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return 1.0;
        }
        let y = self.y_of(u);
        if y <= 0.0 {
            return 0.0;
        }
        self.of.sf(1.0 / y)
    }

    fn quantile(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        if p >= 1.0 {
            return 1.0;
        }
        // B̃(u) = p  ⇔  1/y = F⁻¹(1 - p)
        let x = self.of.upper_quantile(p);
        if x <= 0.0 {
            return 1.0;
        }
        let y = 1.0 / x;
        gpd::cdf_unchecked(y, 1.0 / self.of.kappa).powf(1.0 / self.of.xi)
    }

    /// `b̃(0) = κ ξ^{-1/ξ} b(1)` and `b̃(1) = ξ κ^{-κ} b(0)`.
    fn endpoints(&self) -> (f64, f64) {
        let (kappa, xi) = (self.of.kappa, self.of.xi);
        let (b0, b1) = self.of.transfer.endpoints();
        (kappa * xi.powf(-1.0 / xi) * b1, xi * kappa.powf(-kappa) * b0)
    }
}

/// Parameters of `1/X` for `X ~ EGPD(κ, ξ, B)`: `EGPD(1/ξ, 1/κ, B̃)`.
pub fn egpd_inverse_params(p: &EgpdParams) -> Result<EgpdParams> {
    if !(p.kappa > 0.0) || !(p.xi > 0.0) {
        return Err(Error::domain(format!(
            "reciprocal EGPD requires kappa > 0 and xi > 0, got kappa={} xi={}",
            p.kappa, p.xi
        )));
    }
    EgpdParams::new(
        1.0 / p.xi,
        1.0 / p.kappa,
        Transfer::Reciprocal { of: Box::new(p.clone()) },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bernstein::BernsteinDensity;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn grid() -> Vec<EgpdParams> {
        let mut out = Vec::new();
        for xi in [0.0, 0.1, 0.5, 1.0] {
            for kappa in [0.5, 1.0, 2.0] {
                out.push(EgpdParams::uniform(kappa, xi).unwrap());
                let b = BernsteinDensity::from_weights(vec![0.1, 0.3, 0.4, 0.2]).unwrap();
                out.push(EgpdParams::new(kappa, xi, Transfer::Bernstein(b)).unwrap());
            }
        }
        out
    }

    fn log_grid() -> Vec<f64> {
        (0..=40).map(|i| 10f64.powf(-3.0 + 5.0 * i as f64 / 40.0)).collect()
    }

    #[test]
    fn cdf_examples() {
        let p = EgpdParams::uniform(2.0, 0.2).unwrap();
        assert_eq!(egpd_cdf(0.0, &p).unwrap(), 0.0);
        let h = 1.0 - 1.2f64.powf(-5.0);
        assert!(rel(egpd_cdf(1.0, &p).unwrap(), h * h) < 1e-14);
        assert!((egpd_cdf(1.0, &p).unwrap() - 0.3577504).abs() < 1e-7);
        let p1 = EgpdParams::uniform(1.0, 0.3).unwrap();
        for x in [0.1, 1.0, 7.0] {
            assert_eq!(egpd_cdf(x, &p1).unwrap(), gpd::gpd_cdf(x, 0.3).unwrap());
        }
        assert!(egpd_cdf(-1.0, &p).is_err());
    }

    #[test]
    fn pdf_examples() {
        let p1 = EgpdParams::uniform(1.0, 0.3).unwrap();
        for x in [0.1, 1.0, 7.0] {
            assert!(rel(egpd_pdf(x, &p1).unwrap(), gpd::gpd_pdf(x, 0.3).unwrap()) < 1e-14);
        }
        let p = EgpdParams::uniform(2.0, 0.2).unwrap();
        let expect = 2.0 * 1.2f64.powf(-6.0) * (1.0 - 1.2f64.powf(-5.0));
        assert!(rel(egpd_pdf(1.0, &p).unwrap(), expect) < 1e-14);
        let half = EgpdParams::uniform(0.5, 0.2).unwrap();
        assert_eq!(egpd_pdf(0.0, &half).unwrap(), f64::INFINITY);
        assert_eq!(egpd_pdf(0.0, &p).unwrap(), 0.0);
    }

    #[test]
    fn lower_tail_density_ratio_tends_to_b0() {
        let b = BernsteinDensity::from_weights(vec![0.5, 0.1, 0.15, 0.25]).unwrap();
        let p = EgpdParams::new(2.0, 0.2, Transfer::Bernstein(b)).unwrap();
        let x = 1e-7;
        let ratio = egpd_pdf(x, &p).unwrap() / (2.0 * x);
        assert!((ratio - 2.0).abs() < 1e-5, "{ratio}");
    }

    #[test]
    fn quantile_examples() {
        let p = EgpdParams::uniform(2.0, 0.2).unwrap();
        assert_eq!(egpd_quantile(0.0, &p).unwrap(), 0.0);
        let u = (1.0 - 1.2f64.powf(-5.0)).powi(2);
        assert!(rel(egpd_quantile(u, &p).unwrap(), 1.0) < 1e-12);
        let p1 = EgpdParams::uniform(1.0, 0.4).unwrap();
        assert_eq!(egpd_quantile(0.3, &p1).unwrap(), gpd::gpd_quantile(0.3, 0.4).unwrap());
        assert!(egpd_quantile(1.0, &p).is_err());
    }

    #[test]
    fn mutual_consistency_on_grid() {
        for p in grid() {
            for x in log_grid() {
                let f = egpd_cdf(x, &p).unwrap();
                if f < 1e-12 || f > 1.0 - 1e-9 {
                    continue;
                }
                let back = egpd_quantile(f, &p).unwrap();
                assert!(rel(back, x) < 1e-8 || (egpd_cdf(back, &p).unwrap() - f).abs() < 1e-8,
                    "round trip kappa={} xi={} x={x}", p.kappa, p.xi);
                let h = 1e-5 * x;
                let fd = if f < 0.5 {
                    (egpd_cdf(x + h, &p).unwrap() - egpd_cdf(x - h, &p).unwrap()) / (2.0 * h)
                } else {
                    (egpd_sf(x - h, &p).unwrap() - egpd_sf(x + h, &p).unwrap()) / (2.0 * h)
                };
                let pdf = egpd_pdf(x, &p).unwrap();
                assert!(rel(fd, pdf) < 1e-5, "derivative kappa={} xi={} x={x}: {fd} vs {pdf}", p.kappa, p.xi);
            }
        }
    }

    #[test]
    fn simulation_is_deterministic_and_matches_gpd_path() {
        let p = EgpdParams::uniform(1.0, 0.2).unwrap();
        let a = egpd_simulate(100, &p, 11).unwrap();
        let b = egpd_simulate(100, &p, 11).unwrap();
        assert_eq!(a, b);
        let mut rng = rng::seeded(11);
        for x in &a {
            let u = rng::open_unit(&mut rng);
            assert_eq!(*x, gpd::gpd_quantile(u, 0.2).unwrap());
        }
        assert!(egpd_simulate(0, &p, 1).is_err());
    }

    #[test]
    fn inverse_params_endpoints() {
        let p = EgpdParams::uniform(1.0, 1.0).unwrap();
        let inv = egpd_inverse_params(&p).unwrap();
        assert_eq!((inv.kappa, inv.xi), (1.0, 1.0));
        let (b0, b1) = inv.transfer.endpoints();
        assert!((b0 - 1.0).abs() < 1e-15 && (b1 - 1.0).abs() < 1e-15);

        // b(0) = 4·0.5 = 2, b(1) = 4·0.25 = 1
        let b = BernsteinDensity::from_weights(vec![0.5, 0.15, 0.1, 0.25]).unwrap();
        let p = EgpdParams::new(2.0, 0.5, Transfer::Bernstein(b)).unwrap();
        let inv = egpd_inverse_params(&p).unwrap();
        let (b0, b1) = inv.transfer.endpoints();
        // κ ξ^{-1/ξ} b(1) = 2·4·1 and ξ κ^{-κ} b(0) = 0.5·0.25·2
        assert!((b0 - 8.0).abs() < 1e-12);
        assert!((b1 - 0.25).abs() < 1e-12);

        assert!(egpd_inverse_params(&EgpdParams::uniform(1.0, 0.0).unwrap()).is_err());
        assert!(egpd_inverse_params(&EgpdParams::uniform(1.0, -0.2).unwrap()).is_err());
    }

    #[test]
    fn reciprocal_law_matches_direct_transformation() {
        let b = BernsteinDensity::from_weights(vec![0.3, 0.2, 0.1, 0.4]).unwrap();
        let p = EgpdParams::new(1.7, 0.4, Transfer::Bernstein(b)).unwrap();
        let inv = egpd_inverse_params(&p).unwrap();
        for y in log_grid() {
            // P(1/X <= y) = 1 - F(1/y)
            let direct = p.sf(1.0 / y);
            let via = egpd_cdf(y, &inv).unwrap();
            assert!((direct - via).abs() < 1e-10, "y={y}: {direct} vs {via}");
        }
        for i in 1..40 {
            let u = i as f64 / 40.0;
            let q = inv.transfer.quantile(u);
            assert!((inv.transfer.cdf(q) - u).abs() < 1e-9);
            let h = 1e-6;
            let fd = (inv.transfer.cdf(q + h) - inv.transfer.cdf(q - h)) / (2.0 * h);
            assert!(rel(fd, inv.transfer.pdf(q)) < 1e-5);
        }
        // the interior density approaches the closed-form endpoints
        let (b0, b1) = inv.transfer.endpoints();
        assert!(rel(inv.transfer.pdf(1e-7), b0) < 1e-2, "{} vs {b0}", inv.transfer.pdf(1e-7));
        assert!(rel(inv.transfer.pdf(1.0 - 1e-7), b1) < 1e-2, "{} vs {b1}", inv.transfer.pdf(1.0 - 1e-7));
    }
}
