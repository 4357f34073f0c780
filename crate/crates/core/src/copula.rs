//! Bivariate reference copulas and their Monte Carlo `χ` curves.
//!
//! * symmetric logistic: `C(u,v) = exp(-((-log u)^{1/α} + (-log v)^{1/α})^α)`,
//!   drawn as `Y_i = (S / E_i)^α` with `S` positive `α`-stable
//!   (`E e^{-tS} = e^{-t^α}`, Kanter's representation) and `E_i ~ Exp(1)`;
//! * inverted logistic: componentwise reciprocal of the Fréchet logistic
//!   draws, i.e. `1 - U` on the uniform scale;
//! * Gaussian with correlation `1 - α`.

use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::egpd::EgpdParams;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CopulaFamily {
    SymmetricLogistic,
    InvertedLogistic,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopulaSpec {
    pub family: CopulaFamily,
    pub alpha: f64,
}

impl CopulaSpec {
    pub fn new(family: CopulaFamily, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::domain(format!("copula alpha must lie in (0, 1], got {alpha}")));
        }
        Ok(CopulaSpec { family, alpha })
    }

    fn draw(&self, rng: &mut Rng) -> [f64; 2] {
        match self.family {
            CopulaFamily::SymmetricLogistic => logistic_pair(self.alpha, rng),
            CopulaFamily::InvertedLogistic => {
                let [a, b] = logistic_pair(self.alpha, rng);
                [1.0 - a, 1.0 - b]
            }
            CopulaFamily::Gaussian => {
                let rho = 1.0 - self.alpha;
                let z1: f64 = StandardNormal.sample(rng);
                let e: f64 = StandardNormal.sample(rng);
                let z2 = rho * z1 + (1.0 - rho * rho).sqrt() * e;
                [std_normal_cdf(z1), std_normal_cdf(z2)]
            }
        }
    }
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Positive stable variable with Laplace transform `e^{-t^α}`.
fn positive_stable(alpha: f64, rng: &mut Rng) -> f64 {
    if alpha >= 1.0 {
        return 1.0;
    }
    let u = std::f64::consts::PI * rng::open_unit(rng);
    let w: f64 = Exp1.sample(rng);
    (alpha * u).sin() / u.sin().powf(1.0 / alpha) * ((1.0 - alpha) * u).sin().powf((1.0 - alpha) / alpha)
        * w.powf(-(1.0 - alpha) / alpha)
}

fn logistic_pair(alpha: f64, rng: &mut Rng) -> [f64; 2] {
    let s = positive_stable(alpha, rng);
    let mut out = [0.0; 2];
    for o in &mut out {
        let e: f64 = Exp1.sample(rng);
        // Fréchet draw Y = (S/E)^α, uniform margin exp(-1/Y)
        let y = (s / e).powf(alpha);
        *o = (-1.0 / y).exp();
    }
    out
}

/// `n` pairs with uniform margins.
pub fn simulate_copula(n: usize, spec: &CopulaSpec, seed: u64) -> Result<Vec<[f64; 2]>> {
    CopulaSpec::new(spec.family, spec.alpha)?;
    let mut rng = rng::seeded(seed);
    Ok((0..n).map(|_| spec.draw(&mut rng)).collect())
}

/// `x_ij = F⁻¹(u_ij)` under a common EGPD margin.
pub fn compose_with_margins(u: &[[f64; 2]], margins: &EgpdParams) -> Result<Vec<[f64; 2]>> {
    u.iter()
        .map(|pair| {
            let mut x = [0.0; 2];
            for (xi, &ui) in x.iter_mut().zip(pair) {
                if !(0.0..1.0).contains(&ui) {
                    return Err(Error::domain(format!("uniform value must lie in [0, 1), got {ui}")));
                }
                *xi = margins.quantile(ui);
            }
            Ok(x)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiTruth {
    pub p: f64,
    pub chi_upper: f64,
    pub chi_lower: f64,
    pub se_upper: f64,
    pub se_lower: f64,
}

const CHUNK: usize = 1 << 16;

/// Monte Carlo `χ^(X)` and `χ^(Y)` with exact uniform margins.
///
/// `χ` is a copula functional, so the curve is computed on uniforms and is
/// the same for every choice of continuous margins.
pub fn true_chi_curve(spec: &CopulaSpec, p_grid: &[f64], mc_size: usize, seed: u64) -> Result<Vec<ChiTruth>> {
    CopulaSpec::new(spec.family, spec.alpha)?;
    if mc_size == 0 {
        return Err(Error::domain("Monte Carlo size must be >= 1"));
    }
    if let Some(p) = p_grid.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::domain(format!("chi level must lie in (0, 1), got {p}")));
    }
    let chunks = mc_size.div_ceil(CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::substream(seed, c as u64);
            let len = CHUNK.min(mc_size - c * CHUNK);
            let mut up = vec![0u64; p_grid.len()];
            let mut lo = vec![0u64; p_grid.len()];
            for _ in 0..len {
                let [a, b] = spec.draw(&mut rng);
                let hi = a.min(b);
                let small = a.max(b);
                for (k, &p) in p_grid.iter().enumerate() {
                    up[k] += (hi > p) as u64;
                    lo[k] += (small < 1.0 - p) as u64;
                }
            }
            (up, lo)
        })
        .reduce(
            || (vec![0u64; p_grid.len()], vec![0u64; p_grid.len()]),
            |mut x, y| {
                for k in 0..p_grid.len() {
                    x.0[k] += y.0[k];
                    x.1[k] += y.1[k];
                }
                x
            },
        );
    let n = mc_size as f64;
    Ok(p_grid
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let est = |count: u64| {
                let pi = count as f64 / n;
                (pi / (1.0 - p), (pi * (1.0 - pi) / n).sqrt() / (1.0 - p))
            };
            let (chi_upper, se_upper) = est(counts.0[k]);
            let (chi_lower, se_lower) = est(counts.1[k]);
            ChiTruth {
                p,
                chi_upper,
                chi_lower,
                se_upper,
                se_lower,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angular::{chi_from_columns, TailSide};
    use crate::egpd::egpd_cdf;

    /// `P(U > p, V > p) / (1 - p)` for the logistic copula, from `C(p, p) = p^{2^α}`.
    fn logistic_chi_upper(p: f64, alpha: f64) -> f64 {
        (1.0 - 2.0 * p + p.powf(2f64.powf(alpha))) / (1.0 - p)
    }

    fn logistic_chi_lower(p: f64, alpha: f64) -> f64 {
        (1.0 - p).powf(2f64.powf(alpha) - 1.0)
    }

    fn spearman(x: &[[f64; 2]]) -> f64 {
        let a: Vec<f64> = x.iter().map(|p| p[0]).collect();
        let b: Vec<f64> = x.iter().map(|p| p[1]).collect();
        let rank = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
            let mut r = vec![0.0; v.len()];
            for (k, &i) in idx.iter().enumerate() {
                r[i] = k as f64;
            }
            r
        };
        let (ra, rb) = (rank(&a), rank(&b));
        let n = a.len() as f64;
        let m = (n - 1.0) / 2.0;
        let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - m) * (y - m)).sum();
        let var: f64 = ra.iter().map(|x| (x - m) * (x - m)).sum();
        cov / var
    }

    #[test]
    fn gaussian_alpha_one_is_independent() {
        let spec = CopulaSpec::new(CopulaFamily::Gaussian, 1.0).unwrap();
        let u = simulate_copula(100_000, &spec, 1).unwrap();
        assert!(spearman(&u).abs() < 0.02);
    }

    #[test]
    fn margins_are_uniform() {
        for family in [CopulaFamily::SymmetricLogistic, CopulaFamily::InvertedLogistic, CopulaFamily::Gaussian] {
            let spec = CopulaSpec::new(family, 0.2).unwrap();
            let u = simulate_copula(50_000, &spec, 2).unwrap();
            for j in 0..2 {
                let mut col: Vec<f64> = u.iter().map(|p| p[j]).collect();
                col.sort_by(f64::total_cmp);
                let ks = col
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| ((i + 1) as f64 / col.len() as f64 - x).abs())
                    .fold(0.0, f64::max);
                assert!(ks < 0.01, "{family:?} column {j}: KS {ks}");
            }
        }
    }

    #[test]
    fn logistic_curve_matches_closed_form() {
        let spec = CopulaSpec::new(CopulaFamily::SymmetricLogistic, 0.2).unwrap();
        let grid = [0.8, 0.9, 0.95, 0.99];
        let t = true_chi_curve(&spec, &grid, 400_000, 3).unwrap();
        for row in &t {
            let up = logistic_chi_upper(row.p, 0.2);
            let lo = logistic_chi_lower(row.p, 0.2);
            assert!((row.chi_upper - up).abs() < 4.0 * row.se_upper, "{row:?} vs {up}");
            assert!((row.chi_lower - lo).abs() < 4.0 * row.se_lower, "{row:?} vs {lo}");
        }
    }

    #[test]
    fn near_independent_logistic() {
        // the exact value at α = 0.95 is 0.0771; only the limit 2 - 2^0.95 is small
        let spec = CopulaSpec::new(CopulaFamily::SymmetricLogistic, 0.95).unwrap();
        let t = true_chi_curve(&spec, &[0.99], 1_000_000, 4).unwrap()[0];
        let exact = logistic_chi_upper(0.99, 0.95);
        assert!((exact - 0.0771).abs() < 1e-4);
        assert!((t.chi_upper - exact).abs() < 4.0 * t.se_upper, "{t:?}");
        assert!(2.0 - 2f64.powf(0.95) < 0.07);
    }

    #[test]
    fn inverted_logistic_mirrors_logistic() {
        let p = [0.9, 0.95, 0.99];
        let a = true_chi_curve(&CopulaSpec::new(CopulaFamily::InvertedLogistic, 0.2).unwrap(), &p, 400_000, 5).unwrap();
        let b = true_chi_curve(&CopulaSpec::new(CopulaFamily::SymmetricLogistic, 0.2).unwrap(), &p, 400_000, 6).unwrap();
        for (x, y) in a.iter().zip(&b) {
            let se = (x.se_lower.powi(2) + y.se_upper.powi(2)).sqrt();
            assert!((x.chi_lower - y.chi_upper).abs() < 3.0 * se, "{x:?} {y:?}");
            let exact = logistic_chi_lower(x.p, 0.2);
            assert!((x.chi_upper - exact).abs() < 4.0 * x.se_upper);
        }
    }

    #[test]
    fn independence_curve() {
        let spec = CopulaSpec::new(CopulaFamily::Gaussian, 1.0).unwrap();
        let t = true_chi_curve(&spec, &[0.5, 0.8, 0.9], 200_000, 7).unwrap();
        for row in t {
            assert!((row.chi_upper - (1.0 - row.p)).abs() < 3.0 * row.se_upper + 1e-12, "{row:?}");
        }
    }

    #[test]
    fn deterministic_and_chunk_independent() {
        let spec = CopulaSpec::new(CopulaFamily::Gaussian, 0.2).unwrap();
        let a = true_chi_curve(&spec, &[0.9], 300_000, 8).unwrap();
        let b = true_chi_curve(&spec, &[0.9], 300_000, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn margins_preserve_ranks_and_round_trip() {
        let m = EgpdParams::uniform(2.0, 0.1).unwrap();
        let spec = CopulaSpec::new(CopulaFamily::SymmetricLogistic, 0.2).unwrap();
        let u = simulate_copula(5_000, &spec, 9).unwrap();
        let x = compose_with_margins(&u, &m).unwrap();
        for (pu, px) in u.iter().zip(&x) {
            for j in 0..2 {
                assert!((egpd_cdf(px[j], &m).unwrap() - pu[j]).abs() < 1e-8);
            }
        }
        let col = |v: &[[f64; 2]], j: usize| v.iter().map(|p| p[j]).collect::<Vec<_>>();
        let grid = [0.8, 0.9, 0.95];
        for side in [TailSide::Upper, TailSide::Lower] {
            let cu = chi_from_columns(&col(&u, 0), &col(&u, 1), &grid, side).unwrap();
            let cx = chi_from_columns(&col(&x, 0), &col(&x, 1), &grid, side).unwrap();
            assert_eq!(cu, cx);
        }
        assert_eq!(compose_with_margins(&[[0.0, 0.0]], &m).unwrap(), vec![[0.0, 0.0]]);
    }

    #[test]
    fn median_of_composed_sample() {
        let m = EgpdParams::uniform(2.0, 0.1).unwrap();
        let spec = CopulaSpec::new(CopulaFamily::Gaussian, 0.2).unwrap();
        let u = simulate_copula(100_000, &spec, 10).unwrap();
        let mut x: Vec<f64> = compose_with_margins(&u, &m).unwrap().iter().map(|p| p[0]).collect();
        x.sort_by(f64::total_cmp);
        let med = x[x.len() / 2];
        let q = m.quantile(0.5);
        // order-statistic standard error: sqrt(p(1-p)/n) / f(q)
        let se = (0.25f64 / 100_000.0).sqrt() / m.pdf(q);
        assert!((med - q).abs() < 3.0 * se, "{med} vs {q}");
    }

    #[test]
    fn exchangeable() {
        for family in [CopulaFamily::SymmetricLogistic, CopulaFamily::InvertedLogistic, CopulaFamily::Gaussian] {
            let spec = CopulaSpec::new(family, 0.2).unwrap();
            let u = simulate_copula(200_000, &spec, 11).unwrap();
            let a: Vec<f64> = u.iter().map(|p| p[0]).collect();
            let b: Vec<f64> = u.iter().map(|p| p[1]).collect();
            // P(U > p, V ≤ p) = P(U ≤ p, V > p) under exchangeability
            let p = 0.9;
            let n1 = a.iter().zip(&b).filter(|&(&x, &y)| x > p && y <= p).count() as f64;
            let n2 = a.iter().zip(&b).filter(|&(&x, &y)| x <= p && y > p).count() as f64;
            assert!((n1 - n2).abs() < 4.0 * (n1 + n2).sqrt(), "{family:?}: {n1} vs {n2}");
        }
    }

    #[test]
    fn rejects_bad_alpha() {
        assert!(CopulaSpec::new(CopulaFamily::Gaussian, 0.0).is_err());
        assert!(CopulaSpec::new(CopulaFamily::SymmetricLogistic, 1.5).is_err());
    }
}
