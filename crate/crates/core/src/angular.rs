//! Logistic-heteroscedastic multivariate EGPD.
//!
//! A point `x ∈ (0,∞)^d` is split into its sum-norm radius `r = Σ x_i` and the
//! log-ratios `v_j = log(x_j / x_d)`, `j < d`. The radius follows an EGPD and,
//! given `r`, `v = δ(r) Z` with `Z ~ N(0, C)` and `C` equicorrelated.
//! The joint density is
//!
//! ```text
//! f(x) = f_R(r) δ(r)^{-(d-1)} φ_C(v / δ(r)) · r / Π x_i
//! ```

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::egpd::EgpdParams;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::spline::DeltaFunction;

/// The radius is always the sum-norm; the density Jacobian depends on it.
pub fn sum_norm(x: &[f64]) -> f64 {
    x.iter().sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolarSample {
    pub r: f64,
    pub v: Vec<f64>,
}

fn check_positive(x: &[f64]) -> Result<()> {
    if x.len() < 2 {
        return Err(Error::domain(format!("need at least 2 coordinates, got {}", x.len())));
    }
    if let Some(bad) = x.iter().find(|&&xi| !(xi > 0.0 && xi.is_finite())) {
        return Err(Error::domain(format!("coordinates must be positive and finite, got {bad}")));
    }
    Ok(())
}

/// `(Σ x_i, log(x_j / x_d))`; the last coordinate is the reference.
pub fn to_polar(x: &[f64]) -> Result<PolarSample> {
    check_positive(x)?;
    let last = x[x.len() - 1].ln();
    Ok(PolarSample {
        r: sum_norm(x),
        v: x[..x.len() - 1].iter().map(|xi| xi.ln() - last).collect(),
    })
}

/// Inverse of [`to_polar`]: `x = r · softmax(v, 0)`.
pub fn from_polar(s: &PolarSample) -> Result<Vec<f64>> {
    if !(s.r > 0.0 && s.r.is_finite()) || s.v.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("polar sample needs a positive radius and finite log-ratios"));
    }
    Ok(polar_to_x(s.r, &s.v))
}

fn polar_to_x(r: f64, v: &[f64]) -> Vec<f64> {
    let top = v.iter().cloned().fold(0.0f64, f64::max);
    let mut x: Vec<f64> = v.iter().map(|vi| (vi - top).exp()).collect();
    x.push((-top).exp());
    let total: f64 = x.iter().sum();
    for xi in &mut x {
        *xi *= r / total;
    }
    x
}

/// `(1 - ρ) I + ρ 1 1ᵀ` of size `dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquicorrMatrix {
    dim: usize,
    rho: f64,
}

impl EquicorrMatrix {
    pub fn new(dim: usize, rho: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("equicorrelation dimension must be >= 1"));
        }
        if dim == 1 {
            return Ok(EquicorrMatrix { dim, rho: 0.0 });
        }
        let q = dim as f64;
        if !(rho < 1.0 && 1.0 + (q - 1.0) * rho > 0.0) {
            return Err(Error::domain(format!(
                "rho = {rho} does not give a positive definite {dim}x{dim} equicorrelation matrix"
            )));
        }
        Ok(EquicorrMatrix { dim, rho })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Always `0` when `dim = 1`.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Eigenvalue along `1`.
    fn big(&self) -> f64 {
        1.0 + (self.dim as f64 - 1.0) * self.rho
    }

    pub fn log_det(&self) -> f64 {
        (self.dim as f64 - 1.0) * (1.0 - self.rho).ln() + self.big().ln()
    }

    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let s: f64 = v.iter().sum();
        self.quad_form_from_sums(v.iter().map(|x| x * x).sum(), s * s)
    }

    /// `vᵀC⁻¹v` from `Σv²` and `(Σv)²`.
    pub fn quad_form_from_sums(&self, sum_sq: f64, sq_sum: f64) -> f64 {
        (sum_sq - self.rho / self.big() * sq_sum) / (1.0 - self.rho)
    }

    /// `C^{-1/2} v` with the symmetric square root.
    pub fn whiten(&self, v: &[f64]) -> Vec<f64> {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let a = (1.0 - self.rho).sqrt().recip();
        let b = self.big().sqrt().recip();
        v.iter().map(|x| a * (x - mean) + b * mean).collect()
    }

    pub fn matrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.dim, self.dim, |i, j| if i == j { 1.0 } else { self.rho })
    }

    /// Lower Cholesky factor.
    pub fn cholesky(&self) -> nalgebra::DMatrix<f64> {
        self.matrix()
            .cholesky()
            .expect("validated equicorrelation matrix is positive definite")
            .unpack()
    }

    /// `log φ_C(z)`.
    pub fn log_normal_density(&self, z: &[f64]) -> f64 {
        let q = self.dim as f64;
        -0.5 * q * (2.0 * std::f64::consts::PI).ln() - 0.5 * self.log_det() - 0.5 * self.quad_form(z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Delta {
    Constant { value: f64 },
    Spline(DeltaFunction),
}

impl Delta {
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            Delta::Constant { value } => *value,
            Delta::Spline(f) => f.delta(r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MegpdModel {
    pub d: usize,
    pub radial: EgpdParams,
    pub delta: Delta,
    pub corr: EquicorrMatrix,
}

impl MegpdModel {
    pub fn new(d: usize, radial: EgpdParams, delta: Delta, corr: EquicorrMatrix) -> Result<Self> {
        if d < 2 {
            return Err(Error::domain(format!("dimension must be >= 2, got {d}")));
        }
        if corr.dim() != d - 1 {
            return Err(Error::domain(format!(
                "correlation dimension {} does not match d - 1 = {}",
                corr.dim(),
                d - 1
            )));
        }
        if let Delta::Constant { value } = delta {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::domain(format!("delta must be positive, got {value}")));
            }
        }
        Ok(MegpdModel { d, radial, delta, corr })
    }
}

/// `log g(r, v)`, the joint log-density of the radius and the log-ratios.
pub fn polar_log_density(r: f64, v: &[f64], model: &MegpdModel) -> f64 {
    let delta = model.delta.eval(r);
    let z: Vec<f64> = v.iter().map(|x| x / delta).collect();
    model.radial.log_pdf(r) - v.len() as f64 * delta.ln() + model.corr.log_normal_density(&z)
}

pub fn megpd_log_pdf(x: &[f64], model: &MegpdModel) -> Result<f64> {
    if x.len() != model.d {
        return Err(Error::domain(format!("expected {} coordinates, got {}", model.d, x.len())));
    }
    let p = to_polar(x)?;
    let log_jac = p.r.ln() - x.iter().map(|xi| xi.ln()).sum::<f64>();
    Ok(polar_log_density(p.r, &p.v, model) + log_jac)
}

pub fn megpd_pdf(x: &[f64], model: &MegpdModel) -> Result<f64> {
    megpd_log_pdf(x, model).map(f64::exp)
}

fn draw(radial: &EgpdParams, chol: &nalgebra::DMatrix<f64>, delta: &impl Fn(f64) -> f64, rng: &mut Rng) -> Vec<f64> {
    let q = chol.nrows();
    let r = radial.sample(rng);
    let e: Vec<f64> = (0..q).map(|_| StandardNormal.sample(rng)).collect();
    let dl = delta(r);
    let v: Vec<f64> = (0..q)
        .map(|i| dl * (0..=i).map(|j| chol[(i, j)] * e[j]).sum::<f64>())
        .collect();
    polar_to_x(r, &v)
}

/// Simulation with an arbitrary positive `δ(·)`.
pub fn simulate_with_delta(
    n: usize,
    radial: &EgpdParams,
    corr: &EquicorrMatrix,
    delta: impl Fn(f64) -> f64,
    seed: u64,
) -> Vec<Vec<f64>> {
    let chol = corr.cholesky();
    let mut rng = rng::seeded(seed);
    (0..n).map(|_| draw(radial, &chol, &delta, &mut rng)).collect()
}

/// `n × d` draws: `r` from the radial law, `v = δ(r) L ε`, then [`from_polar`].
pub fn megpd_simulate(n: usize, model: &MegpdModel, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::domain("simulation size must be >= 1"));
    }
    Ok(simulate_with_delta(n, &model.radial, &model.corr, |r| model.delta.eval(r), seed))
}

/// Parallel variant: chunk `i` draws from [`rng::substream`]`(seed, i)`, so
/// the output does not depend on the thread count.
pub fn megpd_simulate_par(n: usize, model: &MegpdModel, seed: u64) -> Vec<Vec<f64>> {
    const CHUNK: usize = 1 << 14;
    let chol = model.corr.cholesky();
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = rng::substream(seed, c as u64);
            let len = CHUNK.min(n - c * CHUNK);
            let chol = &chol;
            (0..len)
                .map(|_| draw(&model.radial, chol, &|r| model.delta.eval(r), &mut rng))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// `1 / Σ (1/x_i)`.
pub fn risk_functional(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::domain("empty vector"));
    }
    if let Some(bad) = x.iter().find(|&&xi| !(xi > 0.0)) {
        return Err(Error::domain(format!("risk functional needs positive input, got {bad}")));
    }
    Ok(1.0 / x.iter().map(|xi| xi.recip()).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailSide {
    /// `χ^(X)`, joint exceedances of `X`.
    Upper,
    /// `χ^(Y)` with `Y = 1/X`, i.e. joint small values of `X`.
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiEstimate {
    pub p: f64,
    pub chi: f64,
    pub se: f64,
    pub joint_exceedances: usize,
    /// Too few expected exceedances; `se` has been widened.
    pub sparse: bool,
}

/// Expected marginal exceedances below which a `χ` estimate is flagged.
pub const MIN_EXCEEDANCES: f64 = 30.0;

/// Ranks `1..=n` of `x`, ties broken by position; descending when `reverse`.
fn ranks(x: &[f64], reverse: bool) -> Vec<u32> {
    let mut idx: Vec<u32> = (0..x.len() as u32).collect();
    if reverse {
        idx.sort_by(|&a, &b| x[b as usize].total_cmp(&x[a as usize]).then(a.cmp(&b)));
    } else {
        idx.sort_by(|&a, &b| x[a as usize].total_cmp(&x[b as usize]).then(a.cmp(&b)));
    }
    let mut out = vec![0u32; x.len()];
    for (rank, &i) in idx.iter().enumerate() {
        out[i as usize] = rank as u32 + 1;
    }
    out
}

/// Rank-based `χ(p)` curve for two columns.
///
/// Margins are `rank / (n + 1)`; `χ(p)` is the number of joint exceedances
/// of `p` divided by the mean number of marginal exceedances.
pub fn chi_from_columns(a: &[f64], b: &[f64], p_grid: &[f64], side: TailSide) -> Result<Vec<ChiEstimate>> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::domain("chi needs two columns of equal length >= 2"));
    }
    if let Some(p) = p_grid.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::domain(format!("chi level must lie in (0, 1), got {p}")));
    }
    let reverse = side == TailSide::Lower;
    let ra = ranks(a, reverse);
    let rb = ranks(b, reverse);
    let n = a.len();
    let nf = n as f64;
    Ok(p_grid
        .iter()
        .map(|&p| {
            let cut = p * (nf + 1.0);
            let ea = ra.iter().filter(|&&x| x as f64 > cut).count();
            let eb = rb.iter().filter(|&&x| x as f64 > cut).count();
            let joint = ra
                .iter()
                .zip(&rb)
                .filter(|&(&x, &y)| x as f64 > cut && y as f64 > cut)
                .count();
            let marginal = 0.5 * (ea + eb) as f64;
            let chi = if marginal > 0.0 { joint as f64 / marginal } else { 0.0 };
            let pi = joint as f64 / nf;
            let mut se = (pi * (1.0 - pi) / nf).sqrt() / (1.0 - p);
            let sparse = nf * (1.0 - p) < MIN_EXCEEDANCES;
            if sparse {
                log::warn!("chi at p = {p}: only {:.1} expected exceedances in {n} points", nf * (1.0 - p));
                se = se.max(((joint + 1) as f64).sqrt() / marginal.max(1.0));
            }
            ChiEstimate {
                p,
                chi,
                se,
                joint_exceedances: joint,
                sparse,
            }
        })
        .collect())
}

fn column(x: &[Vec<f64>], j: usize) -> Result<Vec<f64>> {
    x.iter()
        .map(|row| {
            row.get(j)
                .copied()
                .ok_or_else(|| Error::domain(format!("column {j} out of range")))
        })
        .collect()
}

/// Empirical `χ(p)` for columns `pair` of a sample.
pub fn chi_coefficient(x: &[Vec<f64>], p: f64, side: TailSide, pair: (usize, usize)) -> Result<ChiEstimate> {
    chi_curve(x, &[p], side, pair).map(|v| v[0])
}

pub fn chi_curve(x: &[Vec<f64>], p_grid: &[f64], side: TailSide, pair: (usize, usize)) -> Result<Vec<ChiEstimate>> {
    chi_from_columns(&column(x, pair.0)?, &column(x, pair.1)?, p_grid, side)
}

/// Monte Carlo `χ(p)` of a fitted model from `mc_size` simulated points.
pub fn chi_model(
    model: &MegpdModel,
    p_grid: &[f64],
    side: TailSide,
    pair: (usize, usize),
    mc_size: usize,
    seed: u64,
) -> Result<Vec<ChiEstimate>> {
    if pair.0 >= model.d || pair.1 >= model.d {
        return Err(Error::domain("pair index out of range"));
    }
    let sim = megpd_simulate_par(mc_size, model, seed);
    chi_curve(&sim, p_grid, side, pair)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(d: usize, rho: f64, delta: f64) -> MegpdModel {
        MegpdModel::new(
            d,
            EgpdParams::uniform(2.0, 0.2).unwrap(),
            Delta::Constant { value: delta },
            EquicorrMatrix::new(d - 1, rho).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn polar_examples() {
        let p = to_polar(&[1.0, 1.0]).unwrap();
        assert_eq!((p.r, p.v.clone()), (2.0, vec![0.0]));
        let e = std::f64::consts::E;
        let p = to_polar(&[e, 1.0]).unwrap();
        assert!((p.r - (e + 1.0)).abs() < 1e-15 && (p.v[0] - 1.0).abs() < 1e-15);
        let p = to_polar(&[2.0, 1.0, 1.0]).unwrap();
        assert_eq!(p.r, 4.0);
        assert!((p.v[0] - 2f64.ln()).abs() < 1e-15 && p.v[1] == 0.0);
        assert!(to_polar(&[1.0, 0.0]).is_err());

        let x = from_polar(&PolarSample { r: 2.0, v: vec![0.0] }).unwrap();
        assert_eq!(x, vec![1.0, 1.0]);
        let x = from_polar(&PolarSample { r: 1.0, v: vec![0.0, 0.0] }).unwrap();
        assert!(x.iter().all(|xi| (xi - 1.0 / 3.0).abs() < 1e-15));
        let x = from_polar(&PolarSample { r: e + 1.0, v: vec![1.0] }).unwrap();
        assert!((x[0] - e).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
        // no overflow for huge log-ratios
        let x = from_polar(&PolarSample { r: 1.0, v: vec![800.0, -800.0] }).unwrap();
        assert!(x.iter().all(|xi| xi.is_finite()) && (x[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn equicorrelation_algebra() {
        for (q, rho) in [(1usize, 0.4), (2, 0.67), (3, -0.3), (4, 0.1)] {
            let c = EquicorrMatrix::new(q, rho).unwrap();
            let m = c.matrix();
            let ld = m.clone().cholesky().unwrap().l().diagonal().iter().map(|d| 2.0 * d.ln()).sum::<f64>();
            assert!((ld - c.log_det()).abs() < 1e-12);
            let v: Vec<f64> = (0..q).map(|i| 0.3 * i as f64 - 0.5).collect();
            let vv = nalgebra::DVector::from_column_slice(&v);
            let direct = (vv.transpose() * m.clone().try_inverse().unwrap() * &vv)[(0, 0)];
            assert!((direct - c.quad_form(&v)).abs() < 1e-12);
            let w = c.whiten(&v);
            assert!((w.iter().map(|x| x * x).sum::<f64>() - direct).abs() < 1e-12);
        }
        assert!(EquicorrMatrix::new(3, -0.6).is_err());
        assert!(EquicorrMatrix::new(2, 1.0).is_err());
    }

    #[test]
    fn density_examples() {
        let m = model(2, 0.0, 0.7);
        let f = megpd_pdf(&[1.0, 1.0], &m).unwrap();
        let radial = m.radial.pdf(2.0);
        let mode = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * 0.7);
        assert!((f - radial * mode * 2.0).abs() < 1e-14 * f);
        assert!(megpd_pdf(&[1.0, -1.0], &m).is_err());
        assert!(megpd_pdf(&[1.0, 1.0, 1.0], &m).is_err());
    }

    #[test]
    fn simulation_matches_construction() {
        let m = model(3, 0.5, 0.4);
        let x = megpd_simulate(20_000, &m, 9).unwrap();
        assert_eq!(x, megpd_simulate(20_000, &m, 9).unwrap());
        // E(U_i) = 1/d
        for j in 0..3 {
            let mean = x.iter().map(|row| row[j] / sum_norm(row)).sum::<f64>() / x.len() as f64;
            assert!((mean - 1.0 / 3.0).abs() < 0.01, "{mean}");
        }
        // correlation of v equals rho
        let v: Vec<PolarSample> = x.iter().map(|row| to_polar(row).unwrap()).collect();
        let n = v.len() as f64;
        let (mut s11, mut s22, mut s12) = (0.0, 0.0, 0.0);
        for p in &v {
            s11 += p.v[0] * p.v[0];
            s22 += p.v[1] * p.v[1];
            s12 += p.v[0] * p.v[1];
        }
        let corr = s12 / (s11 * s22).sqrt();
        assert!((corr - 0.5).abs() < 0.03, "{corr}");
        assert!((s11 / n - 0.16).abs() < 0.01);
    }

    #[test]
    fn parallel_simulation_is_deterministic() {
        let m = model(2, 0.0, 0.5);
        let a = megpd_simulate_par(40_000, &m, 1);
        let b = megpd_simulate_par(40_000, &m, 1);
        assert_eq!(a, b);
        assert_eq!(a.len(), 40_000);
    }

    #[test]
    fn risk_functional_examples() {
        assert_eq!(risk_functional(&[1.0, 1.0]).unwrap(), 0.5);
        assert!((risk_functional(&[3.0, 6.0]).unwrap() - 2.0).abs() < 1e-15);
        assert!((risk_functional(&[2.0, 2.0, 2.0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(risk_functional(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn chi_limits() {
        let a: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        for p in [0.5, 0.9, 0.95, 0.99] {
            for side in [TailSide::Upper, TailSide::Lower] {
                let c = chi_from_columns(&a, &a, &[p], side).unwrap()[0];
                assert_eq!(c.chi, 1.0);
            }
        }
        // perfectly discordant columns never exceed jointly
        let b: Vec<f64> = a.iter().map(|x| -x).collect();
        assert_eq!(chi_from_columns(&a, &b, &[0.9], TailSide::Upper).unwrap()[0].chi, 0.0);
        assert!(chi_from_columns(&a, &a, &[1.0], TailSide::Upper).is_err());
        let c = chi_from_columns(&a, &a, &[0.999], TailSide::Upper).unwrap()[0];
        assert!(c.sparse);
    }

    #[test]
    fn chi_under_independence_is_one_minus_p() {
        use rand::Rng as _;
        let mut rng = rng::seeded(4);
        let a: Vec<f64> = (0..200_000).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..200_000).map(|_| rng.random()).collect();
        let c = chi_from_columns(&a, &b, &[0.9], TailSide::Upper).unwrap()[0];
        assert!((c.chi - 0.1).abs() < 3.0 * c.se + 1e-3, "{c:?}");
    }
}
