//! Angular step: penalized cubic regression spline for `log δ(r)` and the
//! profile search over the equicorrelation `ρ`.
//!
//! Given `ρ`, each observation contributes
//! `-(q h_i + ½ log det C + ½ v_iᵀC⁻¹v_i e^{-2h_i})` with `q = d-1` and
//! `h_i = log δ(r_i)`. The spline is the "cr" basis parametrized by its
//! values at the knots, with an integrated squared second derivative
//! penalty. The basis sums to one, so the intercept is identified by a
//! sum-to-zero constraint over the data, absorbed before fitting.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::angular::EquicorrMatrix;
use crate::error::{Error, Result};
use crate::optim::golden_section_max;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Knots {
    knots: Vec<f64>,
}

/// Natural cubic regression spline basis on `K` knots.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "Knots", into = "Knots")]
pub struct SplineBasis {
    knots: Vec<f64>,
    /// `K × K`; row `j` maps knot values to the second derivative at knot `j`.
    f: DMatrix<f64>,
    /// `K × K` penalty on the knot values.
    s: DMatrix<f64>,
}

impl PartialEq for SplineBasis {
    fn eq(&self, other: &Self) -> bool {
        self.knots == other.knots
    }
}

impl From<SplineBasis> for Knots {
    fn from(b: SplineBasis) -> Self {
        Knots { knots: b.knots }
    }
}

impl TryFrom<Knots> for SplineBasis {
    type Error = Error;

    fn try_from(k: Knots) -> Result<Self> {
        SplineBasis::from_knots(k.knots)
    }
}

impl SplineBasis {
    pub fn from_knots(knots: Vec<f64>) -> Result<Self> {
        let k = knots.len();
        if k < 3 {
            return Err(Error::domain(format!("spline basis needs at least 3 knots, got {k}")));
        }
        if knots.iter().any(|x| !x.is_finite()) || knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("spline knots must be finite and strictly increasing"));
        }
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let mut d = DMatrix::zeros(k - 2, k);
        let mut b = DMatrix::zeros(k - 2, k - 2);
        for i in 0..k - 2 {
            d[(i, i)] = 1.0 / h[i];
            d[(i, i + 1)] = -1.0 / h[i] - 1.0 / h[i + 1];
            d[(i, i + 2)] = 1.0 / h[i + 1];
            b[(i, i)] = (h[i] + h[i + 1]) / 3.0;
            if i + 1 < k - 2 {
                b[(i, i + 1)] = h[i + 1] / 6.0;
                b[(i + 1, i)] = h[i + 1] / 6.0;
            }
        }
        let chol = b.cholesky().expect("tridiagonal knot matrix is positive definite");
        let binv_d = chol.solve(&d);
        let s = d.transpose() * &binv_d;
        let s = (&s + s.transpose()) * 0.5;
        let mut f = DMatrix::zeros(k, k);
        f.view_mut((1, 0), (k - 2, k)).copy_from(&binv_d);
        Ok(SplineBasis { knots, f, s })
    }

    pub fn size(&self) -> usize {
        self.knots.len()
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// `(K+1) × (K+1)` penalty with a zero intercept row and column.
    pub fn penalty(&self) -> DMatrix<f64> {
        let k = self.size();
        let mut p = DMatrix::zeros(k + 1, k + 1);
        p.view_mut((1, 1), (k, k)).copy_from(&self.s);
        p
    }

    /// Basis values at `r`, which is clamped to the knot range.
    pub fn eval_into(&self, r: f64, out: &mut [f64]) {
        let k = self.size();
        let lo = self.knots[0];
        let hi = self.knots[k - 1];
        let x = if r.is_nan() { lo } else { r.clamp(lo, hi) };
        let j = match self.knots.partition_point(|&t| t <= x) {
            0 => 0,
            p => (p - 1).min(k - 2),
        };
        let (a, b) = (self.knots[j], self.knots[j + 1]);
        let h = b - a;
        let am = (b - x) / h;
        let ap = (x - a) / h;
        let cm = ((b - x).powi(3) / h - h * (b - x)) / 6.0;
        let cp = ((x - a).powi(3) / h - h * (x - a)) / 6.0;
        for (i, o) in out.iter_mut().enumerate().take(k) {
            *o = cm * self.f[(j, i)] + cp * self.f[(j + 1, i)];
        }
        out[j] += am;
        out[j + 1] += ap;
    }

    pub fn eval(&self, r: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.size()];
        self.eval_into(r, &mut out);
        out
    }

    /// `h(r; γ) = γ_0 + Σ_j γ_j s_j(r)`.
    pub fn h(&self, r: f64, gamma: &[f64]) -> f64 {
        let b = self.eval(r);
        gamma[0] + b.iter().zip(&gamma[1..]).map(|(x, g)| x * g).sum::<f64>()
    }
}

/// Type-7 sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let pos = p * (n - 1) as f64;
    let i = pos.floor() as usize;
    if i + 1 >= n {
        return sorted[n - 1];
    }
    let t = pos - i as f64;
    sorted[i] + t * (sorted[i + 1] - sorted[i])
}

/// Knots at `K` equally spaced sample quantiles of `r`, from min to max.
pub fn build_basis(r: &[f64], k: usize) -> Result<SplineBasis> {
    if k < 3 {
        return Err(Error::domain(format!("basis size K must be >= 3, got {k}")));
    }
    if r.len() <= k {
        return Err(Error::InsufficientData(format!(
            "spline basis of size {k} needs more than {k} radii, got {}",
            r.len()
        )));
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("radii must be finite"));
    }
    let mut sorted = r.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut knots: Vec<f64> = (0..k)
        .map(|j| quantile_sorted(&sorted, j as f64 / (k - 1) as f64))
        .collect();
    knots.dedup_by(|a, b| *a <= *b);
    if knots.len() < k {
        log::warn!(
            "tied radii collapsed {} of {k} spline knots; using K = {}",
            k - knots.len(),
            knots.len()
        );
    }
    SplineBasis::from_knots(knots)
}

/// `log δ(r) = h(r; γ)` with `γ = (γ_0, γ_1..γ_K)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaFunction {
    pub basis: SplineBasis,
    pub gamma: Vec<f64>,
    pub lambda: f64,
}

impl DeltaFunction {
    pub fn new(basis: SplineBasis, gamma: Vec<f64>, lambda: f64) -> Result<Self> {
        if gamma.len() != basis.size() + 1 {
            return Err(Error::domain(format!(
                "expected {} spline coefficients, got {}",
                basis.size() + 1,
                gamma.len()
            )));
        }
        if gamma.iter().any(|g| !g.is_finite()) || !(lambda >= 0.0) {
            return Err(Error::domain("spline coefficients must be finite and lambda >= 0"));
        }
        Ok(DeltaFunction { basis, gamma, lambda })
    }

    pub fn log_delta(&self, r: f64) -> f64 {
        self.basis.h(r, &self.gamma)
    }

    pub fn delta(&self, r: f64) -> f64 {
        self.log_delta(r).exp()
    }
}

/// `v_iᵀ C⁻¹ v_i` for every row.
fn quad_forms(v: &[Vec<f64>], c: &EquicorrMatrix) -> Vec<f64> {
    v.iter().map(|row| c.quad_form(row)).collect()
}

/// Sufficient statistics `(Σv², (Σv)²)` per row, for cheap re-evaluation at new `ρ`.
fn row_sums(v: &[Vec<f64>]) -> Vec<(f64, f64)> {
    v.iter()
        .map(|row| {
            let s: f64 = row.iter().sum();
            (row.iter().map(|x| x * x).sum(), s * s)
        })
        .collect()
}

fn check_inputs(v: &[Vec<f64>], r: &[f64]) -> Result<usize> {
    if v.is_empty() || v.len() != r.len() {
        return Err(Error::domain(format!(
            "need one log-ratio row per radius, got {} rows and {} radii",
            v.len(),
            r.len()
        )));
    }
    let q = v[0].len();
    if q == 0 || v.iter().any(|row| row.len() != q) {
        return Err(Error::domain("log-ratio rows must share a positive length"));
    }
    if v.iter().flatten().any(|x| !x.is_finite()) || r.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("log-ratios and radii must be finite"));
    }
    Ok(q)
}

/// `Σ_i -[q h_i + ½ log det C + ½ w_i e^{-2h_i}]` from precomputed quadratic forms.
fn loglik_from(h: &[f64], w: &[f64], q: usize, log_det: f64) -> f64 {
    let qf = q as f64;
    h.iter()
        .zip(w)
        .map(|(&hi, &wi)| -(qf * hi + 0.5 * log_det + 0.5 * wi * (-2.0 * hi).exp()))
        .sum()
}

fn penalty_value(basis: &SplineBasis, gamma: &[f64]) -> f64 {
    let b = DVector::from_column_slice(&gamma[1..]);
    (b.transpose() * &basis.s * &b)[(0, 0)]
}

/// Penalized log-likelihood, constants dropped:
/// `-Σ_i [q h_i + ½ log det C + ½ v_iᵀC⁻¹v_i e^{-2h_i}] - λ γᵀPγ`.
pub fn penalized_loglik(
    v: &[Vec<f64>],
    r: &[f64],
    gamma: &[f64],
    rho: f64,
    lambda: f64,
    basis: &SplineBasis,
) -> Result<f64> {
    let q = check_inputs(v, r)?;
    if gamma.len() != basis.size() + 1 {
        return Err(Error::domain("coefficient length does not match the basis"));
    }
    let c = EquicorrMatrix::new(q, rho)?;
    let w = quad_forms(v, &c);
    let h: Vec<f64> = r.iter().map(|&ri| basis.h(ri, gamma)).collect();
    Ok(loglik_from(&h, &w, q, c.log_det()) - lambda * penalty_value(basis, gamma))
}

/// Design in constrained coordinates `θ = (γ_0, ϑ)` with `β = Zϑ` and
/// `Σ_i s(r_i)ᵀβ = 0`.
struct Design {
    x: DMatrix<f64>,
    xtx: DMatrix<f64>,
    z: DMatrix<f64>,
    s: DMatrix<f64>,
    /// `(rank, Σ log positive eigenvalues)` of `s`.
    s_logdet: (usize, f64),
}

impl Design {
    fn new(r: &[f64], basis: &SplineBasis) -> Self {
        let n = r.len();
        let k = basis.size();
        let mut bm = DMatrix::zeros(n, k);
        let mut row = vec![0.0; k];
        for (i, &ri) in r.iter().enumerate() {
            basis.eval_into(ri, &mut row);
            for j in 0..k {
                bm[(i, j)] = row[j];
            }
        }
        // Householder reflector sending the constraint direction to e_1;
        // its remaining columns span the constrained subspace.
        let c: DVector<f64> = bm.row_sum().transpose();
        let mut u = c.normalize();
        u[0] += if u[0] >= 0.0 { 1.0 } else { -1.0 };
        let u = u.normalize();
        let house = DMatrix::identity(k, k) - 2.0 * &u * u.transpose();
        let z = house.columns(1, k - 1).into_owned();

        let bz = &bm * &z;
        let mut x = DMatrix::zeros(n, k);
        x.column_mut(0).fill(1.0);
        x.view_mut((0, 1), (n, k - 1)).copy_from(&bz);
        let xtx = x.transpose() * &x;

        let sz = z.transpose() * &basis.s * &z;
        let sz = (&sz + sz.transpose()) * 0.5;
        let mut s = DMatrix::zeros(k, k);
        s.view_mut((1, 1), (k - 1, k - 1)).copy_from(&sz);

        let eig = SymmetricEigen::new(s.clone()).eigenvalues;
        let top = eig.iter().cloned().fold(0.0f64, f64::max);
        let pos: Vec<f64> = eig.iter().cloned().filter(|&e| e > top * 1e-9).collect();
        let s_logdet = (pos.len(), pos.iter().map(|e| e.ln()).sum());
        Design { x, xtx, z, s, s_logdet }
    }

    fn h(&self, theta: &DVector<f64>) -> Vec<f64> {
        (&self.x * theta).iter().cloned().collect()
    }

    fn gamma(&self, theta: &DVector<f64>) -> Vec<f64> {
        let beta = &self.z * theta.rows(1, theta.len() - 1);
        std::iter::once(theta[0]).chain(beta.iter().cloned()).collect()
    }

    #[cfg(test)]
    fn theta(&self, gamma: &[f64]) -> DVector<f64> {
        let beta = DVector::from_column_slice(&gamma[1..]);
        let th = self.z.transpose() * beta;
        DVector::from_iterator(gamma.len() - 1, std::iter::once(gamma[0]).chain(th.iter().cloned()))
    }

    fn penlik(&self, theta: &DVector<f64>, w: &[f64], q: usize, log_det: f64, lambda: f64) -> f64 {
        let pen = (theta.transpose() * &self.s * theta)[(0, 0)];
        loglik_from(&self.h(theta), w, q, log_det) - lambda * pen
    }

    /// Negative Hessian of the penalized log-likelihood.
    fn observed_information(&self, theta: &DVector<f64>, w: &[f64], lambda: f64) -> DMatrix<f64> {
        let h = self.h(theta);
        let k = self.x.ncols();
        let mut info = DMatrix::zeros(k, k);
        for (i, (&hi, &wi)) in h.iter().zip(w).enumerate() {
            let a = 2.0 * wi * (-2.0 * hi).exp();
            let xi = self.x.row(i);
            info.ger(a, &xi.transpose(), &xi.transpose(), 1.0);
        }
        info + 2.0 * lambda * &self.s
    }
}

#[derive(Debug, Clone)]
pub struct GammaFit {
    pub gamma: Vec<f64>,
    pub penlik: f64,
    pub iterations: usize,
    pub converged: bool,
}

const MAX_SCORING: usize = 200;

fn scoring(
    design: &Design,
    w: &[f64],
    q: usize,
    log_det: f64,
    lambda: f64,
    start: Option<DVector<f64>>,
) -> (DVector<f64>, f64, usize, bool) {
    let k = design.x.ncols();
    let qf = q as f64;
    let mut theta = start.unwrap_or_else(|| {
        let mean = w.iter().sum::<f64>() / (w.len() as f64 * qf);
        let mut t = DVector::zeros(k);
        t[0] = 0.5 * mean.max(1e-300).ln();
        t
    });
    let mut pl = design.penlik(&theta, w, q, log_det, lambda);
    let info = 2.0 * qf * &design.xtx + 2.0 * lambda * &design.s;
    let chol = info.cholesky().expect("Fisher information is positive definite");
    for it in 1..=MAX_SCORING {
        let h = design.h(&theta);
        let resid = DVector::from_iterator(
            h.len(),
            h.iter().zip(w).map(|(&hi, &wi)| -qf + wi * (-2.0 * hi).exp()),
        );
        let grad = design.x.transpose() * resid - 2.0 * lambda * (&design.s * &theta);
        let step = chol.solve(&grad);
        let mut t = 1.0;
        loop {
            let cand = &theta + t * &step;
            let pc = design.penlik(&cand, w, q, log_det, lambda);
            if pc >= pl || t < 1e-10 {
                let moved = (t * &step).amax();
                if pc >= pl {
                    theta = cand;
                    pl = pc;
                }
                if moved < 1e-8 {
                    return (theta, pl, it, true);
                }
                break;
            }
            t *= 0.5;
        }
    }
    (theta, pl, MAX_SCORING, false)
}

fn gamma_inputs(v: &[Vec<f64>], r: &[f64], rho: f64) -> Result<(usize, Vec<f64>, f64)> {
    let q = check_inputs(v, r)?;
    let c = EquicorrMatrix::new(q, rho)?;
    let w = quad_forms(v, &c);
    if w.iter().all(|&x| x == 0.0) {
        return Err(Error::DegenerateLogRatios);
    }
    Ok((q, w, c.log_det()))
}

/// Maximizes the penalized log-likelihood over `γ` by Fisher scoring on the
/// whitened log-ratios `C^{-1/2} v_i`.
pub fn fit_gamma(v: &[Vec<f64>], r: &[f64], rho: f64, lambda: f64, basis: &SplineBasis) -> Result<GammaFit> {
    let (q, w, log_det) = gamma_inputs(v, r, rho)?;
    let design = Design::new(r, basis);
    let (theta, penlik, iterations, converged) = scoring(&design, &w, q, log_det, lambda, None);
    if !converged {
        log::warn!("spline fit did not converge in {MAX_SCORING} iterations (lambda = {lambda})");
    }
    Ok(GammaFit {
        gamma: design.gamma(&theta),
        penlik,
        iterations,
        converged,
    })
}

/// `n` log-spaced values from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

pub fn default_lambda_grid() -> Vec<f64> {
    log_grid(1e-6, 1e6, 30)
}

#[derive(Debug, Clone)]
pub struct LambdaSelection {
    pub lambda: f64,
    /// `(λ, criterion)` over the grid.
    pub criterion: Vec<(f64, f64)>,
    pub flat: bool,
    pub fit: GammaFit,
}

/// A criterion whose range over the grid is below this is treated as flat.
pub const FLAT_CRITERION: f64 = 1e-2;

/// Laplace-approximate restricted criterion
/// `-pl(γ̂_λ) + ½ log det H_λ - ½ log det₊(λP)`, minimized over the grid.
pub fn select_lambda(
    v: &[Vec<f64>],
    r: &[f64],
    rho: f64,
    basis: &SplineBasis,
    grid: &[f64],
) -> Result<LambdaSelection> {
    if grid.is_empty() || grid.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::domain("lambda grid must be non-empty and positive"));
    }
    let (q, w, log_det) = gamma_inputs(v, r, rho)?;
    let design = Design::new(r, basis);
    let (rank, s_logdet) = design.s_logdet;

    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut warm: Option<DVector<f64>> = None;
    let mut rows = Vec::with_capacity(sorted.len());
    let mut fits = Vec::with_capacity(sorted.len());
    for &lambda in &sorted {
        let (theta, pl, iterations, converged) = scoring(&design, &w, q, log_det, lambda, warm.clone());
        let info = design.observed_information(&theta, &w, lambda);
        let logdet_h = match info.clone().cholesky() {
            Some(ch) => 2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
            None => f64::INFINITY,
        };
        let crit = -pl + 0.5 * logdet_h - 0.5 * (rank as f64 * lambda.ln() + s_logdet);
        rows.push((lambda, crit));
        fits.push(GammaFit {
            gamma: design.gamma(&theta),
            penlik: pl,
            iterations,
            converged,
        });
        warm = Some(theta);
    }

    let min = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let max = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let flat = max - min < FLAT_CRITERION;
    let pick = if flat {
        log::warn!("smoothing criterion is flat over the lambda grid; taking the smallest near-optimal lambda");
        rows.iter().position(|r| r.1 <= min + FLAT_CRITERION).unwrap()
    } else {
        rows.iter().position(|r| r.1 == min).unwrap()
    };
    Ok(LambdaSelection {
        lambda: rows[pick].0,
        criterion: rows,
        flat,
        fit: fits.swap_remove(pick),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoTraceRow {
    pub iteration: usize,
    pub rho: f64,
    pub lambda: f64,
    /// Unpenalized log-likelihood at the new `ρ` and current `γ`.
    pub loglik: f64,
    pub penlik: f64,
}

#[derive(Debug, Clone)]
pub struct AngularFit {
    pub delta: DeltaFunction,
    /// `None` when `d = 2`.
    pub rho: Option<f64>,
    pub loglik: f64,
    pub penlik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub rho_trace: Vec<RhoTraceRow>,
}

#[derive(Debug, Clone)]
pub struct AngularConfig {
    /// Starting `ρ`; `None` uses the mean pairwise correlation of the log-ratios.
    pub rho0: Option<f64>,
    pub eps: f64,
    pub max_outer: usize,
    pub lambda_grid: Vec<f64>,
}

impl Default for AngularConfig {
    fn default() -> Self {
        AngularConfig {
            rho0: None,
            eps: 1e-4,
            max_outer: 50,
            lambda_grid: default_lambda_grid(),
        }
    }
}

/// Validity interval of the equicorrelation parameter, shrunk by `1e-3`.
pub fn rho_bounds(q: usize) -> (f64, f64) {
    let lo = if q > 1 { -1.0 / (q as f64 - 1.0) } else { -1.0 };
    (lo + 1e-3, 1.0 - 1e-3)
}

/// Mean pairwise sample correlation of the log-ratio columns. Scaling rows
/// by `δ(r_i)` leaves the population correlation at `ρ`.
pub fn moment_rho(v: &[Vec<f64>]) -> f64 {
    let q = v[0].len();
    if q < 2 {
        return 0.0;
    }
    let mut cross = DMatrix::<f64>::zeros(q, q);
    for row in v {
        let x = DVector::from_column_slice(row);
        cross.ger(1.0, &x, &x, 1.0);
    }
    let mut total = 0.0;
    for i in 0..q {
        for j in i + 1..q {
            total += cross[(i, j)] / (cross[(i, i)] * cross[(j, j)]).sqrt();
        }
    }
    let r = total / (q * (q - 1) / 2) as f64;
    if r.is_finite() {
        r
    } else {
        0.0
    }
}

/// Alternates `(γ, λ)` fits on whitened log-ratios with a golden-section
/// profile of the unpenalized log-likelihood over `ρ`, until successive `ρ`
/// differ by less than `eps`.
pub fn fit_angular(v: &[Vec<f64>], r: &[f64], basis: &SplineBasis, cfg: &AngularConfig) -> Result<AngularFit> {
    let q = check_inputs(v, r)?;
    let sums = row_sums(v);
    let (lo, hi) = rho_bounds(q);
    let mut rho = if q > 1 {
        cfg.rho0.unwrap_or_else(|| moment_rho(v)).clamp(lo, hi)
    } else {
        0.0
    };

    let profile = |rho: f64, h: &[f64]| -> f64 {
        let c = EquicorrMatrix::new(q, rho).expect("rho inside the validity interval");
        let w: Vec<f64> = sums.iter().map(|&(ss, s2)| c.quad_form_from_sums(ss, s2)).collect();
        loglik_from(h, &w, q, c.log_det())
    };

    let mut trace: Vec<RhoTraceRow> = Vec::new();
    let mut best: Option<(f64, DeltaFunction, f64, f64)> = None;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=cfg.max_outer.max(1) {
        iterations = it;
        let sel = select_lambda(v, r, rho, basis, &cfg.lambda_grid)?;
        let delta = DeltaFunction::new(basis.clone(), sel.fit.gamma.clone(), sel.lambda)?;
        let h: Vec<f64> = r.iter().map(|&ri| delta.log_delta(ri)).collect();
        let pen = sel.lambda * penalty_value(basis, &delta.gamma);
        if q == 1 {
            let ll = profile(0.0, &h);
            best = Some((0.0, delta, ll, ll - pen));
            converged = true;
            break;
        }
        let (new_rho, ll) = golden_section_max(|x| profile(x, &h), lo, hi, 1e-7);
        let penlik = ll - pen;
        trace.push(RhoTraceRow {
            iteration: it,
            rho: new_rho,
            lambda: sel.lambda,
            loglik: ll,
            penlik,
        });
        if best.as_ref().is_none_or(|b| penlik >= b.3) {
            best = Some((new_rho, delta.clone(), ll, penlik));
        }
        let done = (new_rho - rho).abs() < cfg.eps;
        rho = new_rho;
        if done {
            converged = true;
            best = Some((new_rho, delta, ll, penlik));
            break;
        }
    }
    if !converged {
        log::warn!("rho profiling did not settle in {} iterations", cfg.max_outer);
    }
    let (rho, delta, loglik, penlik) = best.expect("at least one outer iteration");
    Ok(AngularFit {
        delta,
        rho: (q > 1).then_some(rho),
        loglik,
        penlik,
        iterations,
        converged,
        rho_trace: trace,
    })
}
