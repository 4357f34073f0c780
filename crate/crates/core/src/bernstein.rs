//! Bernstein polynomial estimate of the transfer density.
//!
//! `b̂(u) = Σ_{k=1}^m ω_k β_{k, m-k+1}(u)` where `β_{a,b}` is the Beta(a, b)
//! density and `ω_k` is the empirical mass of `((k-1)/m, k/m]`. Since
//! `β_{k, m-k+1}(u) = m · P(Bin(m-1, u) = k-1)`, the density and the cdf are
//! both binomial mixtures and are evaluated by walking outward from the
//! binomial mode.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transfer::UnitDensity;

/// What the endpoint-positivity step did to the raw weights.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EndpointCorrection {
    pub left: bool,
    pub right: bool,
    /// Neither rule found a donor weight above `1/m`; mass was taken from
    /// the largest weight instead.
    pub fallback: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BernsteinWeights {
    m: usize,
    weights: Vec<f64>,
}

/// Degree-`m` Bernstein density with weights `ω_1..ω_m`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "BernsteinWeights", into = "BernsteinWeights")]
pub struct BernsteinDensity {
    weights: Vec<f64>,
    /// `W_j = ω_1 + … + ω_j`, `j = 0..=m`.
    lower: Vec<f64>,
    /// `1 - W_j` summed from the top.
    upper: Vec<f64>,
    /// `ln j!`, `j = 0..=m`.
    ln_fact: Vec<f64>,
}

impl PartialEq for BernsteinDensity {
    fn eq(&self, other: &Self) -> bool {
        self.weights == other.weights
    }
}

impl From<BernsteinDensity> for BernsteinWeights {
    fn from(b: BernsteinDensity) -> Self {
        BernsteinWeights {
            m: b.weights.len(),
            weights: b.weights,
        }
    }
}

impl TryFrom<BernsteinWeights> for BernsteinDensity {
    type Error = Error;

    fn try_from(w: BernsteinWeights) -> Result<Self> {
        if w.weights.len() != w.m {
            return Err(Error::ModelFormat(format!(
                "Bernstein degree {} does not match {} weights",
                w.m,
                w.weights.len()
            )));
        }
        BernsteinDensity::from_weights(w.weights)
    }
}

impl BernsteinDensity {
    /// Builds a density from explicit weights, which must be non-negative
    /// and sum to one within `1e-12`.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let m = weights.len();
        if m < 2 {
            return Err(Error::domain(format!("Bernstein degree must be >= 2, got {m}")));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::domain("Bernstein weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("Bernstein weights sum to {total}, not 1")));
        }
        let mut lower = Vec::with_capacity(m + 1);
        let mut acc = 0.0;
        lower.push(0.0);
        for w in &weights {
            acc += w;
            lower.push(acc.min(1.0));
        }
        let mut upper = vec![0.0; m + 1];
        let mut acc = 0.0;
        for j in (0..m).rev() {
            acc += weights[j];
            upper[j] = acc.min(1.0);
        }
        let mut ln_fact = Vec::with_capacity(m + 1);
        let mut acc = 0.0;
        ln_fact.push(0.0);
        for j in 1..=m {
            acc += (j as f64).ln();
            ln_fact.push(acc);
        }
        Ok(BernsteinDensity {
            weights,
            lower,
            upper,
            ln_fact,
        })
    }

    /// Equal weights `1/m`; the resulting density is identically one.
    pub fn uniform(m: usize) -> Result<Self> {
        Self::from_weights(vec![1.0 / m as f64; m])
    }

    pub fn degree(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Calls `f(j, P(Bin(n, u) = j))` for every non-negligible `j`.
    ///
    /// `c` is `1 - u`, passed separately so upper-tail callers keep precision.
    #[inline]
    fn binomial_terms(&self, n: usize, u: f64, c: f64, mut f: impl FnMut(usize, f64)) {
        if u <= 0.0 {
            f(0, 1.0);
            return;
        }
        if c <= 0.0 {
            f(n, 1.0);
            return;
        }
        let (lu, lc) = (u.ln(), c.ln());
        let mode = (((n + 1) as f64 * u).floor() as usize).min(n);
        let log_choose = self.ln_fact[n] - self.ln_fact[mode] - self.ln_fact[n - mode];
        let peak = (log_choose + mode as f64 * lu + (n - mode) as f64 * lc).exp();
        f(mode, peak);
        // the mode may carry zero weight (j = 0 or j = n in the tails), so its
        // neighbours are always kept
        let cutoff = peak * 1e-18;
        let odds = u / c;
        let mut p = peak;
        for j in mode..n {
            p *= (n - j) as f64 / (j + 1) as f64 * odds;
            if p < cutoff && j > mode {
                break;
            }
            f(j + 1, p);
        }
        let mut p = peak;
        for j in (1..=mode).rev() {
            p *= j as f64 / (n - j + 1) as f64 / odds;
            if p < cutoff && j < mode {
                break;
            }
            f(j - 1, p);
        }
    }

    #[inline]
    pub(crate) fn density(&self, u: f64) -> f64 {
        let m = self.weights.len();
        let mut s = 0.0;
        self.binomial_terms(m - 1, u, 1.0 - u, |j, p| s += self.weights[j] * p);
        m as f64 * s
    }

    fn cdf_with(&self, u: f64, c: f64) -> f64 {
        let m = self.weights.len();
        let mut s = 0.0;
        self.binomial_terms(m, u, c, |j, p| s += self.lower[j] * p);
        s.clamp(0.0, 1.0)
    }

    fn sf_with(&self, u: f64, c: f64) -> f64 {
        let m = self.weights.len();
        let mut s = 0.0;
        self.binomial_terms(m, u, c, |j, p| {
            if j < m {
                s += self.upper[j] * p;
            }
        });
        s.clamp(0.0, 1.0)
    }
}

impl UnitDensity for BernsteinDensity {
    fn pdf(&self, u: f64) -> f64 {
        self.density(u)
    }

    fn cdf(&self, u: f64) -> f64 {
        self.cdf_with(u, 1.0 - u)
    }

    fn sf_from_complement(&self, c: f64) -> f64 {
        self.sf_with(1.0 - c, c)
    }

    fn endpoints(&self) -> (f64, f64) {
        let m = self.weights.len() as f64;
        (m * self.weights[0], m * self.weights[self.weights.len() - 1])
    }
}

fn check_unit(u: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::domain(format!("{what} must lie in [0, 1], got {u}")));
    }
    Ok(())
}

/// `m = ⌊n / (2 ln n)⌋`, floored at 2.
pub fn default_degree(n: usize) -> usize {
    if n < 3 {
        return 2;
    }
    let n = n as f64;
    ((0.5 * n / n.ln()).floor() as usize).max(2)
}

/// Empirical-cdf increments over the grid `k/m`, followed by the endpoint
/// positivity correction.
pub fn fit_bernstein(u: &[f64], m: usize) -> Result<BernsteinDensity> {
    fit_bernstein_with_report(u, m).map(|(b, _)| b)
}

pub fn fit_bernstein_with_report(u: &[f64], m: usize) -> Result<(BernsteinDensity, EndpointCorrection)> {
    if u.is_empty() {
        return Err(Error::domain("cannot fit a Bernstein density to an empty sample"));
    }
    if m < 2 {
        return Err(Error::domain(format!("Bernstein degree must be >= 2, got {m}")));
    }
    let mut counts = vec![0usize; m];
    let mf = m as f64;
    for &ui in u {
        check_unit(ui, "pseudo-uniform value")?;
        counts[bin_index(ui, m, mf)] += 1;
    }
    let n = u.len() as f64;
    let mut w: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let report = correct_endpoints(&mut w);
    Ok((BernsteinDensity::from_weights(w)?, report))
}

/// Index `k-1` of the cell `((k-1)/m, k/m]` holding `u`; zero goes to the first cell.
fn bin_index(u: f64, m: usize, mf: f64) -> usize {
    let mut k = ((u * mf).ceil() as usize).clamp(1, m);
    while k > 1 && u <= (k - 1) as f64 / mf {
        k -= 1;
    }
    while k < m && u > k as f64 / mf {
        k += 1;
    }
    k - 1
}

/// Raises `ω_1` and `ω_m` to at least `1/m` by borrowing from the first
/// (respectively last) weight exceeding `1/m`. Total mass is unchanged.
pub(crate) fn correct_endpoints(w: &mut [f64]) -> EndpointCorrection {
    let m = w.len();
    let floor = 1.0 / m as f64;
    let mut report = EndpointCorrection::default();

    if w[0] < floor {
        if let Some(k) = (1..m).find(|&k| w[k] > floor) {
            let deficit = floor - w[0];
            w[0] = floor;
            w[k] -= deficit;
            report.left = true;
        }
    }
    if w[m - 1] < floor {
        if let Some(k) = (0..m - 1).rev().find(|&k| w[k] > floor) {
            let deficit = floor - w[m - 1];
            w[m - 1] = floor;
            w[k] -= deficit;
            report.right = true;
        }
    }
    for end in [0, m - 1] {
        if w[end] <= 0.0 {
            let eps = 0.5 * floor;
            let donor = (0..m)
                .max_by(|&a, &b| w[a].total_cmp(&w[b]))
                .expect("m >= 2");
            w[donor] -= eps;
            w[end] += eps;
            report.fallback = true;
            log::warn!("Bernstein endpoint weight {end} had no donor above 1/m; moved {eps} from weight {donor}");
        }
    }
    report
}

pub fn bernstein_pdf(u: f64, bd: &BernsteinDensity) -> Result<f64> {
    check_unit(u, "Bernstein argument")?;
    Ok(bd.density(u))
}

pub fn bernstein_cdf(u: f64, bd: &BernsteinDensity) -> Result<f64> {
    check_unit(u, "Bernstein argument")?;
    Ok(bd.cdf(u))
}

pub fn bernstein_quantile(p: f64, bd: &BernsteinDensity) -> Result<f64> {
    check_unit(p, "Bernstein quantile level")?;
    Ok(bd.quantile(p))
}
