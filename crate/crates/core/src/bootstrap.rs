//! Parametric bootstrap: simulate from the fitted model, refit, and turn the
//! replicate spread into basic (pivotal) intervals `2θ̂ - q_{1-α/2}, 2θ̂ - q_{α/2}`.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angular::{megpd_simulate, MegpdModel};
use crate::error::{Error, Result};
use crate::model_file::ModelFile;
use crate::pipeline::{fit_rows, FitConfig, Interval};
use crate::rng;

#[derive(Debug, Clone)]
pub struct BootstrapConfig {
    pub nboot: usize,
    pub seed: u64,
    pub alpha: f64,
    /// Number of points of the `δ` band grid.
    pub grid_size: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            nboot: 1000,
            seed: 0,
            alpha: 0.05,
            grid_size: 100,
        }
    }
}

/// A curve with a pointwise band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub x: f64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub nboot: usize,
    pub failures: usize,
    pub alpha: f64,
    pub seed: u64,
    pub kappa: Interval,
    pub xi: Interval,
    pub rho: Option<Interval>,
    /// `δ(r)` on a grid over the fitted radii, pivotal on the log scale.
    pub delta_band: Vec<BandRow>,
    /// Radial quantiles `Q(p_i)`, `p_i = (i - 1/2)/n`, with the pointwise
    /// envelope of the order statistics of the simulated samples.
    pub qq_band: Vec<BandRow>,
    pub note: Option<String>,
}

impl BootstrapResult {
    pub fn intervals(&self) -> [Option<Interval>; 3] {
        [Some(self.kappa), Some(self.xi), self.rho]
    }
}

pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `(2θ̂ - q_{1-α/2}, 2θ̂ - q_{α/2})` of the replicate values.
pub fn pivotal_interval(estimate: f64, replicates: &[f64], alpha: f64) -> Interval {
    let mut s = replicates.to_vec();
    s.sort_by(f64::total_cmp);
    Interval {
        estimate,
        lower: 2.0 * estimate - quantile_sorted(&s, 1.0 - alpha / 2.0),
        upper: 2.0 * estimate - quantile_sorted(&s, alpha / 2.0),
    }
}

/// Seed of replicate `b`, drawn from its own substream.
pub fn replicate_seed(seed: u64, b: usize) -> u64 {
    rng::substream(seed, b as u64).random()
}

pub fn delta_grid(r_min: f64, r_max: f64, size: usize) -> Vec<f64> {
    let size = size.max(2);
    (0..size)
        .map(|i| r_min + (r_max - r_min) * i as f64 / (size - 1) as f64)
        .collect()
}

fn envelope(model: &MegpdModel, sorted_radii: &[Vec<f64>], alpha: f64) -> Vec<BandRow> {
    let n = sorted_radii[0].len();
    (0..n)
        .map(|i| {
            let p = (i as f64 + 0.5) / n as f64;
            let mut col: Vec<f64> = sorted_radii.iter().map(|s| s[i]).collect();
            col.sort_by(f64::total_cmp);
            BandRow {
                x: p,
                estimate: model.radial.quantile(p),
                lower: quantile_sorted(&col, alpha / 2.0),
                upper: quantile_sorted(&col, 1.0 - alpha / 2.0),
            }
        })
        .collect()
}

fn sorted_radii(x: &[Vec<f64>]) -> Vec<f64> {
    let mut r: Vec<f64> = x.iter().map(|row| row.iter().sum()).collect();
    r.sort_by(f64::total_cmp);
    r
}

/// Pointwise envelope of `nsim` simulated radial samples of size `n`.
pub fn qq_envelope(model: &MegpdModel, n: usize, nsim: usize, alpha: f64, seed: u64) -> Result<Vec<BandRow>> {
    if n == 0 || nsim < 2 {
        return Err(Error::domain("QQ envelope needs n >= 1 and at least 2 simulations"));
    }
    let sims: Vec<Vec<f64>> = (0..nsim)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::substream(seed, b as u64);
            let mut r: Vec<f64> = (0..n).map(|_| model.radial.sample(&mut rng)).collect();
            r.sort_by(f64::total_cmp);
            r
        })
        .collect();
    Ok(envelope(model, &sims, alpha))
}

struct Replicate {
    radii: Vec<f64>,
    fit: Option<(f64, f64, Option<f64>, Vec<f64>)>,
}

pub fn parametric_bootstrap(file: &ModelFile, cfg: &BootstrapConfig) -> Result<BootstrapResult> {
    if cfg.nboot < 2 {
        return Err(Error::domain("the bootstrap needs at least 2 replicates"));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {}", cfg.alpha)));
    }
    if cfg.nboot < 100 {
        log::warn!("only {} bootstrap replicates; tail quantiles will be rough", cfg.nboot);
    }
    let model = &file.model;
    let fit_cfg = FitConfig::from_settings(&file.settings, cfg.seed);
    let grid = delta_grid(file.summary.r_min, file.summary.r_max, cfg.grid_size);

    let reps: Vec<Replicate> = (0..cfg.nboot)
        .into_par_iter()
        .map(|b| {
            let x = megpd_simulate(file.n, model, replicate_seed(cfg.seed, b)).expect("n >= 1");
            let fit = match fit_rows(&x, &fit_cfg) {
                Ok((m, _, angular, _)) => Some((
                    m.radial.kappa,
                    m.radial.xi,
                    angular.rho,
                    grid.iter().map(|&r| angular.delta.log_delta(r)).collect(),
                )),
                Err(e) => {
                    log::debug!("bootstrap replicate {b} failed: {e}");
                    None
                }
            };
            Replicate {
                radii: sorted_radii(&x),
                fit,
            }
        })
        .collect();

    let ok: Vec<&(f64, f64, Option<f64>, Vec<f64>)> = reps.iter().filter_map(|r| r.fit.as_ref()).collect();
    let failures = cfg.nboot - ok.len();
    if ok.len() < 2 {
        return Err(Error::domain(format!("{failures} of {} bootstrap refits failed", cfg.nboot)));
    }
    let note = (failures * 10 > cfg.nboot).then(|| {
        let msg = format!(
            "{failures} of {} refits failed; intervals rest on the remaining replicates and may be too narrow",
            cfg.nboot
        );
        log::warn!("{msg}");
        msg
    });

    let s = &file.summary;
    let kappa = pivotal_interval(s.kappa, &ok.iter().map(|f| f.0).collect::<Vec<_>>(), cfg.alpha);
    let xi = pivotal_interval(s.xi, &ok.iter().map(|f| f.1).collect::<Vec<_>>(), cfg.alpha);
    let rho = s.rho.map(|rho| {
        let reps: Vec<f64> = ok.iter().map(|f| f.2.unwrap_or(0.0)).collect();
        pivotal_interval(rho, &reps, cfg.alpha)
    });
    let delta_band = grid
        .iter()
        .enumerate()
        .map(|(g, &r)| {
            let est = model.delta.eval(r).ln();
            let reps: Vec<f64> = ok.iter().map(|f| f.3[g]).collect();
            let iv = pivotal_interval(est, &reps, cfg.alpha);
            BandRow {
                x: r,
                estimate: est.exp(),
                lower: iv.lower.exp(),
                upper: iv.upper.exp(),
            }
        })
        .collect();
    let radii: Vec<Vec<f64>> = reps.into_iter().map(|r| r.radii).collect();
    let qq_band = envelope(model, &radii, cfg.alpha);

    Ok(BootstrapResult {
        nboot: cfg.nboot,
        failures,
        alpha: cfg.alpha,
        seed: cfg.seed,
        kappa,
        xi,
        rho,
        delta_band,
        qq_band,
        note,
    })
}
