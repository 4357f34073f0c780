//! The two-step fit: radial law of `‖x‖`, then `δ(·)` and `ρ` from the
//! log-ratios given the radii.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::angular::{to_polar, Delta, EquicorrMatrix, MegpdModel};
use crate::bernstein::default_degree;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model_file::{FitSettings, FitSummary, ModelFile, FORMAT_VERSION};
use crate::radial::{fit_radial, RadialConfig, RadialFit};
use crate::spline::{build_basis, fit_angular, AngularConfig, AngularFit};

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub radial: RadialConfig,
    pub angular: AngularConfig,
    /// Number of spline knots.
    pub k: usize,
    /// Recorded in the model file for downstream simulation.
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            radial: RadialConfig::default(),
            angular: AngularConfig::default(),
            k: 12,
            seed: 0,
        }
    }
}

impl FitConfig {
    /// Reconstructs the configuration recorded in a model file.
    pub fn from_settings(s: &FitSettings, seed: u64) -> Self {
        FitConfig {
            radial: RadialConfig {
                m: Some(s.m),
                tol: s.radial_tol,
                max_outer: s.radial_max_outer,
                xi_bounds: s.xi_bounds,
                kappa_bounds: s.kappa_bounds,
                ..RadialConfig::default()
            },
            angular: AngularConfig {
                eps: s.rho_eps,
                max_outer: s.rho_max_outer,
                lambda_grid: s.lambda_grid.clone(),
                ..AngularConfig::default()
            },
            k: s.k,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineFit {
    pub file: ModelFile,
    pub radial: RadialFit,
    pub angular: AngularFit,
}

/// Radii and log-ratios of each row.
pub fn polar_coordinates(rows: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut r = Vec::with_capacity(rows.len());
    let mut v = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let p = to_polar(row).map_err(|e| match e {
            Error::Domain(msg) => Error::domain(format!("row {}: {msg}", i + 1)),
            other => other,
        })?;
        r.push(p.r);
        v.push(p.v);
    }
    Ok((r, v))
}

fn quantile7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Fits rows already on the model scale (strictly positive).
pub fn fit_rows(rows: &[Vec<f64>], cfg: &FitConfig) -> Result<(MegpdModel, RadialFit, AngularFit, usize)> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if d < 2 {
        return Err(Error::InsufficientData(format!(
            "the model needs at least 2 columns, got {d}; select more with --columns"
        )));
    }
    if n < cfg.k + 10 {
        return Err(Error::InsufficientData(format!(
            "{n} rows is too few for K = {} spline knots; supply at least {} rows or lower --K",
            cfg.k,
            cfg.k + 10
        )));
    }
    let (r, v) = polar_coordinates(rows).map_err(|e| e.at_stage("polar transform"))?;
    let m = cfg.radial.m.unwrap_or_else(|| default_degree(n));
    let radial_cfg = RadialConfig {
        m: Some(m),
        ..cfg.radial.clone()
    };
    let radial = fit_radial(&r, &radial_cfg).map_err(|e| e.at_stage("radial fit"))?;
    let basis = build_basis(&r, cfg.k).map_err(|e| e.at_stage("spline basis"))?;
    let angular = fit_angular(&v, &r, &basis, &cfg.angular).map_err(|e| e.at_stage("angular fit"))?;
    let corr = EquicorrMatrix::new(d - 1, angular.rho.unwrap_or(0.0)).map_err(|e| e.at_stage("assembly"))?;
    let model = MegpdModel::new(d, radial.params.clone(), Delta::Spline(angular.delta.clone()), corr)
        .map_err(|e| e.at_stage("assembly"))?;
    Ok((model, radial, angular, m))
}

/// Fits a preprocessed dataset and assembles the model file.
pub fn fit_pipeline(ds: &Dataset, cfg: &FitConfig) -> Result<PipelineFit> {
    let (model, radial, angular, m) = fit_rows(&ds.rows, cfg)?;
    let mut r: Vec<f64> = ds.rows.iter().map(|x| x.iter().sum()).collect();
    r.sort_by(f64::total_cmp);
    let summary = FitSummary {
        kappa: radial.params.kappa,
        xi: radial.params.xi,
        rho: angular.rho,
        lambda: angular.delta.lambda,
        radial_loglik: radial.loglik,
        angular_loglik: angular.loglik,
        angular_penlik: angular.penlik,
        radial_iterations: radial.iterations,
        angular_iterations: angular.iterations,
        radial_converged: radial.converged,
        angular_converged: angular.converged,
        r_min: r[0],
        r_max: r[r.len() - 1],
        r_q97: quantile7(&r, 0.97),
    };
    let settings = FitSettings {
        m,
        k: cfg.k,
        lambda_grid: cfg.angular.lambda_grid.clone(),
        xi_bounds: cfg.radial.xi_bounds,
        kappa_bounds: cfg.radial.kappa_bounds,
        radial_tol: cfg.radial.tol,
        radial_max_outer: cfg.radial.max_outer,
        rho_eps: cfg.angular.eps,
        rho_max_outer: cfg.angular.max_outer,
    };
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        model,
        n: ds.n(),
        columns: ds.columns.clone(),
        source: ds.provenance.source.clone(),
        preprocessing: ds.provenance.preprocessing.clone(),
        settings,
        seeds: BTreeMap::from([("fit".to_string(), cfg.seed)]),
        summary,
    };
    Ok(PipelineFit { file, radial, angular })
}

/// Pivotal interval for one parameter.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

fn cell(x: f64) -> String {
    format!("{x:.2}")
}

/// Estimates of `κ, ξ, ρ` with optional intervals underneath, as a
/// pipe-delimited table.
pub fn parameter_table(summary: &FitSummary, intervals: Option<[Option<Interval>; 3]>) -> String {
    let est = [Some(summary.kappa), Some(summary.xi), summary.rho];
    let mut rows = vec![
        vec!["κ".to_string(), "ξ".to_string(), "ρ".to_string()],
        est.iter().map(|e| e.map_or("n/a".into(), cell)).collect(),
    ];
    if let Some(iv) = intervals {
        rows.push(
            iv.iter()
                .map(|i| i.map_or("n/a".into(), |i| format!("({}, {})", cell(i.lower), cell(i.upper))))
                .collect(),
        );
    }
    let width: Vec<usize> = (0..3)
        .map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let cells: Vec<String> = row
            .iter()
            .zip(&width)
            .map(|(c, &w)| format!("{}{c}", " ".repeat(w - c.chars().count())))
            .collect();
        let _ = writeln!(out, "| {} |", cells.join(" | "));
    }
    out
}

/// Human-readable report of a fit.
pub fn render_report(file: &ModelFile, intervals: Option<[Option<Interval>; 3]>) -> String {
    let s = &file.summary;
    let mut out = String::new();
    let _ = writeln!(out, "n = {}, d = {}, columns: {}", file.n, file.model.d, file.columns.join(", "));
    let _ = writeln!(out, "Bernstein degree m = {}, spline knots K = {}", file.settings.m, file.settings.k);
    out.push('\n');
    out.push_str(&parameter_table(s, intervals));
    out.push('\n');
    let _ = writeln!(out, "kappa = {}", s.kappa);
    let _ = writeln!(out, "xi = {}", s.xi);
    match s.rho {
        Some(rho) => {
            let _ = writeln!(out, "rho = {rho}");
        }
        None => out.push_str("rho = n/a (d = 2)\n"),
    }
    let _ = writeln!(out, "lambda = {}", s.lambda);
    let _ = writeln!(
        out,
        "radial loglik = {:.4} ({} iterations, converged: {})",
        s.radial_loglik, s.radial_iterations, s.radial_converged
    );
    let _ = writeln!(
        out,
        "angular loglik = {:.4}, penalized = {:.4} ({} iterations, converged: {})",
        s.angular_loglik, s.angular_penlik, s.angular_iterations, s.angular_converged
    );
    out
}
