//! Goodness-of-fit tables for a fitted model and its (preprocessed) data.
//!
//! Everything is emitted as comma-separated text with a header row. Floats
//! use the shortest representation that round-trips, so reruns with the
//! same seed produce identical files. Missing band values are empty cells.

use std::path::{Path, PathBuf};

use statrs::distribution::{ContinuousCDF, Normal};

use crate::angular::{chi_curve, chi_model, MegpdModel, TailSide};
use crate::bootstrap::{delta_grid, qq_envelope, quantile_sorted, BandRow, BootstrapResult};
use crate::error::{Error, Result};
use crate::model_file::ModelFile;
use crate::pipeline::polar_coordinates;

#[derive(Debug, Clone)]
pub struct DiagnosticsConfig {
    pub seed: u64,
    pub alpha: f64,
    /// Resolution of the `δ(r)` and quantile-fan grids.
    pub grid_size: usize,
    pub fan_probs: Vec<f64>,
    pub density_bins: usize,
    pub density_sim_size: usize,
    pub chi_grid: Vec<f64>,
    pub chi_mc_size: usize,
    /// Simulated samples behind the QQ envelope when no bootstrap is given.
    pub qq_sims: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            seed: 0,
            alpha: 0.05,
            grid_size: 200,
            fan_probs: vec![0.025, 0.25, 0.5, 0.75, 0.975],
            density_bins: 40,
            density_sim_size: 200_000,
            chi_grid: (80..100).map(|i| i as f64 / 100.0).collect(),
            chi_mc_size: 200_000,
            qq_sims: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QqRow {
    pub p: f64,
    pub empirical: f64,
    pub model: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

fn check_band(band: Option<&[BandRow]>, n: usize) -> Result<Option<&[BandRow]>> {
    match band {
        Some(b) if b.len() != n => Err(Error::domain(format!(
            "QQ band has {} points for {n} observations",
            b.len()
        ))),
        other => Ok(other),
    }
}

/// Sorted radii against the fitted radial quantiles at `(i - 1/2)/n`.
pub fn radial_qq(model: &MegpdModel, r: &[f64], band: Option<&[BandRow]>) -> Result<Vec<QqRow>> {
    let band = check_band(band, r.len())?;
    let mut s = r.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Ok(s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let p = (i as f64 + 0.5) / n as f64;
            QqRow {
                p,
                empirical: x,
                model: model.radial.quantile(p),
                lower: band.map(|b| b[i].lower),
                upper: band.map(|b| b[i].upper),
            }
        })
        .collect())
}

/// QQ pairs of `1/r`, using `Q_{1/R}(p) = 1 / Q_R(1 - p)`.
pub fn inverse_radial_qq(model: &MegpdModel, r: &[f64], band: Option<&[BandRow]>) -> Result<Vec<QqRow>> {
    let direct = radial_qq(model, r, band)?;
    Ok(direct
        .iter()
        .rev()
        .map(|row| QqRow {
            p: 1.0 - row.p,
            empirical: 1.0 / row.empirical,
            model: 1.0 / row.model,
            lower: row.upper.map(|u| 1.0 / u),
            upper: row.lower.map(|l| 1.0 / l),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaRow {
    pub r: f64,
    pub delta: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

/// `δ̂(r)` on an even grid over `[r_min, r_max]`, with the bootstrap band
/// when one is supplied (its grid is then used).
pub fn delta_table(model: &MegpdModel, r_min: f64, r_max: f64, grid_size: usize, band: Option<&[BandRow]>) -> Vec<DeltaRow> {
    match band {
        Some(b) => b
            .iter()
            .map(|row| DeltaRow {
                r: row.x,
                delta: row.estimate,
                lower: Some(row.lower),
                upper: Some(row.upper),
            })
            .collect(),
        None => delta_grid(r_min, r_max, grid_size)
            .into_iter()
            .map(|r| DeltaRow {
                r,
                delta: model.delta.eval(r),
                lower: None,
                upper: None,
            })
            .collect(),
    }
}

/// Conditional quantiles `δ(r) z_p` of each log-ratio given `r`.
pub fn quantile_fan(model: &MegpdModel, grid: &[f64], probs: &[f64]) -> Vec<Vec<f64>> {
    let normal = Normal::standard();
    let z: Vec<f64> = probs.iter().map(|&p| normal.inverse_cdf(p)).collect();
    grid.iter()
        .map(|&r| {
            let d = model.delta.eval(r);
            std::iter::once(r).chain(z.iter().map(|z| d * z)).collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityCell {
    pub log_x: f64,
    pub log_y: f64,
    pub model: f64,
    pub empirical: f64,
}

fn histogram(points: &[(f64, f64)], lo: (f64, f64), width: (f64, f64), bins: usize) -> Vec<f64> {
    let mut counts = vec![0usize; bins * bins];
    for &(a, b) in points {
        let i = ((a - lo.0) / width.0).floor();
        let j = ((b - lo.1) / width.1).floor();
        if i >= 0.0 && j >= 0.0 && (i as usize) < bins && (j as usize) < bins {
            counts[i as usize * bins + j as usize] += 1;
        }
    }
    let scale = 1.0 / (points.len() as f64 * width.0 * width.1);
    counts.into_iter().map(|c| c as f64 * scale).collect()
}

/// Density of `(log x_i, log x_j)` on a `bins × bins` grid spanning the data:
/// a histogram of a seeded model simulation next to that of the data.
pub fn density_grid(
    model: &MegpdModel,
    rows: &[Vec<f64>],
    pair: (usize, usize),
    bins: usize,
    sim_size: usize,
    seed: u64,
) -> Result<Vec<DensityCell>> {
    if pair.0 >= model.d || pair.1 >= model.d || bins == 0 || rows.is_empty() {
        return Err(Error::domain("density grid needs a valid pair, data and at least one bin"));
    }
    let logs = |x: &[Vec<f64>]| -> Vec<(f64, f64)> { x.iter().map(|r| (r[pair.0].ln(), r[pair.1].ln())).collect() };
    let data = logs(rows);
    let range = |k: usize| {
        let it = data.iter().map(|p| if k == 0 { p.0 } else { p.1 });
        let lo = it.clone().fold(f64::INFINITY, f64::min);
        let hi = it.fold(f64::NEG_INFINITY, f64::max);
        let pad = 0.05 * (hi - lo).max(1e-6);
        (lo - pad, hi + pad)
    };
    let (rx, ry) = (range(0), range(1));
    let width = ((rx.1 - rx.0) / bins as f64, (ry.1 - ry.0) / bins as f64);
    let sim = logs(&crate::angular::megpd_simulate_par(sim_size.max(1), model, seed));
    let hm = histogram(&sim, (rx.0, ry.0), width, bins);
    let he = histogram(&data, (rx.0, ry.0), width, bins);
    let mut out = Vec::with_capacity(bins * bins);
    for i in 0..bins {
        for j in 0..bins {
            out.push(DensityCell {
                log_x: rx.0 + (i as f64 + 0.5) * width.0,
                log_y: ry.0 + (j as f64 + 0.5) * width.1,
                model: hm[i * bins + j],
                empirical: he[i * bins + j],
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiRow {
    pub p: f64,
    /// `Upper` for `χ^(X)`, `Lower` for `χ^(Y)` with `Y = 1/X`.
    pub side: TailSide,
    pub empirical: f64,
    pub empirical_se: f64,
    pub model: f64,
    pub model_se: f64,
}

pub fn chi_table(
    model: &MegpdModel,
    rows: &[Vec<f64>],
    pair: (usize, usize),
    p_grid: &[f64],
    mc_size: usize,
    seed: u64,
) -> Result<Vec<ChiRow>> {
    let mut out = Vec::new();
    for side in [TailSide::Upper, TailSide::Lower] {
        let emp = chi_curve(rows, p_grid, side, pair)?;
        let fit = chi_model(model, p_grid, side, pair, mc_size, seed)?;
        out.extend(emp.iter().zip(&fit).map(|(e, m)| ChiRow {
            p: e.p,
            side,
            empirical: e.chi,
            empirical_se: e.se,
            model: m.chi,
            model_se: m.se,
        }));
    }
    Ok(out)
}

fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        x.to_string()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, num)
}

fn write_table(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

/// Writes every diagnostic table for `rows` (on the model scale) into `dir`
/// and returns the file paths.
pub fn write_diagnostics(
    file: &ModelFile,
    rows: &[Vec<f64>],
    bootstrap: Option<&BootstrapResult>,
    dir: &Path,
    cfg: &DiagnosticsConfig,
) -> Result<Vec<PathBuf>> {
    let model = &file.model;
    if rows.iter().any(|r| r.len() != model.d) {
        return Err(Error::domain(format!("data rows must have {} columns", model.d)));
    }
    std::fs::create_dir_all(dir)?;
    let (r, v) = polar_coordinates(rows)?;
    let n = r.len();
    let mut written = Vec::new();
    let mut emit = |name: String, header: Vec<String>, body: Vec<Vec<String>>| -> Result<()> {
        let path = dir.join(name);
        write_table(&path, &header, body)?;
        written.push(path);
        Ok(())
    };

    let envelope;
    let band = match bootstrap {
        Some(b) if b.qq_band.len() == n => Some(b.qq_band.as_slice()),
        _ => {
            envelope = qq_envelope(model, n, cfg.qq_sims, cfg.alpha, cfg.seed)?;
            Some(envelope.as_slice())
        }
    };
    let qq_header = strings(&["p", "empirical", "model", "lower", "upper"]);
    let qq_rows = |rows: Vec<QqRow>| -> Vec<Vec<String>> {
        rows.iter()
            .map(|q| vec![num(q.p), num(q.empirical), num(q.model), opt(q.lower), opt(q.upper)])
            .collect()
    };
    emit("qq_radius.csv".into(), qq_header.clone(), qq_rows(radial_qq(model, &r, band)?))?;
    emit("qq_inverse_radius.csv".into(), qq_header, qq_rows(inverse_radial_qq(model, &r, band)?))?;

    let mut sorted = r.clone();
    sorted.sort_by(f64::total_cmp);
    let (r_min, r_max) = (sorted[0], sorted[n - 1]);
    let delta = delta_table(model, r_min, r_max, cfg.grid_size, bootstrap.map(|b| b.delta_band.as_slice()));
    emit(
        "delta.csv".into(),
        strings(&["r", "delta", "lower", "upper"]),
        delta.iter().map(|d| vec![num(d.r), num(d.delta), opt(d.lower), opt(d.upper)]).collect(),
    )?;
    emit(
        "markers.csv".into(),
        strings(&["name", "value"]),
        vec![
            vec!["r_min".into(), num(r_min)],
            vec!["r_max".into(), num(r_max)],
            vec!["r_q97".into(), num(quantile_sorted(&sorted, 0.97))],
        ],
    )?;

    let grid = delta_grid(r_min, r_max, cfg.grid_size);
    let mut fan_header = vec!["r".to_string()];
    fan_header.extend(cfg.fan_probs.iter().map(|p| format!("q{p}")));
    emit(
        "fan.csv".into(),
        fan_header,
        quantile_fan(model, &grid, &cfg.fan_probs)
            .iter()
            .map(|row| row.iter().map(|&x| num(x)).collect())
            .collect(),
    )?;
    let reference = &file.columns[model.d - 1];
    let mut scatter_header = vec!["r".to_string()];
    scatter_header.extend(file.columns[..model.d - 1].iter().map(|c| format!("log({c}/{reference})")));
    emit(
        "scatter.csv".into(),
        scatter_header,
        r.iter()
            .zip(&v)
            .map(|(&ri, vi)| std::iter::once(num(ri)).chain(vi.iter().map(|&x| num(x))).collect())
            .collect(),
    )?;

    for i in 0..model.d {
        for j in i + 1..model.d {
            let seed = cfg.seed.wrapping_add((i * model.d + j) as u64);
            let cells = density_grid(model, rows, (i, j), cfg.density_bins, cfg.density_sim_size, seed)?;
            emit(
                format!("density_{}_{}.csv", file.columns[i], file.columns[j]),
                vec![
                    format!("log_{}", file.columns[i]),
                    format!("log_{}", file.columns[j]),
                    "model".into(),
                    "empirical".into(),
                ],
                cells
                    .iter()
                    .map(|c| vec![num(c.log_x), num(c.log_y), num(c.model), num(c.empirical)])
                    .collect(),
            )?;
            let chi = chi_table(model, rows, (i, j), &cfg.chi_grid, cfg.chi_mc_size, seed)?;
            emit(
                format!("chi_{}_{}.csv", file.columns[i], file.columns[j]),
                strings(&["p", "curve", "empirical", "empirical_se", "model", "model_se"]),
                chi.iter()
                    .map(|c| {
                        let curve = if c.side == TailSide::Upper { "X" } else { "Y" };
                        vec![
                            num(c.p),
                            curve.into(),
                            num(c.empirical),
                            num(c.empirical_se),
                            num(c.model),
                            num(c.model_se),
                        ]
                    })
                    .collect(),
            )?;
        }
    }
    Ok(written)
}
