//! Versioned JSON record of a fitted model.
//!
//! Floats are written in shortest round-trip form and parsed back exactly,
//! so a save/load cycle reproduces every numeric field bit for bit.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::angular::MegpdModel;
use crate::data::ColumnTransform;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Settings the model was fitted with; a bootstrap refits under the same ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    /// Bernstein degree actually used.
    pub m: usize,
    /// Number of spline knots.
    #[serde(rename = "K")]
    pub k: usize,
    pub lambda_grid: Vec<f64>,
    pub xi_bounds: (f64, f64),
    pub kappa_bounds: (f64, f64),
    pub radial_tol: f64,
    pub radial_max_outer: usize,
    pub rho_eps: f64,
    pub rho_max_outer: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub kappa: f64,
    pub xi: f64,
    /// Absent when `d = 2`.
    pub rho: Option<f64>,
    pub lambda: f64,
    pub radial_loglik: f64,
    pub angular_loglik: f64,
    pub angular_penlik: f64,
    pub radial_iterations: usize,
    pub angular_iterations: usize,
    pub radial_converged: bool,
    pub angular_converged: bool,
    /// Range and 0.97 empirical quantile of the fitted radii.
    pub r_min: f64,
    pub r_max: f64,
    pub r_q97: f64,
}

impl FitSummary {
    pub fn converged(&self) -> bool {
        self.radial_converged && self.angular_converged
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub model: MegpdModel,
    /// Sample size of the fitted data.
    pub n: usize,
    pub columns: Vec<String>,
    pub source: Option<String>,
    pub preprocessing: Vec<ColumnTransform>,
    pub settings: FitSettings,
    /// Named seeds used for anything stochastic downstream of the fit.
    pub seeds: BTreeMap<String, u64>,
    pub summary: FitSummary,
}

impl ModelFile {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(s)?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::ModelFormat(format!(
                    "format version {v} is not supported (expected {FORMAT_VERSION})"
                )))
            }
            None => return Err(Error::ModelFormat("missing format_version".into())),
        }
        let file: ModelFile = serde_json::from_value(value)?;
        if file.model.d != file.columns.len() {
            return Err(Error::ModelFormat(format!(
                "model dimension {} does not match {} column names",
                file.model.d,
                file.columns.len()
            )));
        }
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_json(&text).map_err(|e| Error::file(path, e))
    }
}
