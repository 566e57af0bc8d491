//! Control-function estimation of Cobb–Douglas output elasticities.
//!
//! A first stage projects log output on a cubic polynomial in the inputs
//! and the proxy; a second stage recovers productivity for candidate
//! elasticities, fits its AR(1) law of motion and matches the innovations
//! against lagged variable input and current capital.

mod first_stage;
mod gmm;
mod postprocess;
mod rolling;
pub mod simplex;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use first_stage::{first_stage, monomials, FirstStage};
pub use gmm::{ols_init, second_stage_gmm, GmmFit, MomentProblem, ProductivityState};
pub use postprocess::postprocess_elasticities;
pub use rolling::{build_slice, estimate_rolling};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VariableInput {
    /// COGS + SG&A.
    Opex,
    /// COGS only.
    Cogs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CapitalMeasure {
    /// Physical plus intangible capital.
    Total,
    /// Physical capital only.
    Physical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProxyColumn {
    Icapt,
    Capx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WinsorScope {
    Pooled,
    PerIndustry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationConfig {
    pub variable_input: VariableInput,
    pub capital: CapitalMeasure,
    pub proxy: ProxyColumn,
    /// Minimum observations for a window to be estimated.
    pub min_obs: usize,
    /// Rolling window length in years (odd).
    pub window: usize,
    /// Half-width of the 3x3 grid of simplex starting points.
    pub start_spread: f64,
    pub winsor_low: f64,
    pub winsor_high: f64,
    pub winsor_scope: WinsorScope,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            variable_input: VariableInput::Opex,
            capital: CapitalMeasure::Total,
            proxy: ProxyColumn::Icapt,
            min_obs: 50,
            window: 9,
            start_spread: 0.1,
            winsor_low: 0.05,
            winsor_high: 0.95,
            winsor_scope: WinsorScope::Pooled,
        }
    }
}

/// Log-transformed observations for one estimation window, sorted by
/// firm then year.
#[derive(Debug, Clone, Default)]
pub struct EstimationSlice {
    pub firm: Vec<usize>,
    pub year: Vec<i32>,
    pub y: Vec<f64>,
    pub l: Vec<f64>,
    pub k: Vec<f64>,
    pub proxy: Vec<f64>,
}

impl EstimationSlice {
    pub fn push(&mut self, firm: usize, year: i32, y: f64, l: f64, k: f64, proxy: f64) {
        self.firm.push(firm);
        self.year.push(year);
        self.y.push(y);
        self.l.push(l);
        self.k.push(k);
        self.proxy.push(proxy);
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// `(current, previous)` index pairs of the same firm in consecutive years.
    pub fn lag_pairs(&self) -> Vec<(usize, usize)> {
        (1..self.len())
            .filter(|&i| self.firm[i] == self.firm[i - 1] && self.year[i] == self.year[i - 1] + 1)
            .map(|i| (i, i - 1))
            .collect()
    }
}

/// Industry-year elasticities. `None` marks a window that could not be
/// estimated; post-processing fills every gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticityEstimate {
    pub industry: u16,
    pub year: i32,
    pub theta_v: Option<f64>,
    pub theta_k: Option<f64>,
    pub window: (i32, i32),
    pub n_obs: usize,
    pub converged: bool,
    pub objective: f64,
    pub rho: Option<f64>,
    /// Copied from the nearest full window.
    pub carried_forward: bool,
    /// Replaced by interpolation during post-processing.
    pub interpolated: bool,
}

impl ElasticityEstimate {
    /// Returns to scale: the sum of the two elasticities.
    pub fn rs(&self) -> Option<f64> {
        Some(self.theta_v? + self.theta_k?)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ElasticityTable {
    pub estimates: Vec<ElasticityEstimate>,
    pub postprocessed: bool,
}

impl ElasticityTable {
    pub fn get(&self, industry: u16, year: i32) -> Option<&ElasticityEstimate> {
        self.estimates
            .iter()
            .find(|e| e.industry == industry && e.year == year)
    }

    pub fn industries(&self) -> Vec<u16> {
        let mut v: Vec<u16> = self.estimates.iter().map(|e| e.industry).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Lookup map keyed by `(industry, year)`.
    pub fn index(&self) -> BTreeMap<(u16, i32), &ElasticityEstimate> {
        self.estimates.iter().map(|e| ((e.industry, e.year), e)).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "industry", "year", "theta_v", "theta_k", "rs", "n_obs", "converged", "carried_forward",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for e in &self.estimates {
            w.write_record([
                e.industry.to_string(),
                e.year.to_string(),
                opt(e.theta_v),
                opt(e.theta_k),
                opt(e.rs()),
                e.n_obs.to_string(),
                e.converged.to_string(),
                e.carried_forward.to_string(),
            ])?;
        }
        w.flush().map_err(|e| crate::Error::io(path, e))?;
        Ok(())
    }
}
