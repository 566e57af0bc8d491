//! Firm-level panel data: ingestion, deflation, cleaning, intangible stocks
//! and per-year weights.

mod clean;
mod intangible;
mod io;
mod weights;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use clean::{clean_sample, CleaningConfig, CleaningReport, TrimCuts, TrimScope};
pub use intangible::build_intangible_stock;
pub use io::{load_firm_panel, load_macro, write_firm_panel, write_macro, SchemaMap};
pub use weights::{compute_weights, FirmWeight, WeightTable};

/// Closed set of (BEA-grouped) two-digit industry codes. 31-33, 44-45 and
/// 48-49 collapse onto their first code.
pub const INDUSTRY_CODES: [u16; 18] = [
    11, 21, 22, 23, 31, 42, 44, 48, 51, 52, 53, 54, 56, 61, 62, 71, 72, 81,
];

/// Maps a raw two-digit NAICS code onto the grouped code, or `None` when the
/// code is outside the closed set.
pub fn normalize_industry(raw: u16) -> Option<u16> {
    let code = match raw {
        32 | 33 => 31,
        45 => 44,
        49 => 48,
        c => c,
    };
    INDUSTRY_CODES.contains(&code).then_some(code)
}

/// One firm-year observation. Financials are nominal until the owning
/// dataset has been deflated; `None` marks an empty source cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmYear {
    pub firm_id: String,
    pub year: i32,
    /// Grouped industry code; `None` when blank or outside the closed set.
    pub industry: Option<u16>,
    pub sale: Option<f64>,
    pub cogs: Option<f64>,
    pub sga: Option<f64>,
    pub rd: Option<f64>,
    /// End-of-period physical capital (PPEGT).
    pub ppegt: Option<f64>,
    /// End-of-period intangible capital.
    pub k_int: Option<f64>,
    pub capx: Option<f64>,
    pub icapt: Option<f64>,
    /// Prior-period PPEGT, filled by [`PanelDataset::with_capital_lags`].
    #[serde(default)]
    pub ppegt_lag: Option<f64>,
    /// Prior-period intangible stock, filled by [`PanelDataset::with_capital_lags`].
    #[serde(default)]
    pub k_int_lag: Option<f64>,
}

impl FirmYear {
    pub fn new(firm_id: impl Into<String>, year: i32, industry: Option<u16>) -> Self {
        FirmYear {
            firm_id: firm_id.into(),
            year,
            industry,
            sale: None,
            cogs: None,
            sga: None,
            rd: None,
            ppegt: None,
            k_int: None,
            capx: None,
            icapt: None,
            ppegt_lag: None,
            k_int_lag: None,
        }
    }

    fn nominal_fields_mut(&mut self) -> [&mut Option<f64>; 10] {
        [
            &mut self.sale,
            &mut self.cogs,
            &mut self.sga,
            &mut self.rd,
            &mut self.ppegt,
            &mut self.k_int,
            &mut self.capx,
            &mut self.icapt,
            &mut self.ppegt_lag,
            &mut self.k_int_lag,
        ]
    }
}

/// Aggregate series for one year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroYear {
    pub year: i32,
    pub gdp: f64,
    pub total_sales: f64,
    /// Price index, base year = 1.
    pub deflator: f64,
    pub labor_comp: f64,
    /// Nominal policy rate (fraction per year).
    pub nominal_rate: f64,
    pub inflation: f64,
    /// Externally supplied user cost of capital, if any.
    pub external_r: Option<f64>,
}

impl MacroYear {
    /// Input-output multiplier implied by the national accounts.
    pub fn chi(&self) -> f64 {
        self.total_sales / self.gdp
    }
}

/// Record of the transformations already applied to a dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub deflated: bool,
    pub capital_lagged: bool,
    pub cleaning: Option<CleaningReport>,
    /// Rows whose intangible stock was filled by perpetual inventory.
    pub pim_filled: usize,
    /// Rows where a missing R&D flow was read as zero while building stocks.
    pub pim_missing_rd: usize,
}

/// A firm panel plus its macro series. Observations are kept sorted by
/// `(firm_id, year)` and that key is unique.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    observations: Vec<FirmYear>,
    macro_years: BTreeMap<i32, MacroYear>,
    pub provenance: Provenance,
}

impl PanelDataset {
    pub fn new(mut observations: Vec<FirmYear>, macros: Vec<MacroYear>) -> Result<Self> {
        observations.sort_by(|a, b| (a.firm_id.as_str(), a.year).cmp(&(b.firm_id.as_str(), b.year)));
        if let Some(w) = observations
            .windows(2)
            .find(|w| w[0].firm_id == w[1].firm_id && w[0].year == w[1].year)
        {
            return Err(Error::Duplicate {
                firm_id: w[0].firm_id.clone(),
                year: w[0].year,
            });
        }
        let macro_years = macros.into_iter().map(|m| (m.year, m)).collect();
        Ok(PanelDataset {
            observations,
            macro_years,
            provenance: Provenance::default(),
        })
    }

    pub(crate) fn from_parts(
        observations: Vec<FirmYear>,
        macro_years: BTreeMap<i32, MacroYear>,
        provenance: Provenance,
    ) -> Self {
        PanelDataset {
            observations,
            macro_years,
            provenance,
        }
    }

    pub fn observations(&self) -> &[FirmYear] {
        &self.observations
    }

    pub fn macro_years(&self) -> &BTreeMap<i32, MacroYear> {
        &self.macro_years
    }

    pub fn macro_year(&self, year: i32) -> Option<&MacroYear> {
        self.macro_years.get(&year)
    }

    pub fn with_macro(mut self, macros: Vec<MacroYear>) -> Self {
        self.macro_years = macros.into_iter().map(|m| (m.year, m)).collect();
        self
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Distinct sample years in ascending order.
    pub fn years(&self) -> Vec<i32> {
        let mut ys: Vec<i32> = self.observations.iter().map(|o| o.year).collect();
        ys.sort_unstable();
        ys.dedup();
        ys
    }

    /// Observations for one year, in firm order.
    pub fn year_slice(&self, year: i32) -> Vec<&FirmYear> {
        self.observations.iter().filter(|o| o.year == year).collect()
    }

    /// Keeps only observations whose year lies in `[from, to]`.
    pub fn restrict_years(mut self, from: i32, to: i32) -> Self {
        self.observations.retain(|o| o.year >= from && o.year <= to);
        self
    }

    /// Divides every nominal field by its year's deflator.
    pub fn apply_deflators(&self) -> Result<PanelDataset> {
        if self.provenance.deflated {
            return Err(Error::AlreadyDeflated);
        }
        if self.provenance.capital_lagged {
            return Err(Error::Parameter(
                "deflate before joining lagged capital".into(),
            ));
        }
        let mut out = self.clone();
        for obs in &mut out.observations {
            let d = self
                .macro_years
                .get(&obs.year)
                .map(|m| m.deflator)
                .ok_or(Error::MissingDeflator(obs.year))?;
            if !(d > 0.0) {
                return Err(Error::Domain(format!("nonpositive deflator in {}", obs.year)));
            }
            for f in obs.nominal_fields_mut() {
                if let Some(v) = f.as_mut() {
                    *v /= d;
                }
            }
        }
        out.provenance.deflated = true;
        Ok(out)
    }

    /// Inverse of [`apply_deflators`](Self::apply_deflators).
    pub fn renominalize(&self) -> Result<PanelDataset> {
        if !self.provenance.deflated {
            return Err(Error::Parameter("dataset is not deflated".into()));
        }
        let mut out = self.clone();
        for obs in &mut out.observations {
            let d = self
                .macro_years
                .get(&obs.year)
                .map(|m| m.deflator)
                .ok_or(Error::MissingDeflator(obs.year))?;
            for f in obs.nominal_fields_mut() {
                if let Some(v) = f.as_mut() {
                    *v *= d;
                }
            }
        }
        out.provenance.deflated = false;
        Ok(out)
    }

    /// Joins each observation with the same firm's end-of-period capital
    /// from the previous year. Production at `t` uses the stock recorded at
    /// `t - 1`, so downstream code reads `ppegt_lag` / `k_int_lag` only.
    pub fn with_capital_lags(&self) -> PanelDataset {
        let mut out = self.clone();
        let obs = &mut out.observations;
        for i in 0..obs.len() {
            let (ppegt_lag, k_int_lag) = if i > 0
                && obs[i - 1].firm_id == obs[i].firm_id
                && obs[i - 1].year + 1 == obs[i].year
            {
                (obs[i - 1].ppegt, obs[i - 1].k_int)
            } else {
                (None, None)
            };
            obs[i].ppegt_lag = ppegt_lag;
            obs[i].k_int_lag = k_int_lag;
        }
        out.provenance.capital_lagged = true;
        out
    }
}
