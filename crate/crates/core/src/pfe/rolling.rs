use super::{
    first_stage, second_stage_gmm, CapitalMeasure, ElasticityEstimate, ElasticityTable, EstimationConfig,
    EstimationSlice, ProxyColumn, VariableInput,
};
use crate::error::{Error, Result};
use crate::panel::{FirmYear, PanelDataset};

fn variable_input(o: &FirmYear, cfg: &EstimationConfig) -> Option<f64> {
    match cfg.variable_input {
        VariableInput::Opex => Some(o.cogs? + o.sga?),
        VariableInput::Cogs => o.cogs,
    }
}

fn capital(o: &FirmYear, cfg: &EstimationConfig) -> Option<f64> {
    match cfg.capital {
        CapitalMeasure::Total => Some(o.ppegt_lag? + o.k_int_lag?),
        CapitalMeasure::Physical => o.ppegt_lag,
    }
}

fn proxy(o: &FirmYear, cfg: &EstimationConfig) -> Option<f64> {
    match cfg.proxy {
        ProxyColumn::Icapt => o.icapt,
        ProxyColumn::Capx => o.capx,
    }
}

/// Log observations of one industry within `[from, to]` with strictly
/// positive output, inputs and proxy.
pub fn build_slice(data: &PanelDataset, industry: u16, from: i32, to: i32, cfg: &EstimationConfig) -> EstimationSlice {
    let mut slice = EstimationSlice::default();
    let mut firm = 0usize;
    let mut last_id: Option<&str> = None;
    for o in data.observations() {
        if o.industry != Some(industry) || o.year < from || o.year > to {
            continue;
        }
        if last_id != Some(o.firm_id.as_str()) {
            firm += 1;
            last_id = Some(o.firm_id.as_str());
        }
        let vals = (o.sale, variable_input(o, cfg), capital(o, cfg), proxy(o, cfg));
        if let (Some(y), Some(l), Some(k), Some(p)) = vals {
            if y > 0.0 && l > 0.0 && k > 0.0 && p > 0.0 {
                slice.push(firm, o.year, y.ln(), l.ln(), k.ln(), p.ln());
            }
        }
    }
    slice
}

struct WindowFit {
    theta_v: f64,
    theta_k: f64,
    rho: f64,
    objective: f64,
    converged: bool,
}

fn fit_window(slice: &EstimationSlice, cfg: &EstimationConfig) -> Result<WindowFit> {
    if slice.len() < cfg.min_obs {
        return Err(Error::Estimation(format!(
            "{} observations, below the minimum of {}",
            slice.len(),
            cfg.min_obs
        )));
    }
    let fs = first_stage(slice)?;
    let fit = second_stage_gmm(&fs.phi, slice, cfg.start_spread)?;
    Ok(WindowFit {
        theta_v: fit.theta_v,
        theta_k: fit.theta_k,
        rho: fit.rho,
        objective: fit.objective,
        converged: fit.converged,
    })
}

fn estimate_for(
    data: &PanelDataset,
    industry: u16,
    center: i32,
    window: (i32, i32),
    cfg: &EstimationConfig,
) -> ElasticityEstimate {
    let slice = build_slice(data, industry, window.0, window.1, cfg);
    let n_obs = slice.len();
    match fit_window(&slice, cfg) {
        Ok(f) => ElasticityEstimate {
            industry,
            year: center,
            theta_v: Some(f.theta_v),
            theta_k: Some(f.theta_k),
            window,
            n_obs,
            converged: f.converged,
            objective: f.objective,
            rho: Some(f.rho),
            carried_forward: false,
            interpolated: false,
        },
        Err(e) => {
            log::warn!("industry {industry}, window {window:?}: {e}; recorded as missing");
            ElasticityEstimate {
                industry,
                year: center,
                theta_v: None,
                theta_k: None,
                window,
                n_obs,
                converged: false,
                objective: f64::NAN,
                rho: None,
                carried_forward: false,
                interpolated: false,
            }
        }
    }
}

/// Estimates elasticities for every industry and year on centred rolling
/// windows. Years whose window would run past either end of the sample
/// reuse the nearest full window's estimate (flagged `carried_forward`); an
/// industry with fewer years than the window gets one estimate on all its
/// data, reused for every year.
pub fn estimate_rolling(data: &PanelDataset, cfg: &EstimationConfig) -> Result<ElasticityTable> {
    if !data.provenance.capital_lagged {
        return Err(Error::Parameter(
            "estimation needs lagged capital; join capital lags first".into(),
        ));
    }
    if cfg.window == 0 || cfg.window.is_multiple_of(2) {
        return Err(Error::Parameter(format!("window length {} must be odd", cfg.window)));
    }
    let half = (cfg.window / 2) as i32;
    let mut industries: Vec<u16> = data.observations().iter().filter_map(|o| o.industry).collect();
    industries.sort_unstable();
    industries.dedup();

    let mut estimates = Vec::new();
    for industry in industries {
        let mut years: Vec<i32> = data
            .observations()
            .iter()
            .filter(|o| o.industry == Some(industry))
            .map(|o| o.year)
            .collect();
        years.sort_unstable();
        years.dedup();
        let (first, last) = (years[0], *years.last().expect("non-empty"));
        let full_from = first + half;
        let full_to = last - half;

        if full_from > full_to {
            let mid = first + (last - first) / 2;
            let base = estimate_for(data, industry, mid, (first, last), cfg);
            for y in first..=last {
                estimates.push(ElasticityEstimate {
                    year: y,
                    carried_forward: y != mid,
                    ..base.clone()
                });
            }
            continue;
        }

        let full: Vec<ElasticityEstimate> = (full_from..=full_to)
            .map(|t| estimate_for(data, industry, t, (t - half, t + half), cfg))
            .collect();
        for y in first..full_from {
            estimates.push(ElasticityEstimate {
                year: y,
                carried_forward: true,
                ..full[0].clone()
            });
        }
        let tail = full.last().expect("non-empty").clone();
        estimates.extend(full);
        for y in full_to + 1..=last {
            estimates.push(ElasticityEstimate {
                year: y,
                carried_forward: true,
                ..tail.clone()
            });
        }
    }
    Ok(ElasticityTable {
        estimates,
        postprocessed: false,
    })
}
