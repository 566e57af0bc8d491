//! Firm-year market-power measures.
//!
//! Markups follow the cost-share rule `theta / alpha`; profit rates follow
//! `1 - RS_adj/mu + M/mu`, where `RS_adj = RS * TC/(TC - FC)` and `M` is the
//! monopsony term `fc_adj * sum_j theta_j (1 - nu_j)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;
use crate::panel::{FirmYear, PanelDataset};
use crate::pfe::{CapitalMeasure, ElasticityTable, VariableInput};

/// `theta_v * sale / variable_cost`.
pub fn markup(theta_v: f64, sale: f64, variable_cost: f64) -> Result<f64> {
    if !(variable_cost > 0.0) || !(sale > 0.0) || !(theta_v > 0.0) {
        return Err(Error::UndefinedMarkup);
    }
    Ok(theta_v * sale / variable_cost)
}

/// `tc / (tc - fc)`.
pub fn fixed_cost_adjustment(tc: f64, fc: f64) -> Result<f64> {
    if fc < 0.0 || !fc.is_finite() || !tc.is_finite() {
        return Err(Error::Domain(format!("invalid costs tc = {tc}, fc = {fc}")));
    }
    if fc >= tc {
        return Err(Error::FixedCostsExhaust);
    }
    Ok(tc / (tc - fc))
}

/// `fc_adj * sum_j theta_j (1 - nu_j)` over `(theta_j, nu_j)` pairs.
pub fn monopsony_term(fc_adj: f64, inputs: &[(f64, f64)]) -> Result<f64> {
    let mut terms = Vec::with_capacity(inputs.len());
    for &(theta, nu) in inputs {
        if !(nu > 0.0 && nu <= 1.0) {
            return Err(Error::Domain(format!("markdown {nu} outside (0, 1]")));
        }
        if !(theta >= 0.0) {
            return Err(Error::Domain(format!("negative elasticity {theta}")));
        }
        terms.push(theta * (1.0 - nu));
    }
    Ok(fc_adj * pairwise_sum(&terms))
}

/// `1 - rs_adj/mu + m/mu`.
pub fn profit_rate(mu: f64, rs_adj: f64, m: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::Domain(format!("markup {mu} must be positive")));
    }
    Ok(1.0 - rs_adj / mu + m / mu)
}

/// Profit rate with a common, exogenous user cost of capital:
/// `1 - theta_v/mu - r k/sale - fc/sale`.
pub fn profit_rate_exogenous_r(theta_v: f64, mu: f64, r: f64, k: f64, sale: f64, fc: f64) -> Result<f64> {
    if !(mu > 0.0) || !(sale > 0.0) {
        return Err(Error::Domain(format!("need mu > 0 and sale > 0 (mu = {mu}, sale = {sale})")));
    }
    Ok(1.0 - theta_v / mu - r * k / sale - fc / sale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UserCostMethod {
    /// From the firm's capital first-order condition.
    Foc,
    /// Nominal rate minus inflation plus a fixed depreciation rate.
    Deu,
    /// An ingested series.
    External,
}

/// Inputs to [`user_cost`]; only the fields the method needs are read.
#[derive(Debug, Clone, Copy, Default)]
pub struct UserCostInputs {
    pub theta_k: f64,
    pub mu: f64,
    pub sale: f64,
    pub k: f64,
    pub nominal_rate: f64,
    pub inflation: f64,
    pub depreciation: f64,
    pub external: Option<f64>,
}

pub fn user_cost(method: UserCostMethod, x: &UserCostInputs) -> Result<f64> {
    match method {
        UserCostMethod::Foc => {
            if !(x.k > 0.0) || !(x.mu > 0.0) {
                return Err(Error::Domain(format!(
                    "user cost undefined for k = {}, mu = {}",
                    x.k, x.mu
                )));
            }
            Ok(x.theta_k / x.mu * x.sale / x.k)
        }
        UserCostMethod::Deu => Ok(x.nominal_rate - x.inflation + x.depreciation),
        UserCostMethod::External => x
            .external
            .ok_or_else(|| Error::Domain("external user-cost series has no value for this year".into())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateUserCost {
    /// `GDP/K * (1 - labor share - profit share)`.
    pub macro_r: f64,
    /// Capital-weighted mean of firm-level user costs.
    pub firm_weighted: Option<f64>,
    /// Firms without a usable user cost or capital stock.
    pub excluded: usize,
}

/// Aggregate user cost from the income identity, alongside the
/// capital-weighted mean of the given firm-level `(r, k)` pairs.
pub fn aggregate_user_cost(
    gdp: f64,
    capital: f64,
    labor_share: f64,
    profit_share: f64,
    firm_costs: &[(Option<f64>, Option<f64>)],
) -> Result<AggregateUserCost> {
    if !(capital > 0.0) {
        return Err(Error::DegenerateWeights(format!("aggregate capital {capital} is not positive")));
    }
    let macro_r = gdp / capital * (1.0 - labor_share - profit_share);
    let mut rk = Vec::new();
    let mut ks = Vec::new();
    let mut excluded = 0;
    for &(r, k) in firm_costs {
        match (r, k) {
            (Some(r), Some(k)) if k > 0.0 && r.is_finite() => {
                rk.push(r * k);
                ks.push(k);
            }
            _ => excluded += 1,
        }
    }
    let ksum = pairwise_sum(&ks);
    let firm_weighted = (ksum > 0.0).then(|| pairwise_sum(&rk) / ksum);
    Ok(AggregateUserCost {
        macro_r,
        firm_weighted,
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureConfig {
    pub variable_input: VariableInput,
    pub capital: CapitalMeasure,
    pub user_cost: UserCostMethod,
    pub deu_depreciation: f64,
    /// Count capital services `r k` in total costs.
    pub tc_includes_capital: bool,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig {
            variable_input: VariableInput::Opex,
            capital: CapitalMeasure::Total,
            user_cost: UserCostMethod::Foc,
            deu_depreciation: 0.12,
            tc_includes_capital: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmMeasures {
    pub firm_id: String,
    pub year: i32,
    pub industry: Option<u16>,
    pub sale: f64,
    pub markup: f64,
    pub alpha_v: f64,
    pub theta_v: f64,
    pub theta_k: f64,
    pub rs: f64,
    pub fc_adj: f64,
    pub rs_adj: f64,
    pub monopsony: f64,
    pub profit_rate: f64,
    pub user_cost: Option<f64>,
    pub capital: Option<f64>,
    pub tc: f64,
    pub fc: f64,
    /// Sales share within the year's sample.
    pub omega: f64,
    pub domar_weight: f64,
}

/// Rows that could not be measured, by reason.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeasureReport {
    pub no_elasticity: usize,
    pub undefined_markup: usize,
    pub no_capital: usize,
    pub fixed_costs_exhaust: usize,
    /// Kept rows whose user cost could not be computed (excluded from
    /// user-cost aggregates).
    pub user_cost_missing: usize,
}

impl MeasureReport {
    pub fn dropped(&self) -> usize {
        self.no_elasticity + self.undefined_markup + self.no_capital + self.fixed_costs_exhaust
    }
}

fn capital_of(o: &FirmYear, cfg: &MeasureConfig) -> Option<f64> {
    match cfg.capital {
        CapitalMeasure::Total => Some(o.ppegt_lag? + o.k_int_lag?),
        CapitalMeasure::Physical => o.ppegt_lag,
    }
    .filter(|k| *k > 0.0)
}

fn firm_measure(
    o: &FirmYear,
    theta_v: f64,
    theta_k: f64,
    cfg: &MeasureConfig,
    data: &PanelDataset,
    report: &mut MeasureReport,
) -> Result<Option<FirmMeasures>> {
    let sale = o.sale.unwrap_or(0.0);
    let cogs = o.cogs.unwrap_or(0.0);
    let sga = o.sga.unwrap_or(0.0);
    let rd = o.rd.unwrap_or(0.0);
    // SG&A is a fixed cost whenever it is not part of the variable input
    let (vc, fc) = match cfg.variable_input {
        VariableInput::Opex => (cogs + sga, rd),
        VariableInput::Cogs => (cogs, sga + rd),
    };
    let mu = match markup(theta_v, sale, vc) {
        Ok(mu) => mu,
        Err(_) => {
            report.undefined_markup += 1;
            return Ok(None);
        }
    };
    let k = capital_of(o, cfg);
    let macro_year = data.macro_year(o.year);
    let inputs = UserCostInputs {
        theta_k,
        mu,
        sale,
        k: k.unwrap_or(0.0),
        nominal_rate: macro_year.map_or(f64::NAN, |m| m.nominal_rate),
        inflation: macro_year.map_or(f64::NAN, |m| m.inflation),
        depreciation: cfg.deu_depreciation,
        external: macro_year.and_then(|m| m.external_r),
    };
    let r = user_cost(cfg.user_cost, &inputs).ok().filter(|r| r.is_finite());
    let rs = theta_v + theta_k;

    // capital services: under the first-order condition r k = theta_k sale / mu
    let capital_cost = match cfg.user_cost {
        UserCostMethod::Foc => Some(theta_k * sale / mu),
        _ => match (r, k) {
            (Some(r), Some(k)) => Some(r * k),
            _ => None,
        },
    };
    let Some(capital_cost) = capital_cost else {
        report.no_capital += 1;
        return Ok(None);
    };
    let tc = vc + fc + if cfg.tc_includes_capital { capital_cost } else { 0.0 };
    let fc_adj = match fixed_cost_adjustment(tc, fc) {
        Ok(v) => v,
        Err(_) => {
            report.fixed_costs_exhaust += 1;
            return Ok(None);
        }
    };
    let rs_adj = rs * fc_adj;
    let monopsony = 0.0;
    let s_pi = match cfg.user_cost {
        UserCostMethod::Foc => profit_rate(mu, rs_adj, monopsony)?,
        _ => profit_rate_exogenous_r(theta_v, mu, r.unwrap_or(0.0), k.unwrap_or(0.0), sale, fc)?,
    };
    if r.is_none() {
        report.user_cost_missing += 1;
    }
    Ok(Some(FirmMeasures {
        firm_id: o.firm_id.clone(),
        year: o.year,
        industry: o.industry,
        sale,
        markup: mu,
        alpha_v: vc / sale,
        theta_v,
        theta_k,
        rs,
        fc_adj,
        rs_adj,
        monopsony,
        profit_rate: s_pi,
        user_cost: r,
        capital: k,
        tc,
        fc,
        omega: 0.0,
        domar_weight: 0.0,
    }))
}

/// Computes measures for every observation with an elasticity estimate,
/// then fills sales shares and Domar weights per year. Domar weights scale
/// the sample sales shares by the macro input-output multiplier.
pub fn compute_firm_measures(
    data: &PanelDataset,
    elasticities: &ElasticityTable,
    cfg: &MeasureConfig,
) -> Result<(Vec<FirmMeasures>, MeasureReport)> {
    let index = elasticities.index();
    let mut report = MeasureReport::default();
    let mut out = Vec::with_capacity(data.len());
    for o in data.observations() {
        let est = o.industry.and_then(|ind| index.get(&(ind, o.year)));
        let Some((theta_v, theta_k)) = est.and_then(|e| Some((e.theta_v?, e.theta_k?))) else {
            report.no_elasticity += 1;
            continue;
        };
        if let Some(m) = firm_measure(o, theta_v, theta_k, cfg, data, &mut report)? {
            out.push(m);
        }
    }
    fill_weights(&mut out, data)?;
    Ok((out, report))
}

fn fill_weights(measures: &mut [FirmMeasures], data: &PanelDataset) -> Result<()> {
    let mut years: Vec<i32> = measures.iter().map(|m| m.year).collect();
    years.sort_unstable();
    years.dedup();
    for year in years {
        let idx: Vec<usize> = (0..measures.len()).filter(|&i| measures[i].year == year).collect();
        let sales: Vec<f64> = idx.iter().map(|&i| measures[i].sale).collect();
        let total = pairwise_sum(&sales);
        if !(total > 0.0) {
            return Err(Error::DegenerateWeights(format!("zero total sales in {year}")));
        }
        let chi = data
            .macro_year(year)
            .map(|m| m.chi())
            .ok_or_else(|| Error::DegenerateWeights(format!("no macro series for {year}")))?;
        for &i in &idx {
            measures[i].omega = measures[i].sale / total;
            measures[i].domar_weight = measures[i].omega * chi;
        }
    }
    Ok(())
}
