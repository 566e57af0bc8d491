//! Decomposition of changes in the aggregate markup, concentration and
//! markup-distribution statistics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpower::FirmMeasures;
use crate::numeric::{nearest_rank_sorted, pairwise_sum};
use crate::panel::PanelDataset;

/// Firm sets linking two consecutive years.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Churn {
    pub incumbents: BTreeSet<String>,
    pub entrants: BTreeSet<String>,
    pub exiters: BTreeSet<String>,
}

pub fn classify_ids<'a>(
    prev: impl IntoIterator<Item = &'a str>,
    cur: impl IntoIterator<Item = &'a str>,
) -> Churn {
    let prev: BTreeSet<String> = prev.into_iter().map(str::to_owned).collect();
    let cur: BTreeSet<String> = cur.into_iter().map(str::to_owned).collect();
    Churn {
        incumbents: prev.intersection(&cur).cloned().collect(),
        entrants: cur.difference(&prev).cloned().collect(),
        exiters: prev.difference(&cur).cloned().collect(),
    }
}

/// Incumbents, entrants in `t` and exiters after `t - 1`.
pub fn classify_firms(data: &PanelDataset, t: i32) -> Result<Churn> {
    let years = data.years();
    if !years.contains(&(t - 1)) || !years.contains(&t) {
        return Err(Error::NoPriorYear(t));
    }
    let ids = |y: i32| {
        data.observations()
            .iter()
            .filter(move |o| o.year == y)
            .map(|o| o.firm_id.as_str())
    };
    Ok(classify_ids(ids(t - 1), ids(t)))
}

/// One firm's sales and markup in a year.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkupObs {
    pub firm_id: String,
    pub sale: f64,
    pub markup: f64,
}

impl From<&FirmMeasures> for MarkupObs {
    fn from(m: &FirmMeasures) -> Self {
        MarkupObs {
            firm_id: m.firm_id.clone(),
            sale: m.sale,
            markup: m.markup,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Reference {
    /// Centre on the mean of the two years' inverse aggregate markups.
    Midpoint,
    /// Centre on a given inverse-markup level.
    Custom(f64),
    /// The formula as printed: divided by the product of the aggregate
    /// markups and centred on their mean. Not additive; see `residual`.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionTerms {
    pub year_prev: i32,
    pub year: i32,
    pub delta_mu: f64,
    pub within: f64,
    pub between: f64,
    pub net_entry: f64,
    /// Reference level used for between and net entry.
    pub c: f64,
    /// `delta_mu - within - between - net_entry`.
    pub residual: f64,
}

struct YearShares {
    omega: BTreeMap<String, f64>,
    inv_mu: BTreeMap<String, f64>,
    h: f64,
}

fn year_shares(obs: &[MarkupObs], year: i32) -> Result<YearShares> {
    if obs.is_empty() {
        return Err(Error::DegenerateWeights(format!("no firms in {year}")));
    }
    if let Some(o) = obs.iter().find(|o| !(o.sale > 0.0) || !(o.markup > 0.0)) {
        return Err(Error::Domain(format!(
            "firm {} in {year} needs positive sales and markup",
            o.firm_id
        )));
    }
    let total = pairwise_sum(&obs.iter().map(|o| o.sale).collect::<Vec<_>>());
    let omega: BTreeMap<String, f64> = obs.iter().map(|o| (o.firm_id.clone(), o.sale / total)).collect();
    if omega.len() != obs.len() {
        return Err(Error::Parameter(format!("duplicate firm ids in {year}")));
    }
    let inv_mu: BTreeMap<String, f64> = obs.iter().map(|o| (o.firm_id.clone(), 1.0 / o.markup)).collect();
    let h = pairwise_sum(&omega.iter().map(|(id, w)| w * inv_mu[id]).collect::<Vec<_>>());
    Ok(YearShares { omega, inv_mu, h })
}

/// Splits the change in the harmonic sales-weighted markup between two
/// years into within-firm, between-firm (reallocation across incumbents)
/// and net-entry contributions.
pub fn markup_change_decomposition(
    prev: &[MarkupObs],
    cur: &[MarkupObs],
    years: (i32, i32),
    reference: Reference,
) -> Result<DecompositionTerms> {
    let p = year_shares(prev, years.0)?;
    let q = year_shares(cur, years.1)?;
    let churn = classify_ids(p.omega.keys().map(String::as_str), q.omega.keys().map(String::as_str));
    let (mu_p, mu_q) = (1.0 / p.h, 1.0 / q.h);
    let delta_mu = mu_q - mu_p;
    let s = mu_p * mu_q;

    let (scale, c, c_between) = match reference {
        Reference::Midpoint => (s, 0.5 * (p.h + q.h), 0.5 * (p.h + q.h)),
        Reference::Custom(c) => (s, c, c),
        Reference::Literal => (1.0 / s, 0.5 * (mu_p + mu_q), 0.0),
    };

    let mut within = Vec::new();
    let mut between = Vec::new();
    for id in &churn.incumbents {
        let w_bar = 0.5 * (p.omega[id] + q.omega[id]);
        let m_bar = 0.5 * (p.inv_mu[id] + q.inv_mu[id]);
        within.push(w_bar * (q.inv_mu[id] - p.inv_mu[id]));
        between.push((q.omega[id] - p.omega[id]) * (m_bar - c_between));
    }
    let mut entry: Vec<f64> = churn.entrants.iter().map(|id| q.omega[id] * (q.inv_mu[id] - c)).collect();
    entry.extend(churn.exiters.iter().map(|id| -p.omega[id] * (p.inv_mu[id] - c)));

    let within = -scale * pairwise_sum(&within);
    let between = -scale * pairwise_sum(&between);
    let net_entry = -scale * pairwise_sum(&entry);
    Ok(DecompositionTerms {
        year_prev: years.0,
        year: years.1,
        delta_mu,
        within,
        between,
        net_entry,
        c,
        residual: delta_mu - within - between - net_entry,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scope {
    National,
    Industry(u16),
}

impl std::fmt::Display for Scope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scope::National => f.write_str("national"),
            Scope::Industry(code) => write!(f, "{code}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRecord {
    pub year: i32,
    pub scope: Scope,
    pub hhi: f64,
    pub n_firms: usize,
}

/// Sum of squared sales shares.
pub fn hhi_of_sales(sales: &[f64]) -> Result<f64> {
    let total = pairwise_sum(sales);
    if !(total > 0.0) || sales.iter().any(|s| *s < 0.0) {
        return Err(Error::Domain("concentration needs nonnegative sales with a positive total".into()));
    }
    Ok(pairwise_sum(&sales.iter().map(|s| (s / total).powi(2)).collect::<Vec<_>>()))
}

pub fn hhi(data: &PanelDataset, year: i32, scope: Scope) -> Result<ConcentrationRecord> {
    let sales: Vec<f64> = data
        .observations()
        .iter()
        .filter(|o| o.year == year)
        .filter(|o| match scope {
            Scope::National => true,
            Scope::Industry(code) => o.industry == Some(code),
        })
        .map(|o| o.sale.unwrap_or(0.0))
        .collect();
    Ok(ConcentrationRecord {
        year,
        scope,
        hhi: hhi_of_sales(&sales)?,
        n_firms: sales.len(),
    })
}

pub const PERCENTILES: [f64; 6] = [0.10, 0.25, 0.50, 0.75, 0.90, 0.95];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileTable {
    pub n: usize,
    /// Values at [`PERCENTILES`].
    pub values: [f64; 6],
    /// Markups below one (prices under marginal cost).
    pub below_one: usize,
}

/// Nearest-rank percentiles of firm markups; with weights, the smallest
/// value whose cumulative weight share reaches each level.
pub fn distribution_stats(markups: &[f64], weights: Option<&[f64]>) -> Result<PercentileTable> {
    if markups.is_empty() || markups.iter().any(|m| m.is_nan()) {
        return Err(Error::Domain("markup distribution needs a nonempty sample without NaN".into()));
    }
    let below_one = markups.iter().filter(|m| **m < 1.0).count();
    let values = match weights {
        None => {
            let mut sorted = markups.to_vec();
            sorted.sort_by(f64::total_cmp);
            PERCENTILES.map(|p| nearest_rank_sorted(&sorted, p))
        }
        Some(w) => {
            if w.len() != markups.len() || w.iter().any(|x| !(*x >= 0.0)) {
                return Err(Error::DegenerateWeights("invalid percentile weights".into()));
            }
            let total = pairwise_sum(w);
            if !(total > 0.0) {
                return Err(Error::DegenerateWeights("percentile weights sum to zero".into()));
            }
            let mut pairs: Vec<(f64, f64)> = markups.iter().copied().zip(w.iter().copied()).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            PERCENTILES.map(|p| {
                let mut acc = 0.0;
                for &(m, wi) in &pairs {
                    acc += wi / total;
                    if acc >= p - 1e-12 {
                        return m;
                    }
                }
                pairs.last().expect("nonempty").0
            })
        }
    };
    Ok(PercentileTable {
        n: markups.len(),
        values,
        below_one,
    })
}
