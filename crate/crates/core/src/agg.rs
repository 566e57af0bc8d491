//! Economy-wide aggregation of firm-level measures with Domar weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpower::FirmMeasures;
use crate::numeric::pairwise_sum;

/// Tolerance used when checking corollary preconditions.
pub const MODE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedMoments {
    pub mean: f64,
    /// `None` when some value is not strictly positive.
    pub harmonic: Option<f64>,
    /// Weighted covariance with the second series, when given.
    pub cov: Option<f64>,
}

fn check_weights(weights: &[f64], n: usize) -> Result<f64> {
    if weights.len() != n {
        return Err(Error::Parameter(format!("{} weights for {n} values", weights.len())));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::DegenerateWeights("negative or NaN weight".into()));
    }
    let total = pairwise_sum(weights);
    if !(total > 0.0) {
        return Err(Error::DegenerateWeights("weights sum to zero".into()));
    }
    Ok(total)
}

/// `sum w x / sum w`.
pub fn weighted_mean(values: &[f64], weights: &[f64]) -> Result<f64> {
    let total = check_weights(weights, values.len())?;
    let wx: Vec<f64> = values.iter().zip(weights).map(|(x, w)| w * x).collect();
    Ok(pairwise_sum(&wx) / total)
}

/// `(sum w/x / sum w)^-1`.
pub fn harmonic_mean(values: &[f64], weights: &[f64]) -> Result<f64> {
    if let Some(v) = values.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!("harmonic mean of nonpositive value {v}")));
    }
    let inv: Vec<f64> = values.iter().map(|x| 1.0 / x).collect();
    Ok(1.0 / weighted_mean(&inv, weights)?)
}

/// `sum w (x - xbar)(y - ybar) / sum w`.
pub fn weighted_cov(x: &[f64], y: &[f64], weights: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Parameter("covariance series differ in length".into()));
    }
    let total = check_weights(weights, x.len())?;
    let (mx, my) = (weighted_mean(x, weights)?, weighted_mean(y, weights)?);
    let terms: Vec<f64> = (0..x.len()).map(|i| weights[i] * (x[i] - mx) * (y[i] - my)).collect();
    Ok(pairwise_sum(&terms) / total)
}

pub fn weighted_moments(values: &[f64], weights: &[f64], other: Option<&[f64]>) -> Result<WeightedMoments> {
    Ok(WeightedMoments {
        mean: weighted_mean(values, weights)?,
        harmonic: harmonic_mean(values, weights).ok(),
        cov: other.map(|y| weighted_cov(values, y, weights)).transpose()?,
    })
}

/// `sum (sale_i / gdp) s_i`.
pub fn profit_share_domar(sales: &[f64], profit_rates: &[f64], gdp: f64) -> Result<f64> {
    if !(gdp > 0.0) {
        return Err(Error::Domain(format!("GDP {gdp} must be positive")));
    }
    if sales.len() != profit_rates.len() {
        return Err(Error::Parameter("sales and profit rates differ in length".into()));
    }
    let terms: Vec<f64> = sales.iter().zip(profit_rates).map(|(s, r)| s / gdp * r).collect();
    Ok(pairwise_sum(&terms))
}

/// Sales-share weighted mean profit rate.
pub fn sales_weighted_rate(sales: &[f64], profit_rates: &[f64]) -> Result<f64> {
    weighted_mean(profit_rates, sales)
}

/// `sum (VA_i / GDP) (pi_i / VA_i)` from value-added weights and
/// value-added profit rates.
pub fn profit_share_va(va_weights: &[f64], va_profit_rates: &[f64]) -> Result<f64> {
    if va_weights.len() != va_profit_rates.len() {
        return Err(Error::Parameter("weights and rates differ in length".into()));
    }
    if let Some(w) = va_weights.iter().find(|w| !(**w > 0.0)) {
        return Err(Error::Domain(format!("nonpositive value-added weight {w}")));
    }
    let terms: Vec<f64> = va_weights.iter().zip(va_profit_rates).map(|(w, r)| w * r).collect();
    Ok(pairwise_sum(&terms))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TheoremMode {
    /// Markups, fixed costs, returns to scale and monopsony.
    Full,
    /// No monopsony.
    Cor1,
    /// No monopsony, no fixed costs.
    Cor2,
    /// No monopsony, no fixed costs, constant returns.
    Cor3,
}

impl TheoremMode {
    pub fn name(self) -> &'static str {
        match self {
            TheoremMode::Full => "full",
            TheoremMode::Cor1 => "cor1",
            TheoremMode::Cor2 => "cor2",
            TheoremMode::Cor3 => "cor3",
        }
    }
}

/// Firm inputs to the aggregation theorem.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoremFirm {
    pub id: String,
    /// Sales weight (normalized internally).
    pub omega: f64,
    pub markup: f64,
    pub rs: f64,
    pub fc_adj: f64,
    pub rs_adj: f64,
    pub monopsony: f64,
}

impl From<&FirmMeasures> for TheoremFirm {
    fn from(m: &FirmMeasures) -> Self {
        TheoremFirm {
            id: m.firm_id.clone(),
            omega: m.omega,
            markup: m.markup,
            rs: m.rs,
            fc_adj: m.fc_adj,
            rs_adj: m.rs_adj,
            monopsony: m.monopsony,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremComponents {
    pub chi: f64,
    pub mu_hsw: f64,
    pub rs_adj_bar: f64,
    pub m_bar: f64,
    pub cov_rs_invmu: f64,
    pub cov_m_invmu: f64,
    pub profit_share: f64,
}

fn mode_violations(firms: &[TheoremFirm], mode: TheoremMode) -> Vec<String> {
    let off = |x: f64, target: f64| (x - target).abs() > MODE_TOLERANCE;
    firms
        .iter()
        .filter(|f| match mode {
            TheoremMode::Full => false,
            TheoremMode::Cor1 => off(f.monopsony, 0.0),
            TheoremMode::Cor2 => off(f.monopsony, 0.0) || off(f.fc_adj, 1.0),
            TheoremMode::Cor3 => off(f.monopsony, 0.0) || off(f.fc_adj, 1.0) || off(f.rs, 1.0),
        })
        .map(|f| f.id.clone())
        .collect()
}

/// Aggregate profit share from sales-weighted firm measures:
/// `chi (1 - RS_adj/mu_hsw + M/mu_hsw - Cov[RS_adj, 1/mu] + Cov[M, 1/mu])`,
/// with the terms a corollary rules out set to zero after checking that the
/// data satisfy its restriction.
pub fn profit_share_theorem(chi: f64, firms: &[TheoremFirm], mode: TheoremMode) -> Result<TheoremComponents> {
    let bad = mode_violations(firms, mode);
    if !bad.is_empty() {
        return Err(Error::ModeMismatch {
            mode: mode.name().into(),
            firms: bad,
        });
    }
    let w: Vec<f64> = firms.iter().map(|f| f.omega).collect();
    let mu: Vec<f64> = firms.iter().map(|f| f.markup).collect();
    let inv_mu: Vec<f64> = mu.iter().map(|m| 1.0 / m).collect();
    let rs_adj: Vec<f64> = firms
        .iter()
        .map(|f| if mode == TheoremMode::Cor2 { f.rs } else { f.rs_adj })
        .collect();
    let m: Vec<f64> = firms.iter().map(|f| f.monopsony).collect();

    let mu_hsw = harmonic_mean(&mu, &w)?;
    let (rs_adj_bar, cov_rs_invmu) = match mode {
        TheoremMode::Cor3 => (1.0, 0.0),
        _ => (weighted_mean(&rs_adj, &w)?, weighted_cov(&rs_adj, &inv_mu, &w)?),
    };
    let (m_bar, cov_m_invmu) = match mode {
        TheoremMode::Full => (weighted_mean(&m, &w)?, weighted_cov(&m, &inv_mu, &w)?),
        _ => (0.0, 0.0),
    };
    let profit_share = match mode {
        TheoremMode::Cor3 => chi * (1.0 - 1.0 / mu_hsw),
        _ => chi * (1.0 - rs_adj_bar / mu_hsw + m_bar / mu_hsw - cov_rs_invmu + cov_m_invmu),
    };
    Ok(TheoremComponents {
        chi,
        mu_hsw,
        rs_adj_bar,
        m_bar,
        cov_rs_invmu,
        cov_m_invmu,
        profit_share,
    })
}

/// `(1 - profit_share/chi)^-1`.
pub fn markup_backout(chi: f64, profit_share: f64) -> Result<f64> {
    if !(profit_share < chi) {
        return Err(Error::Domain(format!(
            "profit share {profit_share} must be below the multiplier {chi}"
        )));
    }
    Ok(1.0 / (1.0 - profit_share / chi))
}

/// Error from backing out the aggregate markup while ignoring the network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkBias {
    /// `(chi - 1) L / ((1 - L)(chi - L))`, the gap between the naive and
    /// the true backed-out markup.
    pub factor: f64,
    /// Backed out with `chi = 1`.
    pub naive_markup: f64,
    pub true_markup: f64,
    /// `naive / true - 1`.
    pub relative_excess: f64,
    /// `(naive - 1) / (true - 1) - 1`: excess of the net markup.
    pub net_markup_excess: f64,
}

pub fn network_bias_factor(chi: f64, profit_share: f64) -> Result<NetworkBias> {
    if !(0.0..1.0).contains(&profit_share) || !(chi >= 1.0) {
        return Err(Error::Domain(format!(
            "need 0 <= profit share < 1 and chi >= 1 (got {profit_share}, {chi})"
        )));
    }
    let factor = (chi - 1.0) * profit_share / ((1.0 - profit_share) * (chi - profit_share));
    let naive_markup = markup_backout(1.0, profit_share)?;
    let true_markup = markup_backout(chi, profit_share)?;
    let net_markup_excess = if true_markup > 1.0 {
        (naive_markup - 1.0) / (true_markup - 1.0) - 1.0
    } else {
        0.0
    };
    Ok(NetworkBias {
        factor,
        naive_markup,
        true_markup,
        relative_excess: naive_markup / true_markup - 1.0,
        net_markup_excess,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RentsDecomposition {
    pub rents: f64,
    pub fixed_costs: f64,
    pub nonlinearities: f64,
}

impl RentsDecomposition {
    pub fn total(&self) -> f64 {
        self.rents + self.fixed_costs + self.nonlinearities
    }
}

/// Splits the no-monopsony profit share into monopoly rents, fixed costs
/// and non-linearities; `cov` is `Cov[RS_adj, 1/mu]`.
pub fn rents_decomposition(chi: f64, mu_hsw: f64, rs_adj_bar: f64, cov: f64) -> Result<RentsDecomposition> {
    if !(mu_hsw > 0.0) {
        return Err(Error::Domain(format!("aggregate markup {mu_hsw} must be positive")));
    }
    let inv = 1.0 / mu_hsw;
    Ok(RentsDecomposition {
        rents: chi * (1.0 - inv),
        fixed_costs: chi * (1.0 - rs_adj_bar),
        nonlinearities: chi * ((inv - 1.0) * (1.0 - rs_adj_bar) - cov),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncomeShares {
    pub labor: f64,
    pub capital: f64,
    pub profit: f64,
    /// Capital share below -0.05.
    pub implausible: bool,
}

pub fn income_shares(labor_comp: f64, gdp: f64, profit_share: f64) -> Result<IncomeShares> {
    if !(gdp > 0.0) {
        return Err(Error::Domain(format!("GDP {gdp} must be positive")));
    }
    let labor = labor_comp / gdp;
    let capital = 1.0 - labor - profit_share;
    Ok(IncomeShares {
        labor,
        capital,
        profit: profit_share,
        implausible: capital < -0.05,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MarkupScheme {
    Harmonic,
    SalesWeighted,
}

/// Alternative profit-share constructions for one year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfitShareVariants {
    /// Sales-weighted mean profit rate, no network scaling.
    pub sales_weighted_rate: f64,
    /// `chi (1 - RS_adj/mu_hsw - Cov)`.
    pub cor1: f64,
    /// `chi (1 - 1/mu_hsw)`.
    pub cor3_harmonic: f64,
    /// `chi (1 - 1/mu_sw)` with the arithmetic sales-weighted markup.
    pub cor3_sales_weighted: f64,
    /// `1 - 1/mu_hsw`, ignoring the network.
    pub cor3_no_network: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateYear {
    pub year: i32,
    pub n_firms: usize,
    pub chi: f64,
    pub mu_hsw: f64,
    /// Arithmetic sales-weighted markup.
    pub mu_sw: f64,
    /// The markup selected by the configured scheme.
    pub mu_agg: f64,
    pub rs_bar: f64,
    pub fc_adj_bar: f64,
    pub rs_adj_bar: f64,
    pub m_bar: f64,
    pub cov_rs_invmu: f64,
    pub cov_m_invmu: f64,
    pub profit_share_domar: f64,
    pub profit_share_thm: f64,
    pub variants: ProfitShareVariants,
    pub rents: f64,
    pub fixed_costs_term: f64,
    pub nonlinearities: f64,
    pub labor_share: f64,
    pub capital_share: f64,
    pub implausible_shares: bool,
}

/// Year aggregate from one year's firm measures. The sample's sales shares
/// are scaled to the economy with `chi`, so Domar weights are `omega * chi`.
pub fn aggregate_year(
    year: i32,
    chi: f64,
    gdp: f64,
    labor_comp: f64,
    measures: &[FirmMeasures],
    scheme: MarkupScheme,
) -> Result<AggregateYear> {
    if measures.is_empty() {
        return Err(Error::DegenerateWeights(format!("no firm measures in {year}")));
    }
    let firms: Vec<TheoremFirm> = measures.iter().map(TheoremFirm::from).collect();
    let thm = profit_share_theorem(chi, &firms, TheoremMode::Full)?;

    let w: Vec<f64> = measures.iter().map(|m| m.omega).collect();
    let mu: Vec<f64> = measures.iter().map(|m| m.markup).collect();
    let rates: Vec<f64> = measures.iter().map(|m| m.profit_rate).collect();
    let mu_sw = weighted_mean(&mu, &w)?;
    let rs_bar = weighted_mean(&measures.iter().map(|m| m.rs).collect::<Vec<_>>(), &w)?;
    let fc_adj_bar = weighted_mean(&measures.iter().map(|m| m.fc_adj).collect::<Vec<_>>(), &w)?;

    let total_w = pairwise_sum(&w);
    let scaled_sales: Vec<f64> = w.iter().map(|x| x / total_w * chi * gdp).collect();
    let domar = profit_share_domar(&scaled_sales, &rates, gdp)?;
    let rents = rents_decomposition(chi, thm.mu_hsw, thm.rs_adj_bar, thm.cov_rs_invmu)?;
    let shares = income_shares(labor_comp, gdp, domar)?;

    Ok(AggregateYear {
        year,
        n_firms: measures.len(),
        chi,
        mu_hsw: thm.mu_hsw,
        mu_sw,
        mu_agg: match scheme {
            MarkupScheme::Harmonic => thm.mu_hsw,
            MarkupScheme::SalesWeighted => mu_sw,
        },
        rs_bar,
        fc_adj_bar,
        rs_adj_bar: thm.rs_adj_bar,
        m_bar: thm.m_bar,
        cov_rs_invmu: thm.cov_rs_invmu,
        cov_m_invmu: thm.cov_m_invmu,
        profit_share_domar: domar,
        profit_share_thm: thm.profit_share,
        variants: ProfitShareVariants {
            sales_weighted_rate: sales_weighted_rate(&w, &rates)?,
            cor1: chi * (1.0 - thm.rs_adj_bar / thm.mu_hsw - thm.cov_rs_invmu),
            cor3_harmonic: chi * (1.0 - 1.0 / thm.mu_hsw),
            cor3_sales_weighted: chi * (1.0 - 1.0 / mu_sw),
            cor3_no_network: 1.0 - 1.0 / thm.mu_hsw,
        },
        rents: rents.rents,
        fixed_costs_term: rents.fixed_costs,
        nonlinearities: rents.nonlinearities,
        labor_share: shares.labor,
        capital_share: shares.capital,
        implausible_shares: shares.implausible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn firm(omega: f64, markup: f64, rs: f64, fc_adj: f64, monopsony: f64) -> TheoremFirm {
        TheoremFirm {
            id: format!("f{omega}-{markup}"),
            omega,
            markup,
            rs,
            fc_adj,
            rs_adj: rs * fc_adj,
            monopsony,
        }
    }

    #[test]
    fn moments_of_equal_values() {
        let m = weighted_moments(&[1.3; 4], &[0.1, 0.2, 0.3, 0.4], Some(&[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert!(close(m.mean, 1.3, 1e-15));
        assert!(close(m.harmonic.unwrap(), 1.3, 1e-15));
        assert!(close(m.cov.unwrap(), 0.0, 1e-15));
    }

    #[test]
    fn harmonic_of_one_and_two() {
        assert!(close(harmonic_mean(&[1.0, 2.0], &[0.5, 0.5]).unwrap(), 4.0 / 3.0, 1e-15));
        assert!(harmonic_mean(&[1.0, 2.0], &[0.5, 0.5]).unwrap() < weighted_mean(&[1.0, 2.0], &[0.5, 0.5]).unwrap());
        assert!(harmonic_mean(&[1.0, 0.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn vertical_economy_shares() {
        let sales = [100.0, 90.0];
        let rates = [0.1, 0.1];
        assert!(close(profit_share_domar(&sales, &rates, 100.0).unwrap(), 0.19, 1e-12));
        assert!(close(sales_weighted_rate(&sales, &rates).unwrap(), 0.10, 1e-12));
        assert_eq!(profit_share_domar(&sales, &[0.0, 0.0], 100.0).unwrap(), 0.0);
        assert!(profit_share_domar(&sales, &rates, 0.0).is_err());
        // value added (10, 90), profits (10, 9)
        assert!(close(profit_share_va(&[0.1, 0.9], &[1.0, 0.1]).unwrap(), 0.19, 1e-12));
        assert!(close(profit_share_va(&[1.0], &[0.23]).unwrap(), 0.23, 1e-15));
        assert!(profit_share_va(&[0.0], &[0.1]).is_err());
    }

    #[test]
    fn theorem_examples() {
        let firms: Vec<_> = (0..3).map(|i| firm(1.0 + i as f64, 1.25, 1.0, 1.0, 0.0)).collect();
        let full = profit_share_theorem(1.0, &firms, TheoremMode::Full).unwrap();
        assert!(close(full.profit_share, 0.2, 1e-12));

        let mu = 10.0 / 9.0;
        let cor3 = profit_share_theorem(2.0, &[firm(1.0, mu, 1.0, 1.0, 0.0)], TheoremMode::Cor3).unwrap();
        assert!(close(cor3.profit_share, 0.2, 1e-12));

        let zero: Vec<_> = [(0.3, 1.1), (0.5, 1.4), (0.2, 0.9)]
            .iter()
            .map(|&(w, mu)| firm(w, mu, mu, 1.0, 0.0))
            .collect();
        let t = profit_share_theorem(1.7, &zero, TheoremMode::Full).unwrap();
        assert!(close(t.profit_share, 0.0, 1e-12));
        assert!(close(t.cov_rs_invmu, 1.0 - t.rs_adj_bar / t.mu_hsw, 1e-12));
    }

    #[test]
    fn mode_mismatch_lists_offenders() {
        let firms = vec![firm(0.5, 1.2, 1.0, 1.0, 0.0), firm(0.5, 1.3, 1.0, 1.1, 0.0)];
        match profit_share_theorem(1.5, &firms, TheoremMode::Cor2) {
            Err(Error::ModeMismatch { mode, firms: bad }) => {
                assert_eq!(mode, "cor2");
                assert_eq!(bad, vec![firms[1].id.clone()]);
            }
            other => panic!("expected mode mismatch, got {other:?}"),
        }
        assert!(profit_share_theorem(1.5, &firms, TheoremMode::Cor1).is_ok());
        let mono = vec![firm(1.0, 1.2, 1.0, 1.0, 0.05)];
        assert!(profit_share_theorem(1.5, &mono, TheoremMode::Cor1).is_err());
    }

    #[test]
    fn backout_examples() {
        assert_eq!(markup_backout(1.7, 0.0).unwrap(), 1.0);
        assert!(close(markup_backout(2.0, 0.2).unwrap(), 10.0 / 9.0, 1e-12));
        assert!(markup_backout(2.0, 2.0).is_err());
        let mu = markup_backout(2.3, 0.37).unwrap();
        let back = profit_share_theorem(2.3, &[firm(1.0, mu, 1.0, 1.0, 0.0)], TheoremMode::Cor3).unwrap();
        assert!(close(back.profit_share, 0.37, 1e-12));
    }

    #[test]
    fn network_bias_examples() {
        assert_eq!(network_bias_factor(1.0, 0.3).unwrap().factor, 0.0);
        assert_eq!(network_bias_factor(2.0, 0.0).unwrap().factor, 0.0);
        let b = network_bias_factor(2.0, 0.2).unwrap();
        assert!(close(b.factor, 0.2 / (0.8 * 1.8), 1e-15));
        assert!(close(b.factor, 0.13889, 1e-5));
        assert!(close(b.naive_markup, 1.25, 1e-12));
        assert!(close(b.true_markup, 10.0 / 9.0, 1e-12));
        assert!(close(b.naive_markup - b.true_markup, b.factor, 1e-12));
        assert!(close(b.relative_excess, 0.125, 1e-12));
        assert!(close(b.net_markup_excess, 1.25, 1e-12));
    }

    #[test]
    fn rents_examples() {
        let r = rents_decomposition(2.0, 1.25, 1.0, 0.0).unwrap();
        assert!(close(r.rents, 0.4, 1e-12));
        assert_eq!(r.fixed_costs, 0.0);
        assert!(close(r.nonlinearities, 0.0, 1e-12));
        assert_eq!(rents_decomposition(1.8, 1.0, 1.1, 0.01).unwrap().rents, 0.0);
        let (chi, mu, rs, cov) = (1.9, 1.21, 1.08, -0.004);
        let r = rents_decomposition(chi, mu, rs, cov).unwrap();
        assert!(close(r.total(), chi * (1.0 - rs / mu - cov), 1e-12));
    }

    #[test]
    fn income_share_examples() {
        let s = income_shares(55.0, 100.0, 0.18).unwrap();
        assert!(close(s.capital, 0.27, 1e-12));
        assert!(close(s.labor + s.capital + s.profit, 1.0, 1e-15));
        assert_eq!(income_shares(100.0, 100.0, 0.0).unwrap().capital, 0.0);
        assert!(income_shares(90.0, 100.0, 0.2).unwrap().implausible);
    }
}
