use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{TruthFirm, TruthRecord, TruthTotals};
use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;
use crate::panel::{FirmYear, MacroYear, PanelDataset};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndustryTruth {
    pub code: u16,
    pub theta_v: f64,
    pub theta_k: f64,
}

/// Parameters of a simulated Cobb-Douglas firm panel.
///
/// Log productivity follows a zero-mean AR(1). Firms choose the variable
/// input from its first-order condition after seeing current productivity
/// and their (persistent, randomly drifting) markup, so the input is
/// correlated with productivity; capital is chosen a year ahead. The proxy
/// is log-linear in productivity, capital and the markup.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub n_firms: usize,
    pub n_years: usize,
    pub first_year: i32,
    /// Firms are assigned to industries round-robin.
    pub industries: Vec<IndustryTruth>,
    pub rho: f64,
    pub innovation_sd: f64,
    /// Standard deviation of the multiplicative output noise.
    pub noise_sd: f64,
    /// Geometric mean markup.
    pub markup_mean: f64,
    /// Stationary standard deviation of the log markup.
    pub markup_sd: f64,
    pub markup_rho: f64,
    /// Mean of the log capital stock and its stationary dispersion.
    pub capital_mean: f64,
    pub capital_sd: f64,
    pub capital_rho: f64,
    /// Response of next year's log capital to current productivity.
    pub capital_feedback: f64,
    /// R&D (fixed cost) as a share of sales, drawn per firm.
    pub rd_share: (f64, f64),
    /// Share of variable spending booked as COGS (the rest is SG&A).
    pub cogs_share: f64,
    /// Share of the capital stock that is intangible.
    pub intangible_share: f64,
    /// Economy-wide sales over GDP used for the macro series.
    pub chi: f64,
    pub labor_share: f64,
    pub deflator_growth: f64,
    pub nominal_rate: f64,
    pub inflation: f64,
    /// User cost of capital implied for a typical firm; sets the money
    /// scale of reported capital stocks relative to sales.
    pub typical_user_cost: f64,
    /// Share of firms observed for only part of the sample: they enter
    /// during the first third and exit during the last third.
    pub churn: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 0,
            n_firms: 200,
            n_years: 20,
            first_year: 2000,
            industries: vec![IndustryTruth {
                code: 31,
                theta_v: 0.7,
                theta_k: 0.3,
            }],
            rho: 0.8,
            innovation_sd: 0.005,
            noise_sd: 0.0,
            markup_mean: 1.2,
            markup_sd: 0.5,
            markup_rho: 0.0,
            capital_mean: 3.0,
            capital_sd: 1.0,
            capital_rho: 0.7,
            capital_feedback: 0.3,
            rd_share: (0.005, 0.04),
            cogs_share: 0.75,
            intangible_share: 0.3,
            chi: 1.8,
            labor_share: 0.55,
            deflator_growth: 0.02,
            nominal_rate: 0.05,
            inflation: 0.02,
            typical_user_cost: 0.12,
            churn: 0.0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Parameter(m.to_string()));
        if self.n_firms == 0 || self.n_years < 2 {
            return bad("need at least one firm and two years");
        }
        if self.industries.is_empty() {
            return bad("need at least one industry");
        }
        for ind in &self.industries {
            if !(ind.theta_v > 0.0 && ind.theta_v < 1.0 && ind.theta_k >= 0.0) {
                return bad("elasticities need 0 < theta_v < 1 and theta_k >= 0");
            }
        }
        for (name, r) in [("rho", self.rho), ("markup_rho", self.markup_rho), ("capital_rho", self.capital_rho)] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Parameter(format!("{name} = {r} outside [0, 1)")));
            }
        }
        if [self.innovation_sd, self.noise_sd, self.markup_sd, self.capital_sd]
            .iter()
            .any(|s| !(*s >= 0.0))
        {
            return bad("standard deviations must be nonnegative");
        }
        if !(self.markup_mean > 0.0) || !(self.chi > 0.0) {
            return bad("markup mean and multiplier must be positive");
        }
        if !(self.rd_share.0 >= 0.0 && self.rd_share.1 >= self.rd_share.0) {
            return bad("invalid R&D share range");
        }
        if !(self.cogs_share > 0.0 && self.cogs_share < 1.0) || !(0.0..1.0).contains(&self.intangible_share) {
            return bad("COGS and intangible shares must lie in (0, 1)");
        }
        if !(self.typical_user_cost > 0.0) {
            return bad("typical user cost must be positive");
        }
        if !(0.0..=1.0).contains(&self.churn) {
            return bad("churn must lie in [0, 1]");
        }
        Ok(())
    }
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("validated standard deviation")
}

fn stationary(sd: f64, rho: f64) -> Normal<f64> {
    normal(sd / (1.0 - rho * rho).sqrt())
}

/// Simulates the panel in nominal terms with its macro series, and the
/// real-valued truth for every firm-year.
pub fn gen_cobb_douglas_panel(spec: &SyntheticSpec) -> Result<(PanelDataset, TruthRecord)> {
    spec.validate()?;
    let t_n = spec.n_years;
    let deflator: Vec<f64> = (0..t_n).map(|t| (1.0 + spec.deflator_growth).powi(t as i32)).collect();
    let a0 = 4.0;
    let markup_sd = spec.markup_sd * (1.0 - spec.markup_rho * spec.markup_rho).sqrt();
    let capital_sd = spec.capital_sd * (1.0 - spec.capital_rho * spec.capital_rho).sqrt();

    let mut rows = Vec::with_capacity(spec.n_firms * t_n);
    let mut firms = Vec::with_capacity(spec.n_firms * t_n);
    for i in 0..spec.n_firms {
        let ind = spec.industries[i % spec.industries.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64 + 1);
        let (tv, tk) = (ind.theta_v, ind.theta_k);
        // money value of one unit of log-capital services, constant within an
        // industry so it only shifts the production-function intercept
        let capital_scale = {
            let (mu, k) = (spec.markup_mean, spec.capital_mean);
            let l = (tv.ln() - mu.ln() + a0 + tk * k) / (1.0 - tv);
            let sale = (a0 + tv * l + tk * k).exp();
            tk.max(0.01) * sale / (mu * spec.typical_user_cost * k.exp())
        };
        let rd_share = if spec.rd_share.1 > spec.rd_share.0 {
            rng.gen_range(spec.rd_share.0..spec.rd_share.1)
        } else {
            spec.rd_share.0
        };
        let firm_capital = spec.capital_mean + normal(0.5).sample(&mut rng);

        let mut omega = stationary(spec.innovation_sd, spec.rho).sample(&mut rng);
        let mut m = stationary(markup_sd, spec.markup_rho).sample(&mut rng);
        let mut k = firm_capital + stationary(capital_sd, spec.capital_rho).sample(&mut rng);
        let id = format!("F{i:05}");
        // spells come from their own stream so churn leaves the draws above untouched
        let spell = if spec.churn > 0.0 {
            let mut r = ChaCha8Rng::seed_from_u64(spec.seed);
            r.set_stream(u64::MAX - i as u64);
            if r.gen_bool(spec.churn) {
                let third = (t_n / 3).max(1);
                (r.gen_range(0..third), t_n - r.gen_range(0..third))
            } else {
                (0, t_n)
            }
        } else {
            (0, t_n)
        };

        #[allow(clippy::needless_range_loop)]
        for t in 0..t_n {
            if t > 0 {
                omega = spec.rho * omega + normal(spec.innovation_sd).sample(&mut rng);
                m = spec.markup_rho * m + normal(markup_sd).sample(&mut rng);
            }
            let log_mu = spec.markup_mean.ln() + m;
            let l = (tv.ln() - log_mu + a0 + omega + tk * k) / (1.0 - tv);
            let eps = normal(spec.noise_sd).sample(&mut rng);
            let y = a0 + omega + tv * l + tk * k + eps;
            let proxy = omega + 0.5 * k + 0.2 * m;
            let k_next = firm_capital
                + spec.capital_rho * (k - firm_capital)
                + spec.capital_feedback * omega
                + normal(capital_sd).sample(&mut rng);

            let (sale, opex) = (y.exp(), l.exp());
            let markup = log_mu.exp();
            let rd = rd_share * sale;
            let capital_cost = tk * sale / markup;
            let total_cost = opex + capital_cost + rd;
            let year = spec.first_year + t as i32;
            let d = deflator[t];

            if t < spell.0 || t >= spell.1 {
                k = k_next;
                continue;
            }
            let mut o = FirmYear::new(id.clone(), year, Some(ind.code));
            o.sale = Some(sale * d);
            o.cogs = Some(spec.cogs_share * opex * d);
            o.sga = Some((1.0 - spec.cogs_share) * opex * d);
            o.rd = Some(rd * d);
            let stock_next = capital_scale * k_next.exp();
            o.ppegt = Some((1.0 - spec.intangible_share) * stock_next * d);
            o.k_int = Some(spec.intangible_share * stock_next * d);
            o.icapt = Some(proxy.exp() * d);
            o.capx = Some(0.5 * proxy.exp() * d);
            rows.push(o);

            firms.push(TruthFirm {
                firm_id: id.clone(),
                year,
                industry: Some(ind.code),
                theta_v: tv,
                theta_k: tk,
                rs: tv + tk,
                markup,
                markdown: 1.0,
                monopsony: 0.0,
                fc_adj: total_cost / (total_cost - rd),
                fixed_cost: rd,
                marginal_cost: 1.0 / markup,
                sale,
                variable_cost: opex,
                intermediates: sale * (1.0 - 1.0 / spec.chi),
                capital_cost,
                total_cost,
                profit: sale - total_cost,
                value_added: sale / spec.chi,
                omega: Some(omega),
            });
            k = k_next;
        }
    }

    let mut macros = Vec::with_capacity(t_n);
    let mut totals = Vec::with_capacity(t_n);
    for (t, d) in deflator.iter().enumerate() {
        let year = spec.first_year + t as i32;
        let year_firms: Vec<&TruthFirm> = firms.iter().filter(|f| f.year == year).collect();
        let sum = |g: fn(&TruthFirm) -> f64| pairwise_sum(&year_firms.iter().map(|f| g(f)).collect::<Vec<_>>());
        let total_sales = sum(|f| f.sale);
        let gdp = sum(|f| f.value_added);
        let profits = sum(|f| f.profit);
        let capital_payments = sum(|f| f.capital_cost);
        macros.push(MacroYear {
            year,
            gdp: gdp * d,
            total_sales: total_sales * d,
            deflator: *d,
            labor_comp: spec.labor_share * gdp * d,
            nominal_rate: spec.nominal_rate,
            inflation: spec.inflation,
            external_r: None,
        });
        totals.push(TruthTotals {
            year,
            gdp,
            total_sales,
            profits,
            chi: total_sales / gdp,
            labor_comp: spec.labor_share * gdp,
            capital_payments,
        });
    }
    let truth = TruthRecord { firms, totals };
    truth.check_closure(1e-12)?;
    Ok((PanelDataset::new(rows, macros)?, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pfe::{build_slice, ols_init, EstimationConfig};

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            n_firms: 20,
            n_years: 6,
            seed: 9,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let (a, ta) = gen_cobb_douglas_panel(&small()).unwrap();
        let (b, tb) = gen_cobb_douglas_panel(&small()).unwrap();
        assert_eq!(a.observations(), b.observations());
        assert_eq!(ta, tb);
        let (c, _) = gen_cobb_douglas_panel(&SyntheticSpec { seed: 10, ..small() }).unwrap();
        assert_ne!(a.observations(), c.observations());
    }

    #[test]
    fn deflated_capital_lag_is_the_stock_in_use() {
        let (data, _) = gen_cobb_douglas_panel(&small()).unwrap();
        let real = data.apply_deflators().unwrap().with_capital_lags();
        let cfg = EstimationConfig::default();
        let s = build_slice(&real, 31, 2000, 2010, &cfg);
        // first year of each firm has no lag
        assert_eq!(s.len(), 20 * 5);
    }

    #[test]
    fn markups_are_recovered_from_cost_shares() {
        let (data, truth) = gen_cobb_douglas_panel(&small()).unwrap();
        for (o, f) in data.observations().iter().zip(&truth.firms) {
            let mu = 0.7 * o.sale.unwrap() / (o.cogs.unwrap() + o.sga.unwrap());
            assert!((mu / f.markup - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn ols_is_exact_without_productivity_or_noise() {
        let spec = SyntheticSpec {
            innovation_sd: 0.0,
            noise_sd: 0.0,
            rho: 0.0,
            ..small()
        };
        let (data, _) = gen_cobb_douglas_panel(&spec).unwrap();
        let real = data.apply_deflators().unwrap().with_capital_lags();
        let s = build_slice(&real, 31, 2000, 2010, &EstimationConfig::default());
        let (tv, tk) = ols_init(&s).unwrap();
        assert!((tv - 0.7).abs() < 1e-9 && (tk - 0.3).abs() < 1e-9);
    }

    #[test]
    fn churn_trims_spells_without_moving_other_draws() {
        let (full, _) = gen_cobb_douglas_panel(&small()).unwrap();
        let (part, truth) = gen_cobb_douglas_panel(&SyntheticSpec { churn: 0.5, ..small() }).unwrap();
        assert!(part.len() < full.len());
        truth.check_closure(1e-12).unwrap();
        // every surviving row is identical to its full-panel counterpart
        for o in part.observations() {
            assert!(full.observations().contains(o));
        }
        // spells stay contiguous and cover the middle third
        let ids: std::collections::BTreeSet<&str> = part.observations().iter().map(|o| o.firm_id.as_str()).collect();
        for id in ids {
            let years: Vec<i32> = part.observations().iter().filter(|o| o.firm_id == id).map(|o| o.year).collect();
            assert!(years.windows(2).all(|w| w[1] == w[0] + 1));
            assert!(years.contains(&2002) && years.contains(&2003));
        }
    }

    #[test]
    fn invalid_spec() {
        let spec = SyntheticSpec { rho: 1.0, ..small() };
        assert!(gen_cobb_douglas_panel(&spec).is_err());
    }
}
