//! Synthetic economies with known primitives, used as ground truth for the
//! estimator and the aggregation identities.

mod fixed_cost;
mod network;
mod panel;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mpower::{fixed_cost_adjustment, monopsony_term, profit_rate};
use crate::numeric::pairwise_sum;

pub use fixed_cost::{gen_fixed_cost_firm, local_elasticity, log_log_slope, FixedCostSlice};
pub use network::{
    gen_network_economy, gen_vertical_chain, gen_vertical_economy, NetworkEconomy, NetworkNode, NetworkSpec, Supplier,
    Topology,
};
pub use panel::{gen_cobb_douglas_panel, IndustryTruth, SyntheticSpec};

/// Primitives and accounting for one producer in one year.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthFirm {
    pub firm_id: String,
    pub year: i32,
    pub industry: Option<u16>,
    pub theta_v: f64,
    pub theta_k: f64,
    pub rs: f64,
    pub markup: f64,
    /// Smallest markdown across the producer's inputs (1 without monopsony).
    pub markdown: f64,
    pub monopsony: f64,
    pub fc_adj: f64,
    pub fixed_cost: f64,
    /// Price over markup; prices are normalized to one.
    pub marginal_cost: f64,
    pub sale: f64,
    /// Variable-input spending other than capital (labor and intermediates).
    pub variable_cost: f64,
    pub intermediates: f64,
    pub capital_cost: f64,
    pub total_cost: f64,
    pub profit: f64,
    pub value_added: f64,
    /// Log productivity (panel generator only).
    pub omega: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthTotals {
    pub year: i32,
    pub gdp: f64,
    pub total_sales: f64,
    pub profits: f64,
    pub chi: f64,
    pub labor_comp: f64,
    pub capital_payments: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TruthRecord {
    pub firms: Vec<TruthFirm>,
    pub totals: Vec<TruthTotals>,
}

impl TruthRecord {
    /// Checks sales = costs + profits for every producer and that the
    /// economy totals are the sums of their parts, to relative tolerance `tol`.
    pub fn check_closure(&self, tol: f64) -> Result<()> {
        let off = |a: f64, b: f64| (a - b).abs() > tol * a.abs().max(b.abs()).max(1.0);
        for f in &self.firms {
            if off(f.sale, f.total_cost + f.profit) {
                return Err(Error::Domain(format!(
                    "producer {} in {} does not close: sale {} vs costs + profit {}",
                    f.firm_id,
                    f.year,
                    f.sale,
                    f.total_cost + f.profit
                )));
            }
        }
        for t in &self.totals {
            let firms: Vec<&TruthFirm> = self.firms.iter().filter(|f| f.year == t.year).collect();
            let sum = |g: fn(&TruthFirm) -> f64| pairwise_sum(&firms.iter().map(|f| g(f)).collect::<Vec<_>>());
            let checks = [
                ("GDP", t.gdp, sum(|f| f.value_added)),
                ("total sales", t.total_sales, sum(|f| f.sale)),
                ("profits", t.profits, sum(|f| f.profit)),
                ("multiplier", t.chi, t.total_sales / t.gdp),
            ];
            for (name, total, parts) in checks {
                if off(total, parts) {
                    return Err(Error::Domain(format!(
                        "{name} in {} does not close: {total} vs {parts}",
                        t.year
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn write_csv(&self, firms_path: &Path, totals_path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(firms_path)?;
        for f in &self.firms {
            w.serialize(f)?;
        }
        w.flush().map_err(|e| Error::io(firms_path, e))?;
        let mut w = csv::Writer::from_path(totals_path)?;
        for t in &self.totals {
            w.serialize(t)?;
        }
        w.flush().map_err(|e| Error::io(totals_path, e))?;
        Ok(())
    }
}

/// One input of a cost-minimizing producer: output elasticity and
/// markdown (rental rate over marginal revenue product).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputPrimitive {
    pub theta: f64,
    pub nu: f64,
}

/// A producer described by its markup, inputs and fixed costs as a
/// multiple of variable costs.
#[derive(Debug, Clone, PartialEq)]
pub struct FirmPrimitives {
    pub sale: f64,
    pub markup: f64,
    pub inputs: Vec<InputPrimitive>,
    pub fc_ratio: f64,
}

/// Costs implied by cost minimization at a given sales level.
#[derive(Debug, Clone, PartialEq)]
pub struct FirmAccounts {
    /// Spending on each input: `sale * theta * nu / markup`.
    pub spending: Vec<f64>,
    pub variable_cost: f64,
    pub fixed_cost: f64,
    pub total_cost: f64,
    pub profit: f64,
}

impl FirmPrimitives {
    pub fn rs(&self) -> f64 {
        pairwise_sum(&self.inputs.iter().map(|i| i.theta).collect::<Vec<_>>())
    }

    pub fn accounts(&self) -> FirmAccounts {
        let spending: Vec<f64> = self
            .inputs
            .iter()
            .map(|i| self.sale * i.theta * i.nu / self.markup)
            .collect();
        let variable_cost = pairwise_sum(&spending);
        let fixed_cost = self.fc_ratio * variable_cost;
        let total_cost = variable_cost + fixed_cost;
        FirmAccounts {
            spending,
            variable_cost,
            fixed_cost,
            total_cost,
            profit: self.sale - total_cost,
        }
    }

    pub fn fc_adj(&self) -> Result<f64> {
        let a = self.accounts();
        fixed_cost_adjustment(a.total_cost, a.fixed_cost)
    }

    pub fn monopsony(&self) -> Result<f64> {
        let pairs: Vec<(f64, f64)> = self.inputs.iter().map(|i| (i.theta, i.nu)).collect();
        monopsony_term(self.fc_adj()?, &pairs)
    }

    /// Profit rate from markup, adjusted returns to scale and the
    /// monopsony term.
    pub fn profit_rate(&self) -> Result<f64> {
        profit_rate(self.markup, self.rs() * self.fc_adj()?, self.monopsony()?)
    }
}

/// Random producers with heterogeneous markups, markdowns and fixed costs.
pub fn gen_firm_primitives(seed: u64, n: usize) -> Vec<FirmPrimitives> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let n_inputs = rng.gen_range(1..=4);
            let inputs = (0..n_inputs)
                .map(|_| InputPrimitive {
                    theta: rng.gen_range(0.05..0.6),
                    nu: if rng.gen_bool(0.5) { 1.0 } else { rng.gen_range(0.5..1.0) },
                })
                .collect();
            FirmPrimitives {
                sale: rng.gen_range(1.0..1e4),
                markup: rng.gen_range(0.8..2.5),
                inputs,
                fc_ratio: if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..0.5) },
            }
        })
        .collect()
}
