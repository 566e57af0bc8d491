use super::PanelDataset;
use crate::error::{Error, Result};

/// Fills missing intangible stocks by perpetual inventory.
///
/// The flow is `rd + sga_share * sga`. Each contiguous spell starts at the
/// steady-state stock `flow / (delta + g)`, with `g` the spell's mean flow
/// growth floored at zero, and then follows
/// `K_t = (1 - delta) K_{t-1} + flow_t`. Rows with a recorded `k_int` keep it.
pub fn build_intangible_stock(data: &PanelDataset, delta: f64, sga_share: f64) -> Result<PanelDataset> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Parameter(format!("intangible depreciation {delta} not in (0, 1]")));
    }
    if !(0.0..=1.0).contains(&sga_share) {
        return Err(Error::Parameter(format!("sga share {sga_share} not in [0, 1]")));
    }
    let mut out = data.clone();
    let mut filled = 0;
    let mut missing_rd = 0;
    let obs = &mut out.observations;

    let mut i = 0;
    while i < obs.len() {
        let mut j = i + 1;
        while j < obs.len() && obs[j].firm_id == obs[i].firm_id && obs[j].year == obs[j - 1].year + 1 {
            j += 1;
        }
        if obs[i..j].iter().any(|o| o.k_int.is_none()) {
            let flows: Vec<f64> = obs[i..j]
                .iter()
                .map(|o| {
                    if o.rd.is_none() && o.k_int.is_none() {
                        missing_rd += 1;
                    }
                    o.rd.unwrap_or(0.0) + sga_share * o.sga.unwrap_or(0.0)
                })
                .collect();
            let growth: Vec<f64> = flows
                .windows(2)
                .filter(|w| w[0] > 0.0)
                .map(|w| w[1] / w[0] - 1.0)
                .collect();
            let g = if growth.is_empty() {
                0.0
            } else {
                (growth.iter().sum::<f64>() / growth.len() as f64).max(0.0)
            };
            let mut stock = flows[0] / (delta + g);
            for (k, o) in obs[i..j].iter_mut().enumerate() {
                if k > 0 {
                    stock = (1.0 - delta) * stock + flows[k];
                }
                if o.k_int.is_none() {
                    o.k_int = Some(stock);
                    filled += 1;
                }
            }
        }
        i = j;
    }
    if missing_rd > 0 {
        log::warn!("{missing_rd} rows with missing R&D read as zero flow for intangible stocks");
    }
    out.provenance.pim_filled += filled;
    out.provenance.pim_missing_rd += missing_rd;
    Ok(out)
}
