use std::collections::BTreeMap;

use super::{ElasticityEstimate, ElasticityTable, EstimationConfig, WinsorScope};
use crate::error::{Error, Result};
use crate::numeric::nearest_rank;

/// Marks values more than one (sample) standard deviation from the series
/// mean as missing.
fn drop_outliers(series: &mut [Option<f64>]) -> usize {
    let present: Vec<f64> = series.iter().flatten().copied().collect();
    if present.len() < 2 {
        return 0;
    }
    let n = present.len() as f64;
    let mean = present.iter().sum::<f64>() / n;
    let sd = (present.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut dropped = 0;
    for v in series.iter_mut() {
        if matches!(v, Some(x) if (*x - mean).abs() > sd) {
            *v = None;
            dropped += 1;
        }
    }
    dropped
}

/// Linear interpolation in year over missing entries; the ends take the
/// nearest available value. `None` if nothing is present.
fn interpolate(years: &[i32], series: &[Option<f64>]) -> Option<Vec<f64>> {
    let known: Vec<(i32, f64)> = years
        .iter()
        .zip(series)
        .filter_map(|(y, v)| v.map(|v| (*y, v)))
        .collect();
    if known.is_empty() {
        return None;
    }
    Some(
        years
            .iter()
            .zip(series)
            .map(|(&y, v)| {
                if let Some(v) = v {
                    return *v;
                }
                let after = known.iter().position(|(ky, _)| *ky > y);
                match after {
                    None => known.last().expect("non-empty").1,
                    Some(0) => known[0].1,
                    Some(j) => {
                        let (y0, v0) = known[j - 1];
                        let (y1, v1) = known[j];
                        v0 + (v1 - v0) * f64::from(y - y0) / f64::from(y1 - y0)
                    }
                }
            })
            .collect(),
    )
}

fn winsorize(values: &mut [f64], low: f64, high: f64) {
    let (Some(lo), Some(hi)) = (nearest_rank(values, low), nearest_rank(values, high)) else {
        return;
    };
    for v in values.iter_mut() {
        *v = v.clamp(lo, hi);
    }
}

/// Outlier removal, interpolation and winsorization of industry-year
/// elasticities. A table that has already been post-processed is returned
/// unchanged.
pub fn postprocess_elasticities(table: &ElasticityTable, cfg: &EstimationConfig) -> Result<ElasticityTable> {
    if table.postprocessed {
        return Ok(table.clone());
    }
    let mut by_industry: BTreeMap<u16, Vec<ElasticityEstimate>> = BTreeMap::new();
    for e in &table.estimates {
        by_industry.entry(e.industry).or_default().push(e.clone());
    }

    let mut out: Vec<ElasticityEstimate> = Vec::with_capacity(table.estimates.len());
    for (industry, mut rows) in by_industry {
        rows.sort_by_key(|e| e.year);
        let years: Vec<i32> = rows.iter().map(|e| e.year).collect();
        let mut tv: Vec<Option<f64>> = rows.iter().map(|e| e.theta_v).collect();
        let mut tk: Vec<Option<f64>> = rows.iter().map(|e| e.theta_k).collect();
        if tv.iter().all(Option::is_none) || tk.iter().all(Option::is_none) {
            return Err(Error::IndustryMissing(industry));
        }
        drop_outliers(&mut tv);
        drop_outliers(&mut tk);
        let fv = interpolate(&years, &tv).ok_or(Error::IndustryMissing(industry))?;
        let fk = interpolate(&years, &tk).ok_or(Error::IndustryMissing(industry))?;
        for (i, e) in rows.iter_mut().enumerate() {
            e.interpolated = tv[i].is_none() || tk[i].is_none();
            e.theta_v = Some(fv[i]);
            e.theta_k = Some(fk[i]);
        }
        out.extend(rows);
    }

    let groups: Vec<Vec<usize>> = match cfg.winsor_scope {
        WinsorScope::Pooled => vec![(0..out.len()).collect()],
        WinsorScope::PerIndustry => {
            let mut g: BTreeMap<u16, Vec<usize>> = BTreeMap::new();
            for (i, e) in out.iter().enumerate() {
                g.entry(e.industry).or_default().push(i);
            }
            g.into_values().collect()
        }
    };
    for idx in groups {
        let mut tv: Vec<f64> = idx.iter().map(|&i| out[i].theta_v.expect("filled")).collect();
        let mut tk: Vec<f64> = idx.iter().map(|&i| out[i].theta_k.expect("filled")).collect();
        winsorize(&mut tv, cfg.winsor_low, cfg.winsor_high);
        winsorize(&mut tk, cfg.winsor_low, cfg.winsor_high);
        for (j, &i) in idx.iter().enumerate() {
            out[i].theta_v = Some(tv[j]);
            out[i].theta_k = Some(tk[j]);
        }
    }
    Ok(ElasticityTable {
        estimates: out,
        postprocessed: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(industry: u16, tv: &[Option<f64>]) -> ElasticityTable {
        ElasticityTable {
            estimates: tv
                .iter()
                .enumerate()
                .map(|(i, v)| ElasticityEstimate {
                    industry,
                    year: 2000 + i as i32,
                    theta_v: *v,
                    theta_k: v.map(|_| 0.2),
                    window: (0, 0),
                    n_obs: 100,
                    converged: true,
                    objective: 0.0,
                    rho: None,
                    carried_forward: false,
                    interpolated: false,
                })
                .collect(),
            postprocessed: false,
        }
    }

    fn no_winsor() -> EstimationConfig {
        EstimationConfig {
            winsor_low: 1e-9,
            winsor_high: 1.0,
            ..Default::default()
        }
    }

    fn thetas(t: &ElasticityTable) -> Vec<f64> {
        t.estimates.iter().map(|e| e.theta_v.unwrap()).collect()
    }

    #[test]
    fn constant_series_unchanged() {
        let t = table(31, &[Some(0.8); 6]);
        let out = postprocess_elasticities(&t, &EstimationConfig::default()).unwrap();
        assert_eq!(thetas(&out), vec![0.8; 6]);
    }

    #[test]
    fn spike_replaced_by_interpolation() {
        let t = table(31, &[Some(0.8), Some(0.8), Some(3.0), Some(0.8)]);
        let out = postprocess_elasticities(&t, &no_winsor()).unwrap();
        assert_eq!(thetas(&out), vec![0.8; 4]);
        assert!(out.estimates[2].interpolated);
    }

    #[test]
    fn linear_interpolation_and_end_extension() {
        let years = [2000, 2001, 2002, 2003, 2004];
        let s = [None, Some(1.0), None, Some(2.0), None];
        assert_eq!(interpolate(&years, &s).unwrap(), vec![1.0, 1.0, 1.5, 2.0, 2.0]);
    }

    #[test]
    fn winsorization_raises_low_tail_to_p5() {
        let mut v: Vec<f64> = (1..=100).map(f64::from).collect();
        winsorize(&mut v, 0.05, 0.95);
        assert_eq!(v[0], 5.0);
        assert_eq!(v[3], 5.0);
        assert_eq!(v[4], 5.0);
        assert_eq!(v[99], 95.0);
    }

    #[test]
    fn all_missing_industry_is_named() {
        let t = table(52, &[None, None]);
        assert!(matches!(
            postprocess_elasticities(&t, &no_winsor()),
            Err(Error::IndustryMissing(52))
        ));
    }

    #[test]
    fn second_application_is_a_no_op() {
        let t = table(31, &[Some(0.7), Some(0.9), Some(0.5), Some(1.4), Some(0.8), Some(0.75)]);
        let once = postprocess_elasticities(&t, &EstimationConfig::default()).unwrap();
        let twice = postprocess_elasticities(&once, &EstimationConfig::default()).unwrap();
        assert_eq!(once, twice);
    }
}
