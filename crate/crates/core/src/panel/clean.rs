use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{FirmYear, PanelDataset};
use crate::error::{Error, Result};
use crate::numeric::nearest_rank_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrimScope {
    Pooled,
    PerYear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleaningConfig {
    pub trim_low: f64,
    pub trim_high: f64,
    pub trim_scope: TrimScope,
    /// Read a missing R&D cell as zero instead of dropping the row.
    pub rd_missing_as_zero: bool,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        CleaningConfig {
            trim_low: 0.01,
            trim_high: 0.99,
            trim_scope: TrimScope::Pooled,
            rd_missing_as_zero: false,
        }
    }
}

/// Sales/COGS cut values used by the percentile trim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrimCuts {
    Pooled { low: f64, high: f64 },
    PerYear(BTreeMap<i32, (f64, f64)>),
}

impl TrimCuts {
    fn bounds(&self, year: i32) -> Option<(f64, f64)> {
        match self {
            TrimCuts::Pooled { low, high } => Some((*low, *high)),
            TrimCuts::PerYear(m) => m.get(&year).copied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub rows_in: usize,
    pub rows_out: usize,
    pub dropped_industry: usize,
    pub dropped_values: usize,
    pub dropped_gaps: usize,
    pub dropped_trim: usize,
    pub rd_zero_filled: usize,
    pub cuts: Option<TrimCuts>,
}

impl CleaningReport {
    pub fn dropped_total(&self) -> usize {
        self.dropped_industry + self.dropped_values + self.dropped_gaps + self.dropped_trim
    }
}

fn sales_cogs_ratio(o: &FirmYear) -> f64 {
    // values are present and nonnegative once the value rule has run
    o.sale.unwrap_or(f64::NAN) / o.cogs.unwrap_or(f64::NAN)
}

/// Drops every row of a firm outside its longest contiguous run of years.
fn drop_gaps(rows: Vec<FirmYear>) -> (Vec<FirmYear>, usize) {
    let mut out = Vec::with_capacity(rows.len());
    let mut dropped = 0;
    let mut i = 0;
    while i < rows.len() {
        let mut j = i;
        while j < rows.len() && rows[j].firm_id == rows[i].firm_id {
            j += 1;
        }
        let firm = &rows[i..j];
        let (mut best, mut best_len, mut start) = (0usize, 0usize, 0usize);
        for k in 0..=firm.len() {
            if k == firm.len() || (k > start && firm[k].year != firm[k - 1].year + 1) {
                if k - start > best_len {
                    best = start;
                    best_len = k - start;
                }
                start = k;
            }
        }
        dropped += firm.len() - best_len;
        out.extend_from_slice(&firm[best..best + best_len]);
        i = j;
    }
    (out, dropped)
}

fn compute_cuts(rows: &[FirmYear], cfg: &CleaningConfig) -> TrimCuts {
    let finite = |o: &&FirmYear| !sales_cogs_ratio(o).is_nan();
    match cfg.trim_scope {
        TrimScope::Pooled => {
            let mut r: Vec<f64> = rows.iter().filter(finite).map(sales_cogs_ratio).collect();
            r.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            if r.is_empty() {
                return TrimCuts::PerYear(BTreeMap::new());
            }
            TrimCuts::Pooled {
                low: nearest_rank_sorted(&r, cfg.trim_low),
                high: nearest_rank_sorted(&r, cfg.trim_high),
            }
        }
        TrimScope::PerYear => {
            let mut by_year: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
            for o in rows.iter().filter(finite) {
                by_year.entry(o.year).or_default().push(sales_cogs_ratio(o));
            }
            TrimCuts::PerYear(
                by_year
                    .into_iter()
                    .map(|(y, mut r)| {
                        r.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
                        (y, (nearest_rank_sorted(&r, cfg.trim_low), nearest_rank_sorted(&r, cfg.trim_high)))
                    })
                    .collect(),
            )
        }
    }
}

/// Applies the sample-selection rules in order: industry code, negative or
/// missing financials, gaps in a firm's spell, then the sales/COGS trim on
/// the surviving rows (followed by a second gap pass so spells stay
/// contiguous).
///
/// Cleaning an already-cleaned dataset reuses its recorded cut values, so
/// `clean(clean(x)) == clean(x)`.
pub fn clean_sample(data: &PanelDataset, cfg: &CleaningConfig) -> Result<(PanelDataset, CleaningReport)> {
    if !(0.0 < cfg.trim_low && cfg.trim_low < cfg.trim_high && cfg.trim_high <= 1.0) {
        return Err(Error::Parameter(format!(
            "trim percentiles must satisfy 0 < low < high <= 1, got {} and {}",
            cfg.trim_low, cfg.trim_high
        )));
    }
    let rows_in = data.len();
    let mut rows: Vec<FirmYear> = data.observations().to_vec();

    // industry: missing, outside the closed set, or not unique within a firm
    let mut codes: HashMap<&str, HashSet<Option<u16>>> = HashMap::new();
    for o in data.observations() {
        codes.entry(o.firm_id.as_str()).or_default().insert(o.industry);
    }
    let bad_firms: HashSet<String> = codes
        .into_iter()
        .filter(|(_, s)| s.len() > 1)
        .map(|(f, _)| f.to_string())
        .collect();
    let before = rows.len();
    rows.retain(|o| o.industry.is_some() && !bad_firms.contains(&o.firm_id));
    let dropped_industry = before - rows.len();

    let mut rd_zero_filled = 0;
    if cfg.rd_missing_as_zero {
        for o in rows.iter_mut().filter(|o| o.rd.is_none()) {
            o.rd = Some(0.0);
            rd_zero_filled += 1;
        }
    }
    let before = rows.len();
    rows.retain(|o| {
        [o.sale, o.cogs, o.sga, o.rd, o.capx]
            .iter()
            .all(|v| matches!(v, Some(x) if *x >= 0.0))
    });
    let dropped_values = before - rows.len();

    let (rows, mut dropped_gaps) = drop_gaps(rows);

    let cuts = match data.provenance.cleaning.as_ref().and_then(|r| r.cuts.clone()) {
        Some(c) => c,
        None => compute_cuts(&rows, cfg),
    };
    let before = rows.len();
    let mut rows = rows;
    rows.retain(|o| {
        let r = sales_cogs_ratio(o);
        match cuts.bounds(o.year) {
            Some((lo, hi)) => !r.is_nan() && r >= lo && r <= hi,
            None => !r.is_nan(),
        }
    });
    let dropped_trim = before - rows.len();
    let (rows, more_gaps) = drop_gaps(rows);
    dropped_gaps += more_gaps;

    if rows.is_empty() {
        return Err(Error::EmptySample);
    }
    let report = CleaningReport {
        rows_in,
        rows_out: rows.len(),
        dropped_industry,
        dropped_values,
        dropped_gaps,
        dropped_trim,
        rd_zero_filled,
        cuts: Some(cuts),
    };
    let mut provenance = data.provenance.clone();
    provenance.cleaning = Some(report.clone());
    Ok((
        PanelDataset::from_parts(rows, data.macro_years().clone(), provenance),
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, year: i32, sale: f64, cogs: f64) -> FirmYear {
        let mut o = FirmYear::new(id, year, Some(31));
        o.sale = Some(sale);
        o.cogs = Some(cogs);
        o.sga = Some(1.0);
        o.rd = Some(0.0);
        o.capx = Some(1.0);
        o
    }

    fn panel(rows: Vec<FirmYear>) -> PanelDataset {
        PanelDataset::new(rows, vec![]).unwrap()
    }

    fn no_trim() -> CleaningConfig {
        CleaningConfig {
            trim_low: 1e-9,
            trim_high: 1.0,
            ..Default::default()
        }
    }

    #[test]
    fn clean_sample_is_a_fixed_point() {
        let d = panel((0..10).map(|i| row("a", 2000 + i, 2.0, 1.0)).collect());
        let (out, rep) = clean_sample(&d, &CleaningConfig::default()).unwrap();
        assert_eq!(out.observations(), d.observations());
        assert_eq!(rep.dropped_total(), 0);
    }

    #[test]
    fn negative_cogs_dropped() {
        let mut rows: Vec<FirmYear> = (0..5).map(|i| row("a", 2000 + i, 2.0, 1.0)).collect();
        rows.push(row("b", 2000, 2.0, -1.0));
        let (out, rep) = clean_sample(&panel(rows), &no_trim()).unwrap();
        assert_eq!(rep.dropped_values, 1);
        assert_eq!(out.len(), 5);
    }

    #[test]
    fn missing_rd_dropped_unless_flagged() {
        let mut rows: Vec<FirmYear> = (0..3).map(|i| row("a", 2000 + i, 2.0, 1.0)).collect();
        rows[2].rd = None;
        let (_, rep) = clean_sample(&panel(rows.clone()), &no_trim()).unwrap();
        assert_eq!(rep.dropped_values, 1);
        let cfg = CleaningConfig {
            rd_missing_as_zero: true,
            ..no_trim()
        };
        let (out, rep) = clean_sample(&panel(rows), &cfg).unwrap();
        assert_eq!(rep.dropped_values, 0);
        assert_eq!(rep.rd_zero_filled, 1);
        assert_eq!(out.observations()[2].rd, Some(0.0));
    }

    #[test]
    fn multiple_industries_drop_whole_firm() {
        let mut rows: Vec<FirmYear> = (0..3).map(|i| row("a", 2000 + i, 2.0, 1.0)).collect();
        rows[1].industry = Some(44);
        rows.push(row("b", 2000, 2.0, 1.0));
        let (out, rep) = clean_sample(&panel(rows), &no_trim()).unwrap();
        assert_eq!(rep.dropped_industry, 3);
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn gap_keeps_longest_run() {
        let years = [2000, 2001, 2003, 2004, 2005];
        let rows = years.iter().map(|&y| row("a", y, 2.0, 1.0)).collect();
        let (out, rep) = clean_sample(&panel(rows), &no_trim()).unwrap();
        assert_eq!(rep.dropped_gaps, 2);
        let kept: Vec<i32> = out.observations().iter().map(|o| o.year).collect();
        assert_eq!(kept, vec![2003, 2004, 2005]);
    }

    #[test]
    fn trim_drops_tails_and_is_idempotent() {
        // 100 single-year firms with ratios 1.01 .. 2.00
        let rows = (1..=100)
            .map(|i| row(&format!("f{i:03}"), 2000, 1.0 + i as f64 / 100.0, 1.0))
            .collect();
        let d = panel(rows);
        let (once, rep) = clean_sample(&d, &CleaningConfig::default()).unwrap();
        // nearest-rank P1 = 1.01 and P99 = 1.99: only 2.00 lies outside
        assert_eq!(rep.dropped_trim, 1);
        let (twice, rep2) = clean_sample(&once, &CleaningConfig::default()).unwrap();
        assert_eq!(twice.observations(), once.observations());
        assert_eq!(rep2.dropped_total(), 0);
    }

    #[test]
    fn everything_dropped_is_an_error() {
        let rows = vec![row("a", 2000, 2.0, -1.0)];
        assert!(matches!(clean_sample(&panel(rows), &no_trim()), Err(Error::EmptySample)));
    }

    #[test]
    fn counts_add_up() {
        let mut rows: Vec<FirmYear> = (0..20).map(|i| row("a", 2000 + i, 2.0 + i as f64 * 0.01, 1.0)).collect();
        rows[3].sga = Some(-1.0);
        rows.push(row("z", 2000, 2.0, 1.0));
        rows.last_mut().unwrap().industry = None;
        let d = panel(rows);
        let (out, rep) = clean_sample(&d, &CleaningConfig::default()).unwrap();
        assert_eq!(rep.rows_in - rep.rows_out, rep.dropped_total());
        assert_eq!(out.len(), rep.rows_out);
    }
}
