use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use super::run::Manifest;
use crate::agg::{profit_share_theorem, TheoremFirm, TheoremMode};
use crate::error::{Error, Result};
use crate::mpower::FirmMeasures;
use crate::numeric::pairwise_sum;

/// Absolute tolerance for identities recomputed from written outputs.
pub const VERIFY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
            Status::Skipped => "skipped",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub identity: &'static str,
    pub status: Status,
    /// Largest absolute residual across years (NaN when skipped).
    pub residual: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status == Status::Fail)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<30} {:<8} {:>12}  detail", "identity", "status", "residual")?;
        for c in &self.checks {
            let r = if c.residual.is_nan() {
                "-".to_string()
            } else {
                format!("{:.3e}", c.residual)
            };
            writeln!(f, "{:<30} {:<8} {:>12}  {}", c.identity, c.status.to_string(), r, c.detail)?;
        }
        Ok(())
    }
}

/// A CSV file as rows keyed by column name.
struct Table {
    rows: Vec<HashMap<String, String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Table> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for r in rdr.records() {
            let r = r?;
            rows.push(headers.iter().cloned().zip(r.iter().map(str::to_string)).collect());
        }
        Ok(Table { rows })
    }

    fn f64(row: &HashMap<String, String>, col: &str) -> Result<f64> {
        let v = row.get(col).ok_or_else(|| Error::MissingColumn(col.to_string()))?;
        v.parse().map_err(|_| Error::Parse {
            row: 0,
            column: col.to_string(),
            value: v.clone(),
        })
    }

    fn year(row: &HashMap<String, String>) -> Result<i32> {
        Ok(Table::f64(row, "year")? as i32)
    }
}

struct Tracker {
    identity: &'static str,
    worst: f64,
    where_: String,
}

impl Tracker {
    fn new(identity: &'static str) -> Self {
        Tracker {
            identity,
            worst: 0.0,
            where_: String::new(),
        }
    }

    fn see(&mut self, residual: f64, at: impl fmt::Display) {
        let r = if residual.is_nan() { f64::INFINITY } else { residual.abs() };
        if r > self.worst {
            self.worst = r;
            self.where_ = at.to_string();
        }
    }

    fn finish(self, tol: f64) -> Check {
        let pass = self.worst <= tol;
        Check {
            identity: self.identity,
            status: if pass { Status::Pass } else { Status::Fail },
            residual: self.worst,
            detail: if pass {
                String::new()
            } else {
                format!("largest residual at {}", self.where_)
            },
        }
    }
}

fn skipped(identity: &'static str, why: &str) -> Check {
    Check {
        identity,
        status: Status::Skipped,
        residual: f64::NAN,
        detail: why.to_string(),
    }
}

fn theorem(chi: f64, firms: &[TheoremFirm], mode: TheoremMode) -> f64 {
    profit_share_theorem(chi, firms, mode).map_or(f64::NAN, |c| c.profit_share)
}

/// Re-checks the accounting identities on the outputs of a pipeline run.
pub fn verify_outputs(dir: &Path) -> Result<VerifyReport> {
    let manifest = Manifest::read(dir)?;
    let mut measures: Vec<FirmMeasures> = Vec::new();
    let mut rdr = csv::Reader::from_path(dir.join("firm_measures.csv"))?;
    for r in rdr.deserialize() {
        measures.push(r?);
    }
    let aggregates = Table::read(&dir.join(format!("aggregates_{}.csv", manifest.preset)))?;
    let decomposition = Table::read(&dir.join("decomposition.csv"))?;
    let income = Table::read(&dir.join("income_shares.csv"))?;

    let mut by_year: BTreeMap<i32, Vec<&FirmMeasures>> = BTreeMap::new();
    for m in &measures {
        by_year.entry(m.year).or_default().push(m);
    }
    let mut agg: BTreeMap<i32, &HashMap<String, String>> = BTreeMap::new();
    for row in &aggregates.rows {
        agg.insert(Table::year(row)?, row);
    }
    let col = |year: i32, name: &str| -> Result<f64> {
        let row = agg
            .get(&year)
            .ok_or_else(|| Error::Verification(format!("no aggregate row for {year}")))?;
        Table::f64(row, name)
    };
    if agg.keys().ne(by_year.keys()) {
        return Err(Error::Verification("aggregate years differ from firm-measure years".into()));
    }

    let mut checks = Vec::new();

    // Domar weights reproduce the multiplier
    let mut t = Tracker::new("domar_weights_sum_to_chi");
    for (year, ms) in &by_year {
        let s = pairwise_sum(&ms.iter().map(|m| m.domar_weight).collect::<Vec<_>>());
        t.see(s - col(*year, "chi")?, year);
    }
    checks.push(t.finish(VERIFY_TOL));

    // Domar-weighted profit rates against the written aggregate
    let mut t = Tracker::new("domar_share_matches_output");
    for (year, ms) in &by_year {
        let s = pairwise_sum(&ms.iter().map(|m| m.domar_weight * m.profit_rate).collect::<Vec<_>>());
        t.see(s - col(*year, "profit_share_domar")?, year);
    }
    checks.push(t.finish(VERIFY_TOL));

    let firms_of = |ms: &[&FirmMeasures]| -> Vec<TheoremFirm> { ms.iter().map(|m| TheoremFirm::from(*m)).collect() };

    if manifest.user_cost != "foc" || manifest.markup_scheme != "harmonic" {
        checks.push(skipped(
            "domar_equals_theorem",
            "profit rates use an external user cost or markups aggregate with sales weights",
        ));
    } else {
        let mut t = Tracker::new("domar_equals_theorem");
        for (year, ms) in &by_year {
            let domar = pairwise_sum(&ms.iter().map(|m| m.domar_weight * m.profit_rate).collect::<Vec<_>>());
            let thm = theorem(col(*year, "chi")?, &firms_of(ms), TheoremMode::Full);
            t.see(domar - thm, year);
            t.see(col(*year, "profit_share_thm")? - thm, year);
        }
        checks.push(t.finish(VERIFY_TOL));
    }
    checks.push(skipped(
        "domar_equals_value_added",
        "firm value added is not part of the firm-level outputs",
    ));

    // impose each restriction, then the looser mode must agree with the tighter one
    let mut t = Tracker::new("corollary_nesting");
    for (year, ms) in &by_year {
        let chi = col(*year, "chi")?;
        let mut f = firms_of(ms);
        for x in &mut f {
            x.monopsony = 0.0;
        }
        t.see(theorem(chi, &f, TheoremMode::Full) - theorem(chi, &f, TheoremMode::Cor1), year);
        for x in &mut f {
            x.fc_adj = 1.0;
            x.rs_adj = x.rs;
        }
        t.see(theorem(chi, &f, TheoremMode::Cor1) - theorem(chi, &f, TheoremMode::Cor2), year);
        for x in &mut f {
            x.rs = 1.0;
            x.rs_adj = 1.0;
        }
        t.see(theorem(chi, &f, TheoremMode::Cor2) - theorem(chi, &f, TheoremMode::Cor3), year);
        t.see(theorem(chi, &f, TheoremMode::Cor3) - col(*year, "cor3_harmonic")?, year);
    }
    checks.push(t.finish(VERIFY_TOL));

    let mut t = Tracker::new("rents_sum_to_cor1");
    for year in agg.keys() {
        let parts = col(*year, "rents")? + col(*year, "fixed_costs")? + col(*year, "nonlinearities")?;
        t.see(parts - col(*year, "cor1")?, year);
    }
    checks.push(t.finish(VERIFY_TOL));

    if manifest.decomposition_reference == "literal" {
        checks.push(skipped(
            "decomposition_additivity",
            "literal reference does not add up by construction",
        ));
    } else {
        let mut t = Tracker::new("decomposition_additivity");
        for row in &decomposition.rows {
            let year = Table::year(row)?;
            let parts = Table::f64(row, "within")? + Table::f64(row, "between")? + Table::f64(row, "net_entry")?;
            t.see(Table::f64(row, "delta_mu")? - parts, year);
        }
        checks.push(t.finish(VERIFY_TOL));
    }

    let mut t = Tracker::new("decomposition_matches_markups");
    for row in &decomposition.rows {
        let (y0, y1) = (Table::f64(row, "year_prev")? as i32, Table::year(row)?);
        t.see(Table::f64(row, "delta_mu")? - (col(y1, "mu_hsw")? - col(y0, "mu_hsw")?), y1);
    }
    checks.push(t.finish(VERIFY_TOL));

    let mut t = Tracker::new("income_shares_sum_to_one");
    for row in &income.rows {
        let year = Table::year(row)?;
        let s = Table::f64(row, "labor")? + Table::f64(row, "capital")? + Table::f64(row, "profit")?;
        t.see(s - 1.0, year);
        t.see(Table::f64(row, "profit")? - col(year, "profit_share_domar")?, year);
    }
    checks.push(t.finish(VERIFY_TOL));

    Ok(VerifyReport { checks })
}
