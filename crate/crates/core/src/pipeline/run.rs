use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ChiSource, RunConfig, LOCATION_KEYS};
use crate::agg::{aggregate_year, AggregateYear};
use crate::dynamics::{distribution_stats, hhi, markup_change_decomposition, DecompositionTerms, MarkupObs, Scope};
use crate::error::{Error, Result};
use crate::mpower::{aggregate_user_cost, compute_firm_measures, FirmMeasures, MeasureConfig, UserCostMethod};
use crate::numeric::pairwise_sum;
use crate::panel::{build_intangible_stock, clean_sample, load_firm_panel, load_macro, PanelDataset};
use crate::pfe::{estimate_rolling, postprocess_elasticities, ElasticityTable};

pub const MANIFEST: &str = "manifest.json";

/// Run record written next to the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub preset: String,
    pub config_hash: String,
    pub user_cost: String,
    pub markup_scheme: String,
    pub decomposition_reference: String,
    pub seed: u64,
    pub overrides: Vec<ManifestOverride>,
    pub rows_in: usize,
    pub rows_clean: usize,
    pub dropped: BTreeMap<String, usize>,
    /// Output file name to `(data rows, sha256)`.
    pub outputs: BTreeMap<String, OutputRecord>,
    pub warnings: Vec<String>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestOverride {
    pub key: String,
    pub preset_value: String,
    pub value: String,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub rows: usize,
    pub sha256: String,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Manifest> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Tracks the files a run has written so a failed run can take them back.
struct OutputDir {
    dir: PathBuf,
    written: Vec<PathBuf>,
    records: BTreeMap<String, OutputRecord>,
}

impl OutputDir {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            records: BTreeMap::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: Vec<u8>, rows: usize) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        self.written.push(path);
        self.records.insert(
            name.to_string(),
            OutputRecord {
                rows,
                sha256: hex::encode(Sha256::digest(&bytes)),
            },
        );
        Ok(())
    }

    fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Domain(format!("csv buffer: {e}")))?;
        self.write(name, bytes, rows.len())
    }

    fn serialized<T: Serialize>(&mut self, name: &str, items: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for it in items {
            w.serialize(it)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Domain(format!("csv buffer: {e}")))?;
        self.write(name, bytes, items.len())
    }

    fn discard(&mut self, keep: &[&str]) {
        for p in self.written.drain(..) {
            let kept = p.file_name().and_then(|n| n.to_str()).is_some_and(|n| keep.contains(&n));
            if !kept {
                let _ = fs::remove_file(&p);
            }
        }
    }
}

fn num(x: f64) -> String {
    x.to_string()
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// What a successful run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out: PathBuf,
    pub manifest: Manifest,
    pub elasticities: ElasticityTable,
    pub measures: Vec<FirmMeasures>,
    pub aggregates: Vec<AggregateYear>,
    pub decomposition: Vec<DecompositionTerms>,
}

/// Runs the full pipeline and writes every output under `cfg.out`. On
/// failure the files written so far are removed, except the elasticity
/// table after a non-convergence stop.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunSummary> {
    let mut out = OutputDir::create(&cfg.out).map_err(Error::at("output"))?;
    match run_stages(cfg, &mut out) {
        Ok(s) => Ok(s),
        Err(e) => {
            let keep: &[&str] = if matches!(e.class(), crate::ErrorClass::NonConvergence) {
                &["elasticities.csv"]
            } else {
                &[]
            };
            out.discard(keep);
            Err(e)
        }
    }
}

fn load(cfg: &RunConfig) -> Result<PanelDataset> {
    let firms = cfg
        .firms
        .as_ref()
        .ok_or_else(|| Error::Config("paths.firms is not set".into()))?;
    let macro_path = cfg
        .macro_path
        .as_ref()
        .ok_or_else(|| Error::Config("paths.macro is not set".into()))?;
    let macros = load_macro(macro_path)?;
    let data = load_firm_panel(firms, &cfg.schema)?;
    let data = match cfg.years {
        Some((a, b)) => data.restrict_years(a, b),
        None => data,
    };
    if data.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(data.with_macro(macros))
}

fn run_stages(cfg: &RunConfig, out: &mut OutputDir) -> Result<RunSummary> {
    let mut warnings = Vec::new();

    let raw = load(cfg).map_err(Error::at("load"))?;
    let rows_in = raw.len();
    let real = raw.apply_deflators().map_err(Error::at("deflate"))?;
    let (clean, report) = clean_sample(&real, &cfg.clean).map_err(Error::at("clean"))?;
    let stocked = build_intangible_stock(&clean, cfg.intangible.delta, cfg.intangible.sga_share)
        .map_err(Error::at("intangible capital"))?;
    if stocked.provenance.pim_filled > 0 {
        warnings.push(format!(
            "intangible stock built by perpetual inventory for {} rows (delta {}, sga share {})",
            stocked.provenance.pim_filled, cfg.intangible.delta, cfg.intangible.sga_share
        ));
    }
    if stocked.provenance.pim_missing_rd > 0 {
        warnings.push(format!(
            "{} missing R&D flows read as zero while building intangible stocks",
            stocked.provenance.pim_missing_rd
        ));
    }
    let data = stocked.with_capital_lags();

    let raw_table = estimate_rolling(&data, &cfg.estimation).map_err(Error::at("estimate"))?;
    let failed = raw_table.estimates.iter().filter(|e| !e.converged).count();
    if failed > 0 {
        let msg = format!("{failed} industry-year estimates did not converge");
        if cfg.strict {
            write_elasticities(out, &raw_table).map_err(Error::at("estimate"))?;
            return Err(Error::at("estimate")(Error::NonConvergence(msg)));
        }
        warnings.push(msg);
    }
    let carried = raw_table.estimates.iter().filter(|e| e.carried_forward).count();
    if carried > 0 {
        warnings.push(format!("{carried} industry-years reuse the nearest full window"));
    }
    let table = postprocess_elasticities(&raw_table, &cfg.estimation).map_err(Error::at("postprocess"))?;

    let (mut measures, mreport) = compute_firm_measures(&data, &table, &cfg.measure).map_err(Error::at("measures"))?;
    if measures.is_empty() {
        return Err(Error::at("measures")(Error::EmptySample));
    }
    if mreport.user_cost_missing > 0 {
        warnings.push(format!(
            "{} firm-years have no user cost (no lagged capital)",
            mreport.user_cost_missing
        ));
    }
    let chis = multipliers(&data, &measures, cfg.aggregate.chi_source).map_err(Error::at("aggregate"))?;
    if cfg.aggregate.chi_source == ChiSource::Sample {
        for m in &mut measures {
            m.domar_weight = m.omega * chis[&m.year];
        }
    }
    for (y, chi) in &chis {
        if *chi < 1.0 {
            warnings.push(format!("input-output multiplier below one in {y} ({chi})"));
        }
    }
    let by_year = group_by_year(&measures);

    let mut aggregates = Vec::new();
    for (year, ms) in &by_year {
        let m = data
            .macro_year(*year)
            .ok_or_else(|| Error::at("aggregate")(Error::Domain(format!("no macro series for {year}"))))?;
        let owned: Vec<FirmMeasures> = ms.iter().map(|m| (*m).clone()).collect();
        let a = aggregate_year(*year, chis[year], m.gdp, m.labor_comp, &owned, cfg.aggregate.markup)
            .map_err(Error::at("aggregate"))?;
        if a.implausible_shares {
            warnings.push(format!("income shares outside [0, 1] in {year}"));
        }
        aggregates.push(a);
    }

    let mut decomposition = Vec::new();
    for (year, cur) in &by_year {
        if let Some(prev) = by_year.get(&(year - 1)) {
            let p: Vec<MarkupObs> = prev.iter().map(|m| MarkupObs::from(*m)).collect();
            let c: Vec<MarkupObs> = cur.iter().map(|m| MarkupObs::from(*m)).collect();
            decomposition.push(
                markup_change_decomposition(&p, &c, (year - 1, *year), cfg.aggregate.reference)
                    .map_err(Error::at("decomposition"))?,
            );
        }
    }

    let mut concentration = Vec::new();
    for year in data.years() {
        concentration.push(hhi(&data, year, Scope::National).map_err(Error::at("concentration"))?);
        let mut codes: Vec<u16> = data.year_slice(year).iter().filter_map(|o| o.industry).collect();
        codes.sort_unstable();
        codes.dedup();
        for code in codes {
            concentration.push(hhi(&data, year, Scope::Industry(code)).map_err(Error::at("concentration"))?);
        }
    }

    let mut percentiles = Vec::new();
    for (year, ms) in &by_year {
        let mu: Vec<f64> = ms.iter().map(|m| m.markup).collect();
        percentiles.push((*year, distribution_stats(&mu, None).map_err(Error::at("distribution"))?));
    }

    // user-cost variants for the comparison series
    let mut by_method = BTreeMap::new();
    for method in [UserCostMethod::Foc, UserCostMethod::Deu, UserCostMethod::External] {
        if method == UserCostMethod::External && data.macro_years().values().any(|m| m.external_r.is_none()) {
            continue;
        }
        let mcfg = MeasureConfig {
            user_cost: method,
            ..cfg.measure.clone()
        };
        let ms = if method == cfg.measure.user_cost {
            measures.clone()
        } else {
            compute_firm_measures(&data, &table, &mcfg).map_err(Error::at("user costs"))?.0
        };
        by_method.insert(method_name(method), ms);
    }

    // outputs
    let stage = Error::at("write");
    out.serialized("firm_measures.csv", &measures).map_err(&stage)?;
    write_elasticities(out, &table).map_err(&stage)?;
    write_aggregates(out, &format!("aggregates_{}.csv", cfg.preset), &aggregates).map_err(&stage)?;
    write_decomposition(out, &decomposition).map_err(&stage)?;
    out.table(
        "hhi.csv",
        &["year", "scope", "hhi", "n_firms"],
        &concentration
            .iter()
            .map(|c| vec![c.year.to_string(), c.scope.to_string(), num(c.hhi), c.n_firms.to_string()])
            .collect::<Vec<_>>(),
    )
    .map_err(&stage)?;
    out.table(
        "income_shares.csv",
        &["year", "labor", "capital", "profit", "implausible"],
        &aggregates
            .iter()
            .map(|a| {
                vec![
                    a.year.to_string(),
                    num(a.labor_share),
                    num(a.capital_share),
                    num(a.profit_share_domar),
                    a.implausible_shares.to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    )
    .map_err(&stage)?;
    out.table(
        "markup_percentiles.csv",
        &["year", "n", "p10", "p25", "p50", "p75", "p90", "p95", "below_one"],
        &percentiles
            .iter()
            .map(|(y, t)| {
                let mut r = vec![y.to_string(), t.n.to_string()];
                r.extend(t.values.iter().map(|v| num(*v)));
                r.push(t.below_one.to_string());
                r
            })
            .collect::<Vec<_>>(),
    )
    .map_err(&stage)?;
    write_figures(out, &data, &aggregates, &by_method, &chis, cfg).map_err(&stage)?;

    let mut dropped = BTreeMap::new();
    dropped.insert("clean_industry".to_string(), report.dropped_industry);
    dropped.insert("clean_values".to_string(), report.dropped_values);
    dropped.insert("clean_gaps".to_string(), report.dropped_gaps);
    dropped.insert("clean_trim".to_string(), report.dropped_trim);
    dropped.insert("measure_no_elasticity".to_string(), mreport.no_elasticity);
    dropped.insert("measure_undefined_markup".to_string(), mreport.undefined_markup);
    dropped.insert("measure_no_capital".to_string(), mreport.no_capital);
    dropped.insert("measure_fixed_costs_exhaust".to_string(), mreport.fixed_costs_exhaust);

    let manifest = Manifest {
        preset: cfg.preset.to_string(),
        config_hash: cfg.hash(),
        user_cost: method_name(cfg.measure.user_cost).to_string(),
        markup_scheme: cfg.value("aggregate.markup").unwrap_or_default().to_string(),
        decomposition_reference: cfg.value("aggregate.decomposition_reference").unwrap_or_default().to_string(),
        seed: cfg.seed,
        // output location is left out so identical runs match byte for byte
        overrides: cfg
            .overrides
            .iter()
            .filter(|o| !LOCATION_KEYS.contains(&o.key.as_str()))
            .map(|o| ManifestOverride {
                key: o.key.clone(),
                preset_value: o.preset_value.clone(),
                value: o.value.clone(),
                source: o.source.clone(),
            })
            .collect(),
        rows_in,
        rows_clean: report.rows_out,
        dropped,
        outputs: out.records.clone(),
        warnings,
        errors: Vec::new(),
    };
    let mut json = serde_json::to_vec_pretty(&manifest).map_err(|e| stage(e.into()))?;
    json.push(b'\n');
    out.write(MANIFEST, json, 1).map_err(&stage)?;

    Ok(RunSummary {
        out: cfg.out.clone(),
        manifest,
        elasticities: table,
        measures,
        aggregates,
        decomposition,
    })
}

fn method_name(m: UserCostMethod) -> &'static str {
    match m {
        UserCostMethod::Foc => "foc",
        UserCostMethod::Deu => "deu",
        UserCostMethod::External => "external",
    }
}

fn group_by_year(measures: &[FirmMeasures]) -> BTreeMap<i32, Vec<&FirmMeasures>> {
    let mut m: BTreeMap<i32, Vec<&FirmMeasures>> = BTreeMap::new();
    for x in measures {
        m.entry(x.year).or_default().push(x);
    }
    m
}

/// Input-output multiplier per measured year. The sample version converts
/// deflated sales back to nominal terms before dividing by GDP.
fn multipliers(data: &PanelDataset, measures: &[FirmMeasures], source: ChiSource) -> Result<BTreeMap<i32, f64>> {
    let mut out = BTreeMap::new();
    for (year, ms) in group_by_year(measures) {
        let m = data
            .macro_year(year)
            .ok_or_else(|| Error::Domain(format!("no macro series for {year}")))?;
        let chi = match source {
            ChiSource::Macro => m.chi(),
            ChiSource::Sample => {
                let sales: Vec<f64> = ms.iter().map(|x| x.sale).collect();
                let deflator = if data.provenance.deflated { m.deflator } else { 1.0 };
                pairwise_sum(&sales) * deflator / m.gdp
            }
        };
        if !(chi > 0.0) || !chi.is_finite() {
            return Err(Error::DegenerateWeights(format!("multiplier {chi} in {year}")));
        }
        out.insert(year, chi);
    }
    Ok(out)
}

fn write_elasticities(out: &mut OutputDir, table: &ElasticityTable) -> Result<()> {
    let rows: Vec<Vec<String>> = table
        .estimates
        .iter()
        .map(|e| {
            vec![
                e.industry.to_string(),
                e.year.to_string(),
                opt(e.theta_v),
                opt(e.theta_k),
                opt(e.rs()),
                format!("{}:{}", e.window.0, e.window.1),
                e.n_obs.to_string(),
                e.converged.to_string(),
                e.carried_forward.to_string(),
                e.interpolated.to_string(),
            ]
        })
        .collect();
    out.table(
        "elasticities.csv",
        &[
            "industry",
            "year",
            "theta_v",
            "theta_k",
            "rs",
            "window",
            "n_obs",
            "converged",
            "carried_forward",
            "interpolated",
        ],
        &rows,
    )
}

pub(crate) const AGGREGATE_COLUMNS: [&str; 26] = [
    "year",
    "n_firms",
    "chi",
    "mu_hsw",
    "mu_sw",
    "mu_agg",
    "rs_bar",
    "fc_adj_bar",
    "rs_adj_bar",
    "m_bar",
    "cov_rs_invmu",
    "cov_m_invmu",
    "profit_share_domar",
    "profit_share_thm",
    "sales_weighted_rate",
    "cor1",
    "cor3_harmonic",
    "cor3_sales_weighted",
    "cor3_no_network",
    "rents",
    "fixed_costs",
    "nonlinearities",
    "labor_share",
    "capital_share",
    "implausible_shares",
    "scheme_profit_share",
];

fn write_aggregates(out: &mut OutputDir, name: &str, rows: &[AggregateYear]) -> Result<()> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|a| {
            let v = &a.variants;
            let mut r = vec![a.year.to_string(), a.n_firms.to_string()];
            r.extend(
                [
                    a.chi,
                    a.mu_hsw,
                    a.mu_sw,
                    a.mu_agg,
                    a.rs_bar,
                    a.fc_adj_bar,
                    a.rs_adj_bar,
                    a.m_bar,
                    a.cov_rs_invmu,
                    a.cov_m_invmu,
                    a.profit_share_domar,
                    a.profit_share_thm,
                    v.sales_weighted_rate,
                    v.cor1,
                    v.cor3_harmonic,
                    v.cor3_sales_weighted,
                    v.cor3_no_network,
                    a.rents,
                    a.fixed_costs_term,
                    a.nonlinearities,
                    a.labor_share,
                    a.capital_share,
                ]
                .map(num),
            );
            r.push(a.implausible_shares.to_string());
            // the markup-only share under the configured aggregation scheme
            r.push(num(a.chi * (1.0 - 1.0 / a.mu_agg)));
            r
        })
        .collect();
    out.table(name, &AGGREGATE_COLUMNS, &rows)
}

fn write_decomposition(out: &mut OutputDir, terms: &[DecompositionTerms]) -> Result<()> {
    let mut cum = [0.0; 4];
    let rows: Vec<Vec<String>> = terms
        .iter()
        .map(|t| {
            for (c, x) in cum.iter_mut().zip([t.delta_mu, t.within, t.between, t.net_entry]) {
                *c += x;
            }
            let mut r = vec![t.year_prev.to_string(), t.year.to_string()];
            r.extend([t.delta_mu, t.within, t.between, t.net_entry, t.c, t.residual].map(num));
            r.extend(cum.map(num));
            r
        })
        .collect();
    out.table(
        "decomposition.csv",
        &[
            "year_prev",
            "year",
            "delta_mu",
            "within",
            "between",
            "net_entry",
            "c",
            "residual",
            "cum_delta_mu",
            "cum_within",
            "cum_between",
            "cum_net_entry",
        ],
        &rows,
    )
}

fn write_figures(
    out: &mut OutputDir,
    data: &PanelDataset,
    aggregates: &[AggregateYear],
    by_method: &BTreeMap<&str, Vec<FirmMeasures>>,
    chis: &BTreeMap<i32, f64>,
    cfg: &RunConfig,
) -> Result<()> {
    out.table(
        "fig2_markup_rs.csv",
        &["year", "markup", "rs", "rs_adj", "cov_rs_adj_invmu"],
        &aggregates
            .iter()
            .map(|a| {
                let mut r = vec![a.year.to_string()];
                r.extend([a.mu_agg, a.rs_bar, a.rs_adj_bar, a.cov_rs_invmu].map(num));
                r
            })
            .collect::<Vec<_>>(),
    )?;
    out.table(
        "fig3_profit_share.csv",
        &["year", "profit_share", "zero_cov", "zero_cov_crs"],
        &aggregates
            .iter()
            .map(|a| {
                let mut r = vec![a.year.to_string()];
                r.extend(
                    [
                        a.profit_share_thm,
                        a.chi * (1.0 - a.rs_adj_bar / a.mu_hsw),
                        a.variants.cor3_harmonic,
                    ]
                    .map(num),
                );
                r
            })
            .collect::<Vec<_>>(),
    )?;
    out.table(
        "fig4_decomposition.csv",
        &["year", "rents", "fixed_costs", "nonlinearities", "profit_share"],
        &aggregates
            .iter()
            .map(|a| {
                let mut r = vec![a.year.to_string()];
                r.extend([a.rents, a.fixed_costs_term, a.nonlinearities, a.variants.cor1].map(num));
                r
            })
            .collect::<Vec<_>>(),
    )?;

    // user costs and the profit shares they imply
    let mut fig8 = Vec::new();
    let mut fig9 = Vec::new();
    let foc = by_method.get("foc");
    for a in aggregates {
        let year = a.year;
        let m = data
            .macro_year(year)
            .ok_or_else(|| Error::Domain(format!("no macro series for {year}")))?;
        let (mut macro_r, mut firm_r) = (None, None);
        if let Some(foc) = foc {
            let rows: Vec<&FirmMeasures> = foc.iter().filter(|x| x.year == year).collect();
            let sales = pairwise_sum(&rows.iter().map(|x| x.sale).collect::<Vec<_>>());
            let capital = pairwise_sum(&rows.iter().filter_map(|x| x.capital).collect::<Vec<_>>());
            let pairs: Vec<(Option<f64>, Option<f64>)> = rows.iter().map(|x| (x.user_cost, x.capital)).collect();
            // the sample stands in for the economy: GDP/K = sales / (chi K)
            if capital > 0.0 {
                let u = aggregate_user_cost(sales / a.chi, capital, m.labor_comp / m.gdp, a.profit_share_domar, &pairs)?;
                macro_r = Some(u.macro_r);
                firm_r = u.firm_weighted;
            }
        }
        let deu = m.nominal_rate - m.inflation + cfg.measure.deu_depreciation;
        fig8.push(vec![
            year.to_string(),
            opt(macro_r),
            opt(firm_r),
            num(deu),
            opt(m.external_r),
        ]);
        let share = |name: &str| -> Option<f64> {
            let rows: Vec<&FirmMeasures> = by_method.get(name)?.iter().filter(|x| x.year == year).collect();
            if rows.is_empty() {
                return None;
            }
            let w = pairwise_sum(&rows.iter().map(|x| x.sale).collect::<Vec<_>>());
            let terms: Vec<f64> = rows.iter().map(|x| x.sale / w * x.profit_rate).collect();
            Some(chis[&year] * pairwise_sum(&terms))
        };
        fig9.push(vec![
            year.to_string(),
            opt(share("foc")),
            opt(share("deu")),
            opt(share("external")),
        ]);
    }
    out.table(
        "fig8_user_costs.csv",
        &["year", "macro_identity", "firm_capital_weighted", "rate_rule", "external"],
        &fig8,
    )?;
    out.table(
        "fig9_profit_shares_by_r.csv",
        &["year", "foc", "rate_rule", "external"],
        &fig9,
    )?;
    Ok(())
}
