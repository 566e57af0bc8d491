use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::agg::MarkupScheme;
use crate::dynamics::Reference;
use crate::error::{Error, Result};
use crate::mpower::{MeasureConfig, UserCostMethod};
use crate::panel::{CleaningConfig, SchemaMap, TrimScope};
use crate::pfe::{CapitalMeasure, EstimationConfig, ProxyColumn, VariableInput, WinsorScope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// OPEX as the variable input, physical plus intangible capital, user
    /// costs from the capital first-order condition, harmonic aggregation.
    Baseline,
    /// COGS as the variable input, physical capital only, a rate-based
    /// user cost and sales-weighted markup aggregation.
    DeuReplication,
    /// Baseline with physical capital only.
    NoIntangibles,
    /// Baseline with COGS as the only variable input.
    CogsOnly,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Baseline,
        Preset::DeuReplication,
        Preset::NoIntangibles,
        Preset::CogsOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Baseline => "baseline",
            Preset::DeuReplication => "deu_replication",
            Preset::NoIntangibles => "no_intangibles",
            Preset::CogsOnly => "cogs_only",
        }
    }

    /// Keys the preset sets away from the baseline bundle.
    pub fn bundle(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Preset::Baseline => &[],
            Preset::DeuReplication => &[
                ("estimate.variable_input", "cogs"),
                ("estimate.capital", "physical"),
                ("measure.user_cost", "deu"),
                ("aggregate.markup", "sales_weighted"),
            ],
            Preset::NoIntangibles => &[("estimate.capital", "physical")],
            Preset::CogsOnly => &[("estimate.variable_input", "cogs")],
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset `{s}`")))
    }
}

/// Where the input-output multiplier comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChiSource {
    /// Total sales over GDP from the macro series.
    Macro,
    /// Sum of the sample's Domar weights.
    Sample,
}

/// One explicitly set key that changed the preset's value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Override {
    pub key: String,
    pub preset_value: String,
    pub value: String,
    pub source: String,
}

const BASELINE: &[(&str, &str)] = &[
    ("paths.firms", ""),
    ("paths.macro", ""),
    ("paths.out", "out"),
    ("seed", "0"),
    ("years.range", ""),
    ("schema.firm_id", "gvkey"),
    ("schema.year", "fyear"),
    ("schema.industry", "naics2"),
    ("schema.sale", "sale"),
    ("schema.cogs", "cogs"),
    ("schema.sga", "xsga"),
    ("schema.rd", "xrd"),
    ("schema.ppegt", "ppegt"),
    ("schema.k_int", "k_int"),
    ("schema.capx", "capx"),
    ("schema.icapt", "icapt"),
    ("clean.trim_low", "0.01"),
    ("clean.trim_high", "0.99"),
    ("clean.trim_scope", "pooled"),
    ("clean.rd_missing_as_zero", "false"),
    ("intangible.delta", "0.15"),
    ("intangible.sga_share", "0.3"),
    ("estimate.variable_input", "opex"),
    ("estimate.capital", "total"),
    ("estimate.proxy", "icapt"),
    ("estimate.min_obs", "50"),
    ("estimate.window", "9"),
    ("estimate.start_spread", "0.1"),
    ("estimate.winsor_low", "0.05"),
    ("estimate.winsor_high", "0.95"),
    ("estimate.winsor_scope", "pooled"),
    ("estimate.strict", "false"),
    ("measure.user_cost", "foc"),
    ("measure.deu_depreciation", "0.12"),
    ("measure.tc_includes_capital", "true"),
    ("aggregate.chi_source", "macro"),
    ("aggregate.markup", "harmonic"),
    ("aggregate.decomposition_reference", "midpoint"),
];

/// Keys that locate files rather than describe the computation; they are
/// left out of the configuration hash.
pub(crate) const LOCATION_KEYS: [&str; 1] = ["paths.out"];

/// Every recognised key with its value under `preset`.
pub fn preset_values(preset: Preset) -> BTreeMap<String, String> {
    let mut m: BTreeMap<String, String> = BASELINE.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    for (k, v) in preset.bundle() {
        m.insert(k.to_string(), v.to_string());
    }
    m
}

/// Key/value pairs from a config file. `#` starts a comment; blank lines
/// are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", n + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Collects explicit settings, remembering where each came from, and
/// resolves them against a preset.
#[derive(Debug, Clone, Default)]
pub struct ConfigBuilder {
    settings: Vec<(String, String, String)>,
}

impl ConfigBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn file(mut self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let source = path.display().to_string();
        for (k, v) in parse_pairs(&text)? {
            let v = if k.starts_with("paths.") && !v.is_empty() {
                resolve(path.parent(), &v)
            } else {
                v
            };
            self.settings.push((k, v, source.clone()));
        }
        Ok(self)
    }

    /// Sets one key; later settings win.
    pub fn set(mut self, key: &str, value: impl Into<String>, source: &str) -> Self {
        self.settings.push((key.to_string(), value.into(), source.to_string()));
        self
    }

    pub fn build(self) -> Result<RunConfig> {
        let preset: Preset = match self.settings.iter().rev().find(|(k, _, _)| k == "preset") {
            Some((_, v, _)) => v.parse()?,
            None => Preset::Baseline,
        };
        let mut values = preset_values(preset);
        let mut latest: BTreeMap<String, (String, String)> = BTreeMap::new();
        for (k, v, src) in self.settings {
            if k == "preset" {
                continue;
            }
            if !values.contains_key(&k) {
                return Err(Error::Config(format!("unknown key `{k}` (from {src})")));
            }
            latest.insert(k, (v, src));
        }
        let defaults = values.clone();
        let mut overrides = Vec::new();
        for (k, (v, src)) in latest {
            if defaults[&k] != v {
                overrides.push(Override {
                    key: k.clone(),
                    preset_value: defaults[&k].clone(),
                    value: v.clone(),
                    source: src,
                });
            }
            values.insert(k, v);
        }
        RunConfig::from_values(preset, values, overrides)
    }
}

fn resolve(base: Option<&Path>, value: &str) -> String {
    let p = Path::new(value);
    match base {
        Some(b) if p.is_relative() && !b.as_os_str().is_empty() => b.join(p).display().to_string(),
        _ => value.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntangibleConfig {
    pub delta: f64,
    pub sga_share: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateConfig {
    pub chi_source: ChiSource,
    pub markup: MarkupScheme,
    pub reference: Reference,
}

/// Fully resolved settings for one pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub firms: Option<PathBuf>,
    pub macro_path: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub years: Option<(i32, i32)>,
    pub schema: SchemaMap,
    pub clean: CleaningConfig,
    pub intangible: IntangibleConfig,
    pub estimation: EstimationConfig,
    /// Treat any non-converged estimation window as fatal.
    pub strict: bool,
    pub measure: MeasureConfig,
    pub aggregate: AggregateConfig,
    pub overrides: Vec<Override>,
    values: BTreeMap<String, String>,
}

fn parse_num<T: std::str::FromStr>(values: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let v = &values[key];
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot read `{v}` as a number")))
}

fn parse_bool(values: &BTreeMap<String, String>, key: &str) -> Result<bool> {
    match values[key].as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        v => Err(Error::Config(format!("`{key}`: expected true or false, got `{v}`"))),
    }
}

fn choice<T: Copy>(values: &BTreeMap<String, String>, key: &str, options: &[(&str, T)]) -> Result<T> {
    let v = values[key].as_str();
    options.iter().find(|(name, _)| *name == v).map(|(_, t)| *t).ok_or_else(|| {
        let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
        Error::Config(format!("`{key}`: expected one of {}, got `{v}`", names.join(", ")))
    })
}

/// Parses `A:B` into an inclusive year range.
pub fn parse_year_range(s: &str) -> Result<(i32, i32)> {
    let bad = || Error::Config(format!("year range `{s}` is not of the form A:B"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let (a, b): (i32, i32) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    if a > b {
        return Err(Error::Config(format!("year range `{s}` is empty")));
    }
    Ok((a, b))
}

impl RunConfig {
    /// The preset's bundle with no explicit settings.
    pub fn preset(preset: Preset) -> Result<RunConfig> {
        RunConfig::from_values(preset, preset_values(preset), Vec::new())
    }

    fn from_values(preset: Preset, values: BTreeMap<String, String>, overrides: Vec<Override>) -> Result<RunConfig> {
        let path = |k: &str| (!values[k].is_empty()).then(|| PathBuf::from(&values[k]));
        let mut schema = SchemaMap::default();
        for (k, v) in values.range("schema.".to_string().."schema/".to_string()) {
            if v.is_empty() || !schema.set(&k["schema.".len()..], v) {
                return Err(Error::Config(format!("`{k}`: invalid column mapping `{v}`")));
            }
        }
        let clean = CleaningConfig {
            trim_low: parse_num(&values, "clean.trim_low")?,
            trim_high: parse_num(&values, "clean.trim_high")?,
            trim_scope: choice(
                &values,
                "clean.trim_scope",
                &[("pooled", TrimScope::Pooled), ("per_year", TrimScope::PerYear)],
            )?,
            rd_missing_as_zero: parse_bool(&values, "clean.rd_missing_as_zero")?,
        };
        let variable_input = choice(
            &values,
            "estimate.variable_input",
            &[("opex", VariableInput::Opex), ("cogs", VariableInput::Cogs)],
        )?;
        let capital = choice(
            &values,
            "estimate.capital",
            &[("total", CapitalMeasure::Total), ("physical", CapitalMeasure::Physical)],
        )?;
        let estimation = EstimationConfig {
            variable_input,
            capital,
            proxy: choice(
                &values,
                "estimate.proxy",
                &[("icapt", ProxyColumn::Icapt), ("capx", ProxyColumn::Capx)],
            )?,
            min_obs: parse_num(&values, "estimate.min_obs")?,
            window: parse_num(&values, "estimate.window")?,
            start_spread: parse_num(&values, "estimate.start_spread")?,
            winsor_low: parse_num(&values, "estimate.winsor_low")?,
            winsor_high: parse_num(&values, "estimate.winsor_high")?,
            winsor_scope: choice(
                &values,
                "estimate.winsor_scope",
                &[("pooled", WinsorScope::Pooled), ("per_industry", WinsorScope::PerIndustry)],
            )?,
        };
        let measure = MeasureConfig {
            variable_input,
            capital,
            user_cost: choice(
                &values,
                "measure.user_cost",
                &[
                    ("foc", UserCostMethod::Foc),
                    ("deu", UserCostMethod::Deu),
                    ("external", UserCostMethod::External),
                ],
            )?,
            deu_depreciation: parse_num(&values, "measure.deu_depreciation")?,
            tc_includes_capital: parse_bool(&values, "measure.tc_includes_capital")?,
        };
        let reference = match values["aggregate.decomposition_reference"].as_str() {
            "midpoint" => Reference::Midpoint,
            "literal" => Reference::Literal,
            v => Reference::Custom(v.parse().map_err(|_| {
                Error::Config(format!(
                    "`aggregate.decomposition_reference`: expected midpoint, literal or a number, got `{v}`"
                ))
            })?),
        };
        let aggregate = AggregateConfig {
            chi_source: choice(
                &values,
                "aggregate.chi_source",
                &[("macro", ChiSource::Macro), ("sample", ChiSource::Sample)],
            )?,
            markup: choice(
                &values,
                "aggregate.markup",
                &[
                    ("harmonic", MarkupScheme::Harmonic),
                    ("sales_weighted", MarkupScheme::SalesWeighted),
                ],
            )?,
            reference,
        };
        let years = match values["years.range"].as_str() {
            "" => None,
            s => Some(parse_year_range(s)?),
        };
        let cfg = RunConfig {
            preset,
            firms: path("paths.firms"),
            macro_path: path("paths.macro"),
            out: path("paths.out").unwrap_or_else(|| PathBuf::from("out")),
            seed: parse_num(&values, "seed")?,
            years,
            schema,
            clean,
            intangible: IntangibleConfig {
                delta: parse_num(&values, "intangible.delta")?,
                sga_share: parse_num(&values, "intangible.sga_share")?,
            },
            estimation,
            strict: parse_bool(&values, "estimate.strict")?,
            measure,
            aggregate,
            overrides,
            values,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let c = &self.clean;
        if !(0.0 <= c.trim_low && c.trim_low < c.trim_high && c.trim_high <= 1.0) {
            return Err(Error::Config(format!(
                "trim percentiles must satisfy 0 <= low < high <= 1 (got {}, {})",
                c.trim_low, c.trim_high
            )));
        }
        let i = &self.intangible;
        if !(i.delta > 0.0 && i.delta <= 1.0) || !(0.0..=1.0).contains(&i.sga_share) {
            return Err(Error::Config(format!(
                "intangible.delta must be in (0, 1] and intangible.sga_share in [0, 1] (got {}, {})",
                i.delta, i.sga_share
            )));
        }
        let e = &self.estimation;
        if e.window == 0 || e.window.is_multiple_of(2) {
            return Err(Error::Config(format!("estimate.window must be odd (got {})", e.window)));
        }
        if !(0.0 <= e.winsor_low && e.winsor_low < e.winsor_high && e.winsor_high <= 1.0) {
            return Err(Error::Config(format!(
                "winsor percentiles must satisfy 0 <= low < high <= 1 (got {}, {})",
                e.winsor_low, e.winsor_high
            )));
        }
        if !(e.start_spread >= 0.0) {
            return Err(Error::Config("estimate.start_spread must be nonnegative".into()));
        }
        if !(self.measure.deu_depreciation >= 0.0) {
            return Err(Error::Config("measure.deu_depreciation must be nonnegative".into()));
        }
        Ok(())
    }

    /// The value of a recognised key after presets and overrides.
    pub fn value(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Resolved settings as sorted `key = value` lines, preset first.
    pub fn canonical(&self) -> String {
        let mut s = format!("preset = {}\n", self.preset);
        for (k, v) in &self.values {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    /// SHA-256 of the canonical settings, excluding output location.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("preset = {}\n", self.preset));
        for (k, v) in self.values.iter().filter(|(k, _)| !LOCATION_KEYS.contains(&k.as_str())) {
            h.update(format!("{k} = {v}\n"));
        }
        hex::encode(h.finalize())
    }
}
