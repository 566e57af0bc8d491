use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use super::{normalize_industry, FirmYear, MacroYear, PanelDataset};
use crate::error::{Error, Result};

/// Source column names for each firm-level field. Defaults follow the
/// Compustat mnemonics.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaMap {
    pub firm_id: String,
    pub year: String,
    pub industry: String,
    pub sale: String,
    pub cogs: String,
    pub sga: String,
    pub rd: String,
    pub ppegt: String,
    pub k_int: String,
    pub capx: String,
    pub icapt: String,
}

impl Default for SchemaMap {
    fn default() -> Self {
        SchemaMap {
            firm_id: "gvkey".into(),
            year: "fyear".into(),
            industry: "naics2".into(),
            sale: "sale".into(),
            cogs: "cogs".into(),
            sga: "xsga".into(),
            rd: "xrd".into(),
            ppegt: "ppegt".into(),
            k_int: "k_int".into(),
            capx: "capx".into(),
            icapt: "icapt".into(),
        }
    }
}

impl SchemaMap {
    /// Overrides one logical field's source column. Returns `false` for an
    /// unknown field name.
    pub fn set(&mut self, field: &str, column: &str) -> bool {
        let slot = match field {
            "firm_id" => &mut self.firm_id,
            "year" => &mut self.year,
            "industry" => &mut self.industry,
            "sale" => &mut self.sale,
            "cogs" => &mut self.cogs,
            "sga" => &mut self.sga,
            "rd" => &mut self.rd,
            "ppegt" => &mut self.ppegt,
            "k_int" => &mut self.k_int,
            "capx" => &mut self.capx,
            "icapt" => &mut self.icapt,
            _ => return false,
        };
        *slot = column.to_string();
        true
    }
}

fn column_index(headers: &HashMap<String, usize>, name: &str) -> Result<usize> {
    headers
        .get(name)
        .copied()
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

fn parse_opt(raw: &str, row: usize, column: &str) -> Result<Option<f64>> {
    let t = raw.trim();
    if t.is_empty() {
        return Ok(None);
    }
    t.parse::<f64>().map(Some).map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        value: t.to_string(),
    })
}

fn parse_industry(raw: &str, row: usize, column: &str) -> Result<Option<u16>> {
    let t = raw.trim();
    if t.is_empty() || t.contains([';', '|', '/']) {
        // blank or multiple codes: both are dropped by the cleaning rules
        return Ok(None);
    }
    let code = t.parse::<f64>().ok().filter(|c| c.fract() == 0.0 && *c >= 0.0);
    match code {
        Some(c) => Ok(normalize_industry(c as u16)),
        None => Err(Error::Parse {
            row,
            column: column.to_string(),
            value: t.to_string(),
        }),
    }
}

/// Reads a firm-level CSV into a dataset with an empty macro table.
pub fn load_firm_panel(path: impl AsRef<Path>, schema: &SchemaMap) -> Result<PanelDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers: HashMap<String, usize> = rdr
        .headers()?
        .iter()
        .enumerate()
        .map(|(i, h)| (h.to_string(), i))
        .collect();

    let idx = |name: &str| column_index(&headers, name);
    let (i_id, i_year, i_ind) = (idx(&schema.firm_id)?, idx(&schema.year)?, idx(&schema.industry)?);
    let numeric = [
        (idx(&schema.sale)?, &schema.sale),
        (idx(&schema.cogs)?, &schema.cogs),
        (idx(&schema.sga)?, &schema.sga),
        (idx(&schema.rd)?, &schema.rd),
        (idx(&schema.ppegt)?, &schema.ppegt),
        (idx(&schema.k_int)?, &schema.k_int),
        (idx(&schema.capx)?, &schema.capx),
        (idx(&schema.icapt)?, &schema.icapt),
    ];

    let mut observations = Vec::new();
    for (n, record) in rdr.records().enumerate() {
        let record = record?;
        let row = n + 1;
        let get = |i: usize| record.get(i).unwrap_or("");
        let year_raw = get(i_year);
        let year = year_raw
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|y| y.fract() == 0.0)
            .map(|y| y as i32)
            .ok_or_else(|| Error::Parse {
                row,
                column: schema.year.clone(),
                value: year_raw.to_string(),
            })?;
        let mut obs = FirmYear::new(get(i_id).trim(), year, parse_industry(get(i_ind), row, &schema.industry)?);
        let mut vals = [None; 8];
        for (slot, (i, name)) in vals.iter_mut().zip(numeric.iter()) {
            *slot = parse_opt(get(*i), row, name)?;
        }
        let [sale, cogs, sga, rd, ppegt, k_int, capx, icapt] = vals;
        obs.sale = sale;
        obs.cogs = cogs;
        obs.sga = sga;
        obs.rd = rd;
        obs.ppegt = ppegt;
        obs.k_int = k_int;
        obs.capx = capx;
        obs.icapt = icapt;
        observations.push(obs);
    }
    PanelDataset::new(observations, Vec::new())
}

/// Reads the macro CSV (`year, gdp, total_sales, deflator, labor_comp, ffr,
/// inflation`, optional `external_r`).
pub fn load_macro(path: impl AsRef<Path>) -> Result<Vec<MacroYear>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MacroNotFound(path.to_path_buf()));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers: HashMap<String, usize> = rdr
        .headers()?
        .iter()
        .enumerate()
        .map(|(i, h)| (h.to_string(), i))
        .collect();
    let cols = ["year", "gdp", "total_sales", "deflator", "labor_comp", "ffr", "inflation"];
    let mut idx = [0usize; 7];
    for (slot, c) in idx.iter_mut().zip(cols) {
        *slot = column_index(&headers, c)?;
    }
    let ext = headers.get("external_r").copied();

    let mut out = Vec::new();
    for (n, record) in rdr.records().enumerate() {
        let record = record?;
        let row = n + 1;
        let mut v = [0.0; 7];
        for ((slot, i), c) in v.iter_mut().zip(idx).zip(cols) {
            *slot = parse_opt(record.get(i).unwrap_or(""), row, c)?.ok_or_else(|| Error::Parse {
                row,
                column: c.to_string(),
                value: String::new(),
            })?;
        }
        let external_r = match ext {
            Some(i) => parse_opt(record.get(i).unwrap_or(""), row, "external_r")?,
            None => None,
        };
        if !(v[1] > 0.0) {
            return Err(Error::Domain(format!("gdp must be positive (year {})", v[0])));
        }
        out.push(MacroYear {
            year: v[0] as i32,
            gdp: v[1],
            total_sales: v[2],
            deflator: v[3],
            labor_comp: v[4],
            nominal_rate: v[5],
            inflation: v[6],
            external_r,
        });
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes observations in the default firm schema.
pub fn write_firm_panel(path: impl AsRef<Path>, observations: &[FirmYear]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "gvkey", "fyear", "naics2", "sale", "cogs", "xsga", "xrd", "ppegt", "k_int", "capx", "icapt",
    ])?;
    for o in observations {
        w.write_record([
            o.firm_id.clone(),
            o.year.to_string(),
            o.industry.map(|c| c.to_string()).unwrap_or_default(),
            fmt_opt(o.sale),
            fmt_opt(o.cogs),
            fmt_opt(o.sga),
            fmt_opt(o.rd),
            fmt_opt(o.ppegt),
            fmt_opt(o.k_int),
            fmt_opt(o.capx),
            fmt_opt(o.icapt),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_macro(path: impl AsRef<Path>, macros: &[MacroYear]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let with_ext = macros.iter().any(|m| m.external_r.is_some());
    let mut header = vec!["year", "gdp", "total_sales", "deflator", "labor_comp", "ffr", "inflation"];
    if with_ext {
        header.push("external_r");
    }
    w.write_record(&header)?;
    for m in macros {
        let mut rec = vec![
            m.year.to_string(),
            m.gdp.to_string(),
            m.total_sales.to_string(),
            m.deflator.to_string(),
            m.labor_comp.to_string(),
            m.nominal_rate.to_string(),
            m.inflation.to_string(),
        ];
        if with_ext {
            rec.push(fmt_opt(m.external_r));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
