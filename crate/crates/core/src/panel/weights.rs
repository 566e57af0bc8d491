use super::PanelDataset;
use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;

#[derive(Debug, Clone, PartialEq)]
pub struct FirmWeight {
    pub firm_id: String,
    pub sale: f64,
    /// Sales share within the year's sample.
    pub omega: f64,
    /// Sales over GDP.
    pub domar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    pub year: i32,
    pub firms: Vec<FirmWeight>,
    /// Sum of the sample's Domar weights.
    pub chi_sample: f64,
    /// Total sales over GDP from the macro series.
    pub chi_macro: f64,
}

/// Sales shares and Domar weights for one year.
pub fn compute_weights(data: &PanelDataset, year: i32) -> Result<WeightTable> {
    let m = data
        .macro_year(year)
        .ok_or_else(|| Error::Domain(format!("no macro series for {year}")))?;
    let rows: Vec<_> = data.observations().iter().filter(|o| o.year == year).collect();
    if rows.is_empty() {
        return Err(Error::Domain(format!("no observations in {year}")));
    }
    let sales: Vec<f64> = rows.iter().map(|o| o.sale.unwrap_or(0.0)).collect();
    let total = pairwise_sum(&sales);
    if !(total > 0.0) {
        return Err(Error::DegenerateWeights(format!("zero total sales in {year}")));
    }
    let firms: Vec<FirmWeight> = rows
        .iter()
        .zip(&sales)
        .map(|(o, &s)| FirmWeight {
            firm_id: o.firm_id.clone(),
            sale: s,
            omega: s / total,
            domar: s / m.gdp,
        })
        .collect();
    let domar: Vec<f64> = firms.iter().map(|f| f.domar).collect();
    Ok(WeightTable {
        year,
        chi_sample: pairwise_sum(&domar),
        chi_macro: m.chi(),
        firms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{FirmYear, MacroYear};

    fn data(sales: &[f64], gdp: f64) -> PanelDataset {
        let rows = sales
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let mut o = FirmYear::new(format!("f{i}"), 2020, Some(31));
                o.sale = Some(s);
                o
            })
            .collect();
        let m = MacroYear {
            year: 2020,
            gdp,
            total_sales: sales.iter().sum(),
            deflator: 1.0,
            labor_comp: 0.5 * gdp,
            nominal_rate: 0.0,
            inflation: 0.0,
            external_r: None,
        };
        PanelDataset::new(rows, vec![m]).unwrap()
    }

    #[test]
    fn vertical_economy_weights() {
        let w = compute_weights(&data(&[100.0, 90.0], 100.0), 2020).unwrap();
        assert_eq!(w.firms[0].domar, 1.0);
        assert_eq!(w.firms[1].domar, 0.9);
        assert!((w.firms[0].omega - 10.0 / 19.0).abs() < 1e-15);
        assert!((w.firms[1].omega - 9.0 / 19.0).abs() < 1e-15);
        assert!((w.chi_sample - 1.9).abs() < 1e-15);
    }

    #[test]
    fn single_firm_economy() {
        let w = compute_weights(&data(&[42.0], 42.0), 2020).unwrap();
        assert_eq!(w.firms[0].domar, 1.0);
        assert_eq!(w.firms[0].omega, 1.0);
    }

    #[test]
    fn zero_sales_is_degenerate() {
        assert!(matches!(
            compute_weights(&data(&[0.0, 0.0], 1.0), 2020),
            Err(Error::DegenerateWeights(_))
        ));
    }
}
