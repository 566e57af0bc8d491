use crate::error::{Error, Result};

/// Cross-section from the technology `y = (l - l_bar)^alpha`, where `l_bar`
/// is a fixed input requirement.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedCostSlice {
    pub alpha: f64,
    pub l_bar: f64,
    pub l: Vec<f64>,
    pub y: Vec<f64>,
    /// Local output elasticity `alpha l / (l - l_bar)` at each point.
    pub predicted: Vec<f64>,
}

pub fn local_elasticity(alpha: f64, l: f64, l_bar: f64) -> f64 {
    alpha * l / (l - l_bar)
}

pub fn gen_fixed_cost_firm(alpha: f64, l_bar: f64, grid: &[f64]) -> Result<FixedCostSlice> {
    if !(alpha > 0.0) || !(l_bar >= 0.0) {
        return Err(Error::Parameter(format!("need alpha > 0 and l_bar >= 0 (got {alpha}, {l_bar})")));
    }
    if let Some(l) = grid.iter().find(|l| !(**l > l_bar)) {
        return Err(Error::Domain(format!("input {l} does not exceed the fixed requirement {l_bar}")));
    }
    Ok(FixedCostSlice {
        alpha,
        l_bar,
        l: grid.to_vec(),
        y: grid.iter().map(|l| (l - l_bar).powf(alpha)).collect(),
        predicted: grid.iter().map(|&l| local_elasticity(alpha, l, l_bar)).collect(),
    })
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("log-log slope needs two or more positive pairs".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Domain("log-log slope needs variation in x".into()));
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_fixed_requirement_recovers_alpha() {
        let grid: Vec<f64> = (1..=50).map(|i| i as f64 * 0.3).collect();
        let s = gen_fixed_cost_firm(0.85, 0.0, &grid).unwrap();
        assert!((log_log_slope(&s.l, &s.y).unwrap() - 0.85).abs() < 1e-12);
    }

    #[test]
    fn doubling_the_requirement_gives_elasticity_two() {
        assert_eq!(local_elasticity(1.0, 4.0, 2.0), 2.0);
    }

    #[test]
    fn tight_grid_matches_local_elasticity() {
        let (alpha, l_bar, l_star) = (0.9, 3.0, 10.0);
        let grid: Vec<f64> = (-10..=10).map(|i| l_star * (1.0 + 0.001 * i as f64)).collect();
        let s = gen_fixed_cost_firm(alpha, l_bar, &grid).unwrap();
        let slope = log_log_slope(&s.l, &s.y).unwrap();
        let target = local_elasticity(alpha, l_star, l_bar);
        assert!((slope / target - 1.0).abs() < 0.02);
    }

    #[test]
    fn input_below_requirement_is_rejected() {
        assert!(gen_fixed_cost_firm(0.9, 2.0, &[3.0, 2.0]).is_err());
    }
}
