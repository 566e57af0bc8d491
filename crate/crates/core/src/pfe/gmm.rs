use nalgebra::{DMatrix, DVector};

use super::first_stage::least_squares;
use super::simplex::{nelder_mead, SimplexOptions, SimplexResult};
use super::EstimationSlice;
use crate::error::{Error, Result};

/// Criterion below which (together with a collapsed simplex) a fit counts
/// as converged.
pub const CONVERGED_OBJECTIVE: f64 = 1e-8;
pub const CONVERGED_DIAMETER: f64 = 1e-6;

/// Recovered productivity and its law of motion at a parameter vector.
#[derive(Debug, Clone)]
pub struct ProductivityState {
    /// Log productivity for every observation of the slice.
    pub omega: Vec<f64>,
    pub intercept: f64,
    pub rho: f64,
    /// Innovations for each linked (t, t-1) pair, in pair order.
    pub xi: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub theta_v: f64,
    pub theta_k: f64,
    pub rho: f64,
    pub objective: f64,
    pub converged: bool,
    /// OLS starting point and its criterion value.
    pub init: (f64, f64),
    pub init_objective: f64,
}

/// Second-stage moment problem on a fixed first stage.
pub struct MomentProblem<'a> {
    phi: &'a [f64],
    slice: &'a EstimationSlice,
    pairs: Vec<(usize, usize)>,
}

impl<'a> MomentProblem<'a> {
    pub fn new(phi: &'a [f64], slice: &'a EstimationSlice) -> Result<Self> {
        let pairs = slice.lag_pairs();
        if pairs.is_empty() {
            return Err(Error::NoLagLinks);
        }
        Ok(MomentProblem { phi, slice, pairs })
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn state(&self, theta_v: f64, theta_k: f64) -> ProductivityState {
        let s = self.slice;
        let omega: Vec<f64> = (0..s.len())
            .map(|i| self.phi[i] - theta_v * s.l[i] - theta_k * s.k[i])
            .collect();
        let m = self.pairs.len() as f64;
        let (mut mx, mut my) = (0.0, 0.0);
        for &(cur, prev) in &self.pairs {
            mx += omega[prev];
            my += omega[cur];
        }
        mx /= m;
        my /= m;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for &(cur, prev) in &self.pairs {
            let dx = omega[prev] - mx;
            sxy += dx * (omega[cur] - my);
            sxx += dx * dx;
        }
        // constant lagged productivity leaves the slope unidentified; read it as zero
        let rho = if sxx > 1e-300 * m && sxx.is_finite() { sxy / sxx } else { 0.0 };
        let intercept = my - rho * mx;
        let xi = self
            .pairs
            .iter()
            .map(|&(cur, prev)| omega[cur] - intercept - rho * omega[prev])
            .collect();
        ProductivityState {
            omega,
            intercept,
            rho,
            xi,
        }
    }

    /// Sample moments `mean(xi * l_{t-1})` and `mean(xi * k_t)`.
    pub fn moments(&self, theta_v: f64, theta_k: f64) -> [f64; 2] {
        let st = self.state(theta_v, theta_k);
        let m = self.pairs.len() as f64;
        let mut g = [0.0, 0.0];
        for (&(cur, prev), xi) in self.pairs.iter().zip(&st.xi) {
            g[0] += xi * self.slice.l[prev];
            g[1] += xi * self.slice.k[cur];
        }
        [g[0] / m, g[1] / m]
    }

    /// Identity-weighted GMM criterion.
    pub fn criterion(&self, theta_v: f64, theta_k: f64) -> f64 {
        let [a, b] = self.moments(theta_v, theta_k);
        let v = a * a + b * b;
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }
}

/// OLS of log output on an intercept, log variable input and log capital.
pub fn ols_init(slice: &EstimationSlice) -> Result<(f64, f64)> {
    let n = slice.len();
    let x = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => slice.l[i],
        _ => slice.k[i],
    });
    let y = DVector::from_column_slice(&slice.y);
    let b = least_squares(&x, &y)
        .ok_or_else(|| Error::Estimation("OLS design is rank deficient".into()))?;
    Ok((b[1], b[2]))
}

/// Minimises the moment criterion from the OLS estimates and a 3x3 grid of
/// perturbations around them. The moment equations can have several exact
/// roots; among converged runs the one closest to the OLS estimates wins,
/// otherwise the lowest criterion.
pub fn second_stage_gmm(phi: &[f64], slice: &EstimationSlice, spread: f64) -> Result<GmmFit> {
    let problem = MomentProblem::new(phi, slice)?;
    let init = ols_init(slice)?;
    let init_objective = problem.criterion(init.0, init.1);
    let opts = SimplexOptions::default();
    let offsets = [0.0, -spread, spread];

    let mut runs = Vec::with_capacity(9);
    for dv in offsets {
        for dk in offsets {
            let x0 = [init.0 + dv, init.1 + dk];
            runs.push(nelder_mead(|t: &[f64]| problem.criterion(t[0], t[1]), &x0, &opts));
        }
    }
    let is_converged = |r: &SimplexResult| r.fx < CONVERGED_OBJECTIVE && r.diameter < CONVERGED_DIAMETER;
    let distance = |r: &SimplexResult| (r.x[0] - init.0).hypot(r.x[1] - init.1);
    let best = if runs.iter().any(is_converged) {
        runs.iter()
            .filter(|r| is_converged(r))
            .min_by(|a, b| distance(a).total_cmp(&distance(b)).then(a.fx.total_cmp(&b.fx)))
    } else {
        runs.iter().min_by(|a, b| a.fx.total_cmp(&b.fx))
    }
    .expect("nine starts");
    let st = problem.state(best.x[0], best.x[1]);
    Ok(GmmFit {
        theta_v: best.x[0],
        theta_k: best.x[1],
        rho: st.rho,
        objective: best.fx,
        converged: is_converged(best),
        init,
        init_objective,
    })
}
