use nalgebra::{DMatrix, DVector};

use super::EstimationSlice;
use crate::error::{Error, Result};

/// Fitted expected output and first-stage residuals.
#[derive(Debug, Clone)]
pub struct FirstStage {
    pub phi: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Polynomial degree actually used.
    pub degree: usize,
    /// Degrees that were tried and found rank deficient.
    pub fallbacks: Vec<usize>,
}

/// Exponent triples `(a, b, c)` with `a + b + c <= degree`, in a fixed order.
pub fn monomials(degree: usize) -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    for total in 0..=degree as u32 {
        for a in (0..=total).rev() {
            for b in (0..=total - a).rev() {
                out.push([a, b, total - a - b]);
            }
        }
    }
    out
}

fn standardize(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let scale = if sd > 0.0 { sd } else { 1.0 };
    v.iter().map(|x| (x - mean) / scale).collect()
}

/// Least-squares fit of `y` on the columns of `x`, or `None` if `x` is
/// numerically rank deficient.
pub(crate) fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    if x.nrows() < x.ncols() {
        return None;
    }
    let svd = x.clone().svd(true, true);
    let sv = &svd.singular_values;
    let max = sv.max();
    if !(max > 0.0) || sv.min() / max < 1e-10 {
        return None;
    }
    svd.solve(y, 0.0).ok()
}

/// Regresses log output on all monomials of degree <= 3 in
/// (log variable input, log capital, log proxy), falling back to lower
/// degrees when the design is rank deficient.
pub fn first_stage(slice: &EstimationSlice) -> Result<FirstStage> {
    let n = slice.len();
    // polynomial fits are invariant to affine rescaling of the regressors
    let cols = [
        standardize(&slice.l),
        standardize(&slice.k),
        standardize(&slice.proxy),
    ];
    let y = DVector::from_column_slice(&slice.y);
    let mut fallbacks = Vec::new();
    for degree in (1..=3).rev() {
        let terms = monomials(degree);
        let x = DMatrix::from_fn(n, terms.len(), |i, j| {
            let [a, b, c] = terms[j];
            cols[0][i].powi(a as i32) * cols[1][i].powi(b as i32) * cols[2][i].powi(c as i32)
        });
        match least_squares(&x, &y) {
            Some(beta) => {
                let fitted = &x * beta;
                let phi: Vec<f64> = fitted.iter().copied().collect();
                let residuals = slice.y.iter().zip(&phi).map(|(a, b)| a - b).collect();
                return Ok(FirstStage {
                    phi,
                    residuals,
                    degree,
                    fallbacks,
                });
            }
            None => fallbacks.push(degree),
        }
    }
    Err(Error::Estimation(
        "first-stage design is rank deficient at every polynomial degree".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_slice(n: usize, seed: u64) -> EstimationSlice {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = EstimationSlice::default();
        for i in 0..n {
            s.push(i / 5, (i % 5) as i32, 0.0, rng.gen_range(0.0..3.0), rng.gen_range(1.0..4.0), rng.gen_range(-1.0..2.0));
        }
        s
    }

    #[test]
    fn twenty_cubic_terms() {
        assert_eq!(monomials(3).len(), 20);
        assert_eq!(monomials(2).len(), 10);
        assert_eq!(monomials(1).len(), 4);
    }

    #[test]
    fn exact_cubic_has_zero_residuals() {
        let mut s = random_slice(200, 1);
        for i in 0..s.len() {
            let (l, k, p) = (s.l[i], s.k[i], s.proxy[i]);
            s.y[i] = 0.5 + l - 0.3 * k * k + 0.1 * l * k * p - 0.05 * p.powi(3) + 0.2 * l * l * k;
        }
        let fs = first_stage(&s).unwrap();
        assert_eq!(fs.degree, 3);
        assert!(fs.residuals.iter().all(|r| r.abs() < 1e-9));
    }

    #[test]
    fn constant_output_fits_mean() {
        let mut s = random_slice(100, 2);
        s.y.iter_mut().for_each(|y| *y = 2.5);
        let fs = first_stage(&s).unwrap();
        assert!(fs.phi.iter().all(|p| (p - 2.5).abs() < 1e-10));
    }

    #[test]
    fn residual_variance_tracks_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = random_slice(4000, 4);
        let sigma = 0.1;
        for i in 0..s.len() {
            let e: f64 = rng.sample(StandardNormal);
            s.y[i] = 0.7 * s.l[i] + 0.3 * s.k[i] + 0.4 * s.proxy[i] + sigma * e;
        }
        let fs = first_stage(&s).unwrap();
        let var = fs.residuals.iter().map(|r| r * r).sum::<f64>() / s.len() as f64;
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.10, "{var}");
        let mean = fs.residuals.iter().sum::<f64>() / s.len() as f64;
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn collinear_proxy_falls_back_then_fails() {
        let mut s = random_slice(50, 5);
        s.proxy = s.k.clone();
        let err = first_stage(&s).unwrap_err();
        assert!(matches!(err, Error::Estimation(_)));

        // a proxy that is a nonlinear function of capital breaks only the higher degrees
        let mut s = random_slice(80, 6);
        s.proxy = s.k.iter().map(|k| k * k).collect();
        let fs = first_stage(&s).unwrap();
        assert_eq!(fs.degree, 1);
        assert_eq!(fs.fallbacks, vec![3, 2]);
    }
}
