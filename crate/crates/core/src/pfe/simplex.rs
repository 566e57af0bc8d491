//! Derivative-free Nelder–Mead simplex minimiser.

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    /// Edge length of the initial simplex along each axis.
    pub step: f64,
    /// Stop once the simplex diameter falls below this.
    pub xtol: f64,
    /// ... and the spread of function values falls below this.
    pub ftol: f64,
    pub max_iter: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            step: 0.1,
            xtol: 1e-10,
            ftol: 1e-18,
            max_iter: 4000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    /// Largest distance from the best vertex to any other vertex.
    pub diameter: f64,
}

fn diameter(simplex: &[(Vec<f64>, f64)]) -> f64 {
    let best = &simplex[0].0;
    simplex[1..]
        .iter()
        .map(|(p, _)| {
            p.iter()
                .zip(best)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

fn sort(simplex: &mut [(Vec<f64>, f64)]) {
    // NaN sorts last so it is replaced first
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or_else(|| a.1.is_nan().cmp(&b.1.is_nan())));
}

fn run<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], opts: &SimplexOptions, iter_budget: usize) -> SimplexResult {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += opts.step;
        let fp = f(&p);
        simplex.push((p, fp));
    }
    sort(&mut simplex);

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut iterations = 0;
    while iterations < iter_budget {
        let spread = simplex[n].1 - simplex[0].1;
        if diameter(&simplex) < opts.xtol && spread.abs() <= opts.ftol.max(f64::EPSILON * simplex[0].1.abs()) {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (p, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };

        let xr = along(-alpha);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = along(-gamma);
            let fe = f(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(-rho);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(rho);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for (p, fp) in simplex.iter_mut().skip(1) {
                    for (v, b) in p.iter_mut().zip(&best) {
                        *v = b + sigma * (*v - b);
                    }
                    *fp = f(p);
                }
            }
        }
        sort(&mut simplex);
    }
    SimplexResult {
        diameter: diameter(&simplex),
        x: simplex[0].0.clone(),
        fx: simplex[0].1,
        iterations,
    }
}

/// Minimises `f` from `x0`. One restart from the best vertex with a
/// smaller simplex guards against premature collapse.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], opts: &SimplexOptions) -> SimplexResult {
    let first = run(&f, x0, opts, opts.max_iter);
    let restart_opts = SimplexOptions {
        step: (opts.step * 1e-2).max(10.0 * opts.xtol),
        ..*opts
    };
    let budget = opts.max_iter.saturating_sub(first.iterations).max(100);
    let second = run(&f, &first.x, &restart_opts, budget);
    let mut best = if second.fx <= first.fx { second } else { first.clone() };
    best.iterations += first.iterations;
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimises_rosenbrock() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = nelder_mead(rosen, &[-1.2, 1.0], &SimplexOptions::default());
        assert!((r.x[0] - 1.0).abs() < 1e-6, "{:?}", r);
        assert!((r.x[1] - 1.0).abs() < 1e-6, "{:?}", r);
    }

    #[test]
    fn quadratic_in_three_dims() {
        let q = |x: &[f64]| (x[0] - 0.3).powi(2) + 2.0 * (x[1] + 0.7).powi(2) + 0.5 * (x[2] - 2.0).powi(2);
        let r = nelder_mead(q, &[0.0, 0.0, 0.0], &SimplexOptions::default());
        assert!(r.fx < 1e-16);
        assert!(r.diameter < 1e-6);
    }

    #[test]
    fn never_worse_than_start() {
        let f = |x: &[f64]| (x[0] * 3.0).sin() + x[1].abs();
        let x0 = [0.4, -0.2];
        let r = nelder_mead(f, &x0, &SimplexOptions::default());
        assert!(r.fx <= f(&x0));
    }
}
