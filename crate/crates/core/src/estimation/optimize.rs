//! Derivative-free minimization.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct NelderMead {
    pub max_iterations: usize,
    /// Stop when the spread of objective values across the simplex falls below
    /// this and every vertex lies within `x_tolerance` of the best one.
    pub f_tolerance: f64,
    pub x_tolerance: f64,
    pub initial_step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            f_tolerance: 1e-10,
            x_tolerance: 1e-8,
            initial_step: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

impl NelderMead {
    /// Minimizes `f` from `x0`. Non-finite objective values are treated as +∞.
    pub fn minimize<F>(&self, f: F, x0: &[f64]) -> Result<Minimum>
    where
        F: Fn(&[f64]) -> f64,
    {
        let n = x0.len();
        let eval = |x: &[f64]| {
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((x0.to_vec(), eval(x0)));
        for i in 0..n {
            let mut x = x0.to_vec();
            x[i] += self.initial_step;
            let v = eval(&x);
            simplex.push((x, v));
        }

        for it in 0..self.max_iterations {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let (best, worst) = (simplex[0].1, simplex[n].1);
            let spread = simplex[1..]
                .iter()
                .flat_map(|p| p.0.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if best.is_finite()
                && (worst - best).abs() <= self.f_tolerance * (1.0 + best.abs())
                && spread <= self.x_tolerance
            {
                return Ok(Minimum {
                    x: simplex[0].0.clone(),
                    value: best,
                    iterations: it,
                });
            }
            let centroid: Vec<f64> =
                (0..n).map(|d| simplex[..n].iter().map(|p| p.0[d]).sum::<f64>() / n as f64).collect();
            let along = |t: f64| -> Vec<f64> {
                centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (w - c)).collect()
            };

            let xr = along(-1.0);
            let fr = eval(&xr);
            if fr < simplex[0].1 {
                let xe = along(-2.0);
                let fe = eval(&xe);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < simplex[n].1 {
                let x = along(-0.5);
                let v = eval(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = eval(&x);
                (x, v)
            };
            if fc < fr.min(simplex[n].1) {
                simplex[n] = (xc, fc);
                continue;
            }
            let x0 = simplex[0].0.clone();
            for p in simplex.iter_mut().skip(1) {
                p.0 = x0.iter().zip(&p.0).map(|(a, b)| a + 0.5 * (b - a)).collect();
                p.1 = eval(&p.0);
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        Err(Error::NoConvergence(format!(
            "simplex did not contract within {} iterations (best {:.6e} at {:?})",
            self.max_iterations, simplex[0].1, simplex[0].0
        )))
    }
}
