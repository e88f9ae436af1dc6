//! Derivative-free Nelder–Mead simplex minimizer.
//!
//! Used for the region search (whose objective is piecewise constant under
//! pixelization) and for likelihood maximization.

#[derive(Debug, Clone)]
pub struct NelderMead {
    pub max_iterations: usize,
    /// Relative spread of simplex values below which the run may stop.
    pub ftol: f64,
    /// Simplex diameter (max-norm from the best vertex) below which the run may stop.
    pub xtol: f64,
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            ftol: 1e-6,
            xtol: 1e-4,
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

impl NelderMead {
    pub fn with_max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    pub fn with_tolerances(mut self, ftol: f64, xtol: f64) -> Self {
        self.ftol = ftol;
        self.xtol = xtol;
        self
    }

    /// Minimizes `f` from `x0` using an axis-aligned initial simplex with
    /// per-coordinate offsets `step`. Non-finite objective values count as +∞.
    pub fn minimize<F>(&self, mut f: F, x0: &[f64], step: &[f64]) -> Minimum
    where
        F: FnMut(&[f64]) -> f64,
    {
        assert_eq!(x0.len(), step.len(), "x0 and step must have equal length");
        let n = x0.len();
        let mut evaluations = 0;
        let mut eval = |x: &[f64]| {
            evaluations += 1;
            let y = f(x);
            if y.is_nan() {
                f64::INFINITY
            } else {
                y
            }
        };

        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((x0.to_vec(), eval(x0)));
        for i in 0..n {
            let mut x = x0.to_vec();
            x[i] += step[i];
            let fx = eval(&x);
            simplex.push((x, fx));
        }

        let mut iterations = 0;
        let mut converged = false;
        loop {
            // stable: ties keep earlier vertices first
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            if self.has_converged(&simplex) {
                converged = true;
                break;
            }
            if iterations >= self.max_iterations {
                break;
            }
            iterations += 1;

            let mut centroid = vec![0.0; n];
            for (x, _) in &simplex[..n] {
                for (c, xi) in centroid.iter_mut().zip(x) {
                    *c += xi / n as f64;
                }
            }
            let along =
                |t: f64, x: &[f64]| -> Vec<f64> { centroid.iter().zip(x).map(|(c, xi)| c + t * (xi - c)).collect() };

            let (worst_x, worst_f) = simplex[n].clone();
            let best_f = simplex[0].1;
            let second_worst_f = simplex[n - 1].1;

            let xr = along(-self.reflection, &worst_x);
            let fr = eval(&xr);
            if fr < best_f {
                let xe = along(-self.reflection * self.expansion, &worst_x);
                let fe = eval(&xe);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < second_worst_f {
                simplex[n] = (xr, fr);
                continue;
            }
            // outside contraction if the reflected point beat the worst, inside otherwise
            let accepted = if fr < worst_f {
                let xc = along(-self.reflection * self.contraction, &worst_x);
                let fc = eval(&xc);
                (fc <= fr).then_some((xc, fc))
            } else {
                let xc = along(self.contraction, &worst_x);
                let fc = eval(&xc);
                (fc < worst_f).then_some((xc, fc))
            };
            if let Some(vertex) = accepted {
                simplex[n] = vertex;
                continue;
            }
            // shrink toward the best vertex
            let best_x = simplex[0].0.clone();
            for vertex in simplex.iter_mut().skip(1) {
                let x: Vec<f64> = best_x
                    .iter()
                    .zip(&vertex.0)
                    .map(|(b, xi)| b + self.shrink * (xi - b))
                    .collect();
                let fx = eval(&x);
                *vertex = (x, fx);
            }
        }

        let (x, value) = simplex.swap_remove(0);
        Minimum {
            x,
            value,
            iterations,
            evaluations,
            converged,
        }
    }

    fn has_converged(&self, sorted: &[(Vec<f64>, f64)]) -> bool {
        let best = sorted[0].1;
        let worst = sorted[sorted.len() - 1].1;
        if !best.is_finite() || !worst.is_finite() {
            return false;
        }
        let fspread = (worst - best).abs() <= self.ftol * best.abs().max(1e-12);
        let xspread = sorted[1..]
            .iter()
            .all(|(x, _)| x.iter().zip(&sorted[0].0).all(|(a, b)| (a - b).abs() <= self.xtol));
        fspread && xspread
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 4.0 * (x[1] + 2.0).powi(2);
        let m = NelderMead::default()
            .with_max_iterations(1000)
            .with_tolerances(1e-12, 1e-8)
            .minimize(f, &[0.0, 0.0], &[0.5, 0.5]);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] + 2.0).abs() < 1e-5, "{:?}", m.x);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let m = NelderMead::default()
            .with_max_iterations(5000)
            .with_tolerances(1e-14, 1e-9)
            .minimize(f, &[-1.2, 1.0], &[0.1, 0.1]);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn never_worse_than_start() {
        let f = |x: &[f64]| (x[0] * 3.0).sin() + x[0].abs() * 0.1 + (x[1] * 7.0).cos();
        let start = [0.3, -0.4];
        let f0 = f(&start);
        let m = NelderMead::default()
            .with_max_iterations(10)
            .minimize(f, &start, &[0.2, 0.2]);
        assert!(m.value <= f0);
        assert!(m.iterations <= 10);
    }

    #[test]
    fn nan_treated_as_infinite() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 2.0).powi(2) };
        let m = NelderMead::default().minimize(f, &[0.5], &[-0.4]);
        assert!((m.x[0] - 2.0).abs() < 1e-2);
    }

    #[test]
    fn deterministic() {
        let f = |x: &[f64]| (x[0] - 0.3).powi(2) + (x[1] * x[0] - 0.1).powi(2);
        let a = NelderMead::default().minimize(f, &[1.0, 1.0], &[0.3, 0.3]);
        let b = NelderMead::default().minimize(f, &[1.0, 1.0], &[0.3, 0.3]);
        assert_eq!(a, b);
    }
}
