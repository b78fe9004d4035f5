//! Small unconstrained quasi-Newton minimiser (BFGS with backtracking line
//! search and central-difference gradients). Box constraints are handled by
//! callers through smooth reparameterization.

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Stop when `|step| < step_tol * (1 + |x|)`.
    pub step_tol: f64,
    /// Stop when `|grad| < grad_tol`.
    pub grad_tol: f64,
    /// Cap on the length of a single step.
    pub max_step: f64,
    pub fd_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            step_tol: 1e-8,
            grad_tol: 1e-6,
            max_step: 2.0,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], fx: f64, h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            let step = h * (1.0 + x[k].abs());
            probe[k] = x[k] + step;
            let fp = f(&probe);
            probe[k] = x[k] - step;
            let fm = f(&probe);
            probe[k] = x[k];
            match (fp.is_finite(), fm.is_finite()) {
                (true, true) => (fp - fm) / (2.0 * step),
                (true, false) => (fp - fx) / step,
                (false, true) => (fx - fm) / step,
                (false, false) => 0.0,
            }
        })
        .collect()
}

/// Minimises `f` from `x0`. Non-finite values of `f` are treated as
/// infeasible and rejected by the line search.
pub fn minimize<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], opts: &BfgsOptions) -> Minimum {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut g = gradient(&f, &x, fx, opts.fd_step);
    let identity = |n: usize| {
        let mut h = vec![vec![0.0; n]; n];
        for (k, row) in h.iter_mut().enumerate() {
            row[k] = 1.0;
        }
        h
    };
    let mut hinv = identity(n);
    let mut converged = false;
    let mut iterations = 0;
    let mut restarted = false;

    while iterations < opts.max_iterations {
        if norm(&g) < opts.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut dir: Vec<f64> = hinv.iter().map(|row| -dot(row, &g)).collect();
        if dot(&dir, &g) >= 0.0 {
            hinv = identity(n);
            dir = g.iter().map(|v| -v).collect();
        }
        let len = norm(&dir);
        if len > opts.max_step {
            dir.iter_mut().for_each(|d| *d *= opts.max_step / len);
        }
        let slope = dot(&dir, &g);

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + alpha * di).collect();
            let ft = f(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if restarted {
                break;
            }
            // retry once along steepest descent with a fresh Hessian
            restarted = true;
            hinv = identity(n);
            continue;
        };
        restarted = false;

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let g_new = gradient(&f, &x_new, f_new, opts.fd_step);
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let step_small = norm(&s) < opts.step_tol * (1.0 + norm(&x_new));
        x = x_new;
        fx = f_new;
        g = g_new;
        if step_small {
            converged = true;
            break;
        }

        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            let rho = 1.0 / sy;
            let hy: Vec<f64> = hinv.iter().map(|row| dot(row, &y)).collect();
            let yhy = dot(&y, &hy);
            for a in 0..n {
                for b in 0..n {
                    hinv[a][b] +=
                        (1.0 + rho * yhy) * rho * s[a] * s[b] - rho * (hy[a] * s[b] + s[a] * hy[b]);
                }
            }
        }
    }
    if !converged && norm(&g) < opts.grad_tol {
        converged = true;
    }
    Minimum {
        gradient_norm: norm(&g),
        x,
        value: fx,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + 10.0 * (x[1] + 1.0).powi(2);
        let m = minimize(f, &[0.0, 0.0], &BfgsOptions::default());
        assert!(m.converged);
        assert!(
            (m.x[0] - 3.0).abs() < 1e-5 && (m.x[1] + 1.0).abs() < 1e-5,
            "{:?}",
            m.x
        );
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = minimize(f, &[-1.2, 1.0], &BfgsOptions::default());
        assert!(m.converged, "{m:?}");
        assert!(
            (m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4,
            "{:?}",
            m.x
        );
    }

    #[test]
    fn respects_infeasible_region() {
        // log barrier: undefined for x <= 0
        let f = |x: &[f64]| {
            if x[0] <= 0.0 {
                f64::NAN
            } else {
                x[0] - 2.0 * x[0].ln()
            }
        };
        let m = minimize(f, &[10.0], &BfgsOptions::default());
        assert!((m.x[0] - 2.0).abs() < 1e-5, "{:?}", m.x);
    }

    #[test]
    fn reports_iteration_budget_exhaustion() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = BfgsOptions {
            max_iterations: 2,
            ..Default::default()
        };
        let m = minimize(f, &[-1.2, 1.0], &opts);
        assert!(!m.converged);
        assert_eq!(m.iterations, 2);
    }
}
