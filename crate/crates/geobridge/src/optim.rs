//! Limited-memory quasi-Newton descent with Armijo backtracking.
//!
//! The objective callback returns `None` for infeasible points (domain
//! violations, nonpositive densities); the line search treats those as
//! rejected steps.

use nalgebra::DVector;

#[derive(Debug, Clone)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when the gradient max-norm falls below this.
    pub grad_tol: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions { memory: 12, max_iter: 20_000, grad_tol: 1e-9, max_line_search: 40 }
    }
}

#[derive(Debug, Clone)]
pub struct OptimOutcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimize `f`; the callback yields `(value, gradient)` or `None` when the
/// point is infeasible. `x0` must be feasible.
pub fn minimize<F>(f: F, x0: DVector<f64>, opts: &LbfgsOptions) -> OptimOutcome
where
    F: Fn(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
{
    minimize_precond(f, x0, opts, None)
}

/// Same, with an optional SPD preconditioner applied as the initial inverse
/// Hessian of the two-loop recursion. Essential when the objective carries a
/// discrete-Laplacian block (condition number O(N^2)).
pub fn minimize_precond<F>(
    f: F,
    x0: DVector<f64>,
    opts: &LbfgsOptions,
    precond: Option<&(dyn Fn(&DVector<f64>) -> DVector<f64> + '_)>,
) -> OptimOutcome
where
    F: Fn(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
{
    let mut x = x0;
    let (mut fx, mut gx) = f(&x).expect("initial point must be feasible");

    let mut s_hist: Vec<DVector<f64>> = Vec::new();
    let mut y_hist: Vec<DVector<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();
    let mut stall = 0usize;

    for iter in 0..opts.max_iter {
        if gx.amax() <= opts.grad_tol {
            return OptimOutcome { x, value: fx, grad_norm: gx.amax(), iterations: iter, converged: true };
        }

        // two-loop recursion
        let mut d = -gx.clone();
        let k = s_hist.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            alpha[i] = rho_hist[i] * s_hist[i].dot(&d);
            d -= &y_hist[i] * alpha[i];
        }
        match precond {
            Some(m_inv) => d = m_inv(&d),
            None => {
                if k > 0 {
                    let gamma =
                        s_hist[k - 1].dot(&y_hist[k - 1]) / y_hist[k - 1].dot(&y_hist[k - 1]);
                    d *= gamma.max(1e-12);
                }
            }
        }
        for i in 0..k {
            let beta = rho_hist[i] * y_hist[i].dot(&d);
            d += &s_hist[i] * (alpha[i] - beta);
        }

        let mut dg = gx.dot(&d);
        if dg >= 0.0 {
            // not a descent direction; reset
            d = match precond {
                Some(m_inv) => m_inv(&(-gx.clone())),
                None => -gx.clone(),
            };
            dg = gx.dot(&d);
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        // Armijo backtracking
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..opts.max_line_search {
            let cand = &x + &d * step;
            if let Some((fc, gc)) = f(&cand) {
                if fc <= fx + 1e-4 * step * dg {
                    accepted = Some((cand, fc, gc));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            return OptimOutcome { x, value: fx, grad_norm: gx.amax(), iterations: iter, converged: false };
        };

        let s = &xn - &x;
        let yv = &gn - &gx;
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() {
            if s_hist.len() == opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            rho_hist.push(1.0 / sy);
            s_hist.push(s);
            y_hist.push(yv);
        }
        // near the rounding floor of f the line search accepts zero-progress
        // steps forever; bail out once the value stops moving
        if fx - fn_ <= 1e-15 * (1.0 + fx.abs()) {
            stall += 1;
        } else {
            stall = 0;
        }
        x = xn;
        fx = fn_;
        gx = gn;
        if stall >= 25 {
            let gnorm = gx.amax();
            return OptimOutcome {
                x,
                value: fx,
                grad_norm: gnorm,
                iterations: iter + 1,
                converged: gnorm <= opts.grad_tol,
            };
        }
    }
    let gnorm = gx.amax();
    OptimOutcome { x, value: fx, grad_norm: gnorm, iterations: opts.max_iter, converged: gnorm <= opts.grad_tol }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn minimizes_rosenbrock() {
        let f = |x: &DVector<f64>| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = dvector![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a)
            ];
            Some((v, g))
        };
        let out = minimize(f, dvector![-1.2, 1.0], &LbfgsOptions::default());
        assert!(out.converged);
        assert!((out.x - dvector![1.0, 1.0]).amax() < 1e-6);
    }

    #[test]
    fn respects_infeasible_region() {
        // quadratic with a feasibility wall at x0 <= 0
        let f = |x: &DVector<f64>| {
            if x[0] <= 0.0 {
                return None;
            }
            let v = (x[0] - 0.5f64).powi(2);
            Some((v, dvector![2.0 * (x[0] - 0.5)]))
        };
        let out = minimize(f, dvector![3.0], &LbfgsOptions::default());
        assert!(out.converged);
        assert!((out.x[0] - 0.5).abs() < 1e-8);
    }
}
