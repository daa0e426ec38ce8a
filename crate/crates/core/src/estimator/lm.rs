use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmOptions {
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_step_tol")]
    pub step_tol: f64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_damping")]
    pub initial_damping: f64,
}

fn default_max_iter() -> usize {
    200
}

fn default_step_tol() -> f64 {
    1e-10
}

fn default_rel_tol() -> f64 {
    1e-12
}

fn default_damping() -> f64 {
    1e-3
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: default_max_iter(),
            step_tol: default_step_tol(),
            rel_tol: default_rel_tol(),
            initial_damping: default_damping(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub x: DVector<f64>,
    /// `‖r(x)‖²`
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

const MAX_DAMPING: f64 = 1e16;

/// Levenberg–Marquardt on `min ‖r(x)‖²` with Marquardt's diagonal scaling.
///
/// `residual` returns `None` for trial points where the model cannot be
/// evaluated; such trials are rejected and the damping increased. Returns
/// `None` only if the starting point itself cannot be evaluated.
pub fn levenberg_marquardt<R, J>(residual: R, jacobian: J, x0: &DVector<f64>, opts: &LmOptions) -> Option<LmOutcome>
where
    R: Fn(&DVector<f64>) -> Option<DVector<f64>>,
    J: Fn(&DVector<f64>, &DVector<f64>) -> Option<DMatrix<f64>>,
{
    let mut x = x0.clone();
    let mut r = residual(&x)?;
    let mut cost = r.norm_squared();
    let mut lambda = opts.initial_damping;
    let n = x.len();

    for iter in 1..=opts.max_iter {
        if cost == 0.0 || n == 0 {
            return Some(LmOutcome { x, cost, iterations: iter - 1, converged: true });
        }
        let jac = match jacobian(&x, &r) {
            Some(j) => j,
            None => return Some(LmOutcome { x, cost, iterations: iter - 1, converged: false }),
        };
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let dmax = jtj.diagonal().amax().max(f64::MIN_POSITIVE);
        let diag = jtj.diagonal().map(|v| v.max(1e-12 * dmax));

        loop {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * diag[i];
            }
            let step = match a.cholesky() {
                Some(c) => -c.solve(&g),
                None => {
                    lambda *= 10.0;
                    if lambda > MAX_DAMPING {
                        return Some(LmOutcome { x, cost, iterations: iter, converged: false });
                    }
                    continue;
                }
            };
            let small_step = step.norm() < opts.step_tol * (1.0 + x.norm());
            if small_step {
                return Some(LmOutcome { x, cost, iterations: iter, converged: true });
            }
            let trial = &x + &step;
            match residual(&trial) {
                Some(rt) if rt.norm_squared() < cost => {
                    let new_cost = rt.norm_squared();
                    let rel = (cost - new_cost) / cost;
                    x = trial;
                    r = rt;
                    cost = new_cost;
                    lambda = (lambda / 3.0).max(1e-15);
                    if rel < opts.rel_tol {
                        return Some(LmOutcome { x, cost, iterations: iter, converged: true });
                    }
                    break;
                }
                _ => {
                    lambda *= 4.0;
                    if lambda > MAX_DAMPING {
                        // no decrease along any damped direction: stationary
                        // to working precision
                        let stationary = g.norm() <= 1e-8 * (1.0 + cost.sqrt()) * (1.0 + jac.norm());
                        return Some(LmOutcome { x, cost, iterations: iter, converged: stationary });
                    }
                }
            }
        }
    }
    Some(LmOutcome { x, cost, iterations: opts.max_iter, converged: false })
}

/// Central-difference Jacobian of a residual map; `None` if any trial
/// evaluation fails.
pub fn numeric_residual_jacobian<R>(residual: &R, x: &DVector<f64>, m: usize) -> Option<DMatrix<f64>>
where
    R: Fn(&DVector<f64>) -> Option<DVector<f64>>,
{
    let mut jac = DMatrix::zeros(m, x.len());
    for j in 0..x.len() {
        let h = 1e-6 * x[j].abs().max(1.0);
        let mut p = x.clone();
        let mut q = x.clone();
        p[j] += h;
        q[j] -= h;
        let col = (residual(&p)? - residual(&q)?) / (2.0 * h);
        jac.set_column(j, &col);
    }
    Some(jac)
}
