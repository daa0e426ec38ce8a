use nalgebra::{DMatrix, DVector};

use super::quadrature::QuadratureGrid;
use super::weight::WeightFunction;
use crate::error::{Error, Result};
use crate::linalg::symmetric_spectrum;
use crate::ode::VectorFieldModel;
use crate::path::{DifferencePath, Path};

/// Condition number above which `J*` is treated as singular.
pub const IDENTIFIABILITY_COND: f64 = 1e10;

#[derive(Debug, Clone, PartialEq)]
pub struct Jstar {
    pub matrix: DMatrix<f64>,
    pub condition: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

impl Jstar {
    pub fn is_singular(&self) -> bool {
        !(self.condition <= IDENTIFIABILITY_COND)
    }

    /// Eigenvectors whose eigenvalues fall below `max / IDENTIFIABILITY_COND`.
    pub fn weak_directions(&self) -> Vec<DVector<f64>> {
        let eig = self.matrix.clone().symmetric_eigen();
        let cut = self.max_eigenvalue.max(0.0) / IDENTIFIABILITY_COND;
        (0..eig.eigenvalues.len())
            .filter(|&i| eig.eigenvalues[i] <= cut)
            .map(|i| eig.eigenvectors.column(i).into_owned())
            .collect()
    }
}

/// `J* = ∫ D₂Fᵀ D₂F w dt` over the free parameters, along `path`.
pub fn hessian_jstar(
    path: &dyn Path,
    model: &VectorFieldModel,
    theta: &DVector<f64>,
    weight: &WeightFunction,
    grid: &QuadratureGrid,
) -> Jstar {
    let p = model.free_dim();
    let mut j = DMatrix::zeros(p, p);
    for (t, d) in grid.nodes().iter().zip(grid.weights()) {
        let om = d * weight.value(*t);
        if om == 0.0 {
            continue;
        }
        let g = model.jacobian_free(*t, &path.value(*t), theta);
        j += g.transpose() * g * om;
    }
    let j = (&j + j.transpose()) * 0.5;
    let (condition, min_eigenvalue, max_eigenvalue) = symmetric_spectrum(&j);
    Jstar { matrix: j, condition, min_eigenvalue, max_eigenvalue }
}

/// `Γ_s(x) = -∫ (D₂Fᵀ D₁F w + d/dt(D₂Fᵀ w)) x dt`, with the Jacobians taken
/// along `base` and applied to `arg`.
///
/// Central differences on the grid give `d/dt(D₂Fᵀ w)`, one-sided at the
/// ends.
pub fn gamma_s(
    base: &dyn Path,
    arg: &dyn Path,
    model: &VectorFieldModel,
    theta: &DVector<f64>,
    weight: &WeightFunction,
    grid: &QuadratureGrid,
) -> DVector<f64> {
    let nodes = grid.nodes();
    let n = nodes.len();
    let xs: Vec<DVector<f64>> = nodes.iter().map(|t| base.value(*t)).collect();
    let pw: Vec<DMatrix<f64>> = nodes
        .iter()
        .zip(&xs)
        .map(|(t, x)| model.jacobian_free(*t, x, theta).transpose() * weight.value(*t))
        .collect();
    let mut out = DVector::zeros(model.free_dim());
    for j in 0..n {
        let (lo, hi) = (j.saturating_sub(1), (j + 1).min(n - 1));
        let dpw = (&pw[hi] - &pw[lo]) / (nodes[hi] - nodes[lo]);
        let a = model.jacobian_state(nodes[j], &xs[j], theta);
        let kernel = &pw[j] * a + dpw;
        out -= kernel * arg.value(nodes[j]) * grid.weights()[j];
    }
    out
}

/// `Γ_b(x) = w(t_hi) D₂F(t_hi)ᵀ x(t_hi) - w(t_lo) D₂F(t_lo)ᵀ x(t_lo)`, with
/// `D₂F` along `base`.
pub fn gamma_b(
    base: &dyn Path,
    arg: &dyn Path,
    model: &VectorFieldModel,
    theta: &DVector<f64>,
    weight: &WeightFunction,
) -> DVector<f64> {
    let iv = base.interval();
    let end = |t: f64| -> DVector<f64> {
        let w = weight.value(t);
        if w == 0.0 {
            return DVector::zeros(model.free_dim());
        }
        model.jacobian_free(t, &base.value(t), theta).transpose() * arg.value(t) * w
    };
    end(iv.hi) - end(iv.lo)
}

/// `(θ̂ - θ*) - J*⁻¹ [Γ_s(x̂ - x*) + Γ_b(x̂ - x*)]` over the free parameters,
/// with all operators at `(x*, θ*)`.
#[allow(clippy::too_many_arguments)]
pub fn linearization_residual(
    fit: &dyn Path,
    truth: &dyn Path,
    model: &VectorFieldModel,
    theta_star: &DVector<f64>,
    theta_hat: &DVector<f64>,
    weight: &WeightFunction,
    grid: &QuadratureGrid,
) -> Result<DVector<f64>> {
    let js = hessian_jstar(truth, model, theta_star, weight, grid);
    if js.is_singular() {
        return Err(not_identifiable(model, &js));
    }
    let diff = DifferencePath { a: fit, b: truth };
    let rhs = gamma_s(truth, &diff, model, theta_star, weight, grid) + gamma_b(truth, &diff, model, theta_star, weight);
    let step = js
        .matrix
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| not_identifiable(model, &js))?;
    let mask = model.mask();
    Ok(mask.restrict(theta_hat) - mask.restrict(theta_star) - step)
}

pub(crate) fn describe_direction(names: &[String], v: &DVector<f64>) -> String {
    let mut terms: Vec<String> = names
        .iter()
        .zip(v.iter())
        .filter(|(_, c)| c.abs() > 1e-6)
        .map(|(n, c)| format!("{c:+.4}*{n}"))
        .collect();
    if terms.is_empty() {
        terms.push("0".into());
    }
    terms.join(" ")
}

pub(crate) fn not_identifiable(model: &VectorFieldModel, js: &Jstar) -> Error {
    let names = model.free_names();
    let mut directions: Vec<String> = js.weak_directions().iter().map(|v| describe_direction(&names, v)).collect();
    if directions.is_empty() {
        directions.push(format!("condition number {:e}", js.condition));
    }
    Error::NotIdentifiable { directions }
}
