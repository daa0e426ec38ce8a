use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use super::diagnostics::{describe_direction, gamma_b, gamma_s, hessian_jstar, IDENTIFIABILITY_COND};
use super::lm::{levenberg_marquardt, LmOptions};
use super::quadrature::{criterion_on_samples, CriterionConfig, QuadratureGrid, Samples};
use crate::error::{Error, Result};
use crate::linalg::PivotedQr;
use crate::ode::VectorFieldModel;
use crate::spline::SplineFit;

/// Relative singular value below which a direction of the stacked linear
/// system counts as unidentifiable.
const LINEAR_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStepEstimate {
    /// Full parameter vector; fixed entries echo their known values.
    pub theta_hat: DVector<f64>,
    pub free_names: Vec<String>,
    pub criterion_value: f64,
    /// `(∫ (x̂̇ᵢ - Fᵢ)² w dt)^{1/2}` per state dimension.
    pub criterion_components: Vec<f64>,
    pub jstar: DMatrix<f64>,
    pub jstar_condition: f64,
    pub jstar_min_eigenvalue: f64,
    pub gamma_s: DVector<f64>,
    pub gamma_b: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

impl TwoStepEstimate {
    pub fn theta_free(&self, model: &VectorFieldModel) -> DVector<f64> {
        model.mask().restrict(&self.theta_hat)
    }

    pub fn report(&self) -> EstimateReport {
        let p = self.jstar.nrows();
        EstimateReport {
            schema: REPORT_SCHEMA,
            free_parameters: self.free_names.clone(),
            theta_hat: self.theta_hat.iter().copied().collect(),
            criterion_value: self.criterion_value,
            criterion_components: self.criterion_components.clone(),
            jstar: (0..p).flat_map(|i| (0..p).map(move |j| (i, j))).map(|(i, j)| self.jstar[(i, j)]).collect(),
            jstar_condition: self.jstar_condition.is_finite().then_some(self.jstar_condition),
            gamma_s: self.gamma_s.iter().copied().collect(),
            gamma_b: self.gamma_b.iter().copied().collect(),
            converged: self.converged,
            iterations: self.iterations,
            warnings: self.warnings.clone(),
        }
    }
}

pub const REPORT_SCHEMA: u32 = 1;

/// Flat, serializable form of a [`TwoStepEstimate`]. `jstar` is row-major;
/// an infinite condition number is written as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema: u32,
    pub free_parameters: Vec<String>,
    pub theta_hat: Vec<f64>,
    pub criterion_value: f64,
    pub criterion_components: Vec<f64>,
    pub jstar: Vec<f64>,
    pub jstar_condition: Option<f64>,
    pub gamma_s: Vec<f64>,
    pub gamma_b: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NonlinearOptions {
    pub lm: LmOptions,
    /// Extra starting points (free parameters); the best result wins.
    pub starts: Vec<DVector<f64>>,
}

/// Quadrature grid for a fit: uniform nodes plus all spline knots and weight
/// breakpoints.
pub fn fit_grid(fit: &SplineFit, config: &CriterionConfig) -> Result<QuadratureGrid> {
    config.grid(fit.interval(), &fit.basis().knots().breakpoints())
}

fn check_inputs(fit: &SplineFit, model: &VectorFieldModel) -> Result<()> {
    if fit.dim() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{}-dimensional fit for a {}-dimensional model",
            fit.dim(),
            model.dim()
        )));
    }
    Ok(())
}

/// `R^q_{n,w}(θ)` on the fit's quadrature grid.
pub fn criterion(fit: &SplineFit, model: &VectorFieldModel, theta: &DVector<f64>, config: &CriterionConfig) -> Result<f64> {
    check_inputs(fit, model)?;
    model.check_theta(theta)?;
    let grid = fit_grid(fit, config)?;
    let samples = Samples::new(fit, &grid, &config.weight);
    Ok(criterion_on_samples(&samples, model, theta, config.q))
}

fn finish(
    fit: &SplineFit,
    model: &VectorFieldModel,
    theta: DVector<f64>,
    config: &CriterionConfig,
    grid: &QuadratureGrid,
    samples: &Samples,
    converged: bool,
    iterations: usize,
) -> TwoStepEstimate {
    let (criterion_value, criterion_components) = match samples.residual_integrals(model, &theta, config.q) {
        Some((total, parts)) => (total.powf(1.0 / config.q), parts.into_iter().map(f64::sqrt).collect()),
        None => (f64::INFINITY, vec![f64::INFINITY; model.dim()]),
    };
    let js = hessian_jstar(fit, model, &theta, &config.weight, grid);
    let mut warnings = Vec::new();
    if js.is_singular() {
        warnings.push(format!(
            "J* condition number {:e} exceeds {:e}: parameters are only weakly identifiable",
            js.condition, IDENTIFIABILITY_COND
        ));
    }
    if !converged {
        warnings.push(format!("optimizer stopped after {iterations} iterations without converging"));
    }
    if fit.rank_deficient() {
        warnings.push("first-step spline design is rank deficient".into());
    }
    TwoStepEstimate {
        gamma_s: gamma_s(fit, fit, model, &theta, &config.weight, grid),
        gamma_b: gamma_b(fit, fit, model, &theta, &config.weight),
        theta_hat: theta,
        free_names: model.free_names(),
        criterion_value,
        criterion_components,
        jstar: js.matrix,
        jstar_condition: js.condition,
        jstar_min_eigenvalue: js.min_eigenvalue,
        converged,
        iterations,
        warnings,
    }
}

/// Closed-form minimizer for fields affine in `θ`: weighted linear least
/// squares of `x̂̇ - m₀` on `M(t, x̂)` over the quadrature nodes.
pub fn fit_linear_in_theta(fit: &SplineFit, model: &VectorFieldModel, config: &CriterionConfig) -> Result<TwoStepEstimate> {
    check_inputs(fit, model)?;
    if config.q != 2.0 {
        return Err(Error::InvalidConfig("the closed-form estimator needs q = 2".into()));
    }
    if !model.is_linear_in_theta() {
        return Err(Error::InvalidConfig("model has no linear-in-theta decomposition".into()));
    }
    let grid = fit_grid(fit, config)?;
    let samples = Samples::new(fit, &grid, &config.weight);
    let theta_free = solve_linear(&samples, model)?;
    let theta = model.mask().embed(&theta_free);
    Ok(finish(fit, model, theta, config, &grid, &samples, true, 0))
}

pub(crate) fn solve_linear(samples: &Samples, model: &VectorFieldModel) -> Result<DVector<f64>> {
    let d = model.dim();
    let p = model.free_dim();
    let rows = samples.len() * d;
    if rows < p {
        return Err(Error::TooFewObservations { got: rows, min: p });
    }
    let mut a = DMatrix::zeros(rows, p);
    let mut b = DMatrix::zeros(rows, 1);
    for j in 0..samples.len() {
        let s = samples.omega[j].sqrt();
        let (m, off) = model
            .linear_design_free(samples.times[j], &samples.x[j])
            .ok_or_else(|| Error::InvalidConfig("model has no linear-in-theta decomposition".into()))?;
        for i in 0..d {
            for c in 0..p {
                a[(j * d + i, c)] = s * m[(i, c)];
            }
            b[(j * d + i, 0)] = s * (samples.dx[j][i] - off[i]);
        }
    }

    let svd = SVD::new(a.clone(), false, true);
    let smax = svd.singular_values.amax();
    let v_t = svd.v_t.as_ref().expect("requested");
    let weak: Vec<String> = (0..svd.singular_values.len())
        .filter(|&i| !(svd.singular_values[i] > LINEAR_RANK_TOL * smax))
        .map(|i| describe_direction(&model.free_names(), &v_t.row(i).transpose()))
        .collect();
    if !weak.is_empty() || smax == 0.0 {
        return Err(Error::NotIdentifiable { directions: weak });
    }
    let qr = PivotedQr::new(a);
    let (x, _) = qr.solve(&b);
    Ok(x.column(0).into_owned())
}

/// Levenberg–Marquardt minimization of the stacked weighted residuals,
/// starting from `theta_init` (full vector; fixed entries are overwritten)
/// and from every extra start in `opts`.
pub fn fit_nonlinear(
    fit: &SplineFit,
    model: &VectorFieldModel,
    theta_init: &DVector<f64>,
    config: &CriterionConfig,
    opts: &NonlinearOptions,
) -> Result<TwoStepEstimate> {
    check_inputs(fit, model)?;
    model.check_theta(theta_init)?;
    if config.q != 2.0 {
        return Err(Error::InvalidConfig("least-squares minimization needs q = 2".into()));
    }
    let grid = fit_grid(fit, config)?;
    let samples = Samples::new(fit, &grid, &config.weight);
    let mask = model.mask();
    let d = model.dim();

    let residual = |free: &DVector<f64>| samples.stacked_residual(model, &mask.embed(free));
    let jacobian = |free: &DVector<f64>, _: &DVector<f64>| {
        let theta = mask.embed(free);
        let p = free.len();
        let mut jac = DMatrix::zeros(samples.len() * d, p);
        for j in 0..samples.len() {
            let g = model.jacobian_free(samples.times[j], &samples.x[j], &theta) * -samples.omega[j].sqrt();
            if !g.iter().all(|v| v.is_finite()) {
                return None;
            }
            jac.view_mut((j * d, 0), (d, p)).copy_from(&g);
        }
        Some(jac)
    };

    let mut starts = vec![mask.restrict(theta_init)];
    starts.extend(opts.starts.iter().cloned());
    let mut best: Option<super::lm::LmOutcome> = None;
    for s in &starts {
        if s.len() != model.free_dim() {
            return Err(Error::DimensionMismatch(format!(
                "start has {} entries for {} free parameters",
                s.len(),
                model.free_dim()
            )));
        }
        if let Some(out) = levenberg_marquardt(residual, jacobian, s, &opts.lm) {
            if best.as_ref().is_none_or(|b| out.cost < b.cost) {
                best = Some(out);
            }
        }
    }
    let best = best.ok_or_else(|| Error::InvalidConfig("criterion is not finite at any starting point".into()))?;
    let theta = mask.embed(&best.x);
    Ok(finish(fit, model, theta, config, &grid, &samples, best.converged, best.iterations))
}

/// Closed form when the model is affine in `θ`, otherwise
/// Levenberg–Marquardt from `theta_init`.
pub fn estimate(
    fit: &SplineFit,
    model: &VectorFieldModel,
    config: &CriterionConfig,
    theta_init: Option<&DVector<f64>>,
) -> Result<TwoStepEstimate> {
    if model.is_linear_in_theta() && config.q == 2.0 {
        fit_linear_in_theta(fit, model, config)
    } else {
        let init = theta_init
            .ok_or_else(|| Error::InvalidConfig("a nonlinear model needs starting parameters".into()))?;
        fit_nonlinear(fit, model, init, config, &NonlinearOptions::default())
    }
}
