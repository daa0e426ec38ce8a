//! The two-step criterion, its minimizers, and the asymptotic diagnostics
//! `J*`, `Γ_s` and `Γ_b`.

mod diagnostics;
mod fit;
mod lm;
mod partial;
mod quadrature;
mod weight;

pub use diagnostics::{gamma_b, gamma_s, hessian_jstar, linearization_residual, Jstar, IDENTIFIABILITY_COND};
pub use fit::{
    criterion, estimate, fit_grid, fit_linear_in_theta, fit_nonlinear, EstimateReport, NonlinearOptions,
    TwoStepEstimate, REPORT_SCHEMA,
};
pub use lm::{levenberg_marquardt, numeric_residual_jacobian, LmOptions, LmOutcome};
pub use partial::{fit_partially_observed, PartialEstimate, PartialInit, PartialOptions};
pub use quadrature::{criterion_on_samples, CriterionConfig, QuadratureGrid, Samples, DEFAULT_QUAD_NODES};
pub use weight::{WeightFunction, WeightSpec};
