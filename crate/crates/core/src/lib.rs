//! Two-step (gradient matching) estimation of ODE parameters.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod error;
pub mod estimator;
pub mod knot_select;
pub mod linalg;
pub mod montecarlo;
pub mod ode;
pub mod path;
pub mod spline;

pub use error::{Error, Result};
pub use path::{DifferencePath, DifferentiablePath, FnPath, Path};
