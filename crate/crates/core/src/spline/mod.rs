//! B-spline bases, least-squares regression splines and plug-in variance
//! formulas for point evaluations and linear functionals.

mod basis;
mod fit;
mod functional;
mod knots;
mod truncated;

pub use basis::{design_matrix, eval_basis, eval_basis_derivative, BSplineBasis};
pub use fit::{fit_least_squares, gram_matrices, GramMatrices, SplineFit};
pub use functional::{functional_variance, LinearFunctional, SUBNODES_PER_SPAN};
pub use knots::{augment_knots, Interval, KnotSequence};
pub use truncated::truncated_power_design;
