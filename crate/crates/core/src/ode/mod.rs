//! Parameterized vector fields, a reference RK4 integrator, the matrix
//! exponential and the Duhamel solver for linear hidden blocks.

mod duhamel;
mod expm;
mod integrate;
mod model;

pub use duhamel::{duhamel_solve, numeric_jacobian, CoupledField, Oscillator, PartiallyLinearSystem, DUHAMEL_SUBSTEPS};
pub use expm::matrix_exponential;
pub use integrate::{integrate, StepControl, Trajectory};
pub use model::{
    classic_lv_model, finite_difference_jacobians, glv_model, ConstantField, ExponentialField, Glv, ParameterMask,
    VectorField, VectorFieldModel,
};
