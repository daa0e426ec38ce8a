use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A parameterized vector field `F(t, x, θ)` with analytic Jacobians.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;

    fn param_dim(&self) -> usize;

    fn param_names(&self) -> Vec<String> {
        (1..=self.param_dim()).map(|i| format!("theta{i}")).collect()
    }

    fn eval(&self, t: f64, x: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64>;

    /// `D₁F`, a `d × d` matrix.
    fn jacobian_state(&self, t: f64, x: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64>;

    /// `D₂F`, a `d × p` matrix.
    fn jacobian_param(&self, t: f64, x: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64>;

    /// `(M, m₀)` with `F(t, x, θ) = M(t, x) θ + m₀(t, x)` when `F` is affine
    /// in `θ`.
    fn linear_design(&self, _t: f64, _x: &DVector<f64>) -> Option<(DMatrix<f64>, DVector<f64>)> {
        None
    }
}

/// Which parameter entries are held at known values.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterMask {
    fixed: Vec<Option<f64>>,
}

impl ParameterMask {
    pub fn all_free(p: usize) -> Self {
        Self { fixed: vec![None; p] }
    }

    pub fn from_fixed(fixed: Vec<Option<f64>>) -> Self {
        Self { fixed }
    }

    pub fn fix(mut self, index: usize, value: f64) -> Self {
        self.fixed[index] = Some(value);
        self
    }

    pub fn len(&self) -> usize {
        self.fixed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixed.is_empty()
    }

    pub fn fixed_value(&self, index: usize) -> Option<f64> {
        self.fixed[index]
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.fixed.len()).filter(|&i| self.fixed[i].is_none()).collect()
    }

    pub fn free_count(&self) -> usize {
        self.fixed.iter().filter(|f| f.is_none()).count()
    }

    /// Full parameter vector from the free entries.
    pub fn embed(&self, free: &DVector<f64>) -> DVector<f64> {
        let mut it = free.iter();
        DVector::from_iterator(
            self.fixed.len(),
            self.fixed.iter().map(|f| f.unwrap_or_else(|| *it.next().expect("free entry"))),
        )
    }

    /// Free entries of a full parameter vector.
    pub fn restrict(&self, full: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.free_count(), self.free_indices().into_iter().map(|i| full[i]))
    }

    /// Full vector with the fixed entries overwritten by their known values.
    pub fn apply(&self, full: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(full.len(), (0..full.len()).map(|i| self.fixed[i].unwrap_or(full[i])))
    }

    /// Free columns of a `d × p` matrix.
    pub fn free_columns(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        m.select_columns(self.free_indices().iter())
    }
}

/// A vector field together with its fixed-parameter mask.
#[derive(Clone)]
pub struct VectorFieldModel {
    field: Arc<dyn VectorField>,
    mask: ParameterMask,
}

impl std::fmt::Debug for VectorFieldModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VectorFieldModel")
            .field("dim", &self.field.dim())
            .field("params", &self.field.param_names())
            .field("mask", &self.mask)
            .finish()
    }
}

impl VectorFieldModel {
    pub fn new(field: Arc<dyn VectorField>, mask: ParameterMask) -> Result<Self> {
        if mask.len() != field.param_dim() {
            return Err(Error::DimensionMismatch(format!(
                "mask has {} entries for {} parameters",
                mask.len(),
                field.param_dim()
            )));
        }
        Ok(Self { field, mask })
    }

    pub fn unmasked(field: Arc<dyn VectorField>) -> Self {
        let p = field.param_dim();
        Self { field, mask: ParameterMask::all_free(p) }
    }

    pub fn field(&self) -> &dyn VectorField {
        self.field.as_ref()
    }

    pub fn mask(&self) -> &ParameterMask {
        &self.mask
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn param_dim(&self) -> usize {
        self.field.param_dim()
    }

    pub fn free_dim(&self) -> usize {
        self.mask.free_count()
    }

    pub fn free_names(&self) -> Vec<String> {
        let names = self.field.param_names();
        self.mask.free_indices().into_iter().map(|i| names[i].clone()).collect()
    }

    pub fn check_theta(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.param_dim() {
            return Err(Error::DimensionMismatch(format!(
                "theta has {} entries, model expects {}",
                theta.len(),
                self.param_dim()
            )));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64, x: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        self.field.eval(t, x, theta)
    }

    pub fn jacobian_state(&self, t: f64, x: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64> {
        self.field.jacobian_state(t, x, theta)
    }

    /// `D₂F` restricted to the free parameters.
    pub fn jacobian_free(&self, t: f64, x: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64> {
        self.mask.free_columns(&self.field.jacobian_param(t, x, theta))
    }

    /// `(M_free, offset)` with `F = M_free θ_free + offset`, where the offset
    /// absorbs `m₀` and the fixed-parameter columns.
    pub fn linear_design_free(&self, t: f64, x: &DVector<f64>) -> Option<(DMatrix<f64>, DVector<f64>)> {
        let (m, m0) = self.field.linear_design(t, x)?;
        let mut offset = m0;
        for i in 0..self.mask.len() {
            if let Some(v) = self.mask.fixed_value(i) {
                offset += m.column(i) * v;
            }
        }
        Some((self.mask.free_columns(&m), offset))
    }

    pub fn is_linear_in_theta(&self) -> bool {
        let x = DVector::from_element(self.dim(), 1.0);
        self.field.linear_design(0.0, &x).is_some()
    }
}

/// Generalized Lotka–Volterra field
/// `ẋ = x(a₁x + a₂y + a₃)`, `ẏ = y(b₁x + b₂y + b₃)`, with
/// `θ = (a₁, a₂, a₃, b₁, b₂, b₃)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Glv;

impl VectorField for Glv {
    fn dim(&self) -> usize {
        2
    }

    fn param_dim(&self) -> usize {
        6
    }

    fn param_names(&self) -> Vec<String> {
        ["a1", "a2", "a3", "b1", "b2", "b3"].iter().map(|s| s.to_string()).collect()
    }

    fn eval(&self, _t: f64, s: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
        let (x, y) = (s[0], s[1]);
        DVector::from_vec(vec![
            x * (p[0] * x + p[1] * y + p[2]),
            y * (p[3] * x + p[4] * y + p[5]),
        ])
    }

    fn jacobian_state(&self, _t: f64, s: &DVector<f64>, p: &DVector<f64>) -> DMatrix<f64> {
        let (x, y) = (s[0], s[1]);
        DMatrix::from_row_slice(
            2,
            2,
            &[
                2.0 * p[0] * x + p[1] * y + p[2],
                p[1] * x,
                p[3] * y,
                p[3] * x + 2.0 * p[4] * y + p[5],
            ],
        )
    }

    fn jacobian_param(&self, _t: f64, s: &DVector<f64>, _p: &DVector<f64>) -> DMatrix<f64> {
        glv_design(s)
    }

    fn linear_design(&self, _t: f64, s: &DVector<f64>) -> Option<(DMatrix<f64>, DVector<f64>)> {
        Some((glv_design(s), DVector::zeros(2)))
    }
}

fn glv_design(s: &DVector<f64>) -> DMatrix<f64> {
    let (x, y) = (s[0], s[1]);
    DMatrix::from_row_slice(2, 6, &[x * x, x * y, x, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, x * y, y * y, y])
}

/// GLV model with `a₁` and `b₂` fixed at zero, which leaves the classic
/// predator–prey field with four free parameters.
pub fn classic_lv_model() -> VectorFieldModel {
    let mask = ParameterMask::all_free(6).fix(0, 0.0).fix(4, 0.0);
    VectorFieldModel::new(Arc::new(Glv), mask).expect("mask length matches")
}

/// GLV model with `a₁` and `b₂` fixed at the given values.
pub fn glv_model(a1: f64, b2: f64) -> VectorFieldModel {
    let mask = ParameterMask::all_free(6).fix(0, a1).fix(4, b2);
    VectorFieldModel::new(Arc::new(Glv), mask).expect("mask length matches")
}

/// `ẋ = θ ⊙ x`: independent exponential growth or decay per coordinate.
#[derive(Debug, Clone, Copy)]
pub struct ExponentialField {
    pub dim: usize,
}

impl VectorField for ExponentialField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn param_dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, _t: f64, x: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        theta.component_mul(x)
    }

    fn jacobian_state(&self, _t: f64, _x: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(theta)
    }

    fn jacobian_param(&self, _t: f64, x: &DVector<f64>, _theta: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(x)
    }

    fn linear_design(&self, _t: f64, x: &DVector<f64>) -> Option<(DMatrix<f64>, DVector<f64>)> {
        Some((DMatrix::from_diagonal(x), DVector::zeros(self.dim)))
    }
}

/// `F(t, x, θ) = θ`, a state-independent constant drift.
#[derive(Debug, Clone, Copy)]
pub struct ConstantField {
    pub dim: usize,
}

impl VectorField for ConstantField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn param_dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, _t: f64, _x: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        theta.clone()
    }

    fn jacobian_state(&self, _t: f64, _x: &DVector<f64>, _theta: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.dim, self.dim)
    }

    fn jacobian_param(&self, _t: f64, _x: &DVector<f64>, _theta: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim)
    }

    fn linear_design(&self, _t: f64, _x: &DVector<f64>) -> Option<(DMatrix<f64>, DVector<f64>)> {
        Some((DMatrix::identity(self.dim, self.dim), DVector::zeros(self.dim)))
    }
}

/// Central finite-difference `D₁F` and `D₂F`, for checking analytic
/// Jacobians.
pub fn finite_difference_jacobians(
    field: &dyn VectorField,
    t: f64,
    x: &DVector<f64>,
    theta: &DVector<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = field.dim();
    let p = field.param_dim();
    let mut jx = DMatrix::zeros(d, d);
    for j in 0..d {
        let h = 1e-6 * x[j].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        jx.set_column(j, &((field.eval(t, &xp, theta) - field.eval(t, &xm, theta)) / (2.0 * h)));
    }
    let mut jp = DMatrix::zeros(d, p);
    for j in 0..p {
        let h = 1e-6 * theta[j].abs().max(1.0);
        let mut tp = theta.clone();
        let mut tm = theta.clone();
        tp[j] += h;
        tm[j] -= h;
        jp.set_column(j, &((field.eval(t, x, &tp) - field.eval(t, x, &tm)) / (2.0 * h)));
    }
    (jx, jp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn glv_hand_value() {
        let f = Glv.eval(0.0, &v(&[1.0, 2.0]), &v(&[0.0, -1.5, 1.0, 2.0, 0.0, -1.5]));
        assert!((f - v(&[-2.0, 1.0])).amax() < 1e-15);
    }

    #[test]
    fn glv_axes_are_invariant() {
        let th = v(&[0.3, -1.2, 0.7, 2.0, -0.4, 1.1]);
        assert_eq!(Glv.eval(0.0, &v(&[0.0, 3.0]), &th)[0], 0.0);
        assert_eq!(Glv.eval(0.0, &v(&[2.0, 0.0]), &th)[1], 0.0);
    }

    #[test]
    fn mask_embed_restrict_round_trip() {
        let m = ParameterMask::all_free(6).fix(0, 0.0).fix(4, 1.0);
        assert_eq!(m.free_indices(), vec![1, 2, 3, 5]);
        let free = v(&[-1.5, 1.0, 2.0, -1.5]);
        let full = m.embed(&free);
        assert_eq!(full, v(&[0.0, -1.5, 1.0, 2.0, 1.0, -1.5]));
        assert_eq!(m.restrict(&full), free);
    }

    #[test]
    fn free_design_offsets_fixed_columns() {
        let model = glv_model(0.5, -1.0);
        let s = v(&[1.3, 0.7]);
        let th_free = v(&[-1.5, 1.0, 2.0, -1.5]);
        let (m, off) = model.linear_design_free(0.0, &s).unwrap();
        let full = model.mask().embed(&th_free);
        assert!((m * th_free + off - model.eval(0.0, &s, &full)).amax() < 1e-12);
        assert_eq!(model.free_names(), vec!["a2", "a3", "b1", "b3"]);
    }

    #[test]
    fn mask_length_is_checked() {
        assert!(VectorFieldModel::new(Arc::new(Glv), ParameterMask::all_free(3)).is_err());
    }

    fn close(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
        a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= 1e-5 * y.abs().max(1.0))
    }

    proptest! {
        #[test]
        fn glv_jacobians_match_finite_differences(
            x in 0.05f64..5.0, y in 0.05f64..5.0,
            th in proptest::collection::vec(-3.0f64..3.0, 6),
        ) {
            let (s, th) = (v(&[x, y]), DVector::from_vec(th));
            let (jx, jp) = finite_difference_jacobians(&Glv, 0.0, &s, &th);
            prop_assert!(close(&Glv.jacobian_state(0.0, &s, &th), &jx));
            prop_assert!(close(&Glv.jacobian_param(0.0, &s, &th), &jp));
            let (m, m0) = Glv.linear_design(0.0, &s).unwrap();
            prop_assert!((m * &th + m0 - Glv.eval(0.0, &s, &th)).amax() < 1e-12);
        }

        #[test]
        fn toy_field_jacobians_match(
            xs in proptest::collection::vec(-3.0f64..3.0, 3),
            th in proptest::collection::vec(-3.0f64..3.0, 3),
        ) {
            let (s, th) = (DVector::from_vec(xs), DVector::from_vec(th));
            for field in [&ExponentialField { dim: 3 } as &dyn VectorField, &ConstantField { dim: 3 }] {
                let (jx, jp) = finite_difference_jacobians(field, 0.0, &s, &th);
                prop_assert!(close(&field.jacobian_state(0.0, &s, &th), &jx));
                prop_assert!(close(&field.jacobian_param(0.0, &s, &th), &jp));
            }
        }
    }
}
