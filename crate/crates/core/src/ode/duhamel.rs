use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::expm::matrix_exponential;
use super::model::VectorField;
use crate::error::{Error, Result};

/// Trapezoid panels per output step in [`duhamel_solve`].
pub const DUHAMEL_SUBSTEPS: usize = 8;

/// Solves `v̇ = A v + forcing(t)`, `v(grid[0]) = v0`, on `grid` through the
/// variation of constants formula, one output step at a time:
/// `v(tⱼ₊₁) = e^{ΔA} v(tⱼ) + ∫ e^{(tⱼ₊₁ - s)A} forcing(s) ds`,
/// with the integral by the trapezoid rule on [`DUHAMEL_SUBSTEPS`] panels.
pub fn duhamel_solve(
    a: &DMatrix<f64>,
    forcing: &dyn Fn(f64) -> DVector<f64>,
    v0: &DVector<f64>,
    grid: &[f64],
    blowup_bound: f64,
) -> Result<Vec<DVector<f64>>> {
    let d = v0.len();
    if a.nrows() != d || a.ncols() != d {
        return Err(Error::DimensionMismatch(format!("{}x{} matrix for a {d}-vector", a.nrows(), a.ncols())));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig("time grid must be strictly increasing".into()));
    }
    let m = DUHAMEL_SUBSTEPS;
    let mut out = Vec::with_capacity(grid.len());
    let mut v = v0.clone();
    out.push(v.clone());

    let mut cached: Option<(f64, DMatrix<f64>)> = None;
    for w in grid.windows(2) {
        let h = (w[1] - w[0]) / m as f64;
        let e = match &cached {
            Some((hc, e)) if (hc - h).abs() <= 1e-12 * h => e.clone(),
            _ => {
                let e = matrix_exponential(a, h)?;
                cached = Some((h, e.clone()));
                e
            }
        };
        // Horner form of e^{mhA}(v + h/2 f₀) + Σᵢ e^{(m-i)hA} wᵢ fᵢ
        let mut y = &v + forcing(w[0]) * (0.5 * h);
        for i in 1..=m {
            let wi = if i == m { 0.5 * h } else { h };
            y = &e * y + forcing(w[0] + i as f64 * h) * wi;
        }
        if !y.iter().all(|x| x.is_finite()) || y.amax() > blowup_bound {
            return Err(Error::Blowup { time: w[1] });
        }
        v = y;
        out.push(v.clone());
    }
    Ok(out)
}

/// `u̇ = G(u, v; η)`, `v̇ = H(u; η) + A v`: the observed block `u` is
/// nonlinear, the unobserved block `v` is linear given `u`.
pub trait PartiallyLinearSystem: Send + Sync {
    fn observed_dim(&self) -> usize;

    fn hidden_dim(&self) -> usize;

    fn param_dim(&self) -> usize;

    fn g(&self, u: &DVector<f64>, v: &DVector<f64>, eta: &DVector<f64>) -> DVector<f64>;

    fn h(&self, u: &DVector<f64>, eta: &DVector<f64>) -> DVector<f64>;
}

/// Harmonic oscillator `u̇ = v`, `v̇ = -η u` with `η = ω²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Oscillator;

impl PartiallyLinearSystem for Oscillator {
    fn observed_dim(&self) -> usize {
        1
    }

    fn hidden_dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn g(&self, _u: &DVector<f64>, v: &DVector<f64>, _eta: &DVector<f64>) -> DVector<f64> {
        v.clone()
    }

    fn h(&self, u: &DVector<f64>, eta: &DVector<f64>) -> DVector<f64> {
        u * -eta[0]
    }
}

/// The full system `(u, v)` as a vector field, for simulation. The
/// parameter vector is `(η, vec(A))` with `A` in column-major order.
pub struct CoupledField {
    pub system: Arc<dyn PartiallyLinearSystem>,
}

impl CoupledField {
    fn split(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let p = self.system.param_dim();
        let d2 = self.system.hidden_dim();
        let eta = theta.rows(0, p).into_owned();
        let a = DMatrix::from_column_slice(d2, d2, theta.rows(p, d2 * d2).as_slice());
        (eta, a)
    }
}

impl VectorField for CoupledField {
    fn dim(&self) -> usize {
        self.system.observed_dim() + self.system.hidden_dim()
    }

    fn param_dim(&self) -> usize {
        self.system.param_dim() + self.system.hidden_dim().pow(2)
    }

    fn eval(&self, _t: f64, x: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        let d1 = self.system.observed_dim();
        let d2 = self.system.hidden_dim();
        let (eta, a) = self.split(theta);
        let u = x.rows(0, d1).into_owned();
        let v = x.rows(d1, d2).into_owned();
        let du = self.system.g(&u, &v, &eta);
        let dv = self.system.h(&u, &eta) + a * v;
        DVector::from_iterator(d1 + d2, du.iter().chain(dv.iter()).copied())
    }

    fn jacobian_state(&self, t: f64, x: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64> {
        numeric_jacobian(|y| self.eval(t, y, theta), x)
    }

    fn jacobian_param(&self, t: f64, x: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64> {
        numeric_jacobian(|th| self.eval(t, x, th), theta)
    }
}

/// Central-difference Jacobian of `f` at `at`.
pub fn numeric_jacobian<F>(f: F, at: &DVector<f64>) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let f0 = f(at);
    let mut jac = DMatrix::zeros(f0.len(), at.len());
    for j in 0..at.len() {
        let h = 1e-6 * at[j].abs().max(1.0);
        let mut p = at.clone();
        let mut m = at.clone();
        p[j] += h;
        m[j] -= h;
        jac.set_column(j, &((f(&p) - f(&m)) / (2.0 * h)));
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::integrate::{integrate, StepControl};

    fn lin(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64).collect()
    }

    fn s(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn zero_matrix_reduces_to_quadrature() {
        let grid = lin(0.0, 2.0, 101);
        let out = duhamel_solve(&DMatrix::zeros(1, 1), &|t| s(t.cos()), &s(0.5), &grid, 1e8).unwrap();
        for (t, v) in grid.iter().zip(&out) {
            assert!((v[0] - 0.5 - t.sin()).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_forcing_is_the_exponential() {
        let a = DMatrix::from_row_slice(2, 2, &[-0.5, 1.0, -1.0, -0.2]);
        let v0 = DVector::from_vec(vec![1.0, -1.0]);
        let grid = lin(0.0, 3.0, 31);
        let out = duhamel_solve(&a, &|_| DVector::zeros(2), &v0, &grid, 1e8).unwrap();
        for (t, v) in grid.iter().zip(&out) {
            let e = matrix_exponential(&a, *t).unwrap() * &v0;
            assert!((v - e).amax() < 1e-12);
        }
    }

    #[test]
    fn scalar_relaxation_closed_form() {
        let grid = lin(0.0, 10.0, 1000);
        let out = duhamel_solve(&DMatrix::from_element(1, 1, -1.0), &|_| s(1.0), &s(0.0), &grid, 1e8).unwrap();
        let err = grid.iter().zip(&out).map(|(t, v)| (v[0] - (1.0 - (-t).exp())).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn agrees_with_rk4_on_smooth_forcing() {
        // v̇ = A v + (sin t, cos 2t) written as a vector field for RK4
        struct Forced;
        impl VectorField for Forced {
            fn dim(&self) -> usize {
                2
            }
            fn param_dim(&self) -> usize {
                0
            }
            fn eval(&self, t: f64, x: &DVector<f64>, _: &DVector<f64>) -> DVector<f64> {
                DVector::from_vec(vec![-0.3 * x[0] + 0.8 * x[1] + t.sin(), -0.8 * x[0] - 0.3 * x[1] + (2.0 * t).cos()])
            }
            fn jacobian_state(&self, _: f64, _: &DVector<f64>, _: &DVector<f64>) -> DMatrix<f64> {
                DMatrix::from_row_slice(2, 2, &[-0.3, 0.8, -0.8, -0.3])
            }
            fn jacobian_param(&self, _: f64, _: &DVector<f64>, _: &DVector<f64>) -> DMatrix<f64> {
                DMatrix::zeros(2, 0)
            }
        }
        let a = DMatrix::from_row_slice(2, 2, &[-0.3, 0.8, -0.8, -0.3]);
        let v0 = DVector::from_vec(vec![0.2, 1.0]);
        let grid = lin(0.0, 10.0, 1001);
        let out = duhamel_solve(&a, &|t| DVector::from_vec(vec![t.sin(), (2.0 * t).cos()]), &v0, &grid, 1e8).unwrap();
        let tr = integrate(&Forced, &DVector::zeros(0), &v0, &grid, &StepControl::default()).unwrap();
        let sup = out.iter().zip(tr.states()).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
        assert!(sup < 1e-6, "{sup}");
    }

    #[test]
    fn blowup_is_reported() {
        let r = duhamel_solve(&DMatrix::from_element(1, 1, 5.0), &|_| s(0.0), &s(1.0), &lin(0.0, 10.0, 11), 1e8);
        assert!(matches!(r, Err(Error::Blowup { .. })));
    }

    #[test]
    fn coupled_oscillator_is_harmonic() {
        let field = CoupledField { system: Arc::new(Oscillator) };
        let theta = DVector::from_vec(vec![4.0, 0.0]);
        let grid = lin(0.0, 5.0, 51);
        let tr = integrate(&field, &theta, &DVector::from_vec(vec![1.0, 0.0]), &grid, &StepControl::default()).unwrap();
        for (t, x) in grid.iter().zip(tr.states()) {
            assert!((x[0] - (2.0 * t).cos()).abs() < 1e-7);
            assert!((x[1] + 2.0 * (2.0 * t).sin()).abs() < 1e-7);
        }
    }
}
