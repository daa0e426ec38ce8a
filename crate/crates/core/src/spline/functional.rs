use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::basis::BSplineBasis;
use super::fit::SplineFit;
use super::knots::Interval;
use crate::error::{Error, Result};
use crate::linalg::trapezoid_weights;
use crate::path::Path;

/// Trapezoid sub-nodes per knot span when integrating against the basis.
pub const SUBNODES_PER_SPAN: usize = 64;

/// `Γ_a(x) = ∫ a(s)ᵀ x(s) ds` for a continuous weight path `a`.
#[derive(Clone)]
pub struct LinearFunctional {
    interval: Interval,
    dim: usize,
    weight_path: Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>,
}

impl std::fmt::Debug for LinearFunctional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearFunctional")
            .field("interval", &self.interval)
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl LinearFunctional {
    pub fn new<F>(interval: Interval, dim: usize, weight_path: F) -> Self
    where
        F: Fn(f64) -> DVector<f64> + Send + Sync + 'static,
    {
        Self { interval, dim, weight_path: Arc::new(weight_path) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weight_at(&self, t: f64) -> DVector<f64> {
        (self.weight_path)(t)
    }

    /// Quadrature grid: every span of `breakpoints` split into
    /// [`SUBNODES_PER_SPAN`] pieces.
    fn grid(breakpoints: &[f64]) -> Vec<f64> {
        let mut nodes = Vec::with_capacity(breakpoints.len() * SUBNODES_PER_SPAN);
        for span in breakpoints.windows(2) {
            let h = (span[1] - span[0]) / SUBNODES_PER_SPAN as f64;
            for s in 0..SUBNODES_PER_SPAN {
                nodes.push(span[0] + s as f64 * h);
            }
        }
        nodes.push(*breakpoints.last().expect("at least two breakpoints"));
        nodes
    }

    /// Value on an arbitrary path, using a grid refined on the given
    /// breakpoints (pass the interval ends for a plain uniform grid).
    pub fn apply_with_breakpoints(&self, path: &dyn Path, breakpoints: &[f64]) -> f64 {
        let nodes = Self::grid(breakpoints);
        let w = trapezoid_weights(&nodes);
        nodes.iter().zip(&w).map(|(t, wt)| wt * self.weight_at(*t).dot(&path.value(*t))).sum()
    }

    pub fn apply(&self, path: &dyn Path) -> f64 {
        let bp = [self.interval.lo, self.interval.hi];
        let nodes = Self::grid(&bp);
        let refined: Vec<f64> = nodes
            .windows(2)
            .flat_map(|w| {
                let h = (w[1] - w[0]) / 16.0;
                (0..16).map(move |s| w[0] + s as f64 * h)
            })
            .chain(std::iter::once(self.interval.hi))
            .collect();
        let w = trapezoid_weights(&refined);
        refined.iter().zip(&w).map(|(t, wt)| wt * self.weight_at(*t).dot(&path.value(*t))).sum()
    }

    /// `γ = ∫ B(s) a(s)ᵀ ds`, a `K × d` matrix.
    pub fn gamma(&self, basis: &BSplineBasis) -> Result<DMatrix<f64>> {
        let nodes = Self::grid(&basis.knots().breakpoints());
        let w = trapezoid_weights(&nodes);
        let mut gamma = DMatrix::zeros(basis.dimension(), self.dim);
        for (t, wt) in nodes.iter().zip(&w) {
            let (first, vals) = basis.eval_nonzero(*t)?;
            let a = self.weight_at(*t);
            if a.len() != self.dim {
                return Err(Error::DimensionMismatch(format!(
                    "weight path returned {} entries, expected {}",
                    a.len(),
                    self.dim
                )));
            }
            for (j, v) in vals.iter().enumerate() {
                for i in 0..self.dim {
                    gamma[(first + j, i)] += wt * v * a[i];
                }
            }
        }
        Ok(gamma)
    }

    /// `Γ(x̂) = Σᵢ ĉᵢᵀ γᵢ` computed from the spline coefficients.
    pub fn apply_to_fit(&self, fit: &SplineFit) -> Result<f64> {
        let gamma = self.gamma(fit.basis())?;
        Ok((fit.coefficients() * gamma).trace())
    }
}

/// Per-dimension variance contributions `σ̂ᵢ² γᵢᵀ(BₙᵀBₙ)⁺γᵢ` on the
/// diagonal of a `d × d` matrix; the variance of `Γ(x̂)` is its trace.
pub fn functional_variance(fit: &SplineFit, functional: &LinearFunctional) -> Result<DMatrix<f64>> {
    if functional.dim() != fit.dim() {
        return Err(Error::DimensionMismatch(format!(
            "functional of dimension {} on a {}-dimensional fit",
            functional.dim(),
            fit.dim()
        )));
    }
    let gamma = functional.gamma(fit.basis())?;
    let d = fit.dim();
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        let g = gamma.column(i);
        let q = (g.transpose() * fit.gram_pinv() * g)[(0, 0)].max(0.0);
        out[(i, i)] = fit.residual_variance()[i] * q;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::fit::fit_least_squares;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn unit() -> Interval {
        Interval::new(0.0, 1.0).unwrap()
    }

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|j| j as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn zero_weight_has_zero_variance() {
        let b = BSplineBasis::from_parts(unit(), vec![0.5], 4).unwrap();
        let ts = grid(20);
        let y = DMatrix::from_fn(20, 1, |i, _| ts[i] * ts[i]);
        let fit = fit_least_squares(&b, &ts, &y).unwrap().with_residual_variance(vec![1.0]).unwrap();
        let zero = LinearFunctional::new(unit(), 1, |_| DVector::from_element(1, 0.0));
        assert_eq!(functional_variance(&fit, &zero).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn interpolating_fit_matches_explicit_assembly() {
        let b = BSplineBasis::from_parts(unit(), vec![0.25, 0.5, 0.75], 4).unwrap();
        let ts = grid(7);
        let y = DMatrix::from_fn(7, 1, |i, _| (2.0 * ts[i]).exp());
        let fit = fit_least_squares(&b, &ts, &y).unwrap().with_residual_variance(vec![0.04]).unwrap();
        // a = a spline in the same space
        let ac = DVector::from_vec(vec![1.0, 0.5, -0.2, 0.3, 0.8, -1.0, 0.4]);
        let bc = b.clone();
        let func = LinearFunctional::new(unit(), 1, move |t| {
            DVector::from_element(1, bc.eval(t).unwrap().dot(&ac))
        });
        let gamma = func.gamma(&b).unwrap();
        let bm = b.design_matrix(&ts).unwrap();
        let inv = (bm.transpose() * &bm).try_inverse().unwrap();
        let direct = 0.04 * (gamma.transpose() * inv * &gamma)[(0, 0)];
        let v = functional_variance(&fit, &func).unwrap()[(0, 0)];
        assert!((v - direct).abs() <= 1e-8 * direct.abs());
        // coefficient route equals the path route on the same grid
        let on_knots = func.apply_with_breakpoints(&fit, &b.knots().breakpoints());
        let coef_route = func.apply_to_fit(&fit).unwrap();
        assert!((coef_route - on_knots).abs() < 1e-10, "{coef_route} vs {on_knots}");
        let fine: Vec<f64> = (0..=400).map(|j| j as f64 / 400.0).collect();
        let reference = func.apply_with_breakpoints(&fit, &fine);
        assert!((coef_route - reference).abs() < 1e-3 * reference.abs());
        assert!((func.apply(&fit) - reference).abs() < 1e-4 * reference.abs());
    }

    #[test]
    fn variance_matches_monte_carlo_refits() {
        let b = BSplineBasis::from_parts(unit(), vec![0.2, 0.4, 0.6, 0.8], 4).unwrap();
        let ts = grid(60);
        let sigma = 0.5;
        let func = LinearFunctional::new(unit(), 1, |t| DVector::from_element(1, 1.0 + t * t));
        let gamma = func.gamma(&b).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let noise = Normal::new(0.0, sigma).unwrap();
        let values: Vec<f64> = (0..500)
            .map(|_| {
                let y = DMatrix::from_fn(60, 1, |_, _| noise.sample(&mut rng));
                let fit = fit_least_squares(&b, &ts, &y).unwrap();
                (fit.coefficients() * &gamma).trace()
            })
            .collect();
        let mean = values.iter().sum::<f64>() / 500.0;
        let emp = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 499.0;
        let y = DMatrix::from_element(60, 1, 0.0);
        let fit = fit_least_squares(&b, &ts, &y).unwrap().with_residual_variance(vec![sigma * sigma]).unwrap();
        let vn = functional_variance(&fit, &func).unwrap()[(0, 0)];
        assert!((emp - vn).abs() / vn < 0.2, "empirical {emp} vs formula {vn}");
    }

    #[test]
    fn functional_is_linear() {
        let func = LinearFunctional::new(unit(), 2, |t| DVector::from_vec(vec![t, 1.0 - t]));
        let x = crate::path::FnPath::new(unit(), 2, |t| DVector::from_vec(vec![t.sin(), t.cos()]));
        let y = crate::path::FnPath::new(unit(), 2, |t| DVector::from_vec(vec![t * t, 2.0]));
        let z = crate::path::FnPath::new(unit(), 2, |t| {
            DVector::from_vec(vec![2.0 * t.sin() - 3.0 * t * t, 2.0 * t.cos() - 6.0])
        });
        let lhs = func.apply(&z);
        let rhs = 2.0 * func.apply(&x) - 3.0 * func.apply(&y);
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
