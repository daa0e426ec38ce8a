use nalgebra::{DMatrix, DVector};

use super::basis::BSplineBasis;
use super::knots::Interval;
use crate::error::{Error, Result};
use crate::linalg::{gauss_legendre, svd_least_squares, PivotedQr};
use crate::path::{DifferentiablePath, Path};

/// Least-squares regression spline for `d` state dimensions sharing one
/// basis.
#[derive(Debug, Clone)]
pub struct SplineFit {
    basis: BSplineBasis,
    /// `d × K`, one row per state dimension.
    coefficients: DMatrix<f64>,
    residual_variance: Vec<f64>,
    rss: Vec<f64>,
    times: Vec<f64>,
    /// `(BₙᵀBₙ)⁺`
    gram_pinv: DMatrix<f64>,
    rank: usize,
}

impl SplineFit {
    pub fn basis(&self) -> &BSplineBasis {
        &self.basis
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    /// `σ̂²` per dimension: RSS over the residual degrees of freedom, or zero
    /// when the fit interpolates.
    pub fn residual_variance(&self) -> &[f64] {
        &self.residual_variance
    }

    pub fn rss(&self) -> &[f64] {
        &self.rss
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn gram_pinv(&self) -> &DMatrix<f64> {
        &self.gram_pinv
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Some basis function is not supported by the data; the coefficients are
    /// the minimum-norm solution.
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.basis.dimension()
    }

    pub fn dim(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn interval(&self) -> Interval {
        self.basis.interval()
    }

    /// Replaces `σ̂²`, e.g. with a known noise variance.
    pub fn with_residual_variance(mut self, variance: Vec<f64>) -> Result<Self> {
        if variance.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} variances for {} dimensions",
                variance.len(),
                self.dim()
            )));
        }
        self.residual_variance = variance;
        Ok(self)
    }

    pub fn eval(&self, t: f64) -> Result<DVector<f64>> {
        let (first, vals) = self.basis.eval_nonzero(t)?;
        Ok(self.combine(first, &vals))
    }

    pub fn derivative(&self, t: f64) -> Result<DVector<f64>> {
        self.derivative_order(t, 1)
    }

    pub fn derivative_order(&self, t: f64, r: usize) -> Result<DVector<f64>> {
        let (first, ders) = self.basis.eval_nonzero_derivatives(t, r)?;
        Ok(self.combine(first, &ders[r]))
    }

    /// Value and first derivative in one basis evaluation.
    pub fn eval_with_derivative(&self, t: f64) -> Result<(DVector<f64>, DVector<f64>)> {
        let (first, ders) = self.basis.eval_nonzero_derivatives(t, 1)?;
        Ok((self.combine(first, &ders[0]), self.combine(first, &ders[1])))
    }

    fn combine(&self, first: usize, vals: &[f64]) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| {
            vals.iter().enumerate().map(|(j, v)| self.coefficients[(i, first + j)] * v).sum()
        })
    }

    /// `n × d` fitted values at the fit abscissae.
    pub fn fitted_values(&self) -> DMatrix<f64> {
        let b = self.basis.design_matrix(&self.times).expect("fit times lie in the interval");
        b * self.coefficients.transpose()
    }

    /// `σ̂ᵢ² B(t)ᵀ(BₙᵀBₙ)⁺B(t)` for each dimension.
    pub fn pointwise_variance(&self, t: f64) -> Result<Vec<f64>> {
        let b = self.basis.eval(t)?;
        let q = (b.transpose() * &self.gram_pinv * &b)[(0, 0)].max(0.0);
        Ok(self.residual_variance.iter().map(|s2| s2 * q).collect())
    }
}

impl DifferentiablePath for SplineFit {
    fn derivative_at(&self, t: f64) -> DVector<f64> {
        let iv = self.basis.interval();
        self.derivative(t.clamp(iv.lo, iv.hi)).expect("clamped into the interval")
    }
}

impl Path for SplineFit {
    fn dim(&self) -> usize {
        SplineFit::dim(self)
    }

    fn interval(&self) -> Interval {
        self.basis.interval()
    }

    fn value(&self, t: f64) -> DVector<f64> {
        let iv = self.basis.interval();
        self.eval(t.clamp(iv.lo, iv.hi)).expect("clamped into the interval")
    }
}

/// Fits every column of `observations` (`n × d`) by least squares on
/// `basis`.
///
/// Full-rank designs go through a column-pivoted QR; rank-deficient ones
/// fall back to the SVD-based pseudo-inverse.
pub fn fit_least_squares(
    basis: &BSplineBasis,
    times: &[f64],
    observations: &DMatrix<f64>,
) -> Result<SplineFit> {
    if times.is_empty() {
        return Err(Error::EmptyInput("times"));
    }
    if observations.nrows() != times.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} observation rows for {} times",
            observations.nrows(),
            times.len()
        )));
    }
    let design = basis.design_matrix(times)?;
    let n = times.len();

    let qr = PivotedQr::new(design.clone());
    let rank = qr.rank();
    let (coef, gram_pinv) = if qr.is_full_rank() {
        let (coef, _) = qr.solve(observations);
        (coef, qr.gram_inverse().expect("full rank"))
    } else {
        svd_least_squares(&design, observations)
    };

    let resid = observations - &design * &coef;
    let rss: Vec<f64> = resid.column_iter().map(|c| c.norm_squared()).collect();
    let dof = n.saturating_sub(rank);
    let residual_variance =
        rss.iter().map(|r| if dof > 0 { r / dof as f64 } else { 0.0 }).collect();

    Ok(SplineFit {
        basis: basis.clone(),
        coefficients: coef.transpose(),
        residual_variance,
        rss,
        times: times.to_vec(),
        gram_pinv,
        rank,
    })
}

/// Empirical and theoretical Gram matrices of a basis.
#[derive(Debug, Clone)]
pub struct GramMatrices {
    /// `(1/n) BₙᵀBₙ`
    pub empirical: DMatrix<f64>,
    /// `∫ B Bᵀ dQ` with `Q` uniform on the interval.
    pub theoretical: DMatrix<f64>,
}

impl GramMatrices {
    /// Smallest eigenvalue of the theoretical Gram matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        crate::linalg::symmetric_spectrum(&self.theoretical).1
    }
}

pub fn gram_matrices(basis: &BSplineBasis, times: &[f64]) -> Result<GramMatrices> {
    let b = basis.design_matrix(times)?;
    let empirical = (b.transpose() * &b) / times.len() as f64;

    // Products of two degree k-1 pieces are integrated exactly by k-point
    // Gauss–Legendre on each span.
    let k = basis.order();
    let (gx, gw) = gauss_legendre(k);
    let kdim = basis.dimension();
    let iv = basis.interval();
    let mut theoretical = DMatrix::zeros(kdim, kdim);
    let bp = basis.knots().breakpoints();
    for span in bp.windows(2) {
        let (a, c) = (span[0], span[1]);
        let half = 0.5 * (c - a);
        for (x, w) in gx.iter().zip(&gw) {
            let t = a + half * (x + 1.0);
            let (first, vals) = basis.eval_nonzero(t)?;
            let scale = w * half / iv.length();
            for (i, vi) in vals.iter().enumerate() {
                for (j, vj) in vals.iter().enumerate() {
                    theoretical[(first + i, first + j)] += scale * vi * vj;
                }
            }
        }
    }
    Ok(GramMatrices { empirical, theoretical })
}
