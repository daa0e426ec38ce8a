use nalgebra::DMatrix;

use super::knots::{Interval, KnotSequence};
use crate::error::{Error, Result};

/// Design matrix of the truncated power basis
/// `1, t, …, t^{k-1}, (t-ξ₁)₊^{k-1}, …, (t-ξ_L)₊^{k-1}`.
///
/// Spans the same space as the B-spline basis on the same knots, but is
/// badly conditioned; use it for cross-checks rather than fitting.
pub fn truncated_power_design(
    interval: Interval,
    knots: &[f64],
    order: usize,
    times: &[f64],
) -> Result<DMatrix<f64>> {
    if order < 1 {
        return Err(Error::InvalidKnots("order must be at least 1".into()));
    }
    KnotSequence::new(interval, knots.to_vec(), order)?;
    let cols = order + knots.len();
    let mut m = DMatrix::zeros(times.len(), cols);
    for (i, &t) in times.iter().enumerate() {
        let mut p = 1.0;
        for j in 0..order {
            m[(i, j)] = p;
            p *= t;
        }
        for (l, &xi) in knots.iter().enumerate() {
            let u = t - xi;
            m[(i, order + l)] = if u > 0.0 { u.powi(order as i32 - 1) } else { 0.0 };
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::BSplineBasis;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn direct_rows() {
        let iv = Interval::new(0.0, 1.0).unwrap();
        let m = truncated_power_design(iv, &[0.5], 2, &[0.75, 0.25]).unwrap();
        assert_eq!(m.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.75, 0.25]);
        assert_eq!(m[(1, 2)], 0.0);
    }

    fn projection(a: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
        let svd = a.clone().svd(true, true);
        let x = svd.solve(y, 1e-12).unwrap();
        a * x
    }

    #[test]
    fn same_column_space_as_bsplines() {
        let iv = Interval::new(0.0, 1.0).unwrap();
        let knots = [0.3, 0.55, 0.8];
        let ts: Vec<f64> = (0..25).map(|j| j as f64 / 24.0).collect();
        let tp = truncated_power_design(iv, &knots, 4, &ts).unwrap();
        let bs = BSplineBasis::from_parts(iv, knots.to_vec(), 4).unwrap().design_matrix(&ts).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let y = DVector::from_fn(25, |_, _| rng.random_range(-1.0..1.0));
            assert!((projection(&tp, &y) - projection(&bs, &y)).amax() < 1e-8);
        }
    }
}
