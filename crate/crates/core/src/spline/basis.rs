use nalgebra::{DMatrix, DVector};

use super::knots::{Interval, KnotSequence};
use crate::error::{Error, Result};

/// B-spline basis of order `k` on an augmented knot sequence.
///
/// Spans are half-open `[τ_μ, τ_{μ+1})` except the last one, which is closed
/// so that the partition of unity also holds at the right endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineBasis {
    knots: KnotSequence,
    tau: Vec<f64>,
}

impl BSplineBasis {
    pub fn new(knots: KnotSequence) -> Self {
        let tau = knots.augmented();
        Self { knots, tau }
    }

    /// Convenience constructor from raw parts.
    pub fn from_parts(interval: Interval, interior: Vec<f64>, order: usize) -> Result<Self> {
        Ok(Self::new(KnotSequence::new(interval, interior, order)?))
    }

    pub fn knots(&self) -> &KnotSequence {
        &self.knots
    }

    pub fn interval(&self) -> Interval {
        self.knots.interval()
    }

    pub fn order(&self) -> usize {
        self.knots.order()
    }

    /// `K = L + k`.
    pub fn dimension(&self) -> usize {
        self.knots.len() + self.knots.order()
    }

    pub fn augmented(&self) -> &[f64] {
        &self.tau
    }

    fn span(&self, t: f64) -> usize {
        let k = self.order();
        let last = self.dimension() - 1;
        if t >= self.tau[last + 1] {
            return last;
        }
        // first index μ in [k-1, last] with τ_{μ+1} > t
        let (mut lo, mut hi) = (k - 1, last);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.tau[mid + 1] > t {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    }

    /// The `k` possibly nonzero basis values at `t` and the index of the
    /// first of them.
    pub fn eval_nonzero(&self, t: f64) -> Result<(usize, Vec<f64>)> {
        self.interval().check(t)?;
        let p = self.order() - 1;
        let mu = self.span(t);
        let tau = &self.tau;
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = t - tau[mu + 1 - j];
            right[j] = tau[mu + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        Ok((mu - p, n))
    }

    /// Nonzero basis values and derivatives up to order `r`; row `q` of the
    /// result holds the `q`-th derivatives.
    pub fn eval_nonzero_derivatives(&self, t: f64, r: usize) -> Result<(usize, Vec<Vec<f64>>)> {
        let k = self.order();
        if r >= k {
            return Err(Error::DerivativeOrderTooHigh { order: r, spline_order: k });
        }
        self.interval().check(t)?;
        let p = k - 1;
        let mu = self.span(t);
        let tau = &self.tau;

        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = t - tau[mu + 1 - j];
            right[j] = tau[mu + j] - t;
            let mut saved = 0.0;
            for q in 0..j {
                ndu[j][q] = right[q + 1] + left[j - q];
                let temp = ndu[q][j - 1] / ndu[j][q];
                ndu[q][j] = saved + right[q + 1] * temp;
                saved = left[j - q] * temp;
            }
            ndu[j][j] = saved;
        }

        let mut ders = vec![vec![0.0; p + 1]; r + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }

        let (pi, ri) = (p as isize, r as isize);
        let mut a = vec![vec![0.0; p + 1]; 2];
        for col in 0..=pi {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for kk in 1..=ri {
                let mut d = 0.0;
                let rk = col - kk;
                let pk = pi - kk;
                if col >= kk {
                    a[s2][0] = a[s1][0] / ndu[(pk + 1) as usize][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk as usize];
                }
                let j1 = if rk >= -1 { 1 } else { -rk };
                let j2 = if col - 1 <= pk { kk - 1 } else { pi - col };
                for j in j1..=j2 {
                    let (ju, rkj) = (j as usize, (rk + j) as usize);
                    a[s2][ju] = (a[s1][ju] - a[s1][ju - 1]) / ndu[(pk + 1) as usize][rkj];
                    d += a[s2][ju] * ndu[rkj][pk as usize];
                }
                if col <= pk {
                    let ku = kk as usize;
                    a[s2][ku] = -a[s1][ku - 1] / ndu[(pk + 1) as usize][col as usize];
                    d += a[s2][ku] * ndu[col as usize][pk as usize];
                }
                ders[kk as usize][col as usize] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }

        let mut factor = p as f64;
        for (kk, row) in ders.iter_mut().enumerate().skip(1) {
            for v in row.iter_mut() {
                *v *= factor;
            }
            factor *= (p - kk) as f64;
        }
        Ok((mu - p, ders))
    }

    /// All `K` basis values at `t`.
    pub fn eval(&self, t: f64) -> Result<DVector<f64>> {
        let (first, vals) = self.eval_nonzero(t)?;
        let mut out = DVector::zeros(self.dimension());
        for (j, v) in vals.into_iter().enumerate() {
            out[first + j] = v;
        }
        Ok(out)
    }

    /// All `K` basis derivatives of order `r` at `t`.
    pub fn eval_derivative(&self, t: f64, r: usize) -> Result<DVector<f64>> {
        let (first, ders) = self.eval_nonzero_derivatives(t, r)?;
        let mut out = DVector::zeros(self.dimension());
        for (j, v) in ders[r].iter().enumerate() {
            out[first + j] = *v;
        }
        Ok(out)
    }

    /// `n × K` matrix with entries `B_j(t_i)`.
    pub fn design_matrix(&self, times: &[f64]) -> Result<DMatrix<f64>> {
        self.derivative_design(times, 0)
    }

    /// `n × K` matrix of `r`-th derivatives `B_j^{(r)}(t_i)`.
    pub fn derivative_design(&self, times: &[f64], r: usize) -> Result<DMatrix<f64>> {
        if times.is_empty() {
            return Err(Error::EmptyInput("times"));
        }
        let mut m = DMatrix::zeros(times.len(), self.dimension());
        for (i, &t) in times.iter().enumerate() {
            if r == 0 {
                let (first, vals) = self.eval_nonzero(t)?;
                for (j, v) in vals.into_iter().enumerate() {
                    m[(i, first + j)] = v;
                }
            } else {
                let (first, ders) = self.eval_nonzero_derivatives(t, r)?;
                for (j, v) in ders[r].iter().enumerate() {
                    m[(i, first + j)] = *v;
                }
            }
        }
        Ok(m)
    }
}

/// Free-function form of [`BSplineBasis::eval`].
pub fn eval_basis(basis: &BSplineBasis, t: f64) -> Result<DVector<f64>> {
    basis.eval(t)
}

/// Free-function form of [`BSplineBasis::eval_derivative`].
pub fn eval_basis_derivative(basis: &BSplineBasis, t: f64, r: usize) -> Result<DVector<f64>> {
    basis.eval_derivative(t, r)
}

/// Free-function form of [`BSplineBasis::design_matrix`].
pub fn design_matrix(basis: &BSplineBasis, times: &[f64]) -> Result<DMatrix<f64>> {
    basis.design_matrix(times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Textbook recursive Cox–de Boor, 0/0 := 0, with the closed last span.
    fn cox_de_boor(tau: &[f64], i: usize, k: usize, t: f64, hi: f64) -> f64 {
        if k == 1 {
            let (a, b) = (tau[i], tau[i + 1]);
            if a < b && ((t >= a && t < b) || (t == hi && b == hi)) {
                return 1.0;
            }
            return 0.0;
        }
        let mut v = 0.0;
        let d1 = tau[i + k - 1] - tau[i];
        if d1 > 0.0 {
            v += (t - tau[i]) / d1 * cox_de_boor(tau, i, k - 1, t, hi);
        }
        let d2 = tau[i + k] - tau[i + 1];
        if d2 > 0.0 {
            v += (tau[i + k] - t) / d2 * cox_de_boor(tau, i + 1, k - 1, t, hi);
        }
        v
    }

    fn unit() -> Interval {
        Interval::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn order_one_is_indicator() {
        let b = BSplineBasis::from_parts(unit(), vec![0.3, 0.6], 1).unwrap();
        assert_eq!(b.dimension(), 3);
        assert_eq!(b.eval(0.1).unwrap().as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(b.eval(0.3).unwrap().as_slice(), &[0.0, 1.0, 0.0]);
        assert_eq!(b.eval(1.0).unwrap().as_slice(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn matches_recursive_oracle() {
        let b = BSplineBasis::from_parts(unit(), vec![0.25, 0.5, 0.75], 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut ts: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
        ts.push(0.5);
        ts.push(1.0);
        for t in ts {
            let v = b.eval(t).unwrap();
            for i in 0..b.dimension() {
                let o = cox_de_boor(b.augmented(), i, 4, t, 1.0);
                assert!((v[i] - o).abs() < 1e-14, "t={t} i={i}: {} vs {o}", v[i]);
            }
        }
    }

    #[test]
    fn derivative_of_linear_segments_is_slope() {
        let b = BSplineBasis::from_parts(unit(), vec![0.4], 2).unwrap();
        let c = DVector::from_vec(vec![1.0, 3.0, 2.0]);
        let d1 = b.eval_derivative(0.2, 1).unwrap().dot(&c);
        let d2 = b.eval_derivative(0.7, 1).unwrap().dot(&c);
        assert!((d1 - 2.0 / 0.4).abs() < 1e-12);
        assert!((d2 - (-1.0 / 0.6)).abs() < 1e-12);
    }

    #[test]
    fn derivative_order_limits() {
        let b = BSplineBasis::from_parts(unit(), vec![0.5], 4).unwrap();
        assert!(matches!(
            b.eval_derivative(0.3, 4),
            Err(Error::DerivativeOrderTooHigh { order: 4, spline_order: 4 })
        ));
        assert!(b.eval_derivative(0.3, 3).is_ok());
        assert!(matches!(b.eval(1.5), Err(Error::OutOfDomain { .. })));
        assert!(matches!(b.design_matrix(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn cubic_derivative_matches_finite_differences() {
        let b = BSplineBasis::from_parts(unit(), vec![0.25, 0.5, 0.75], 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = DVector::from_fn(b.dimension(), |_, _| rng.random_range(-2.0..2.0));
        for &t in &[0.1, 0.37, 0.62, 0.9] {
            let h = 1e-5;
            let fd = (b.eval(t + h).unwrap().dot(&c) - b.eval(t - h).unwrap().dot(&c)) / (2.0 * h);
            let d = b.eval_derivative(t, 1).unwrap().dot(&c);
            assert!((d - fd).abs() <= 1e-6 * d.abs().max(1.0), "{d} vs {fd}");
        }
    }

    #[test]
    fn design_matrix_rows() {
        let b = BSplineBasis::from_parts(unit(), vec![0.2, 0.5], 3).unwrap();
        let m = b.design_matrix(&[0.3]).unwrap();
        assert_eq!(m.row(0).transpose(), b.eval(0.3).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ts: Vec<f64> = (0..10).map(|_| rng.random::<f64>()).collect();
        let m = b.design_matrix(&ts).unwrap();
        for (i, &t) in ts.iter().enumerate() {
            let row = b.eval(t).unwrap();
            for j in 0..b.dimension() {
                assert_eq!(m[(i, j)], row[j]);
            }
            assert!((m.row(i).sum() - 1.0).abs() < 1e-12);
            assert!(m.row(i).iter().filter(|v| **v != 0.0).count() <= 3);
        }
    }

    fn arb_basis() -> impl Strategy<Value = BSplineBasis> {
        (2usize..=6, prop::collection::vec(0.001f64..0.999, 0..8)).prop_map(|(k, mut xs)| {
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            xs.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
            BSplineBasis::from_parts(unit(), xs, k).unwrap()
        })
    }

    proptest! {
        #[test]
        fn partition_of_unity(b in arb_basis(), t in 0.0f64..=1.0) {
            let v = b.eval(t).unwrap();
            prop_assert!((v.sum() - 1.0).abs() <= 1e-10);
            prop_assert!(v.iter().all(|x| *x >= -1e-15 && *x <= 1.0 + 1e-15));
            prop_assert!(v.iter().filter(|x| **x != 0.0).count() <= b.order());
            let d = b.eval_derivative(t, 1).unwrap();
            prop_assert!(d.sum().abs() <= 1e-8 * d.amax().max(1.0));
        }
    }
}
