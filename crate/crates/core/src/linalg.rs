//! Dense least-squares kernels and quadrature helpers shared by the spline
//! and estimator modules.

use nalgebra::{DMatrix, DVector, SVD};

/// Relative singular-value cutoff used wherever a Moore–Penrose inverse is
/// emulated.
pub const RANK_TOL: f64 = 1e-12;

/// Householder QR with column pivoting (largest remaining column norm first).
///
/// `A P = Q R`; `Q` is kept in compact Householder form below the diagonal.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    qr: DMatrix<f64>,
    tau: Vec<f64>,
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    pub fn new(mut a: DMatrix<f64>) -> Self {
        let (m, n) = a.shape();
        let steps = m.min(n);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut tau = vec![0.0; steps];

        for j in 0..steps {
            let mut best = j;
            let mut best_norm = -1.0;
            for c in j..n {
                let s: f64 = (j..m).map(|i| a[(i, c)] * a[(i, c)]).sum();
                if s > best_norm {
                    best_norm = s;
                    best = c;
                }
            }
            if best != j {
                a.swap_columns(j, best);
                perm.swap(j, best);
            }

            let norm = best_norm.max(0.0).sqrt();
            if norm == 0.0 {
                tau[j] = 0.0;
                continue;
            }
            let x0 = a[(j, j)];
            let alpha = if x0 >= 0.0 { -norm } else { norm };
            let v0 = x0 - alpha;
            // v = (1, a[j+1..,j] / v0)
            for i in (j + 1)..m {
                a[(i, j)] /= v0;
            }
            let t = -v0 / alpha;
            tau[j] = t;
            a[(j, j)] = alpha;

            for c in (j + 1)..n {
                let mut dot = a[(j, c)];
                for i in (j + 1)..m {
                    dot += a[(i, j)] * a[(i, c)];
                }
                let scale = t * dot;
                a[(j, c)] -= scale;
                for i in (j + 1)..m {
                    let vi = a[(i, j)];
                    a[(i, c)] -= scale * vi;
                }
            }
        }

        let r00 = if steps > 0 { a[(0, 0)].abs() } else { 0.0 };
        let rank = (0..steps)
            .take_while(|&j| r00 > 0.0 && a[(j, j)].abs() > RANK_TOL * r00)
            .count();

        Self { qr: a, tau, perm, rank }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn ncols(&self) -> usize {
        self.qr.ncols()
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.qr.ncols()
    }

    /// Column permutation: column `j` of `A P` is column `perm()[j]` of `A`.
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Overwrites `b` with `Qᵀ b`.
    pub fn apply_qt(&self, b: &mut DMatrix<f64>) {
        let m = self.qr.nrows();
        for (j, &t) in self.tau.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            for c in 0..b.ncols() {
                let mut dot = b[(j, c)];
                for i in (j + 1)..m {
                    dot += self.qr[(i, j)] * b[(i, c)];
                }
                let scale = t * dot;
                b[(j, c)] -= scale;
                for i in (j + 1)..m {
                    b[(i, c)] -= scale * self.qr[(i, j)];
                }
            }
        }
    }

    /// Basic least-squares solution: directions beyond the numerical rank are
    /// set to zero. Returns the solution and the residual sum of squares of
    /// each right-hand-side column.
    pub fn solve(&self, b: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
        let n = self.qr.ncols();
        let r = self.rank;
        let mut qtb = b.clone();
        self.apply_qt(&mut qtb);

        let rss = (0..b.ncols())
            .map(|c| (r..qtb.nrows()).map(|i| qtb[(i, c)] * qtb[(i, c)]).sum())
            .collect();

        let mut x = DMatrix::zeros(n, b.ncols());
        for c in 0..b.ncols() {
            let mut z = vec![0.0; r];
            for i in (0..r).rev() {
                let mut s = qtb[(i, c)];
                for (l, zl) in z.iter().enumerate().skip(i + 1) {
                    s -= self.qr[(i, l)] * zl;
                }
                z[i] = s / self.qr[(i, i)];
            }
            for (i, zi) in z.into_iter().enumerate() {
                x[(self.perm[i], c)] = zi;
            }
        }
        (x, rss)
    }

    /// Residual sums of squares of each column of `b` without forming the
    /// solution.
    pub fn residual_ss(&self, b: &DMatrix<f64>) -> Vec<f64> {
        let mut qtb = b.clone();
        self.apply_qt(&mut qtb);
        (0..b.ncols())
            .map(|c| (self.rank..qtb.nrows()).map(|i| qtb[(i, c)] * qtb[(i, c)]).sum())
            .collect()
    }

    /// `(AᵀA)⁻¹` for a full-rank factorization, `P R⁻¹ R⁻ᵀ Pᵀ`.
    pub fn gram_inverse(&self) -> Option<DMatrix<f64>> {
        if !self.is_full_rank() {
            return None;
        }
        let n = self.qr.ncols();
        // R⁻¹ by back substitution, column by column.
        let mut rinv = DMatrix::zeros(n, n);
        for c in 0..n {
            for i in (0..=c).rev() {
                let mut s = if i == c { 1.0 } else { 0.0 };
                for l in (i + 1)..=c {
                    s -= self.qr[(i, l)] * rinv[(l, c)];
                }
                rinv[(i, c)] = s / self.qr[(i, i)];
            }
        }
        let inner = &rinv * rinv.transpose();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out[(self.perm[i], self.perm[j])] = inner[(i, j)];
            }
        }
        Some(out)
    }
}

/// Minimum-norm least-squares solution and `(AᵀA)⁺` through the SVD, with
/// singular values below `RANK_TOL · σ_max` treated as zero.
pub fn svd_least_squares(a: &DMatrix<f64>, b: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let svd = SVD::new(a.clone(), true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = RANK_TOL * smax;
    let k = svd.singular_values.len();
    let n = a.ncols();

    let mut x = DMatrix::zeros(n, b.ncols());
    let mut gram_pinv = DMatrix::zeros(n, n);
    let utb = u.transpose() * b;
    for s in 0..k {
        let sv = svd.singular_values[s];
        if sv <= cutoff || sv == 0.0 {
            continue;
        }
        let vcol = v_t.row(s).transpose();
        for c in 0..b.ncols() {
            let coef = utb[(s, c)] / sv;
            for i in 0..n {
                x[(i, c)] += coef * vcol[i];
            }
        }
        gram_pinv += (&vcol * vcol.transpose()) / (sv * sv);
    }
    (x, gram_pinv)
}

/// Trapezoid weights for sorted abscissae.
pub fn trapezoid_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![0.0; n];
    for j in 0..n.saturating_sub(1) {
        let h = nodes[j + 1] - nodes[j];
        w[j] += 0.5 * h;
        w[j + 1] += 0.5 * h;
    }
    w
}

/// Sorted, deduplicated union of `base` and `extra` restricted to `[lo, hi]`.
pub fn merge_nodes(base: &[f64], extra: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let mut all: Vec<f64> = base
        .iter()
        .chain(extra.iter())
        .copied()
        .filter(|t| *t >= lo && *t <= hi)
        .collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let scale = (hi - lo).abs().max(1.0);
    all.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * scale);
    all
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for l in 2..=m {
                let p2 = ((2 * l - 1) as f64 * z * p1 - (l - 1) as f64 * p0) / l as f64;
                p0 = p1;
                p1 = p2;
            }
            let pm = if m == 0 { 1.0 } else if m == 1 { z } else { p1 };
            let pm1 = if m == 1 { 1.0 } else { p0 };
            dp = m as f64 * (z * pm - pm1) / (z * z - 1.0);
            let dz = pm / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Condition number and extreme eigenvalues of a symmetric matrix.
pub fn symmetric_spectrum(m: &DMatrix<f64>) -> (f64, f64, f64) {
    if m.nrows() == 0 {
        return (1.0, 0.0, 0.0);
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lmin = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    (cond, lmin, lmax)
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
