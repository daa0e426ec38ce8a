use nalgebra::{DMatrix, DVector};

use super::fit::fit_grid;
use super::lm::{levenberg_marquardt, numeric_residual_jacobian, LmOptions};
use super::quadrature::{CriterionConfig, Samples};
use crate::error::{Error, Result};
use crate::ode::{duhamel_solve, PartiallyLinearSystem};
use crate::path::Path;
use crate::spline::SplineFit;

#[derive(Debug, Clone, PartialEq)]
pub struct PartialInit {
    pub eta: DVector<f64>,
    pub a: DMatrix<f64>,
    pub v0: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialOptions {
    pub estimate_a: bool,
    pub estimate_v0: bool,
    pub blowup_bound: f64,
    pub lm: LmOptions,
}

impl Default for PartialOptions {
    fn default() -> Self {
        Self { estimate_a: true, estimate_v0: true, blowup_bound: 1e8, lm: LmOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialEstimate {
    pub eta: DVector<f64>,
    pub a: DMatrix<f64>,
    pub v0: DVector<f64>,
    pub criterion_value: f64,
    pub converged: bool,
    pub iterations: usize,
}

struct Packing<'a> {
    init: &'a PartialInit,
    opts: &'a PartialOptions,
    p: usize,
    d2: usize,
}

impl Packing<'_> {
    fn pack(&self) -> DVector<f64> {
        let mut v: Vec<f64> = self.init.eta.iter().copied().collect();
        if self.opts.estimate_a {
            v.extend(self.init.a.iter());
        }
        if self.opts.estimate_v0 {
            v.extend(self.init.v0.iter());
        }
        DVector::from_vec(v)
    }

    fn unpack(&self, phi: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>, DVector<f64>) {
        let mut at = self.p;
        let eta = phi.rows(0, self.p).into_owned();
        let a = if self.opts.estimate_a {
            let a = DMatrix::from_column_slice(self.d2, self.d2, phi.rows(at, self.d2 * self.d2).as_slice());
            at += self.d2 * self.d2;
            a
        } else {
            self.init.a.clone()
        };
        let v0 = if self.opts.estimate_v0 { phi.rows(at, self.d2).into_owned() } else { self.init.v0.clone() };
        (eta, a, v0)
    }
}

/// Two-step estimation when only `u` is observed in
/// `u̇ = G(u, v; η)`, `v̇ = H(u; η) + A v`.
///
/// The hidden block is reconstructed by [`duhamel_solve`] with forcing
/// `H(û(t); η)`, and `(η, A, v₀)` minimize
/// `∫ |û̇ - G(û, v̂; η)|² w dt` by Levenberg–Marquardt with numerical
/// Jacobians.
pub fn fit_partially_observed(
    u_fit: &SplineFit,
    system: &dyn PartiallyLinearSystem,
    init: &PartialInit,
    config: &CriterionConfig,
    opts: &PartialOptions,
) -> Result<PartialEstimate> {
    let d1 = system.observed_dim();
    let d2 = system.hidden_dim();
    let p = system.param_dim();
    if u_fit.dim() != d1 {
        return Err(Error::DimensionMismatch(format!("{}-dimensional fit for {d1} observed states", u_fit.dim())));
    }
    if init.eta.len() != p || init.a.shape() != (d2, d2) || init.v0.len() != d2 {
        return Err(Error::DimensionMismatch("initial values do not match the system dimensions".into()));
    }
    if config.q != 2.0 {
        return Err(Error::InvalidConfig("least-squares minimization needs q = 2".into()));
    }
    let grid = fit_grid(u_fit, config)?;
    let all_nodes = grid.nodes().to_vec();
    let samples = Samples::new(u_fit, &grid, &config.weight);
    // sample index -> grid index, since zero-weight nodes are skipped
    let positions: Vec<usize> = samples
        .times
        .iter()
        .map(|t| all_nodes.partition_point(|s| s < t))
        .collect();

    let packing = Packing { init, opts, p, d2 };
    let residual = |phi: &DVector<f64>| -> Option<DVector<f64>> {
        let (eta, a, v0) = packing.unpack(phi);
        let forcing = |t: f64| system.h(&u_fit.value(t), &eta);
        let v = duhamel_solve(&a, &forcing, &v0, &all_nodes, opts.blowup_bound).ok()?;
        let mut r = DVector::zeros(samples.len() * d1);
        for (j, pos) in positions.iter().enumerate() {
            let g = system.g(&samples.x[j], &v[*pos], &eta);
            let s = samples.omega[j].sqrt();
            for i in 0..d1 {
                let val = s * (samples.dx[j][i] - g[i]);
                if !val.is_finite() {
                    return None;
                }
                r[j * d1 + i] = val;
            }
        }
        Some(r)
    };
    let m = samples.len() * d1;
    let jacobian = |phi: &DVector<f64>, _: &DVector<f64>| numeric_residual_jacobian(&residual, phi, m);

    let out = levenberg_marquardt(residual, jacobian, &packing.pack(), &opts.lm)
        .ok_or_else(|| Error::InvalidConfig("criterion is not finite at the starting values".into()))?;
    let (eta, a, v0) = packing.unpack(&out.x);
    Ok(PartialEstimate {
        eta,
        a,
        v0,
        criterion_value: out.cost.sqrt(),
        converged: out.converged,
        iterations: out.iterations,
    })
}
