use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::weight::WeightFunction;
use crate::error::{Error, Result};
use crate::linalg::{merge_nodes, trapezoid_weights};
use crate::ode::VectorFieldModel;
use crate::path::DifferentiablePath;
use crate::spline::Interval;

/// Default number of uniform quadrature nodes.
pub const DEFAULT_QUAD_NODES: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionConfig {
    pub q: f64,
    pub weight: WeightFunction,
    pub quad_nodes: usize,
    /// Replaces the uniform nodes, e.g. by the observation times.
    pub custom_nodes: Option<Vec<f64>>,
}

impl CriterionConfig {
    pub fn new(weight: WeightFunction) -> Self {
        Self { q: 2.0, weight, quad_nodes: DEFAULT_QUAD_NODES, custom_nodes: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q >= 1.0) {
            return Err(Error::InvalidConfig(format!("criterion exponent q = {} is below 1", self.q)));
        }
        if self.custom_nodes.is_none() && self.quad_nodes < 64 {
            return Err(Error::InvalidConfig(format!("{} quadrature nodes, need at least 64", self.quad_nodes)));
        }
        Ok(())
    }

    /// Uniform (or custom) nodes on `interval`, merged with `extra`
    /// breakpoints and the weight's breakpoints.
    pub fn grid(&self, interval: Interval, extra: &[f64]) -> Result<QuadratureGrid> {
        self.validate()?;
        let base = match &self.custom_nodes {
            Some(nodes) => {
                let mut v = nodes.clone();
                v.push(interval.lo);
                v.push(interval.hi);
                v
            }
            None => interval.linspace(self.quad_nodes),
        };
        let mut more = extra.to_vec();
        more.extend_from_slice(self.weight.breakpoints());
        QuadratureGrid::new(merge_nodes(&base, &more, interval.lo, interval.hi))
    }
}

/// Trapezoid nodes and weights on an increasing grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureGrid {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("quadrature grid must be strictly increasing".into()));
        }
        let weights = trapezoid_weights(&nodes);
        Ok(Self { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Path values, derivatives and combined weights `ωⱼ = Δⱼ w(tⱼ)` on the
/// nodes where `ωⱼ > 0`.
#[derive(Debug, Clone)]
pub struct Samples {
    pub times: Vec<f64>,
    pub omega: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub dx: Vec<DVector<f64>>,
}

impl Samples {
    pub fn new(path: &dyn DifferentiablePath, grid: &QuadratureGrid, weight: &WeightFunction) -> Self {
        let mut s = Samples { times: vec![], omega: vec![], x: vec![], dx: vec![] };
        for (t, d) in grid.nodes().iter().zip(grid.weights()) {
            let om = d * weight.value(*t);
            if om > 0.0 {
                s.times.push(*t);
                s.omega.push(om);
                s.x.push(path.value(*t));
                s.dx.push(path.derivative_at(*t));
            }
        }
        s
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `Σⱼ ωⱼ |x̂̇ⱼ - F(tⱼ, x̂ⱼ, θ)|^q` and its per-dimension squared parts;
    /// `None` when `F` is not finite somewhere.
    pub fn residual_integrals(&self, model: &VectorFieldModel, theta: &DVector<f64>, q: f64) -> Option<(f64, Vec<f64>)> {
        let d = model.dim();
        let mut total = 0.0;
        let mut parts = vec![0.0; d];
        for j in 0..self.len() {
            let r = &self.dx[j] - model.eval(self.times[j], &self.x[j], theta);
            if !r.iter().all(|v| v.is_finite()) {
                return None;
            }
            let n2 = r.norm_squared();
            total += self.omega[j] * if q == 2.0 { n2 } else { n2.sqrt().powf(q) };
            for i in 0..d {
                parts[i] += self.omega[j] * r[i] * r[i];
            }
        }
        Some((total, parts))
    }

    /// Stacked residual `√ωⱼ (x̂̇ⱼ - F(tⱼ, x̂ⱼ, θ))`, `None` if not finite.
    pub fn stacked_residual(&self, model: &VectorFieldModel, theta: &DVector<f64>) -> Option<DVector<f64>> {
        let d = model.dim();
        let mut r = DVector::zeros(self.len() * d);
        for j in 0..self.len() {
            let s = self.omega[j].sqrt();
            let f = model.eval(self.times[j], &self.x[j], theta);
            for i in 0..d {
                let v = s * (self.dx[j][i] - f[i]);
                if !v.is_finite() {
                    return None;
                }
                r[j * d + i] = v;
            }
        }
        Some(r)
    }
}

/// `R^q(θ) = (∫ |x̂̇ - F(t, x̂, θ)|^q w dt)^{1/q}` on a prepared sample set;
/// `+∞` if `F` is not finite along the path.
pub fn criterion_on_samples(samples: &Samples, model: &VectorFieldModel, theta: &DVector<f64>, q: f64) -> f64 {
    match samples.residual_integrals(model, theta, q) {
        Some((total, _)) => total.powf(1.0 / q),
        None => f64::INFINITY,
    }
}
