use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::WeightSpec;
use crate::knot_select::KnotPolicy;
use crate::ode::{CoupledField, Glv, Oscillator, ParameterMask, VectorField, VectorFieldModel};
use crate::spline::Interval;

/// Models that can be named in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Generalized Lotka–Volterra, `θ = (a1, a2, a3, b1, b2, b3)`.
    Glv,
    /// GLV with `a1 = b2 = 0` always fixed.
    ClassicLv,
    /// Oscillator `u̇ = v`, `v̇ = -η u + a v` with `θ = (η, a)`; only `u`
    /// is observed.
    CustomLinearPartial,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Glv => "glv",
            Self::ClassicLv => "classic-lv",
            Self::CustomLinearPartial => "custom-linear-partial",
        }
    }

    pub fn field(self) -> Arc<dyn VectorField> {
        match self {
            Self::Glv | Self::ClassicLv => Arc::new(Glv),
            Self::CustomLinearPartial => Arc::new(CoupledField { system: Arc::new(Oscillator) }),
        }
    }

    /// Indices that are fixed whatever the configuration says.
    pub fn always_fixed(self) -> &'static [usize] {
        match self {
            Self::ClassicLv => &[0, 4],
            _ => &[],
        }
    }

    /// Number of leading state coordinates that are observed.
    pub fn observed_dim(self) -> usize {
        match self {
            Self::CustomLinearPartial => 1,
            _ => self.field().dim(),
        }
    }

    /// Model with the given full parameter vector's entries fixed at
    /// `fixed` (plus [`Self::always_fixed`]).
    pub fn model(self, theta: &[f64], fixed: &[usize]) -> Result<VectorFieldModel> {
        let field = self.field();
        if theta.len() != field.param_dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} takes {} parameters, got {}",
                self.name(),
                field.param_dim(),
                theta.len()
            )));
        }
        let mut mask = ParameterMask::all_free(theta.len());
        for &i in fixed.iter().chain(self.always_fixed()) {
            if i >= theta.len() {
                return Err(Error::InvalidConfig(format!("fixed index {i} is out of range")));
            }
            mask = mask.fix(i, theta[i]);
        }
        VectorFieldModel::new(field, mask)
    }
}

fn default_t_end() -> f64 {
    20.0
}

fn default_sigma() -> f64 {
    0.2
}

fn default_weights() -> Vec<WeightSpec> {
    vec![WeightSpec::boundary(), WeightSpec::Uniform]
}

fn default_replications() -> usize {
    1000
}

/// One Monte Carlo design: a true model, a sampling scheme and the
/// estimators to compare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    /// Full true parameter vector, fixed entries included.
    pub theta_star: Vec<f64>,
    /// Indices of `theta_star` that are known and not estimated.
    #[serde(default)]
    pub fixed: Vec<usize>,
    pub x0: Vec<f64>,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    pub n: usize,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub knot_policy: KnotPolicy,
    #[serde(default = "default_weights")]
    pub weights: Vec<WeightSpec>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Defaults for everything but the model, truth and seed.
    pub fn new(model: ModelKind, theta_star: Vec<f64>, fixed: Vec<usize>, x0: Vec<f64>, n: usize, seed: u64) -> Self {
        Self {
            model,
            theta_star,
            fixed,
            x0,
            t_end: default_t_end(),
            n,
            sigma: default_sigma(),
            knot_policy: KnotPolicy::default(),
            weights: default_weights(),
            replications: default_replications(),
            seed,
        }
    }

    /// Classic LV with `θ = (-1.5, 1, 2, -1.5)` from `(1, 2)`.
    pub fn case1(n: usize, seed: u64) -> Self {
        Self::new(ModelKind::ClassicLv, vec![0.0, -1.5, 1.0, 2.0, 0.0, -1.5], vec![], vec![1.0, 2.0], n, seed)
    }

    /// GLV with `a1 = 0`, `b2 = 1` fixed and `θ = (-1.5, 1, 1.5, -1.5)` for
    /// the rest, from `(4, 2)`.
    pub fn case2(n: usize, seed: u64) -> Self {
        Self::new(ModelKind::Glv, vec![0.0, -1.5, 1.0, 1.5, 1.0, -1.5], vec![0, 4], vec![4.0, 2.0], n, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::TooFewObservations { got: self.n, min: 10 });
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidConfig(format!("sigma = {} must be finite and non-negative", self.sigma)));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be at least 1".into()));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::InvalidConfig(format!("t_end = {} must be positive", self.t_end)));
        }
        if self.weights.is_empty() {
            return Err(Error::InvalidConfig("at least one weight variant is needed".into()));
        }
        if self.theta_star.iter().chain(&self.x0).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("theta_star and x0 must be finite".into()));
        }
        let field = self.model.field();
        if self.x0.len() != field.dim() {
            return Err(Error::DimensionMismatch(format!(
                "x0 has {} entries for a {}-dimensional model",
                self.x0.len(),
                field.dim()
            )));
        }
        self.knot_policy.validate()?;
        let iv = self.interval()?;
        for w in &self.weights {
            w.build(iv)?;
        }
        self.estimation_model().map(|_| ())
    }

    pub fn interval(&self) -> Result<Interval> {
        Interval::new(0.0, self.t_end)
    }

    /// `tⱼ = j·T/n` for `j = 0..n`.
    pub fn times(&self) -> Vec<f64> {
        (0..self.n).map(|j| j as f64 * self.t_end / self.n as f64).collect()
    }

    pub fn estimation_model(&self) -> Result<VectorFieldModel> {
        self.model.model(&self.theta_star, &self.fixed)
    }

    pub fn theta_star(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.theta_star)
    }

    pub fn theta_star_free(&self) -> Result<DVector<f64>> {
        Ok(self.estimation_model()?.mask().restrict(&self.theta_star()))
    }
}
