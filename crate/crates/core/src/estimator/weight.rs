use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spline::Interval;

/// Continuous, nonnegative, piecewise-linear weight `w(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFunction {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl WeightFunction {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 || breakpoints.len() != values.len() {
            return Err(Error::InvalidConfig(
                "a weight needs at least two breakpoints and one value per breakpoint".into(),
            ));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig("weight breakpoints must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidConfig("weight values must be finite and nonnegative".into()));
        }
        Ok(Self { breakpoints, values })
    }

    /// `w ≡ 1`.
    pub fn uniform(interval: Interval) -> Self {
        Self { breakpoints: vec![interval.lo, interval.hi], values: vec![1.0, 1.0] }
    }

    /// Zero at both ends, linear ramps of length `ramp_fraction · |I|`, and
    /// 1 in between.
    pub fn boundary_vanishing(interval: Interval, ramp_fraction: f64) -> Result<Self> {
        if !(ramp_fraction > 0.0 && ramp_fraction < 0.5) {
            return Err(Error::InvalidConfig(format!("ramp fraction {ramp_fraction} is not in (0, 0.5)")));
        }
        let r = ramp_fraction * interval.length();
        Ok(Self {
            breakpoints: vec![interval.lo, interval.lo + r, interval.hi - r, interval.hi],
            values: vec![0.0, 1.0, 1.0, 0.0],
        })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lo(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn hi(&self) -> f64 {
        *self.breakpoints.last().expect("at least two breakpoints")
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.breakpoints.len();
        self.breakpoints.partition_point(|b| *b <= t).clamp(1, n - 1) - 1
    }

    /// `w(t)`; constant extension outside the breakpoints.
    pub fn value(&self, t: f64) -> f64 {
        let t = t.clamp(self.lo(), self.hi());
        let j = self.segment(t);
        let (t0, t1) = (self.breakpoints[j], self.breakpoints[j + 1]);
        let s = (t - t0) / (t1 - t0);
        self.values[j] * (1.0 - s) + self.values[j + 1] * s
    }

    /// Right derivative of `w`; the left one at the last breakpoint.
    pub fn derivative(&self, t: f64) -> f64 {
        if t < self.lo() || t > self.hi() {
            return 0.0;
        }
        let j = self.segment(t);
        (self.values[j + 1] - self.values[j]) / (self.breakpoints[j + 1] - self.breakpoints[j])
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.breakpoints.clone(), self.values.iter().map(|v| v * c).collect())
    }

    pub fn vanishes_at_ends(&self) -> bool {
        self.values[0] == 0.0 && *self.values.last().expect("non-empty") == 0.0
    }
}

/// Weight description in configuration files, resolved against the data
/// interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightSpec {
    Uniform,
    Boundary {
        #[serde(default = "default_ramp")]
        ramp_fraction: f64,
    },
    PiecewiseLinear {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
}

fn default_ramp() -> f64 {
    0.05
}

impl WeightSpec {
    pub fn boundary() -> Self {
        Self::Boundary { ramp_fraction: default_ramp() }
    }

    pub fn build(&self, interval: Interval) -> Result<WeightFunction> {
        match self {
            Self::Uniform => Ok(WeightFunction::uniform(interval)),
            Self::Boundary { ramp_fraction } => WeightFunction::boundary_vanishing(interval, *ramp_fraction),
            Self::PiecewiseLinear { breakpoints, values } => WeightFunction::new(breakpoints.clone(), values.clone()),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::Boundary { .. } => "boundary",
            Self::PiecewiseLinear { .. } => "custom",
        }
    }
}
