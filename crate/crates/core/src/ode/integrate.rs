use std::io::{self, Write};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::model::VectorField;
use crate::error::{Error, Result};
use crate::path::{DifferentiablePath, Path};
use crate::spline::Interval;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepControl {
    /// Max-norm change allowed when the substep count is doubled.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// A state norm above this is reported as finite-time blow-up.
    #[serde(default = "default_blowup")]
    pub blowup_bound: f64,
    #[serde(default = "default_max_substeps")]
    pub max_substeps: usize,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_blowup() -> f64 {
    1e8
}

fn default_max_substeps() -> usize {
    1 << 14
}

impl Default for StepControl {
    fn default() -> Self {
        Self { tol: default_tol(), blowup_bound: default_blowup(), max_substeps: default_max_substeps() }
    }
}

/// States of an ODE solution on an increasing time grid, with the vector
/// field values at the same times for Hermite interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<DVector<f64>>,
    slopes: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<DVector<f64>>, slopes: Vec<DVector<f64>>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::TooFewObservations { got: times.len(), min: 2 });
        }
        if states.len() != times.len() || slopes.len() != times.len() {
            return Err(Error::DimensionMismatch("trajectory columns differ in length".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("trajectory times must be strictly increasing".into()));
        }
        Ok(Self { times, states, slopes })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn slopes(&self) -> &[DVector<f64>] {
        &self.slopes
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("non-empty")
    }

    /// Cubic Hermite derivative at `t`.
    pub fn derivative(&self, t: f64) -> DVector<f64> {
        let (j, s, h) = self.locate(t);
        let (y0, y1, m0, m1) = (&self.states[j], &self.states[j + 1], &self.slopes[j], &self.slopes[j + 1]);
        let d00 = 6.0 * s * s - 6.0 * s;
        let d10 = 3.0 * s * s - 4.0 * s + 1.0;
        let d01 = -d00;
        let d11 = 3.0 * s * s - 2.0 * s;
        (y0 * d00 + y1 * d01) / h + m0 * d10 + m1 * d11
    }

    fn locate(&self, t: f64) -> (usize, f64, f64) {
        let n = self.times.len();
        let t = t.clamp(self.times[0], self.times[n - 1]);
        let j = match self.times.partition_point(|x| *x <= t) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let h = self.times[j + 1] - self.times[j];
        (j, (t - self.times[j]) / h, h)
    }

    /// CSV with header `t,x1,…,xd` and 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let d = self.state_dim();
        let header: Vec<String> =
            std::iter::once("t".to_string()).chain((1..=d).map(|i| format!("x{i}"))).collect();
        writeln!(out, "{}", header.join(","))?;
        for (t, x) in self.times.iter().zip(&self.states) {
            write!(out, "{t:.16e}")?;
            for v in x.iter() {
                write!(out, ",{v:.16e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

impl DifferentiablePath for Trajectory {
    fn derivative_at(&self, t: f64) -> DVector<f64> {
        self.derivative(t)
    }
}

impl Path for Trajectory {
    fn dim(&self) -> usize {
        self.state_dim()
    }

    fn interval(&self) -> Interval {
        Interval::new(self.times[0], *self.times.last().expect("non-empty")).expect("increasing times")
    }

    /// Cubic Hermite interpolation through the stored states and slopes.
    fn value(&self, t: f64) -> DVector<f64> {
        let (j, s, h) = self.locate(t);
        let (y0, y1, m0, m1) = (&self.states[j], &self.states[j + 1], &self.slopes[j], &self.slopes[j + 1]);
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        y0 * h00 + m0 * (h10 * h) + y1 * h01 + m1 * (h11 * h)
    }
}

fn rk4_step(field: &dyn VectorField, theta: &DVector<f64>, t: f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let k1 = field.eval(t, x, theta);
    let k2 = field.eval(t + 0.5 * h, &(x + &k1 * (0.5 * h)), theta);
    let k3 = field.eval(t + 0.5 * h, &(x + &k2 * (0.5 * h)), theta);
    let k4 = field.eval(t + h, &(x + &k3 * h), theta);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// RK4 over the whole grid with `substeps` equal steps per output interval.
/// On blow-up returns the time at which the bound was crossed.
fn sweep(
    field: &dyn VectorField,
    theta: &DVector<f64>,
    x0: &DVector<f64>,
    grid: &[f64],
    substeps: usize,
    bound: f64,
) -> std::result::Result<Vec<DVector<f64>>, f64> {
    let mut out = Vec::with_capacity(grid.len());
    let mut x = x0.clone();
    out.push(x.clone());
    for w in grid.windows(2) {
        let h = (w[1] - w[0]) / substeps as f64;
        for s in 0..substeps {
            let t = w[0] + s as f64 * h;
            x = rk4_step(field, theta, t, &x, h);
            if !x.iter().all(|v| v.is_finite()) || x.amax() > bound {
                return Err(t + h);
            }
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// Integrates `ẋ = F(t, x, θ)` from `x(grid[0]) = x0` with classic RK4.
///
/// The substep count per output interval is doubled until doubling again
/// changes no output state by more than `control.tol` in max norm.
pub fn integrate(
    field: &dyn VectorField,
    theta: &DVector<f64>,
    x0: &DVector<f64>,
    grid: &[f64],
    control: &StepControl,
) -> Result<Trajectory> {
    if x0.len() != field.dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has {} entries for a {}-dimensional field",
            x0.len(),
            field.dim()
        )));
    }
    if theta.len() != field.param_dim() {
        return Err(Error::DimensionMismatch(format!(
            "theta has {} entries for {} parameters",
            theta.len(),
            field.param_dim()
        )));
    }
    if grid.len() < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig("time grid must be strictly increasing with at least 2 points".into()));
    }

    let mut substeps = 1;
    let mut coarse = sweep(field, theta, x0, grid, substeps, control.blowup_bound);
    loop {
        if 2 * substeps > control.max_substeps {
            return match coarse {
                Err(time) => Err(Error::Blowup { time }),
                Ok(_) => Err(Error::IntegrationTolerance { tol: control.tol, substeps }),
            };
        }
        let fine = sweep(field, theta, x0, grid, 2 * substeps, control.blowup_bound);
        match (&coarse, &fine) {
            (Ok(c), Ok(f)) => {
                let change = c.iter().zip(f).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
                if change < control.tol {
                    let states = fine.expect("checked");
                    let slopes = grid.iter().zip(&states).map(|(t, x)| field.eval(*t, x, theta)).collect();
                    return Trajectory::new(grid.to_vec(), states, slopes);
                }
            }
            // two consecutive refinements blowing up at nearly the same
            // time means the solution itself escapes
            (Err(tc), Err(tf)) if substeps >= 8 && (tc - tf).abs() <= 0.05 * (grid[grid.len() - 1] - grid[0]) => {
                return Err(Error::Blowup { time: *tf });
            }
            _ => {}
        }
        substeps *= 2;
        coarse = fine;
    }
}
