use nalgebra::DVector;

use crate::spline::Interval;

/// A vector-valued curve that can be evaluated anywhere on its interval.
///
/// Implemented by fitted splines and by interpolated reference trajectories,
/// so criteria and functionals can be evaluated on either.
pub trait Path: Sync {
    fn dim(&self) -> usize;

    fn interval(&self) -> Interval;

    /// Curve value at `t`; `t` is clamped to the interval.
    fn value(&self, t: f64) -> DVector<f64>;
}

/// Any closure `t ↦ x(t)` viewed as a path on a fixed interval.
pub struct FnPath<F> {
    interval: Interval,
    dim: usize,
    f: F,
}

impl<F> FnPath<F>
where
    F: Fn(f64) -> DVector<f64> + Sync,
{
    pub fn new(interval: Interval, dim: usize, f: F) -> Self {
        Self { interval, dim, f }
    }
}

impl<F> Path for FnPath<F>
where
    F: Fn(f64) -> DVector<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn interval(&self) -> Interval {
        self.interval
    }

    fn value(&self, t: f64) -> DVector<f64> {
        (self.f)(t.clamp(self.interval.lo, self.interval.hi))
    }
}

/// A path with a first derivative.
pub trait DifferentiablePath: Path {
    fn derivative_at(&self, t: f64) -> DVector<f64>;
}

/// Pointwise difference `a(t) - b(t)` of two paths on the same interval.
pub struct DifferencePath<'a> {
    pub a: &'a dyn Path,
    pub b: &'a dyn Path,
}

impl Path for DifferencePath<'_> {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn interval(&self) -> Interval {
        self.a.interval()
    }

    fn value(&self, t: f64) -> DVector<f64> {
        self.a.value(t) - self.b.value(t)
    }
}
