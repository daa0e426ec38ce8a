use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed time interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidKnots(format!("interval [{lo}, {hi}] is empty")));
        }
        Ok(Self { lo, hi })
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo && t <= self.hi
    }

    pub(crate) fn check(&self, t: f64) -> Result<()> {
        if self.contains(t) {
            Ok(())
        } else {
            Err(Error::OutOfDomain { t, lo: self.lo, hi: self.hi })
        }
    }

    /// `count` evenly spaced points from `lo` to `hi` inclusive.
    pub fn linspace(&self, count: usize) -> Vec<f64> {
        match count {
            0 => Vec::new(),
            1 => vec![self.lo],
            _ => {
                let h = self.length() / (count - 1) as f64;
                let mut v: Vec<f64> = (0..count).map(|j| self.lo + j as f64 * h).collect();
                v[count - 1] = self.hi;
                v
            }
        }
    }
}

/// Interior knots of a spline space of order `k` on an interval.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotSequence {
    interval: Interval,
    interior: Vec<f64>,
    order: usize,
}

impl KnotSequence {
    pub fn new(interval: Interval, interior: Vec<f64>, order: usize) -> Result<Self> {
        if order < 1 {
            return Err(Error::InvalidKnots("order must be at least 1".into()));
        }
        for (j, &xi) in interior.iter().enumerate() {
            if !(xi > interval.lo && xi < interval.hi) {
                return Err(Error::InvalidKnots(format!(
                    "knot {xi} is not strictly inside [{}, {}]",
                    interval.lo, interval.hi
                )));
            }
            if j > 0 && xi <= interior[j - 1] {
                return Err(Error::InvalidKnots(format!(
                    "knots must be strictly increasing ({} then {xi})",
                    interior[j - 1]
                )));
            }
        }
        Ok(Self { interval, interior, order })
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn interior(&self) -> &[f64] {
        &self.interior
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of interior knots `L`.
    pub fn len(&self) -> usize {
        self.interior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interior.is_empty()
    }

    /// Largest spacing between consecutive breakpoints, boundaries included.
    pub fn mesh(&self) -> f64 {
        let mut prev = self.interval.lo;
        let mut mesh: f64 = 0.0;
        for &xi in self.interior.iter().chain(std::iter::once(&self.interval.hi)) {
            mesh = mesh.max(xi - prev);
            prev = xi;
        }
        mesh
    }

    /// Breakpoints `lo, ξ₁, …, ξ_L, hi`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = Vec::with_capacity(self.interior.len() + 2);
        b.push(self.interval.lo);
        b.extend_from_slice(&self.interior);
        b.push(self.interval.hi);
        b
    }

    /// Augmented sequence with `k`-fold boundary knots, length `L + 2k`.
    pub fn augmented(&self) -> Vec<f64> {
        let k = self.order;
        let mut tau = Vec::with_capacity(self.interior.len() + 2 * k);
        tau.extend(std::iter::repeat_n(self.interval.lo, k));
        tau.extend_from_slice(&self.interior);
        tau.extend(std::iter::repeat_n(self.interval.hi, k));
        tau
    }
}

/// Validating form of [`KnotSequence::augmented`] for raw inputs.
pub fn augment_knots(interval: Interval, interior: &[f64], order: usize) -> Result<Vec<f64>> {
    Ok(KnotSequence::new(interval, interior.to_vec(), order)?.augmented())
}
