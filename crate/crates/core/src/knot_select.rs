//! Knot selection for the first-step regression spline: uniform candidate
//! grids, GCV scoring and the ElimAdd elimination/addition search.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::PivotedQr;
use crate::spline::{BSplineBasis, Interval};

/// Sample sizes with a tabulated default candidate count.
const KNOT_TABLE: [(usize, usize); 7] =
    [(20, 15), (30, 15), (50, 20), (100, 30), (200, 30), (500, 30), (1000, 30)];

/// Default number of candidate knots for `n` observations.
///
/// Sample sizes off the table use the entry of the nearest tabulated `n`,
/// ties going to the smaller one.
pub fn default_knot_count(n: usize) -> Result<usize> {
    if n < 10 {
        return Err(Error::TooFewObservations { got: n, min: 10 });
    }
    let mut best = KNOT_TABLE[0];
    for &(m, k) in &KNOT_TABLE[1..] {
        if m.abs_diff(n) < best.0.abs_diff(n) {
            best = (m, k);
        }
    }
    Ok(best.1)
}

/// `count` evenly spaced interior knots `lo + j (hi - lo)/(count + 1)`.
pub fn uniform_knots(interval: Interval, count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::InvalidKnots("candidate count must be at least 1".into()));
    }
    let h = interval.length() / (count + 1) as f64;
    Ok((1..=count).map(|j| interval.lo + j as f64 * h).collect())
}

/// Effective number of parameters charged for `m` interior knots.
pub fn effective_params(m: usize) -> usize {
    3 * m + 1
}

/// Per-column residual sums of squares of the least-squares spline fit.
///
/// Values below `RSS_FLOOR · ‖y‖²` are rounding noise of an exact fit and
/// are returned as zero, so exact fits compare equal.
fn residual_sums(interval: Interval, times: &[f64], y: &DMatrix<f64>, knots: &[f64], order: usize) -> Result<Vec<f64>> {
    if y.nrows() != times.len() {
        return Err(Error::DimensionMismatch(format!("{} rows for {} times", y.nrows(), times.len())));
    }
    let basis = BSplineBasis::from_parts(interval, knots.to_vec(), order)?;
    let qr = PivotedQr::new(basis.design_matrix(times)?);
    Ok(qr
        .residual_ss(y)
        .into_iter()
        .zip(y.column_iter())
        .map(|(rss, col)| if rss <= RSS_FLOOR * col.norm_squared() { 0.0 } else { rss })
        .collect())
}

const RSS_FLOOR: f64 = 1e-24;

/// GCV score `(RSS/n) / (1 - d/n)²`, summed over the columns of `y`
/// (`n × d`), with `d = 3m + 1`.
pub fn gcv_score(
    interval: Interval,
    times: &[f64],
    y: &DMatrix<f64>,
    knots: &[f64],
    order: usize,
) -> Result<f64> {
    let n = times.len();
    let params = effective_params(knots.len());
    if params >= n {
        return Err(Error::DegreesOfFreedom { params, n });
    }
    let nf = n as f64;
    let denom = (1.0 - params as f64 / nf).powi(2);
    Ok(residual_sums(interval, times, y, knots, order)?.iter().map(|rss| rss / nf / denom).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    FixedUniform,
    ElimAdd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnotPolicy {
    /// Candidate count; `None` means [`default_knot_count`].
    #[serde(default)]
    pub candidate_count: Option<usize>,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_selection")]
    pub selection: Selection,
    #[serde(default = "default_sweeps")]
    pub max_sweeps: usize,
}

fn default_order() -> usize {
    4
}

fn default_selection() -> Selection {
    Selection::ElimAdd
}

fn default_sweeps() -> usize {
    10
}

impl Default for KnotPolicy {
    fn default() -> Self {
        Self {
            candidate_count: None,
            order: default_order(),
            selection: default_selection(),
            max_sweeps: default_sweeps(),
        }
    }
}

impl KnotPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.candidate_count == Some(0) {
            return Err(Error::InvalidConfig("candidate_count must be at least 1".into()));
        }
        if self.order < 2 {
            return Err(Error::InvalidConfig("spline order must be at least 2".into()));
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidConfig("max_sweeps must be at least 1".into()));
        }
        Ok(())
    }

    /// Chooses interior knots for the observations `y` (`n × d`).
    pub fn select(&self, interval: Interval, times: &[f64], y: &DMatrix<f64>) -> Result<SelectionResult> {
        self.validate()?;
        let count = match self.candidate_count {
            Some(c) => c,
            None => default_knot_count(times.len())?,
        };
        match self.selection {
            Selection::FixedUniform => {
                let knots = uniform_knots(interval, count)?;
                let gcv = gcv_score(interval, times, y, &knots, self.order)?;
                Ok(SelectionResult {
                    effective_params: effective_params(knots.len()),
                    candidate_grid: knots.clone(),
                    selected_knots: knots,
                    gcv_value: gcv,
                })
            }
            Selection::ElimAdd => elim_add(interval, times, y, count, self.order, self.max_sweeps),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    pub candidate_grid: Vec<f64>,
    pub selected_knots: Vec<f64>,
    pub gcv_value: f64,
    pub effective_params: usize,
}

struct Search<'a> {
    interval: Interval,
    times: &'a [f64],
    y: &'a DMatrix<f64>,
    grid: Vec<f64>,
    order: usize,
}

/// Search state score. Feasible subsets (`3m + 1 < n`) are ranked by GCV
/// and always beat infeasible ones, which are ranked by plain `RSS/n`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
struct Score {
    infeasible: bool,
    value: f64,
}

impl Search<'_> {
    fn knots(&self, mask: &[bool]) -> Vec<f64> {
        self.grid.iter().zip(mask).filter(|(_, on)| **on).map(|(k, _)| *k).collect()
    }

    fn score(&self, mask: &[bool]) -> Result<Score> {
        let knots = self.knots(mask);
        match gcv_score(self.interval, self.times, self.y, &knots, self.order) {
            Ok(value) => Ok(Score { infeasible: false, value }),
            Err(Error::DegreesOfFreedom { .. }) => {
                let rss = residual_sums(self.interval, self.times, self.y, &knots, self.order)?;
                let value = rss.iter().sum::<f64>() / self.times.len() as f64;
                Ok(Score { infeasible: true, value })
            }
            Err(e) => Err(e),
        }
    }

    /// Best single toggle among the knots whose flag equals `present`.
    /// Returns `(index, score)`, ties going to the smaller index.
    fn best_toggle(&self, mask: &[bool], present: bool) -> Result<Option<(usize, Score)>> {
        let candidates: Vec<usize> = (0..mask.len()).filter(|&j| mask[j] == present).collect();
        let scores: Vec<Result<Score>> = candidates
            .par_iter()
            .map(|&j| {
                let mut m = mask.to_vec();
                m[j] = !present;
                self.score(&m)
            })
            .collect();
        let mut best: Option<(usize, Score)> = None;
        for (&j, s) in candidates.iter().zip(scores) {
            let s = s?;
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((j, s));
            }
        }
        Ok(best)
    }
}

/// ElimAdd search over the uniform grid of `count` candidates.
///
/// Each sweep removes knots one at a time while a removal lowers GCV, then
/// re-adds removed knots while an addition lowers it. Sweeps stop when one
/// changes nothing or after `max_sweeps`. The best subset visited is
/// returned.
///
/// A removal that leaves GCV unchanged is taken (fewer knots for the same
/// score); an addition must strictly lower it. While the current subset has
/// more parameters than observations allow, removals are forced, picking
/// the one with the smallest residual sum of squares.
pub fn elim_add(
    interval: Interval,
    times: &[f64],
    y: &DMatrix<f64>,
    count: usize,
    order: usize,
    max_sweeps: usize,
) -> Result<SelectionResult> {
    if y.nrows() != times.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} rows for {} times",
            y.nrows(),
            times.len()
        )));
    }
    let search = Search { interval, times, y, grid: uniform_knots(interval, count)?, order };
    let mut mask = vec![true; count];
    let mut current = search.score(&mask)?;

    for _ in 0..max_sweeps.max(1) {
        let mut changed = false;
        while let Some((j, s)) = search.best_toggle(&mask, true)? {
            if current.infeasible || s <= current {
                mask[j] = false;
                current = s;
                changed = true;
            } else {
                break;
            }
        }
        while let Some((j, s)) = search.best_toggle(&mask, false)? {
            if s < current {
                mask[j] = true;
                current = s;
                changed = true;
            } else {
                break;
            }
        }
        if !changed {
            break;
        }
    }

    if current.infeasible {
        return Err(Error::DegreesOfFreedom { params: effective_params(0), n: times.len() });
    }
    let selected = search.knots(&mask);
    Ok(SelectionResult {
        effective_params: effective_params(selected.len()),
        candidate_grid: search.grid.clone(),
        selected_knots: selected,
        gcv_value: current.value,
    })
}
