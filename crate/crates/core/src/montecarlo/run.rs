use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::config::{ExperimentConfig, ModelKind};
use super::rng::{substream, Gaussian, StreamPurpose};
use super::summary::{summarize, SummaryTable};
use crate::error::{Error, Result};
use crate::estimator::{criterion, estimate, CriterionConfig, TwoStepEstimate, WeightFunction};
use crate::linalg::trapezoid_weights;
use crate::ode::{integrate, StepControl, Trajectory, VectorFieldModel};
use crate::path::Path;
use crate::spline::{fit_least_squares, BSplineBasis, Interval, SplineFit};

/// Tolerance for reference trajectories.
pub const TRUTH_TOL: f64 = 1e-10;

/// Intervals of the fine grid carrying the reference trajectory.
pub const TRUTH_GRID_INTERVALS: usize = 20_000;

#[derive(Clone, PartialEq, Eq, Hash)]
struct TruthKey {
    model: ModelKind,
    theta: Vec<u64>,
    x0: Vec<u64>,
    t_end: u64,
}

fn truth_cache() -> &'static Mutex<HashMap<TruthKey, Arc<Trajectory>>> {
    static CACHE: OnceLock<Mutex<HashMap<TruthKey, Arc<Trajectory>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Reference solution on a uniform fine grid over `[0, t_end]`, computed
/// once per `(model, θ*, x₀, t_end)` and shared afterwards.
pub fn reference_trajectory(config: &ExperimentConfig) -> Result<Arc<Trajectory>> {
    let key = TruthKey {
        model: config.model,
        theta: config.theta_star.iter().map(|v| v.to_bits()).collect(),
        x0: config.x0.iter().map(|v| v.to_bits()).collect(),
        t_end: config.t_end.to_bits(),
    };
    if let Some(tr) = truth_cache().lock().expect("cache lock").get(&key) {
        return Ok(tr.clone());
    }
    let grid = config.interval()?.linspace(TRUTH_GRID_INTERVALS + 1);
    let control = StepControl { tol: TRUTH_TOL, ..StepControl::default() };
    let field = config.model.field();
    let tr = Arc::new(integrate(
        field.as_ref(),
        &config.theta_star(),
        &DVector::from_column_slice(&config.x0),
        &grid,
        &control,
    )?);
    truth_cache().lock().expect("cache lock").insert(key, tr.clone());
    Ok(tr)
}

/// Observation times and noisy states (`n × d`, all state coordinates).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub times: Vec<f64>,
    pub observations: DMatrix<f64>,
}

/// One estimator variant of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantFit {
    pub estimate: TwoStepEstimate,
    pub theta_free: DVector<f64>,
    /// Criterion at the true parameter on the same spline fit.
    pub criterion_at_truth: f64,
}

impl VariantFit {
    pub fn usable(&self) -> bool {
        self.estimate.converged && self.theta_free.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub rep_index: usize,
    /// Interior knots of the shared spline fit; empty if the first step failed.
    pub knots: Vec<f64>,
    /// `(∫ (x̂ᵢ - x*ᵢ)² dt)^{1/2}` per state dimension.
    pub curve_rmse: Option<Vec<f64>>,
    /// One entry per weight variant, in configuration order.
    pub variants: Vec<std::result::Result<VariantFit, Error>>,
}

/// A validated configuration with its reference trajectory and weights.
pub struct Experiment {
    config: ExperimentConfig,
    model: VectorFieldModel,
    interval: Interval,
    times: Vec<f64>,
    truth: Arc<Trajectory>,
    truth_at_times: DMatrix<f64>,
    weights: Vec<WeightFunction>,
}

impl Experiment {
    /// Validates `config` and computes (or reuses) the reference trajectory.
    /// [`Error::Blowup`] here means `theta_star` and `x0` do not define a
    /// solution on the whole interval.
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let model = config.estimation_model()?;
        let interval = config.interval()?;
        let truth = reference_trajectory(&config)?;
        let times = config.times();
        let d = model.dim();
        let mut truth_at_times = DMatrix::zeros(times.len(), d);
        for (j, &t) in times.iter().enumerate() {
            truth_at_times.row_mut(j).copy_from(&truth.value(t).transpose());
        }
        let weights = config.weights.iter().map(|w| w.build(interval)).collect::<Result<_>>()?;
        Ok(Self { config, model, interval, times, truth, truth_at_times, weights })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn model(&self) -> &VectorFieldModel {
        &self.model
    }

    pub fn truth(&self) -> &Trajectory {
        &self.truth
    }

    pub fn truth_at_times(&self) -> &DMatrix<f64> {
        &self.truth_at_times
    }

    /// Noisy data for replication `rep`. The noise comes from the stream
    /// keyed by `(seed, rep)`, drawn row by row.
    pub fn simulate(&self, rep: usize) -> Dataset {
        let mut g = Gaussian::new(substream(self.config.seed, rep as u64, StreamPurpose::Noise));
        let (n, d) = self.truth_at_times.shape();
        let mut y = self.truth_at_times.clone();
        if self.config.sigma > 0.0 {
            for j in 0..n {
                for i in 0..d {
                    y[(j, i)] += self.config.sigma * g.sample();
                }
            }
        }
        Dataset { times: self.times.clone(), observations: y }
    }

    /// Spline fit shared by every weight variant of a replication.
    pub fn first_step(&self, data: &Dataset) -> Result<SplineFit> {
        let policy = &self.config.knot_policy;
        let sel = policy.select(self.interval, &data.times, &data.observations)?;
        let basis = BSplineBasis::from_parts(self.interval, sel.selected_knots, policy.order)?;
        fit_least_squares(&basis, &data.times, &data.observations)
    }

    /// `(∫ (x̂ᵢ - x*ᵢ)² dt)^{1/2}` by the trapezoid rule on the reference grid.
    pub fn curve_rmse(&self, path: &dyn Path) -> Vec<f64> {
        let nodes = self.truth.times();
        let w = trapezoid_weights(nodes);
        let mut acc = vec![0.0; self.model.dim()];
        for (k, (&t, x)) in nodes.iter().zip(self.truth.states()).enumerate() {
            let e = path.value(t) - x;
            for (a, ei) in acc.iter_mut().zip(e.iter()) {
                *a += w[k] * ei * ei;
            }
        }
        acc.into_iter().map(f64::sqrt).collect()
    }

    pub fn run_replication(&self, rep: usize) -> Replication {
        let data = self.simulate(rep);
        let fit = match self.first_step(&data) {
            Ok(f) => f,
            Err(e) => {
                return Replication {
                    rep_index: rep,
                    knots: Vec::new(),
                    curve_rmse: None,
                    variants: vec![Err(e); self.weights.len()],
                }
            }
        };
        let theta_star = self.config.theta_star();
        let variants = self
            .weights
            .iter()
            .map(|w| {
                let cfg = CriterionConfig::new(w.clone());
                let est = estimate(&fit, &self.model, &cfg, Some(&theta_star))?;
                Ok(VariantFit {
                    theta_free: est.theta_free(&self.model),
                    criterion_at_truth: criterion(&fit, &self.model, &theta_star, &cfg)?,
                    estimate: est,
                })
            })
            .collect();
        Replication {
            rep_index: rep,
            knots: fit.basis().knots().interior().to_vec(),
            curve_rmse: Some(self.curve_rmse(&fit)),
            variants,
        }
    }

    /// All replications, in index order. They run in parallel on the
    /// current rayon pool; the output does not depend on the pool size.
    pub fn run_all(&self) -> Result<Vec<Replication>> {
        if self.config.model == ModelKind::CustomLinearPartial {
            return Err(Error::InvalidConfig(
                "Monte Carlo runs need a fully observed model (glv or classic-lv)".into(),
            ));
        }
        Ok((0..self.config.replications).into_par_iter().map(|r| self.run_replication(r)).collect())
    }

    pub fn run(&self) -> Result<(SummaryTable, Vec<Replication>)> {
        let reps = self.run_all()?;
        Ok((summarize(self, &reps)?, reps))
    }
}

pub fn simulate_data(config: &ExperimentConfig, rep: usize) -> Result<Dataset> {
    Ok(Experiment::new(config.clone())?.simulate(rep))
}

pub fn run_replication(config: &ExperimentConfig, rep: usize) -> Result<Replication> {
    Ok(Experiment::new(config.clone())?.run_replication(rep))
}

/// Runs every replication and aggregates. Fails with
/// [`Error::ExcessiveFailures`] when more than 20% of the replications of
/// some weight variant fail.
pub fn run_experiment(config: &ExperimentConfig) -> Result<SummaryTable> {
    Ok(Experiment::new(config.clone())?.run()?.0)
}
