//! Simulated observations, replicated two-step fits and their summaries.

mod config;
mod normality;
mod rng;
mod run;
mod summary;

pub use config::{ExperimentConfig, ModelKind};
pub use normality::{ks_normality, ks_statistic, NormalityTest, LILLIEFORS_RESAMPLES, MIN_NORMALITY_SAMPLES};
pub use rng::{substream, Gaussian, StreamPurpose};
pub use run::{
    reference_trajectory, run_experiment, run_replication, simulate_data, Dataset, Experiment, Replication,
    VariantFit, TRUTH_GRID_INTERVALS, TRUTH_TOL,
};
pub use summary::{
    summarize, write_raw_csv, write_summary_csv, write_summary_text, SummaryTable, VariantSummary,
    MAX_FAILURE_FRACTION,
};
