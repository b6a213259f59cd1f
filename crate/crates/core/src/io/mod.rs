//! Run configuration, file formats, simulation and reporting.

pub mod config;
pub mod formats;
pub mod report;
pub mod simulate;

pub use config::{InitSetting, ResolvedRun, RunConfig, TempSetting};
pub use formats::{
    load_rankings, read_draws, read_matrix, read_predictive, read_truth, write_draws, write_matrix, write_predictive,
    write_rankings, write_truth, LabeledMatrix, Truth,
};
pub use report::{fit, fit_replicates, max_pairwise_sigma_tv, write_fit_outputs, FitOutcome};
pub use simulate::{score_against_truth, simulate_dataset, ScoreReport};
