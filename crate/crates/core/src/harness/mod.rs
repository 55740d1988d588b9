//! Configuration, data ingestion and the case-study pipelines used by the
//! command-line tool. Everything here is `f64`.

pub mod case_study;
pub mod config;
pub mod dataset;
pub mod profiles;
pub mod report;

pub use case_study::{
    detectability, estimate, estimate_observed, run_case_study, simulate_truth, sweep, write_run, write_truth, EstimateRun, ResultBundle,
    TruthRun,
};
pub use config::{ExperimentConfig, Mode};
pub use dataset::{load_dataset, Dataset, TimeSeries, DATASET_HEADER};
pub use report::{build_report, collect_runs, write_report, MetricsReport, RunMetrics};
