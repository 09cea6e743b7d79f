//! CLI-facing orchestration: experiment configuration, comparison reports
//! with pass/fail tolerance law, artifact emission, and the experiment
//! dispatcher including the max-statistic trend sweep and the selftest suite.

mod config;
mod experiments;
mod report;

pub use config::ExperimentConfig;
pub use experiments::{
    exit_code, max_statistic_experiment, run_experiment, selftest, spearman_rho, MaxStatRow,
    TrendStat,
};
pub use report::{emit_outputs, ComparisonReport, PlotSeries, ReportMeta, ReportRow};
