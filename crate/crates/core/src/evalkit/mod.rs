//! Metrics, participant-level bootstrap, trait sweeps and reports.

mod bootstrap;
mod metrics;
mod report;
mod sweep;

pub use bootstrap::{
    bootstrap, bootstrap_all, pooled, BootstrapConfig, BootstrapError, MetricResult,
    DEFAULT_RESAMPLES, PERCENTILES,
};
pub use metrics::{
    class_count, confusion, scores, scores_per_question, Confusion, FailurePolicy,
    LabeledPrediction, Metric, MetricError, Scores,
};
pub use report::{
    parse_csv, CellFailure, CellSummary, CsvRow, EvalReport, ReportError, ReportRow, CSV_COLUMNS,
};
pub use sweep::{
    eval_examples, excluded_scores, label_predictions, predict_cell, score_cell, sweep_traits,
    BackendFactory, FitContext, SweepConfig, SweepError, DEFAULT_COUNTS,
};
