//! Split protocol, metrics and study drivers.

pub mod metrics;
mod plot;
pub mod splits;
pub mod study;

pub use metrics::{auroc, read_scores, target_risk, thresholded_target_risk, write_scores};
pub use plot::line_chart;
pub use splits::{make_splits, read_splits, write_splits, LossAudit, Split, SplitAssignment};
pub use study::{
    run_study, train_method, write_report, DatasetConfig, MethodRun, Method, MetricsReport, StudyConfig, StudyKind,
};
