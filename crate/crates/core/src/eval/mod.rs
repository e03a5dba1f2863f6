//! Day-level split protocol, error metrics, error distributions and the
//! report files.

mod boxstats;
mod metrics;
mod split;
mod suite;
mod svg;

use thiserror::Error;

use crate::models::ModelError;

pub use boxstats::{error_distribution, quantile, ErrorDistribution};
pub use metrics::{compute_metrics, Metrics};
pub use split::{make_split, Split, SplitAssignment, TEST_DAYS_PER_MONTH, VALIDATION_DAYS};
pub use suite::{
    evaluate_suite, parse_boxstats, report_scale, write_charts, DistributionEntry, MetricsEntry, MetricsReport, ScatterPoint, SplitLabel,
    SuiteReport, BOXSTATS_FILE, BOX_SVG_FILE, MAE_SVG_FILE, METRICS_FILE, SCATTER_FILE,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("split: {0}")]
    Split(String),
    #[error("metrics: {0}")]
    Metrics(String),
    #[error("{0}")]
    Missing(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("report io: {0}")]
    Io(#[from] std::io::Error),
}
