//! Confusion matrices, weighted metrics, cross-validation and timing.

mod cv;
mod metrics;

pub use cv::{benchmark, cross_validate, BenchRow, CvReport, FoldReport, FoldSelection};
pub use metrics::{weighted_metrics, ClassMetrics, ConfusionMatrix, Metrics};
