//! Metrics, feature-throughput accounting, the evaluation sweep and its
//! reports.

mod metrics;
mod report;
mod sweep;

pub use metrics::{compute_metrics, feature_throughput, throughput_reduction, ConfusionMatrix, Metrics, ThroughputTable};
pub use report::{
    best_tradeoff, emit_report, pca_axis_values, read_records_csv, read_records_json, summarize, write_parallel_coords,
    write_records_csv, write_records_json, Baseline, ReportFiles, Summary, BASELINE_INTERVALS, PCA_AXIS_RANGE,
};
pub use sweep::{run_sweep, SweepGrid, SweepOptions, SweepRecord};
