//! Experiment orchestration: configuration, staged pipeline, metrics and
//! the command-line front end.

pub mod cli;
pub mod config;
pub mod metrics;
pub mod pipeline;
pub mod workloads;

pub use config::{ControllerKind, ExperimentConfig};
pub use metrics::{aggregate, bucket_counts, bucket_of, compute_metrics, median, BucketCounts, Metrics, BUCKET_NAMES};
pub use pipeline::{
    load_agent_dir, sha256_hex, single_factory, training_factory, write_plot_csv, ComparisonSummary, ControllerSummary,
    EpisodeMetrics, Manifest, Pipeline, PredictorEvalSummary, Stage, StageStatus, PLOT_HEADER,
};
