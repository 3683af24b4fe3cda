//! Worst-case QoS prediction from counter readings.

pub mod dataset;
pub mod evaluate;
pub mod predictor;

pub use dataset::{collect_from_mixes, collect_training_data, CollectConfig, Mix, ProfilingDataset, ProfilingRow};
pub use evaluate::{evaluate_leave_one_mix_out, FoldMetrics, LomoReport};
pub use predictor::{train_predictor, LogStandardizer, PredictorConfig, TreeSpec, TwoLevelPredictor};
