//! Nonconformity scores, split, Mondrian and weighted conformal calibration,
//! and coverage metrics.

mod calibrate;
mod quantile;
mod score;

pub use calibrate::{
    evaluate, mondrian_calibrate, split_calibrate, weighted_calibrate, CalibrationResult, Metrics,
    PartitionMetrics, Partitioner, SampleView,
};
pub use quantile::{
    conformal_quantile, conformal_rank, kernel_weights, weighted_quantile, WeightVector,
};
pub use score::{predict_set, score, threshold_set, ScoreFunction, Scorer};
