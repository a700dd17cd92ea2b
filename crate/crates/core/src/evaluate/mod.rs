//! Downstream evaluation: cross-modal place recognition, segmentation,
//! depth, and the scaling-study report.

pub mod depth;
pub mod retrieval;
pub mod scaling;
pub mod seg;

pub use depth::{depth_metrics, DepthMetrics, MIN_PRED_DEPTH};
pub use retrieval::{
    evaluate_vpr, evaluate_vpr_with, knn_rank, knn_retrieve, positives_from_radius, recall_at_k, weighted_mean_recall,
    PositiveSets, RadiusMode, RecallAtK, RetrievalResult, SequenceRecall, VprConfig, VprReport,
};
pub use scaling::{scaling_report, ScalingReport, ScalingRow, ScalingRun};
pub use seg::{dice_loss, labels_from_probs, miou, ConfusionCounts, MiouReport};
