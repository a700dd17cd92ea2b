//! Cross-modal training mathematics: the distillation and triplet losses,
//! radius-based triplet mining, and the toy linear distillation trainer.

pub mod embedding;
pub mod loss;
pub mod mining;
pub mod toy;

pub use embedding::{location_distance, EmbeddingSet, Locations, Modality};
pub use loss::{
    distance, infonce_loss, l2_normalize, triplet_margin_loss, Metric, TripletLoss, DEFAULT_MARGIN, DEFAULT_TEMPERATURE,
};
pub use mining::{mine_triplets, mine_triplets_with, MiningConfig, MiningResult, Triplet, DEFAULT_K_HARD};
pub use toy::{paired_recall_at_1, toy_distill, RecallPoint, ToyDistillConfig, ToyDistillReport};
