//! Inception-style crystallization-state classifier and its training loop.

mod inception;
mod train;

pub use inception::{
    build_classifier, build_inception_block, predict_label, predict_scores, predict_scores_batch, BranchWidths, ClassScores,
    ClassifierModel, InceptionBlock, InceptionConfig, ModelScale, StageInfo, CHECKPOINT_KIND, FULL_MIN_INPUT, HEAD_PREFIX,
};
pub use train::{evaluate_classifier, train_classifier, ClassifierTrainConfig};
