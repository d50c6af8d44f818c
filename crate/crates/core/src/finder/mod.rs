//! U-Net drop segmentation, its training loop, and an edge-filter baseline.

mod canny;
mod train;
mod unet;

pub use canny::{canny_baseline_mask, canny_edges, close, fill_enclosed, CLOSING_RADIUS};
pub use train::{evaluate_batches, train_finder, FinderTrainConfig};
pub use unet::{build_unet, predict_mask, LayerInfo, SegmentationModel, UNetConfig, CHECKPOINT_KIND};
