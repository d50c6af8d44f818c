//! Images, masks, labels, dataset manifests and resampling.

mod dataset;
mod raster;
mod resize;

pub use dataset::{
    load_manifest, split_dataset, ClassLabel, DatasetManifest, LabeledSample, ManifestEntry, SegSample, SplitSpec, MANIFEST_FILE,
};
pub use raster::{BinaryMask, RasterImage, ScoreMap};
pub use resize::{binarize_mask, resize_image, resize_mask, DEFAULT_MASK_THRESHOLD};
