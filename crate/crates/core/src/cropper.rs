//! Mask cleanup and drop extraction for the classifier input.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{resize_image, resize_mask, BinaryMask, RasterImage};

/// Foreground fraction below which `extract_drop` ignores the mask.
pub const FALLBACK_FRACTION: f64 = 0.001;
pub const DEFAULT_MARGIN: f64 = 0.05;

/// Half-open pixel box `[top, bottom) x [left, right)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRegion {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl CropRegion {
    pub fn height(&self) -> usize {
        self.bottom - self.top
    }

    pub fn width(&self) -> usize {
        self.right - self.left
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        (self.top..self.bottom).contains(&y) && (self.left..self.right).contains(&x)
    }
}

/// 4-connected component labels (0 = background, components numbered from 1
/// in raster order of their first pixel) and the size of each component.
pub(crate) fn label_components(mask: &BinaryMask) -> (Vec<u32>, Vec<usize>) {
    let (h, w) = (mask.height(), mask.width());
    let v = mask.values();
    let mut labels = vec![0u32; h * w];
    let mut sizes = vec![0usize];
    let mut stack = Vec::new();
    for start in 0..h * w {
        if v[start] == 0 || labels[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32;
        let mut size = 0;
        labels[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            size += 1;
            let (y, x) = (i / w, i % w);
            let mut visit = |j: usize| {
                if v[j] != 0 && labels[j] == 0 {
                    labels[j] = id;
                    stack.push(j);
                }
            };
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Keep only the largest 4-connected foreground component. Ties go to the
/// component met first in raster order.
pub fn largest_component(mask: &BinaryMask) -> BinaryMask {
    let (labels, sizes) = label_components(mask);
    let mut best = 0;
    for (id, &s) in sizes.iter().enumerate().skip(1) {
        if s > sizes[best] {
            best = id;
        }
    }
    if best == 0 {
        return BinaryMask::zeros(mask.height(), mask.width());
    }
    let values = labels.iter().map(|&l| u8::from(l == best as u32)).collect();
    BinaryMask::new(mask.height(), mask.width(), values).expect("same dimensions")
}

/// Tight foreground box grown by `round(margin_fraction * side)` pixels on
/// each side, clamped to the image.
pub fn mask_to_bbox(mask: &BinaryMask, margin_fraction: f64) -> Result<CropRegion> {
    if !(margin_fraction >= 0.0) || !margin_fraction.is_finite() {
        return Err(Error::InvalidArgument(format!("margin fraction {margin_fraction} must be ≥ 0")));
    }
    let (h, w) = (mask.height(), mask.width());
    let (mut top, mut left, mut bottom, mut right) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if mask.get(y, x) {
                top = top.min(y);
                left = left.min(x);
                bottom = bottom.max(y + 1);
                right = right.max(x + 1);
            }
        }
    }
    if top == usize::MAX {
        return Err(Error::InvalidArgument("cannot take the bounding box of an empty mask".into()));
    }
    let my = (margin_fraction * (bottom - top) as f64).round() as usize;
    let mx = (margin_fraction * (right - left) as f64).round() as usize;
    Ok(CropRegion {
        top: top.saturating_sub(my),
        left: left.saturating_sub(mx),
        bottom: (bottom + my).min(h),
        right: (right + mx).min(w),
    })
}

pub fn crop_image(image: &RasterImage, region: &CropRegion) -> Result<RasterImage> {
    if region.top >= region.bottom
        || region.left >= region.right
        || region.bottom > image.height()
        || region.right > image.width()
    {
        return Err(Error::InvalidArgument(format!("crop {region:?} outside {}x{} image", image.height(), image.width())));
    }
    let c = image.channels();
    let mut pixels = Vec::with_capacity(region.height() * region.width() * c);
    for y in region.top..region.bottom {
        let row = (y * image.width() + region.left) * c;
        pixels.extend_from_slice(&image.pixels()[row..row + region.width() * c]);
    }
    RasterImage::new(region.height(), region.width(), c, pixels)
}

pub fn crop_mask(mask: &BinaryMask, region: &CropRegion) -> Result<BinaryMask> {
    if region.top >= region.bottom || region.left >= region.right || region.bottom > mask.height() || region.right > mask.width()
    {
        return Err(Error::InvalidArgument(format!("crop {region:?} outside {}x{} mask", mask.height(), mask.width())));
    }
    Ok(BinaryMask::from_fn(region.height(), region.width(), |y, x| mask.get(region.top + y, region.left + x)))
}

/// Zero every pixel outside the mask.
pub fn apply_mask(image: &RasterImage, mask: &BinaryMask) -> Result<RasterImage> {
    if !mask.matches_image(image) {
        return Err(Error::DimensionMismatch(format!(
            "mask {}x{} vs image {}x{}",
            mask.height(),
            mask.width(),
            image.height(),
            image.width()
        )));
    }
    let c = image.channels();
    let mut out = image.clone();
    for (i, &m) in mask.values().iter().enumerate() {
        if m == 0 {
            out.pixels_mut()[i * c..(i + 1) * c].fill(0);
        }
    }
    Ok(out)
}

/// How `extract_drop` produced its output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extraction {
    Cropped(CropRegion),
    /// Mask too small; whole image resized without masking.
    Fallback,
}

/// Mask, crop to the largest component's box, and resize to a square.
pub fn extract_drop_detailed(
    image: &RasterImage,
    mask: &BinaryMask,
    out_size: usize,
    margin_fraction: f64,
) -> Result<(RasterImage, Extraction)> {
    if !mask.matches_image(image) {
        return Err(Error::DimensionMismatch(format!(
            "mask {}x{} vs image {}x{}",
            mask.height(),
            mask.width(),
            image.height(),
            image.width()
        )));
    }
    if out_size == 0 {
        return Err(Error::InvalidArgument("output size must be positive".into()));
    }
    let total = (mask.height() * mask.width()) as f64;
    if (mask.count() as f64) < FALLBACK_FRACTION * total {
        return Ok((resize_image(image, out_size, out_size)?, Extraction::Fallback));
    }
    let drop = largest_component(mask);
    let region = mask_to_bbox(&drop, margin_fraction)?;
    let masked = apply_mask(image, &drop)?;
    let cropped = crop_image(&masked, &region)?;
    let resized = resize_image(&cropped, out_size, out_size)?;
    // Bilinear resampling bleeds drop pixels into the zeroed surround; zero
    // again with the resized mask so the outside stays exactly 0.
    let out_mask = resize_mask(&crop_mask(&drop, &region)?, out_size, out_size)?;
    Ok((apply_mask(&resized, &out_mask)?, Extraction::Cropped(region)))
}

pub fn extract_drop(image: &RasterImage, mask: &BinaryMask, out_size: usize, margin_fraction: f64) -> Result<RasterImage> {
    extract_drop_detailed(image, mask, out_size, margin_fraction).map(|r| r.0)
}

/// The mask region of `extract_drop` at output resolution, or `None` on fallback.
pub fn extracted_mask(mask: &BinaryMask, out_size: usize, margin_fraction: f64) -> Result<Option<BinaryMask>> {
    let total = (mask.height() * mask.width()) as f64;
    if (mask.count() as f64) < FALLBACK_FRACTION * total {
        return Ok(None);
    }
    let drop = largest_component(mask);
    let region = mask_to_bbox(&drop, margin_fraction)?;
    Ok(Some(resize_mask(&crop_mask(&drop, &region)?, out_size, out_size)?))
}

/// Debug dump: writes `<id>_crop.png` into `dir`.
pub fn write_crop_debug(dir: &Path, id: &str, crop: &RasterImage) -> Result<std::path::PathBuf> {
    let path = dir.join(format!("{id}_crop.png"));
    crop.save_png(&path)?;
    Ok(path)
}
