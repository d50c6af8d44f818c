use super::raster::{BinaryMask, RasterImage, ScoreMap};
use crate::error::{Error, Result};

pub const DEFAULT_MASK_THRESHOLD: f32 = 0.5;

/// Bilinear resampling with pixel-centre alignment.
pub fn resize_image(image: &RasterImage, out_h: usize, out_w: usize) -> Result<RasterImage> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument(format!("resize target must be at least 1x1, got {out_h}x{out_w}")));
    }
    let (h, w, c) = (image.height(), image.width(), image.channels());
    if (h, w) == (out_h, out_w) {
        return Ok(image.clone());
    }
    let sy = h as f32 / out_h as f32;
    let sx = w as f32 / out_w as f32;
    let taps = |dst: usize, scale: f32, len: usize| {
        let src = ((dst as f32 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f32);
        let i0 = src.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, src - i0 as f32)
    };
    let xs: Vec<_> = (0..out_w).map(|x| taps(x, sx, w)).collect();
    let mut px = vec![0u8; out_h * out_w * c];
    for y in 0..out_h {
        let (y0, y1, fy) = taps(y, sy, h);
        for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
            for ch in 0..c {
                let top = image.get(y0, x0, ch) as f32 * (1.0 - fx) + image.get(y0, x1, ch) as f32 * fx;
                let bot = image.get(y1, x0, ch) as f32 * (1.0 - fx) + image.get(y1, x1, ch) as f32 * fx;
                let v = top * (1.0 - fy) + bot * fy;
                px[(y * out_w + x) * c + ch] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    RasterImage::new(out_h, out_w, c, px)
}

/// Nearest-neighbour resampling; keeps masks strictly binary.
pub fn resize_mask(mask: &BinaryMask, out_h: usize, out_w: usize) -> Result<BinaryMask> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument(format!("resize target must be at least 1x1, got {out_h}x{out_w}")));
    }
    let (h, w) = (mask.height(), mask.width());
    let near = |dst: usize, src_len: usize, dst_len: usize| {
        (((dst as f64 + 0.5) * src_len as f64 / dst_len as f64).floor() as usize).min(src_len - 1)
    };
    Ok(BinaryMask::from_fn(out_h, out_w, |y, x| mask.get(near(y, h, out_h), near(x, w, out_w))))
}

/// Threshold a single-channel score map: 1 where score ≥ threshold.
pub fn binarize_mask(scores: &ScoreMap, threshold: f32) -> Result<BinaryMask> {
    if scores.channels != 1 {
        return Err(Error::InvalidArgument(format!(
            "binarize expects a single-channel score map, got {} channels",
            scores.channels
        )));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!("threshold {threshold} outside (0, 1)")));
    }
    BinaryMask::new(scores.height, scores.width, scores.values.iter().map(|&s| (s >= threshold) as u8).collect())
}
