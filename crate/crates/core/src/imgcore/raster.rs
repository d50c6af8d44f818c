use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// 8-bit raster, row-major with interleaved channels (1 = gray, 3 = RGB).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RasterImage {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl RasterImage {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!("image must be at least 1x1, got {height}x{width}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!("image must have 1 or 3 channels, got {channels}")));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::DimensionMismatch(format!(
                "{} pixel values for a {height}x{width}x{channels} image",
                pixels.len()
            )));
        }
        Ok(Self { height, width, channels, pixels })
    }

    /// Constant image. Panics on zero dimensions or an unsupported channel count.
    pub fn filled(height: usize, width: usize, channels: usize, value: u8) -> Self {
        Self::new(height, width, channels, vec![value; height * width * channels]).expect("valid dimensions")
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: u8) {
        self.pixels[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn pixel(&self, y: usize, x: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.pixels[i..i + self.channels]
    }

    pub fn same_dims(&self, other: &RasterImage) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Luma (Rec. 601) single-channel copy; gray images are cloned.
    pub fn to_gray(&self) -> RasterImage {
        if self.channels == 1 {
            return self.clone();
        }
        let pixels = self
            .pixels
            .chunks_exact(3)
            .map(|p| (0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32).round().clamp(0.0, 255.0) as u8)
            .collect();
        RasterImage { height: self.height, width: self.width, channels: 1, pixels }
    }

    /// Three-channel copy; RGB images are cloned.
    pub fn to_rgb(&self) -> RasterImage {
        if self.channels == 3 {
            return self.clone();
        }
        let pixels = self.pixels.iter().flat_map(|&v| [v, v, v]).collect();
        RasterImage { height: self.height, width: self.width, channels: 3, pixels }
    }

    /// `[1, c, h, w]` tensor with intensities scaled to [0, 1].
    pub fn to_tensor(&self) -> Tensor {
        let (h, w, c) = (self.height, self.width, self.channels);
        let mut t = Tensor::zeros([1, c, h, w]);
        let data = t.data_mut();
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    data[(ch * h + y) * w + x] = self.pixels[(y * w + x) * c + ch] as f32 / 255.0;
                }
            }
        }
        t
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Image { path: path.to_path_buf(), message: e.to_string() })?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        match img {
            image::DynamicImage::ImageLuma8(g) => Self::new(h, w, 1, g.into_raw()),
            other => Self::new(h, w, 3, other.to_rgb8().into_raw()),
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let (w, h) = (self.width as u32, self.height as u32);
        let res = if self.channels == 1 {
            let buf: GrayImage = ImageBuffer::<Luma<u8>, _>::from_raw(w, h, self.pixels.clone()).expect("sized buffer");
            buf.save(path)
        } else {
            let buf: RgbImage = ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, self.pixels.clone()).expect("sized buffer");
            buf.save(path)
        };
        res.map_err(|e| Error::Image { path: path.to_path_buf(), message: e.to_string() })
    }
}

/// Per-pixel binary segmentation, 1 = drop.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    values: Vec<u8>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, values: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!("mask must be at least 1x1, got {height}x{width}")));
        }
        if values.len() != height * width {
            return Err(Error::DimensionMismatch(format!("{} values for a {height}x{width} mask", values.len())));
        }
        if let Some(v) = values.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidArgument(format!("mask value {v} is not binary")));
        }
        Ok(Self { height, width, values })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::new(height, width, vec![0; height * width]).expect("valid dimensions")
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self::new(height, width, vec![1; height * width]).expect("valid dimensions")
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut values = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                values.push(f(y, x) as u8);
            }
        }
        Self::new(height, width, values).expect("valid dimensions")
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn values(&self) -> &[u8] {
        &self.values
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.values[y * self.width + x] == 1
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, on: bool) {
        self.values[y * self.width + x] = on as u8;
    }

    pub fn count(&self) -> usize {
        self.values.iter().map(|&v| v as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn complement(&self) -> BinaryMask {
        BinaryMask { height: self.height, width: self.width, values: self.values.iter().map(|&v| 1 - v).collect() }
    }

    pub fn matches_image(&self, image: &RasterImage) -> bool {
        self.height == image.height() && self.width == image.width()
    }

    /// Gray image with 0 = background and 255 = drop.
    pub fn to_image(&self) -> RasterImage {
        RasterImage::new(self.height, self.width, 1, self.values.iter().map(|&v| v * 255).collect()).expect("valid dimensions")
    }

    /// Binarize a gray (or RGB, via luma) image: pixels ≥ `threshold` become drop.
    pub fn from_image(image: &RasterImage, threshold: u8) -> BinaryMask {
        let gray = image.to_gray();
        BinaryMask {
            height: gray.height(),
            width: gray.width(),
            values: gray.pixels().iter().map(|&v| (v >= threshold) as u8).collect(),
        }
    }

    /// Mask PNGs are binarized at 128.
    pub fn load_png(path: &Path) -> Result<Self> {
        Ok(Self::from_image(&RasterImage::load_png(path)?, 128))
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_image().save_png(path)
    }
}

/// Real-valued per-pixel map, e.g. segmentation scores in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMap {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub values: Vec<f32>,
}

impl ScoreMap {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != height * width * channels {
            return Err(Error::DimensionMismatch(format!("{} scores for a {height}x{width}x{channels} map", values.len())));
        }
        Ok(Self { height, width, channels, values })
    }

    pub fn single(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        Self::new(height, width, 1, values)
    }

    /// Visualisation as an 8-bit gray image.
    pub fn to_image(&self) -> RasterImage {
        let px = self.values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        RasterImage::new(self.height, self.width, self.channels, px).expect("valid dimensions")
    }
}
