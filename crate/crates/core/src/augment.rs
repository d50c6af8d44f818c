//! Seeded augmentation suites for the finder (image + mask) and the
//! classifier (image only).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{BinaryMask, LabeledSample, RasterImage, SegSample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlipAxis {
    /// Mirror left-right.
    Horizontal,
    /// Mirror top-bottom.
    Vertical,
}

/// `v -> round(255 · (v/255)^gamma)`.
pub fn gamma_correct(image: &RasterImage, gamma: f64) -> Result<RasterImage> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    let lut: Vec<u8> = (0..=255u32).map(|v| (255.0 * (v as f64 / 255.0).powf(gamma)).round().clamp(0.0, 255.0) as u8).collect();
    let mut out = image.clone();
    out.pixels_mut().iter_mut().for_each(|p| *p = lut[*p as usize]);
    Ok(out)
}

fn shifted_source(i: usize, d: i64, len: usize) -> Option<usize> {
    let s = i as i64 - d;
    (s >= 0 && s < len as i64).then_some(s as usize)
}

/// Translate content by (`dx`, `dy`) pixels; vacated pixels take `fill`.
pub fn shift(image: &RasterImage, dx: i64, dy: i64, fill: u8) -> Result<RasterImage> {
    let (h, w, c) = (image.height(), image.width(), image.channels());
    if dx.unsigned_abs() as usize > w || dy.unsigned_abs() as usize > h {
        return Err(Error::InvalidArgument(format!("shift ({dx}, {dy}) exceeds {h}x{w} image")));
    }
    let mut out = RasterImage::filled(h, w, c, fill);
    for y in 0..h {
        let Some(sy) = shifted_source(y, dy, h) else { continue };
        for x in 0..w {
            if let Some(sx) = shifted_source(x, dx, w) {
                for ch in 0..c {
                    out.set(y, x, ch, image.get(sy, sx, ch));
                }
            }
        }
    }
    Ok(out)
}

pub fn shift_mask(mask: &BinaryMask, dx: i64, dy: i64) -> BinaryMask {
    let (h, w) = (mask.height(), mask.width());
    BinaryMask::from_fn(h, w, |y, x| match (shifted_source(y, dy, h), shifted_source(x, dx, w)) {
        (Some(sy), Some(sx)) => mask.get(sy, sx),
        _ => false,
    })
}

/// Source coordinate of output index `i` under a centre-anchored zoom.
#[inline]
fn zoom_source(i: usize, len: usize, factor: f64) -> f64 {
    let centre = len as f64 / 2.0;
    (i as f64 + 0.5 - centre) / factor + centre - 0.5
}

/// Centre-anchored scale by `factor`, cropped or edge-padded back to the
/// original size (bilinear).
pub fn zoom(image: &RasterImage, factor: f64) -> Result<RasterImage> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::InvalidArgument(format!("zoom factor must be positive, got {factor}")));
    }
    let (h, w, c) = (image.height(), image.width(), image.channels());
    if factor == 1.0 {
        return Ok(image.clone());
    }
    let tap = |i: usize, len: usize| {
        let s = zoom_source(i, len, factor).clamp(0.0, (len - 1) as f64);
        let i0 = s.floor() as usize;
        (i0, (i0 + 1).min(len - 1), s - i0 as f64)
    };
    let xs: Vec<_> = (0..w).map(|x| tap(x, w)).collect();
    let mut out = image.clone();
    for y in 0..h {
        let (y0, y1, fy) = tap(y, h);
        for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
            for ch in 0..c {
                let top = image.get(y0, x0, ch) as f64 * (1.0 - fx) + image.get(y0, x1, ch) as f64 * fx;
                let bot = image.get(y1, x0, ch) as f64 * (1.0 - fx) + image.get(y1, x1, ch) as f64 * fx;
                out.set(y, x, ch, (top * (1.0 - fy) + bot * fy).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Ok(out)
}

/// Nearest-neighbour zoom for masks; regions uncovered by a zoom-out are 0.
pub fn zoom_mask(mask: &BinaryMask, factor: f64) -> Result<BinaryMask> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::InvalidArgument(format!("zoom factor must be positive, got {factor}")));
    }
    let (h, w) = (mask.height(), mask.width());
    let near = |i: usize, len: usize| {
        let s = (zoom_source(i, len, factor) + 0.5).floor();
        (s >= 0.0 && s < len as f64).then_some(s as usize)
    };
    Ok(BinaryMask::from_fn(h, w, |y, x| match (near(y, h), near(x, w)) {
        (Some(sy), Some(sx)) => mask.get(sy, sx),
        _ => false,
    }))
}

pub fn flip(image: &RasterImage, axis: FlipAxis) -> RasterImage {
    let (h, w, c) = (image.height(), image.width(), image.channels());
    let mut out = image.clone();
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = match axis {
                FlipAxis::Horizontal => (y, w - 1 - x),
                FlipAxis::Vertical => (h - 1 - y, x),
            };
            for ch in 0..c {
                out.set(y, x, ch, image.get(sy, sx, ch));
            }
        }
    }
    out
}

/// `v -> clamp(v + delta[c], 0, 255)` per channel.
pub fn channel_shift(image: &RasterImage, deltas: &[i32]) -> Result<RasterImage> {
    if deltas.len() != image.channels() {
        return Err(Error::DimensionMismatch(format!(
            "{} channel deltas for a {}-channel image",
            deltas.len(),
            image.channels()
        )));
    }
    if let Some(d) = deltas.iter().find(|d| d.abs() > 255) {
        return Err(Error::InvalidArgument(format!("channel delta {d} outside ±255")));
    }
    let c = image.channels();
    let mut out = image.clone();
    for (i, p) in out.pixels_mut().iter_mut().enumerate() {
        *p = (*p as i32 + deltas[i % c]).clamp(0, 255) as u8;
    }
    Ok(out)
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("{name} range [{lo}, {hi}] must be positive and ordered")));
    }
    Ok(())
}

fn check_shift(f: f64) -> Result<()> {
    if !(0.0..1.0).contains(&f) {
        return Err(Error::InvalidArgument(format!("shift fraction {f} outside [0, 1)")));
    }
    Ok(())
}

fn sample_shift(rng: &mut impl Rng, fraction: f64, len: usize) -> i64 {
    let max = fraction * len as f64;
    rng.random_range(-max..=max).round() as i64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinderAugmentSpec {
    pub gamma_range: (f64, f64),
    pub shift_fraction: f64,
    pub zoom_range: (f64, f64),
    pub seed: u64,
}

impl Default for FinderAugmentSpec {
    fn default() -> Self {
        Self { gamma_range: (0.8, 1.2), shift_fraction: 0.10, zoom_range: (0.9, 1.1), seed: 0 }
    }
}

impl FinderAugmentSpec {
    pub fn identity() -> Self {
        Self { gamma_range: (1.0, 1.0), shift_fraction: 0.0, zoom_range: (1.0, 1.0), seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        check_range("gamma", self.gamma_range)?;
        check_range("zoom", self.zoom_range)?;
        check_shift(self.shift_fraction)
    }
}

/// One draw of finder augmentation parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FinderAugmentParams {
    pub gamma: f64,
    pub dx: i64,
    pub dy: i64,
    pub zoom: f64,
}

impl FinderAugmentParams {
    pub fn sample(spec: &FinderAugmentSpec, height: usize, width: usize, rng: &mut impl Rng) -> Self {
        let gamma = rng.random_range(spec.gamma_range.0..=spec.gamma_range.1);
        let dx = sample_shift(rng, spec.shift_fraction, width);
        let dy = sample_shift(rng, spec.shift_fraction, height);
        let zoom = rng.random_range(spec.zoom_range.0..=spec.zoom_range.1);
        Self { gamma, dx, dy, zoom }
    }

    pub fn apply_to_image(&self, image: &RasterImage) -> Result<RasterImage> {
        let g = gamma_correct(image, self.gamma)?;
        zoom(&shift(&g, self.dx, self.dy, 0)?, self.zoom)
    }

    pub fn apply_to_mask(&self, mask: &BinaryMask) -> Result<BinaryMask> {
        zoom_mask(&shift_mask(mask, self.dx, self.dy), self.zoom)
    }
}

/// Gamma (image only), then shift and zoom applied identically to image and mask.
pub fn augment_finder_sample(sample: &SegSample, spec: &FinderAugmentSpec, rng: &mut impl Rng) -> Result<SegSample> {
    spec.validate()?;
    let p = FinderAugmentParams::sample(spec, sample.image.height(), sample.image.width(), rng);
    SegSample::new(p.apply_to_image(&sample.image)?, p.apply_to_mask(&sample.mask)?, sample.source_tag.clone(), sample.id.clone())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierAugmentSpec {
    pub horizontal_flip: bool,
    pub vertical_flip: bool,
    /// Deltas are drawn uniformly from `±channel_shift_range`.
    pub channel_shift_range: u8,
    /// Independent delta per channel (otherwise one delta for all channels).
    pub per_channel_shift: bool,
    pub shift_fraction: f64,
    pub zoom_range: (f64, f64),
    pub seed: u64,
}

impl Default for ClassifierAugmentSpec {
    fn default() -> Self {
        Self {
            horizontal_flip: true,
            vertical_flip: true,
            channel_shift_range: 100,
            per_channel_shift: true,
            shift_fraction: 0.10,
            zoom_range: (0.9, 1.1),
            seed: 0,
        }
    }
}

impl ClassifierAugmentSpec {
    pub fn identity() -> Self {
        Self {
            horizontal_flip: false,
            vertical_flip: false,
            channel_shift_range: 0,
            per_channel_shift: true,
            shift_fraction: 0.0,
            zoom_range: (1.0, 1.0),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_range("zoom", self.zoom_range)?;
        check_shift(self.shift_fraction)
    }
}

pub fn augment_classifier_sample(
    sample: &LabeledSample,
    spec: &ClassifierAugmentSpec,
    rng: &mut impl Rng,
) -> Result<LabeledSample> {
    spec.validate()?;
    let mut img = sample.image.clone();
    if spec.horizontal_flip && rng.random_bool(0.5) {
        img = flip(&img, FlipAxis::Horizontal);
    }
    if spec.vertical_flip && rng.random_bool(0.5) {
        img = flip(&img, FlipAxis::Vertical);
    }
    let r = spec.channel_shift_range as i32;
    let deltas: Vec<i32> = if spec.per_channel_shift {
        (0..img.channels()).map(|_| rng.random_range(-r..=r)).collect()
    } else {
        vec![rng.random_range(-r..=r); img.channels()]
    };
    img = channel_shift(&img, &deltas)?;
    let dx = sample_shift(rng, spec.shift_fraction, img.width());
    let dy = sample_shift(rng, spec.shift_fraction, img.height());
    img = shift(&img, dx, dy, 0)?;
    img = zoom(&img, rng.random_range(spec.zoom_range.0..=spec.zoom_range.1))?;
    Ok(LabeledSample { image: img, ..sample.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::ClassLabel;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise_image(h: usize, w: usize, c: usize, seed: u64) -> RasterImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RasterImage::new(h, w, c, (0..h * w * c).map(|_| rng.random()).collect()).unwrap()
    }

    fn blob_sample(seed: u64) -> SegSample {
        let img = noise_image(24, 20, 3, seed);
        let mask = BinaryMask::from_fn(24, 20, |y, x| (y as i32 - 12).pow(2) + (x as i32 - 9).pow(2) < 36);
        SegSample::new(img, mask, "src", "s").unwrap()
    }

    #[test]
    fn gamma_examples() {
        let img = noise_image(5, 5, 3, 1);
        assert_eq!(gamma_correct(&img, 1.0).unwrap(), img);
        let ends = RasterImage::new(1, 2, 1, vec![0, 255]).unwrap();
        for g in [0.5, 0.8, 1.2, 3.0] {
            assert_eq!(gamma_correct(&ends, g).unwrap(), ends);
        }
        let v = RasterImage::new(1, 1, 1, vec![64]).unwrap();
        assert_eq!(gamma_correct(&v, 2.0).unwrap().pixels(), &[16]);
        assert!(gamma_correct(&v, 0.0).is_err());
        assert!(gamma_correct(&v, -1.0).is_err());
    }

    #[test]
    fn shift_examples() {
        let img = noise_image(6, 7, 3, 2);
        assert_eq!(shift(&img, 0, 0, 0).unwrap(), img);
        let flat = RasterImage::filled(5, 5, 1, 90);
        assert_eq!(shift(&flat, 3, -2, 90).unwrap(), flat);
        let mut dot = RasterImage::filled(8, 8, 1, 0);
        dot.set(3, 3, 0, 255);
        let moved = shift(&dot, 2, 1, 0).unwrap();
        assert_eq!(moved.get(4, 5, 0), 255);
        assert_eq!(moved.pixels().iter().filter(|&&p| p == 255).count(), 1);
        assert!(shift(&dot, 9, 0, 0).is_err());
    }

    #[test]
    fn zoom_examples() {
        let img = noise_image(9, 9, 3, 3);
        assert_eq!(zoom(&img, 1.0).unwrap(), img);
        let flat = RasterImage::filled(9, 11, 3, 77);
        assert_eq!(zoom(&flat, 1.1).unwrap(), flat);
        assert_eq!(zoom(&flat, 0.9).unwrap(), flat);

        let square = RasterImage::new(
            40,
            40,
            1,
            (0..1600)
                .map(|i| {
                    let (y, x) = (i / 40, i % 40);
                    if (15..25).contains(&y) && (15..25).contains(&x) {
                        255
                    } else {
                        0
                    }
                })
                .collect(),
        )
        .unwrap();
        let zoomed = zoom(&square, 1.1).unwrap();
        let row_width = (0..40).filter(|&x| zoomed.get(20, x, 0) >= 128).count();
        assert!((10..=12).contains(&row_width), "width {row_width}");
        assert!(zoom(&square, 0.0).is_err());
    }

    #[test]
    fn flip_examples() {
        let img = noise_image(4, 5, 3, 4);
        for axis in [FlipAxis::Horizontal, FlipAxis::Vertical] {
            assert_eq!(flip(&flip(&img, axis), axis), img);
        }
        let sym = RasterImage::new(1, 3, 1, vec![4, 9, 4]).unwrap();
        assert_eq!(flip(&sym, FlipAxis::Horizontal), sym);
        let f = flip(&img, FlipAxis::Horizontal);
        assert_eq!(f.pixel(2, 5 - 1 - 1), img.pixel(2, 1));
    }

    #[test]
    fn channel_shift_examples() {
        let img = noise_image(3, 3, 3, 5);
        assert_eq!(channel_shift(&img, &[0, 0, 0]).unwrap(), img);
        let v = RasterImage::new(1, 1, 3, vec![200, 200, 200]).unwrap();
        assert_eq!(channel_shift(&v, &[100, 0, 0]).unwrap().pixels()[0], 255);
        let w = RasterImage::new(1, 1, 3, vec![50, 50, 50]).unwrap();
        assert_eq!(channel_shift(&w, &[10, -20, 0]).unwrap().pixels(), &[60, 30, 50]);
        assert!(channel_shift(&w, &[1, 2]).is_err());
    }

    #[test]
    fn identity_specs_leave_samples_unchanged() {
        let s = blob_sample(6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(augment_finder_sample(&s, &FinderAugmentSpec::identity(), &mut rng).unwrap(), s);
        let l = LabeledSample { image: s.image.clone(), label: ClassLabel::Crystals, source_tag: "a".into(), id: "x".into() };
        assert_eq!(augment_classifier_sample(&l, &ClassifierAugmentSpec::identity(), &mut rng).unwrap(), l);
    }

    #[test]
    fn default_specs_hold_stated_ranges() {
        let f = FinderAugmentSpec::default();
        assert_eq!((f.gamma_range, f.shift_fraction, f.zoom_range), ((0.8, 1.2), 0.10, (0.9, 1.1)));
        let c = ClassifierAugmentSpec::default();
        assert_eq!(c.channel_shift_range, 100);
        assert!(c.horizontal_flip && c.vertical_flip);
        assert!(FinderAugmentSpec { gamma_range: (0.0, 1.0), ..f.clone() }.validate().is_err());
        assert!(FinderAugmentSpec { shift_fraction: 1.0, ..f }.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn finder_augmentation_is_deterministic_and_consistent(seed in any::<u64>(), img_seed in 0u64..50) {
            let s = blob_sample(img_seed);
            let spec = FinderAugmentSpec::default();
            let a = augment_finder_sample(&s, &spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let b = augment_finder_sample(&s, &spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.image.same_dims(&s.image));
            prop_assert!(a.mask.matches_image(&a.image));

            let p = FinderAugmentParams::sample(&spec, 24, 20, &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(p.apply_to_mask(&s.mask).unwrap(), a.mask);
        }

        #[test]
        fn classifier_augmentation_preserves_shape_and_label(seed in any::<u64>(), c in prop::sample::select(vec![1usize, 3])) {
            let l = LabeledSample { image: noise_image(10, 13, c, seed % 7), label: ClassLabel::Precipitate, source_tag: "t".into(), id: "i".into() };
            let spec = ClassifierAugmentSpec::default();
            let a = augment_classifier_sample(&l, &spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let b = augment_classifier_sample(&l, &spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.image.same_dims(&l.image));
            prop_assert_eq!(a.label, ClassLabel::Precipitate);
        }
    }
}
