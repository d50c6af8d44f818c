//! Procedural crystallization-plate images with exact drop masks and labels.
//!
//! The drop is brighter than the plate and outlined by a dark rim. Its
//! interior depends on the label: smooth (Clear), a few sharp high-contrast
//! polygons (Crystals) or fine granular speckle (Precipitate). Clutter of the
//! same two kinds is scattered over the plate but never touches the drop, so
//! the label is decidable from the drop alone.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{BinaryMask, ClassLabel, DatasetManifest, LabeledSample, ManifestEntry, RasterImage, SegSample};

pub const CONFIG_FILE: &str = "synth_config.json";

const PLATE_LEVEL: f64 = 80.0;
const PLATE_GRADIENT: f64 = 12.0;
const DROP_LEVEL: f64 = 170.0;
const DROP_GRADIENT: f64 = 8.0;
const RIM_DARKENING: f64 = 40.0;
const RIM_WIDTH: usize = 2;
const RIDGE_DARKENING: f64 = 25.0;
/// Inner radius of an annular drop as a fraction of the outer radius.
pub const ANNULUS_INNER: f64 = 0.4;
/// Fraction of interior pixels turned into precipitate grains.
const SPECKLE_DENSITY: f64 = 0.35;
/// Distractors drawn per unit of clutter.
const CLUTTER_SCALE: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub image_size: usize,
    /// Drop radius as a fraction of the image side, drawn uniformly.
    pub drop_radius_range: (f64, f64),
    /// Distractor density on the plate, in [0, 1].
    pub background_clutter: f64,
    /// Standard deviation of additive Gaussian noise, in intensity units.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { image_size: 256, drop_radius_range: (0.25, 0.4), background_clutter: 0.3, noise_sigma: 6.0, seed: 0 }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.drop_radius_range;
        if !(lo > 0.0 && lo <= hi && hi <= 0.5) {
            return Err(Error::InvalidArgument(format!("drop radius range {:?} must lie in (0, 0.5]", self.drop_radius_range)));
        }
        if !(0.0..=1.0).contains(&self.background_clutter) {
            return Err(Error::InvalidArgument(format!("clutter {} outside [0, 1]", self.background_clutter)));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("noise sigma {} must be ≥ 0", self.noise_sigma)));
        }
        if self.image_size < 16 {
            return Err(Error::InvalidArgument(format!("image size {} below 16", self.image_size)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropShape {
    Ellipse,
    /// Star-shaped polygon with 6 to 9 vertices.
    Polygon,
    /// Ring between `ANNULUS_INNER * r` and `r`.
    Annulus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlateTexture {
    Plain,
    /// Periodic dark parallel lines.
    Ridged,
}

/// Imaging conditions of one simulated provider.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceProfile {
    pub name: String,
    /// Added to every plate and drop intensity.
    pub lighting_bias: f64,
    pub drop_shape: DropShape,
    pub plate_texture: PlateTexture,
}

impl SourceProfile {
    pub fn new(name: &str, lighting_bias: f64, drop_shape: DropShape, plate_texture: PlateTexture) -> Self {
        Self { name: name.to_string(), lighting_bias, drop_shape, plate_texture }
    }

    /// plain/ellipse, ridged/polygon, plain/annulus.
    pub fn defaults() -> Vec<SourceProfile> {
        vec![
            Self::new("plain_ellipse", 0.0, DropShape::Ellipse, PlateTexture::Plain),
            Self::new("ridged_polygon", -12.0, DropShape::Polygon, PlateTexture::Ridged),
            Self::new("plain_annulus", 12.0, DropShape::Annulus, PlateTexture::Plain),
        ]
    }
}

fn check_profiles(profiles: &[SourceProfile]) -> Result<()> {
    if profiles.is_empty() {
        return Err(Error::InvalidArgument("no source profiles".into()));
    }
    for (i, p) in profiles.iter().enumerate() {
        if profiles[..i].iter().any(|q| q.name == p.name) {
            return Err(Error::InvalidArgument(format!("duplicate profile name {:?}", p.name)));
        }
        if p.name.is_empty() || p.name.contains(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '-')) {
            return Err(Error::InvalidArgument(format!("profile name {:?} must be [A-Za-z0-9_-]+", p.name)));
        }
    }
    Ok(())
}

/// Analytic drop region; a pixel belongs to it when its centre does.
#[derive(Clone, Debug, PartialEq)]
pub enum DropGeometry {
    Ellipse { cy: f64, cx: f64, a: f64, b: f64, angle: f64 },
    Polygon { vertices: Vec<(f64, f64)> },
    Annulus { cy: f64, cx: f64, outer: f64, inner: f64 },
}

fn point_in_polygon(y: f64, x: f64, v: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let mut j = v.len() - 1;
    for i in 0..v.len() {
        let (yi, xi) = v[i];
        let (yj, xj) = v[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

impl DropGeometry {
    pub fn contains(&self, y: f64, x: f64) -> bool {
        match self {
            Self::Ellipse { cy, cx, a, b, angle } => {
                let (dy, dx) = (y - cy, x - cx);
                let (s, c) = angle.sin_cos();
                let u = dx * c + dy * s;
                let v = -dx * s + dy * c;
                (u / a).powi(2) + (v / b).powi(2) <= 1.0
            }
            Self::Polygon { vertices } => point_in_polygon(y, x, vertices),
            Self::Annulus { cy, cx, outer, inner } => {
                let d2 = (y - cy).powi(2) + (x - cx).powi(2);
                d2 <= outer * outer && d2 >= inner * inner
            }
        }
    }

    pub fn rasterize(&self, size: usize) -> BinaryMask {
        BinaryMask::from_fn(size, size, |y, x| self.contains(y as f64 + 0.5, x as f64 + 0.5))
    }
}

fn sample_geometry(cfg: &SynthConfig, shape: DropShape, rng: &mut impl Rng) -> DropGeometry {
    let n = cfg.image_size as f64;
    let (lo, hi) = cfg.drop_radius_range;
    let r = n * if lo < hi { rng.random_range(lo..=hi) } else { lo };
    // Keep the drop (plus its rim) inside the frame when it fits.
    let slack = (n / 2.0 - r - 2.0).max(0.0);
    let cy = n / 2.0 + rng.random_range(-slack..=slack) * 0.5;
    let cx = n / 2.0 + rng.random_range(-slack..=slack) * 0.5;
    match shape {
        DropShape::Ellipse => DropGeometry::Ellipse {
            cy,
            cx,
            a: r,
            b: r * rng.random_range(0.7..=1.0),
            angle: rng.random_range(0.0..std::f64::consts::PI),
        },
        DropShape::Polygon => {
            let k = rng.random_range(6..=9);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let vertices = (0..k)
                .map(|i| {
                    let t = phase + std::f64::consts::TAU * (i as f64 + rng.random_range(-0.2..0.2)) / k as f64;
                    let rr = r * rng.random_range(0.8..=1.0);
                    (cy + rr * t.sin(), cx + rr * t.cos())
                })
                .collect();
            DropGeometry::Polygon { vertices }
        }
        DropShape::Annulus => DropGeometry::Annulus { cy, cx, outer: r, inner: r * ANNULUS_INNER },
    }
}

/// Mask grown (`grow`) or shrunk by a square of half-width `r`.
fn morph_square(mask: &BinaryMask, r: usize, grow: bool) -> BinaryMask {
    let (h, w) = (mask.height(), mask.width());
    let r = r as isize;
    BinaryMask::from_fn(h, w, |y, x| {
        let mut any = false;
        let mut all = true;
        for dy in -r..=r {
            for dx in -r..=r {
                let (ny, nx) = (y as isize + dy, x as isize + dx);
                let v = ny >= 0 && nx >= 0 && ny < h as isize && nx < w as isize && mask.get(ny as usize, nx as usize);
                any |= v;
                all &= v;
            }
        }
        if grow {
            any
        } else {
            all
        }
    })
}

/// Random convex-ish polygon of radius `s` around (cy, cx).
fn shard(cy: f64, cx: f64, s: f64, rng: &mut impl Rng) -> Vec<(f64, f64)> {
    let k = rng.random_range(3..=6);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    (0..k)
        .map(|i| {
            let t = phase + std::f64::consts::TAU * i as f64 / k as f64;
            let rr = s * rng.random_range(0.6..=1.0);
            (cy + rr * t.sin(), cx + rr * t.cos())
        })
        .collect()
}

/// Paint a polygon onto `plane` where `allowed` holds.
fn paint_polygon(plane: &mut [f64], n: usize, poly: &[(f64, f64)], value: f64, allowed: &dyn Fn(usize, usize) -> bool) {
    let (mut y0, mut y1, mut x0, mut x1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(y, x) in poly {
        y0 = y0.min(y);
        y1 = y1.max(y);
        x0 = x0.min(x);
        x1 = x1.max(x);
    }
    let clamp = |v: f64| v.max(0.0).min(n as f64 - 1.0) as usize;
    for y in clamp(y0.floor())..=clamp(y1.ceil()) {
        for x in clamp(x0.floor())..=clamp(x1.ceil()) {
            if allowed(y, x) && point_in_polygon(y as f64 + 0.5, x as f64 + 0.5, poly) {
                plane[y * n + x] = value;
            }
        }
    }
}

fn crystal_value(rng: &mut impl Rng) -> f64 {
    if rng.random_bool(0.5) {
        rng.random_range(235.0..=250.0)
    } else {
        rng.random_range(20.0..=40.0)
    }
}

fn speckle_value(base: f64, rng: &mut impl Rng) -> f64 {
    let d = rng.random_range(30.0..=70.0);
    if rng.random_bool(0.5) {
        base + d
    } else {
        base - d
    }
}

/// One generated image with both views and the drop geometry.
#[derive(Clone, Debug)]
pub struct SynthSample {
    pub seg: SegSample,
    pub labeled: LabeledSample,
    pub geometry: DropGeometry,
}

pub fn generate_sample_detailed(
    cfg: &SynthConfig,
    profile: &SourceProfile,
    label: ClassLabel,
    rng: &mut impl Rng,
    id: &str,
) -> Result<SynthSample> {
    cfg.validate()?;
    let n = cfg.image_size;
    let nf = n as f64;
    let bias = profile.lighting_bias;

    // Plate with a linear lighting gradient.
    let (gs, gc) = rng.random_range(0.0..std::f64::consts::TAU).sin_cos();
    let mut plane: Vec<f64> = (0..n * n)
        .map(|i| {
            let (y, x) = ((i / n) as f64 / nf - 0.5, (i % n) as f64 / nf - 0.5);
            PLATE_LEVEL + bias + 2.0 * PLATE_GRADIENT * (y * gs + x * gc)
        })
        .collect();
    if profile.plate_texture == PlateTexture::Ridged {
        let period = rng.random_range(7.0..=11.0);
        let (s, c) = rng.random_range(0.0..std::f64::consts::PI).sin_cos();
        for (i, v) in plane.iter_mut().enumerate() {
            let t = (i / n) as f64 * s + (i % n) as f64 * c;
            if t.rem_euclid(period) < 2.0 {
                *v -= RIDGE_DARKENING;
            }
        }
    }

    let geometry = sample_geometry(cfg, profile.drop_shape, rng);
    let mask = geometry.rasterize(n);
    let interior = morph_square(&mask, RIM_WIDTH, false);
    let keep_out = morph_square(&mask, RIM_WIDTH, true);

    // Drop body, rim, then label-dependent content.
    let (ds, dc) = rng.random_range(0.0..std::f64::consts::TAU).sin_cos();
    for y in 0..n {
        for x in 0..n {
            if mask.get(y, x) {
                let (fy, fx) = (y as f64 / nf - 0.5, x as f64 / nf - 0.5);
                let mut v = DROP_LEVEL + bias + 2.0 * DROP_GRADIENT * (fy * ds + fx * dc);
                if !interior.get(y, x) {
                    v -= RIM_DARKENING;
                }
                plane[y * n + x] = v;
            }
        }
    }
    let inside: Vec<(usize, usize)> = (0..n * n).filter(|&i| interior.values()[i] != 0).map(|i| (i / n, i % n)).collect();
    if !inside.is_empty() {
        let in_drop = |y: usize, x: usize| interior.get(y, x);
        match label {
            ClassLabel::Clear => {}
            ClassLabel::Crystals => {
                for _ in 0..rng.random_range(3..=7) {
                    let (y, x) = inside[rng.random_range(0..inside.len())];
                    let poly = shard(y as f64 + 0.5, x as f64 + 0.5, rng.random_range(3.0..=7.0), rng);
                    let v = crystal_value(rng);
                    paint_polygon(&mut plane, n, &poly, v, &in_drop);
                }
            }
            ClassLabel::Precipitate => {
                for &(y, x) in &inside {
                    if rng.random_bool(SPECKLE_DENSITY) {
                        plane[y * n + x] = speckle_value(plane[y * n + x], rng);
                    }
                }
            }
        }
    }

    // Clutter on the plate, kept off the drop and its surroundings.
    let outside: Vec<(usize, usize)> = (0..n * n).filter(|&i| keep_out.values()[i] == 0).map(|i| (i / n, i % n)).collect();
    let count = (cfg.background_clutter * CLUTTER_SCALE).round() as usize;
    if !outside.is_empty() {
        let off_drop = |y: usize, x: usize| !keep_out.get(y, x);
        for _ in 0..count {
            let (y, x) = outside[rng.random_range(0..outside.len())];
            if rng.random_bool(0.5) {
                let poly = shard(y as f64 + 0.5, x as f64 + 0.5, rng.random_range(3.0..=7.0), rng);
                let v = crystal_value(rng);
                paint_polygon(&mut plane, n, &poly, v, &off_drop);
            } else {
                let r: f64 = rng.random_range(4.0..=9.0);
                let r2 = r * r;
                let ri = r.ceil() as isize;
                for dy in -ri..=ri {
                    for dx in -ri..=ri {
                        let (py, px) = (y as isize + dy, x as isize + dx);
                        if py < 0 || px < 0 || py >= n as isize || px >= n as isize || (dy * dy + dx * dx) as f64 > r2 {
                            continue;
                        }
                        let (py, px) = (py as usize, px as usize);
                        if off_drop(py, px) && rng.random_bool(SPECKLE_DENSITY) {
                            plane[py * n + px] = speckle_value(plane[py * n + px], rng);
                        }
                    }
                }
            }
        }
    }

    // Gaussian noise, drawn per channel.
    let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let mut pixels = Vec::with_capacity(n * n * 3);
    for &v in &plane {
        for _ in 0..3 {
            let e = if cfg.noise_sigma > 0.0 { noise.sample(rng) } else { 0.0 };
            pixels.push((v + e).round().clamp(0.0, 255.0) as u8);
        }
    }
    let image = RasterImage::new(n, n, 3, pixels)?;
    let seg = SegSample::new(image.clone(), mask, profile.name.clone(), id)?;
    let labeled = LabeledSample { image, label, source_tag: profile.name.clone(), id: id.to_string() };
    Ok(SynthSample { seg, labeled, geometry })
}

pub fn generate_sample(
    cfg: &SynthConfig,
    profile: &SourceProfile,
    label: ClassLabel,
    rng: &mut impl Rng,
) -> Result<(SegSample, LabeledSample)> {
    let s = generate_sample_detailed(cfg, profile, label, rng, "synthetic")?;
    Ok((s.seg, s.labeled))
}

/// Balanced in-memory set: for each profile, for each class, `per_class`
/// samples. Sample `i` in that order draws from ChaCha8 stream `i` of
/// `cfg.seed`, so any sample can be regenerated alone.
pub fn generate_samples(cfg: &SynthConfig, profiles: &[SourceProfile], per_class: usize) -> Result<Vec<SynthSample>> {
    cfg.validate()?;
    check_profiles(profiles)?;
    if per_class == 0 {
        return Err(Error::InvalidArgument("per_class must be ≥ 1".into()));
    }
    let mut out = Vec::with_capacity(profiles.len() * 3 * per_class);
    for profile in profiles {
        for label in ClassLabel::ALL {
            for k in 0..per_class {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(out.len() as u64);
                let id = format!("{}_{}_{k:04}", profile.name, label.as_str().to_lowercase());
                out.push(generate_sample_detailed(cfg, profile, label, &mut rng, &id)?);
            }
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct Provenance {
    config: SynthConfig,
    profiles: Vec<SourceProfile>,
    per_class: usize,
}

/// Write a balanced dataset under `root` (images/, masks/, manifest, and
/// the generator settings beside the manifest).
pub fn generate_dataset(cfg: &SynthConfig, profiles: &[SourceProfile], per_class: usize, root: &Path) -> Result<DatasetManifest> {
    let samples = generate_samples(cfg, profiles, per_class)?;
    for dir in ["images", "masks"] {
        let d = root.join(dir);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut entries = Vec::with_capacity(samples.len());
    for s in &samples {
        let id = &s.seg.id;
        let image = PathBuf::from("images").join(format!("{id}.png"));
        let mask = PathBuf::from("masks").join(format!("{id}.png"));
        s.seg.image.save_png(&root.join(&image))?;
        s.seg.mask.save_png(&root.join(&mask))?;
        entries.push(ManifestEntry {
            id: id.clone(),
            image,
            mask: Some(mask),
            label: Some(s.labeled.label),
            source_tag: s.seg.source_tag.clone(),
        });
    }
    let manifest = DatasetManifest::new(root, entries);
    manifest.write()?;
    let prov = Provenance { config: cfg.clone(), profiles: profiles.to_vec(), per_class };
    let path = root.join(CONFIG_FILE);
    let json = serde_json::to_string_pretty(&prov).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Intensity variance of the drop interior (rim excluded), gray channel.
pub fn interior_variance(image: &RasterImage, mask: &BinaryMask) -> f64 {
    let interior = morph_square(mask, RIM_WIDTH, false);
    let gray = image.to_gray();
    let vals: Vec<f64> =
        (0..interior.values().len()).filter(|&i| interior.values()[i] != 0).map(|i| gray.pixels()[i] as f64).collect();
    if vals.is_empty() {
        return 0.0;
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64
}
