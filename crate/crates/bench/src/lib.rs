//! Seeded inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xtalfind::imgcore::{BinaryMask, ClassLabel, SegSample};
use xtalfind::synthdrop::{generate_samples, SourceProfile, SynthConfig};

pub fn disc(size: usize, cy: f64, cx: f64, r: f64) -> BinaryMask {
    BinaryMask::from_fn(size, size, |y, x| (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2) <= r * r)
}

/// `n` scores with labels correlated to them, about half positive.
pub fn scored_labels(n: usize, seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let pos = rng.random_bool(0.5);
            let s: f64 = rng.random::<f64>() * 0.7 + if pos { 0.3 } else { 0.0 };
            (s, pos)
        })
        .unzip()
}

/// Class probabilities and labels for a one-vs-rest ROC.
pub fn probabilities(n: usize, seed: u64) -> (Vec<[f64; 3]>, Vec<ClassLabel>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let raw: [f64; 3] = [rng.random(), rng.random(), rng.random()];
            let sum: f64 = raw.iter().sum();
            (raw.map(|v| v / sum), ClassLabel::ALL[rng.random_range(0..3)])
        })
        .unzip()
}

/// Synthetic segmentation samples at `size` pixels, one per class and
/// profile until `n` are collected.
pub fn seg_samples(n: usize, size: usize, seed: u64) -> Vec<SegSample> {
    let cfg = SynthConfig { image_size: size, seed, ..Default::default() };
    let profiles = SourceProfile::defaults();
    let per_class = n.div_ceil(3 * profiles.len());
    let mut s: Vec<SegSample> = generate_samples(&cfg, &profiles, per_class).unwrap().into_iter().map(|s| s.seg).collect();
    s.truncate(n);
    s
}
