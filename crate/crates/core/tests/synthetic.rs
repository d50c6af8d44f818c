//! Properties of the synthetic generator that the experiments rely on.

use xtalfind::finder::canny_baseline_mask;
use xtalfind::imgcore::ClassLabel;
use xtalfind::metrics::{confusion_counts, iou};
use xtalfind::synthdrop::{generate_samples, interior_variance, SourceProfile, SynthConfig, SynthSample};

/// Generate at least `n` samples (balanced across profiles and classes)
/// and keep the first `n`.
fn take(cfg: &SynthConfig, n: usize) -> Vec<SynthSample> {
    let profiles = SourceProfile::defaults();
    let per_class = n.div_ceil(3 * profiles.len());
    let mut s = generate_samples(cfg, &profiles, per_class).unwrap();
    s.truncate(n);
    s
}

/// (interior variance, has content) per sample.
fn features(samples: &[SynthSample]) -> Vec<(f64, bool)> {
    samples.iter().map(|s| (interior_variance(&s.seg.image, &s.seg.mask), s.labeled.label != ClassLabel::Clear)).collect()
}

fn split_accuracy(features: &[(f64, bool)], threshold: f64) -> f64 {
    features.iter().filter(|&&(v, content)| (v > threshold) == content).count() as f64 / features.len() as f64
}

/// Threshold maximizing accuracy on the calibration set.
fn calibrate(features: &[(f64, bool)]) -> f64 {
    let mut candidates: Vec<f64> = features.iter().map(|f| f.0).collect();
    candidates.sort_by(f64::total_cmp);
    candidates
        .windows(2)
        .map(|w| (w[0] + w[1]) / 2.0)
        .max_by(|a, b| split_accuracy(features, *a).total_cmp(&split_accuracy(features, *b)))
        .unwrap()
}

#[test]
fn clear_is_separable_from_content_by_interior_variance() {
    for clutter in [0.3, 0.6] {
        let calib = take(&SynthConfig { background_clutter: clutter, seed: 100, ..Default::default() }, 90);
        let threshold = calibrate(&features(&calib));
        let test = take(&SynthConfig { background_clutter: clutter, seed: 200, ..Default::default() }, 300);
        let acc = split_accuracy(&features(&test), threshold);
        assert!(acc >= 0.95, "clutter {clutter}: accuracy {acc} at threshold {threshold}");
    }
}

#[test]
fn canny_region_depends_strongly_on_thresholds() {
    let ridged = SourceProfile::defaults().into_iter().find(|p| p.name == "ridged_polygon").unwrap();
    let cfg = SynthConfig { background_clutter: 0.6, seed: 31, ..Default::default() };
    let samples = generate_samples(&cfg, &[ridged], 3).unwrap();
    let mutual: Vec<f64> = samples
        .iter()
        .map(|s| {
            let strict = canny_baseline_mask(&s.seg.image, 50.0, 150.0).unwrap();
            let loose = canny_baseline_mask(&s.seg.image, 10.0, 50.0).unwrap();
            iou(&confusion_counts(&strict, &loose).unwrap())
        })
        .collect();
    assert!(mutual.iter().all(|&m| m < 0.9), "{mutual:?}");
}
