use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;
use xtalfind::finder::canny_baseline_mask;
use xtalfind::imgcore::{resize_image, ClassLabel};
use xtalfind::metrics::{auc, confusion_counts, dice, iou, roc_curve, roc_one_vs_rest};
use xtalfind::synthdrop::{generate_sample, SourceProfile, SynthConfig};
use xtalfind_bench::{disc, probabilities, scored_labels, seg_samples};

fn metrics(c: &mut Criterion) {
    let a = disc(256, 120.0, 130.0, 70.0);
    let b = disc(256, 128.0, 128.0, 72.0);
    c.bench_function("iou_256", |bch| bch.iter(|| iou(&confusion_counts(black_box(&a), black_box(&b)).unwrap())));
    c.bench_function("dice_256", |bch| bch.iter(|| dice(black_box(&a), black_box(&b)).unwrap()));

    let (scores, positives) = scored_labels(2000, 1);
    c.bench_function("roc_auc_2000", |bch| bch.iter(|| auc(&roc_curve(black_box(&scores), &positives).unwrap())));
    let (probs, labels) = probabilities(2000, 2);
    c.bench_function("roc_one_vs_rest_2000", |bch| {
        bch.iter(|| roc_one_vs_rest(black_box(&probs), &labels, ClassLabel::Crystals).unwrap())
    });
}

fn images(c: &mut Criterion) {
    let img = seg_samples(1, 256, 3).remove(0).image;
    c.bench_function("canny_region_256", |bch| bch.iter(|| canny_baseline_mask(black_box(&img), 50.0, 150.0).unwrap()));
    c.bench_function("resize_256_to_64", |bch| bch.iter(|| resize_image(black_box(&img), 64, 64).unwrap()));

    let cfg = SynthConfig::default();
    let profile = &SourceProfile::defaults()[0];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    c.bench_function("synth_sample_256", |bch| {
        bch.iter(|| generate_sample(&cfg, profile, ClassLabel::Crystals, &mut rng).unwrap())
    });
}

criterion_group!(benches, metrics, images);
criterion_main!(benches);
