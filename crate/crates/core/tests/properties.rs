//! Cross-module invariants checked on random inputs.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xtalfind::classifier::{
    build_classifier, build_inception_block, predict_label, predict_scores, BranchWidths, ClassScores, InceptionConfig,
};
use xtalfind::cropper::{extract_drop_detailed, extracted_mask, Extraction};
use xtalfind::finder::{build_unet, predict_mask, UNetConfig};
use xtalfind::imgcore::{BinaryMask, RasterImage};
use xtalfind::metrics::{confusion_counts, dice, iou};
use xtalfind::nn::loss::softmax;
use xtalfind::nn::{Layer, Mode, Tensor};

fn random_image(h: usize, w: usize, c: usize, seed: u64) -> RasterImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RasterImage::new(h, w, c, (0..h * w * c).map(|_| rng.random()).collect()).unwrap()
}

fn random_mask(h: usize, w: usize, density: f64, seed: u64) -> BinaryMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BinaryMask::new(h, w, (0..h * w).map(|_| rng.random_bool(density) as u8).collect()).unwrap()
}

fn label_of(logits: &[f32]) -> xtalfind::imgcore::ClassLabel {
    let p = softmax(logits);
    ClassScores::new([p[0] as f64, p[1] as f64, p[2] as f64]).unwrap().argmax()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn iou_never_exceeds_dice(h in 1usize..33, w in 1usize..33, da in 0.0f64..1.0, db in 0.0f64..1.0, seed in any::<u64>()) {
        let a = random_mask(h, w, da, seed);
        let b = random_mask(h, w, db, seed.wrapping_add(1));
        let i = iou(&confusion_counts(&a, &b).unwrap());
        let d = dice(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&i) && (0.0..=1.0).contains(&d));
        prop_assert!(i <= d);
    }

    #[test]
    fn unet_mask_matches_input_and_scores_are_probabilities(depth in 1usize..=3, units in 1usize..=3, base in 1usize..=4, seed in any::<u64>()) {
        let size = units << depth;
        let cfg = UNetConfig { depth, base_channels: base, input_size: size, input_channels: 3, batch_norm: true, init_seed: seed };
        let mut model = build_unet(&cfg).unwrap();
        let img = random_image(size, size, 3, seed);
        let (mask, scores) = predict_mask(&mut model, &img, 0.5).unwrap();
        prop_assert_eq!((mask.height(), mask.width()), (size, size));
        prop_assert!(scores.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn inception_block_width_is_branch_sum(one in 1usize..10, three in 1usize..10, five in 1usize..10, pool in 1usize..10, cin in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut block = build_inception_block("p", cin, &BranchWidths::from_outputs(one, three, five, pool), &mut rng).unwrap();
        let x = Tensor::from_vec([1, cin, 6, 7], (0..cin * 42).map(|_| rng.random_range(-1.0..1.0)).collect());
        let y = block.forward(&x, Mode::Eval);
        prop_assert_eq!(y.shape(), [1, one + three + five + pool, 6, 7]);
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-80.0f32..80.0, 1..12)) {
        let p = softmax(&logits);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
        prop_assert!((p.iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn label_is_invariant_under_monotone_logit_transforms(l in prop::collection::vec(-6.0f32..6.0, 3), a in 0.1f32..4.0, b in -5.0f32..5.0) {
        let base = label_of(&l);
        let affine: Vec<f32> = l.iter().map(|v| a * v + b).collect();
        let cubic: Vec<f32> = l.iter().map(|v| v * v * v).collect();
        let tanh: Vec<f32> = l.iter().map(|v| (v / 4.0).tanh()).collect();
        prop_assert_eq!(label_of(&affine), base);
        prop_assert_eq!(label_of(&cubic), base);
        prop_assert_eq!(label_of(&tanh), base);
    }

    #[test]
    fn extraction_zeroes_everything_outside_the_resized_mask(h in 8usize..40, w in 8usize..40, out in 4usize..24, seed in any::<u64>()) {
        let img = random_image(h, w, 3, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (cy, cx) = (rng.random_range(0..h) as f64, rng.random_range(0..w) as f64);
        let r = rng.random_range(2.0..10.0);
        let mask = BinaryMask::from_fn(h, w, |y, x| (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2) <= r * r);
        let (crop, how) = extract_drop_detailed(&img, &mask, out, 0.05).unwrap();
        prop_assert_eq!((crop.height(), crop.width(), crop.channels()), (out, out, 3));
        if let Extraction::Cropped(_) = how {
            let m = extracted_mask(&mask, out, 0.05).unwrap().expect("non-fallback path has a mask");
            for y in 0..out {
                for x in 0..out {
                    if !m.get(y, x) {
                        prop_assert_eq!(crop.pixel(y, x), &[0, 0, 0][..]);
                    }
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn predict_label_is_the_score_argmax(seed in any::<u64>()) {
        thread_local! {
            static MODEL: std::cell::RefCell<xtalfind::classifier::ClassifierModel> =
                std::cell::RefCell::new(build_classifier(&InceptionConfig::desk(32)).unwrap());
        }
        let img = random_image(32, 32, 3, seed);
        MODEL.with(|m| {
            let mut m = m.borrow_mut();
            let s = predict_scores(&mut m, &img).unwrap();
            let again = predict_scores(&mut m, &img).unwrap();
            prop_assert_eq!(&s, &again);
            prop_assert_eq!(predict_label(&mut m, &img).unwrap(), s.argmax());
            Ok(())
        })?;
    }
}
