use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::unet::SegmentationModel;
use crate::augment::{augment_finder_sample, FinderAugmentSpec};
use crate::error::{Error, Result};
use crate::imgcore::{binarize_mask, BinaryMask, ScoreMap, SegSample};
use crate::metrics::{mean_iou, MeanIouClasses};
use crate::nn::{self, loss, Layer, Mode, Optimizer, OptimizerKind, Tensor};
use crate::training::{BestTracker, EpochRecord, TrainingLog};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinderTrainConfig {
    pub batch_size: usize,
    pub image_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f32,
    /// Averaging used for the per-epoch eval mean IoU.
    #[serde(default)]
    pub eval_metric: MeanIouClasses,
    #[serde(default = "default_threshold")]
    pub mask_threshold: f32,
    pub seed: u64,
}

fn default_threshold() -> f32 {
    crate::imgcore::DEFAULT_MASK_THRESHOLD
}

impl Default for FinderTrainConfig {
    /// Batch 6, 512 px, 300 epochs, Adam at 1e-5, binary cross entropy.
    fn default() -> Self {
        Self {
            batch_size: 6,
            image_size: 512,
            epochs: 300,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-5,
            eval_metric: MeanIouClasses::ForegroundAndBackground,
            mask_threshold: default_threshold(),
            seed: 0,
        }
    }
}

impl FinderTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.image_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidArgument("batch size, image size and epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate {} must be positive", self.learning_rate)));
        }
        Ok(())
    }
}

fn check_samples(which: &str, samples: &[SegSample], size: usize, channels: usize) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset(format!("finder {which} set is empty")));
    }
    for s in samples {
        let i = &s.image;
        if (i.height(), i.width(), i.channels()) != (size, size, channels) {
            return Err(Error::DimensionMismatch(format!(
                "{which} sample {} is {}x{}x{}, expected {size}x{size}x{channels}",
                s.id,
                i.height(),
                i.width(),
                i.channels()
            )));
        }
    }
    Ok(())
}

fn batch_tensors(samples: &[SegSample]) -> (Tensor, Vec<f32>) {
    let x = Tensor::stack(&samples.iter().map(|s| s.image.to_tensor()).collect::<Vec<_>>());
    let t = samples.iter().flat_map(|s| s.mask.values().iter().map(|&v| v as f32)).collect();
    (x, t)
}

/// Eval loss, predicted masks. Runs in inference mode.
pub fn evaluate_batches(
    model: &mut SegmentationModel,
    samples: &[SegSample],
    batch_size: usize,
    threshold: f32,
) -> Result<(f64, Vec<BinaryMask>)> {
    let mut total = 0.0;
    let mut masks = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size) {
        let (x, t) = batch_tensors(chunk);
        let logits = model.forward(&x, Mode::Eval);
        let (l, _) = loss::bce_with_logits(&logits, &t);
        total += l as f64 * chunk.len() as f64;
        let plane = logits.h() * logits.w();
        for (i, s) in chunk.iter().enumerate() {
            let probs = logits.sample(i).iter().map(|&z| loss::sigmoid(z)).collect::<Vec<_>>();
            debug_assert_eq!(probs.len(), plane);
            let map = ScoreMap::single(s.image.height(), s.image.width(), probs)?;
            masks.push(binarize_mask(&map, threshold)?);
        }
    }
    Ok((total / samples.len() as f64, masks))
}

/// Train with binary cross entropy; keeps the weights of the epoch with the
/// best eval mean IoU (ties: lower eval loss).
pub fn train_finder(
    mut model: SegmentationModel,
    train: &[SegSample],
    eval: &[SegSample],
    cfg: &FinderTrainConfig,
    aug: &FinderAugmentSpec,
) -> Result<(SegmentationModel, TrainingLog)> {
    cfg.validate()?;
    aug.validate()?;
    let size = model.config().input_size;
    if cfg.image_size != size {
        return Err(Error::InvalidArgument(format!("train image size {} differs from model input {size}", cfg.image_size)));
    }
    let channels = model.config().input_channels;
    check_samples("train", train, size, channels)?;
    check_samples("eval", eval, size, channels)?;

    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut aug_rng = ChaCha8Rng::seed_from_u64(aug.seed);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let eval_truth: Vec<BinaryMask> = eval.iter().map(|s| s.mask.clone()).collect();
    let mut log = TrainingLog::new("eval_mean_iou");
    let mut best = BestTracker::new();
    let mut best_state = nn::snapshot(&mut model);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut order_rng);
        let mut train_loss = 0.0f64;
        for idx in order.chunks(cfg.batch_size) {
            let batch = idx.iter().map(|&i| augment_finder_sample(&train[i], aug, &mut aug_rng)).collect::<Result<Vec<_>>>()?;
            let (x, t) = batch_tensors(&batch);
            let logits = model.forward(&x, Mode::Train);
            let (l, grad) = loss::bce_with_logits(&logits, &t);
            if !l.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            model.backward(&grad);
            opt.step(&mut model);
            train_loss += l as f64 * batch.len() as f64;
        }
        let (eval_loss, preds) = evaluate_batches(&mut model, eval, cfg.batch_size, cfg.mask_threshold)?;
        if !eval_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let miou = mean_iou(&preds, &eval_truth, cfg.eval_metric)?;
        log.records.push(EpochRecord { epoch, train_loss: train_loss / train.len() as f64, eval_loss, eval_metric: miou });
        if best.offer(epoch, miou, eval_loss) {
            best_state = nn::snapshot(&mut model);
        }
    }
    nn::restore(&mut model, &best_state);
    log.best_epoch = best.epoch;
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finder::{build_unet, UNetConfig};
    use crate::imgcore::RasterImage;

    fn disc_sample(size: usize, cy: f64, cx: f64, r: f64, id: &str) -> SegSample {
        let mask = BinaryMask::from_fn(size, size, |y, x| (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2) <= r * r);
        let mut img = RasterImage::filled(size, size, 3, 60);
        for y in 0..size {
            for x in 0..size {
                if mask.get(y, x) {
                    for c in 0..3 {
                        img.set(y, x, c, 200);
                    }
                }
            }
        }
        SegSample::new(img, mask, "disc", id).unwrap()
    }

    #[test]
    fn rejects_empty_and_missized_sets() {
        let cfg = FinderTrainConfig { image_size: 16, epochs: 1, learning_rate: 1e-3, ..Default::default() };
        let model = || build_unet(&UNetConfig { depth: 1, base_channels: 2, input_size: 16, ..Default::default() }).unwrap();
        let s = disc_sample(16, 8.0, 8.0, 4.0, "a");
        assert!(matches!(
            train_finder(model(), &[], std::slice::from_ref(&s), &cfg, &FinderAugmentSpec::identity()),
            Err(Error::EmptyDataset(_))
        ));
        let big = disc_sample(32, 8.0, 8.0, 4.0, "b");
        assert!(train_finder(model(), &[big], &[s], &cfg, &FinderAugmentSpec::identity()).is_err());
    }

    #[test]
    fn diverging_learning_rate_reports_epoch() {
        let cfg = FinderTrainConfig { image_size: 16, epochs: 3, learning_rate: 1e30, batch_size: 2, ..Default::default() };
        let model =
            build_unet(&UNetConfig { depth: 1, base_channels: 2, input_size: 16, batch_norm: false, ..Default::default() })
                .unwrap();
        let s = vec![disc_sample(16, 8.0, 8.0, 4.0, "a"), disc_sample(16, 5.0, 9.0, 3.0, "b")];
        match train_finder(model, &s, &s, &cfg, &FinderAugmentSpec::identity()) {
            Err(Error::NonFiniteLoss { epoch }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {:?}", other.map(|r| r.1)),
        }
    }

    #[test]
    fn loss_decreases_on_repeated_sample() {
        let s = disc_sample(32, 15.0, 17.0, 8.0, "a");
        let train = vec![s.clone(); 4];
        let cfg = FinderTrainConfig { batch_size: 2, image_size: 32, epochs: 20, learning_rate: 1e-2, ..Default::default() };
        let model = build_unet(&UNetConfig { depth: 2, base_channels: 4, input_size: 32, ..Default::default() }).unwrap();
        let (_, log) = train_finder(model, &train, &[s], &cfg, &FinderAugmentSpec::identity()).unwrap();
        assert_eq!(log.records.len(), 20);
        assert!(log.last().unwrap().train_loss < log.first().unwrap().train_loss);
    }
}
