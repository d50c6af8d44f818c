use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::inception::ClassifierModel;
use crate::augment::{augment_classifier_sample, ClassifierAugmentSpec};
use crate::error::{Error, Result};
use crate::imgcore::{ClassLabel, LabeledSample};
use crate::nn::{self, loss, Layer, Mode, Optimizer, OptimizerKind, Tensor};
use crate::training::{BestTracker, EpochRecord, TrainingLog};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierTrainConfig {
    pub batch_size: usize,
    pub image_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f32,
    pub seed: u64,
    /// Parameters whose names start with this prefix are not updated.
    #[serde(default)]
    pub freeze_prefix: Option<String>,
}

impl Default for ClassifierTrainConfig {
    /// Batch 16, 299 px, 300 epochs, RMSprop at 1e-5, categorical cross entropy.
    fn default() -> Self {
        Self {
            batch_size: 16,
            image_size: 299,
            epochs: 300,
            optimizer: OptimizerKind::Rmsprop,
            learning_rate: 1e-5,
            seed: 0,
            freeze_prefix: None,
        }
    }
}

impl ClassifierTrainConfig {
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

fn check_samples(which: &str, samples: &[LabeledSample], size: usize) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset(format!("classifier {which} set is empty")));
    }
    for s in samples {
        if s.image.height() != size || s.image.width() != size {
            return Err(Error::DimensionMismatch(format!(
                "{which} sample {} is {}x{}, expected {size}x{size}",
                s.id,
                s.image.height(),
                s.image.width()
            )));
        }
    }
    Ok(())
}

fn batch_tensor(samples: &[&LabeledSample]) -> (Tensor, Vec<usize>) {
    let x = Tensor::stack(&samples.iter().map(|s| s.image.to_rgb().to_tensor()).collect::<Vec<_>>());
    (x, samples.iter().map(|s| s.label.index()).collect())
}

/// Mean loss and accuracy in inference mode.
pub fn evaluate_classifier(model: &mut ClassifierModel, samples: &[LabeledSample], batch_size: usize) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset("classifier eval set is empty".into()));
    }
    let mut total = 0.0;
    let mut correct = 0usize;
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&LabeledSample> = chunk.iter().collect();
        let (x, t) = batch_tensor(&refs);
        let logits = model.forward(&x, Mode::Eval);
        let (l, _) = loss::softmax_cross_entropy(&logits, &t);
        total += l as f64 * chunk.len() as f64;
        let k = logits.c();
        for (row, &truth) in logits.data().chunks(k).zip(&t) {
            // First maximum wins, matching the class-order tie-break.
            let mut best = 0;
            for i in 1..k {
                if row[i] > row[best] {
                    best = i;
                }
            }
            correct += usize::from(best == truth);
        }
    }
    Ok((total / samples.len() as f64, correct as f64 / samples.len() as f64))
}

/// Train with categorical cross entropy; keeps the weights of the epoch with
/// the best eval accuracy (ties: lower eval loss).
pub fn train_classifier(
    mut model: ClassifierModel,
    train: &[LabeledSample],
    eval: &[LabeledSample],
    cfg: &ClassifierTrainConfig,
    aug: &ClassifierAugmentSpec,
) -> Result<(ClassifierModel, TrainingLog)> {
    cfg.validate()?;
    aug.validate()?;
    let size = model.config().input_size;
    if cfg.image_size != size {
        return Err(Error::InvalidArgument(format!("train image size {} differs from model input {size}", cfg.image_size)));
    }
    check_samples("train", train, size)?;
    check_samples("eval", eval, size)?;
    let first = train[0].label;
    if train.iter().all(|s| s.label == first) {
        return Err(Error::InvalidArgument(format!("training set holds only {first} samples")));
    }
    if model.config().num_classes != ClassLabel::ALL.len() {
        return Err(Error::InvalidArgument(format!("model has {} classes, labels have 3", model.config().num_classes)));
    }
    if let Some(prefix) = &cfg.freeze_prefix {
        model.freeze_prefix(prefix);
    }

    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut aug_rng = ChaCha8Rng::seed_from_u64(aug.seed);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let mut log = TrainingLog::new("eval_accuracy");
    let mut best = BestTracker::new();
    let mut best_state = nn::snapshot(&mut model);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut order_rng);
        let mut train_loss = 0.0f64;
        for idx in order.chunks(cfg.batch_size) {
            let batch =
                idx.iter().map(|&i| augment_classifier_sample(&train[i], aug, &mut aug_rng)).collect::<Result<Vec<_>>>()?;
            let (x, t) = batch_tensor(&batch.iter().collect::<Vec<_>>());
            let logits = model.forward(&x, Mode::Train);
            let (l, grad) = loss::softmax_cross_entropy(&logits, &t);
            if !l.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            model.backward(&grad);
            opt.step(&mut model);
            train_loss += l as f64 * batch.len() as f64;
        }
        let (eval_loss, acc) = evaluate_classifier(&mut model, eval, cfg.batch_size)?;
        if !eval_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        log.records.push(EpochRecord { epoch, train_loss: train_loss / train.len() as f64, eval_loss, eval_metric: acc });
        if best.offer(epoch, acc, eval_loss) {
            best_state = nn::snapshot(&mut model);
        }
    }
    nn::restore(&mut model, &best_state);
    log.best_epoch = best.epoch;
    Ok((model, log))
}
