use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, PipelineKind};
use crate::classifier::{build_classifier, predict_scores_batch, train_classifier, ClassScores};
use crate::cropper::extract_drop;
use crate::error::{Error, Result};
use crate::finder::{build_unet, predict_mask, train_finder, SegmentationModel};
use crate::imgcore::{
    load_manifest, resize_image, resize_mask, BinaryMask, ClassLabel, DatasetManifest, LabeledSample, RasterImage, SegSample,
    SplitSpec,
};
use crate::metrics::{auc, confusion_counts, iou, roc_one_vs_rest, RocCurve};
use crate::synthdrop::SynthSample;
use crate::training::TrainingLog;

/// Positive class of the reported ROC curve.
pub const ROC_POSITIVE: ClassLabel = ClassLabel::Crystals;

/// One labelled image with its optional drop mask.
#[derive(Clone, Debug, PartialEq)]
pub struct DataItem {
    pub id: String,
    pub image: RasterImage,
    pub mask: Option<BinaryMask>,
    pub label: ClassLabel,
    pub source_tag: String,
}

impl From<&SynthSample> for DataItem {
    fn from(s: &SynthSample) -> Self {
        Self {
            id: s.seg.id.clone(),
            image: s.seg.image.clone(),
            mask: Some(s.seg.mask.clone()),
            label: s.labeled.label,
            source_tag: s.seg.source_tag.clone(),
        }
    }
}

pub fn load_items(manifest: &DatasetManifest) -> Result<Vec<DataItem>> {
    manifest
        .entries
        .iter()
        .map(|e| {
            let label = e.label.ok_or_else(|| Error::Manifest { entry: e.id.clone(), message: "no label".into() })?;
            Ok(DataItem {
                id: e.id.clone(),
                image: manifest.load_image(e)?,
                mask: manifest.load_mask(e)?,
                label,
                source_tag: e.source_tag.clone(),
            })
        })
        .collect()
}

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinderRow {
    pub source: String,
    pub count: usize,
    pub mean_dice: f64,
    pub std_dice: f64,
    pub mean_iou: f64,
    pub std_iou: f64,
}

/// Per-source segmentation quality; `rows` sorted by source name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinderTable {
    pub rows: Vec<FinderRow>,
    pub overall: FinderRow,
}

impl FinderTable {
    pub fn row(&self, source: &str) -> Option<&FinderRow> {
        self.rows.iter().find(|r| r.source == source)
    }
}

fn finder_row(source: &str, dice: &[f64], ious: &[f64]) -> FinderRow {
    let (mean_dice, std_dice) = mean_std(dice);
    let (mean_iou, std_iou) = mean_std(ious);
    FinderRow { source: source.to_string(), count: dice.len(), mean_dice, std_dice, mean_iou, std_iou }
}

/// Per-sample dice and IoU grouped by source tag.
pub fn score_masks(preds: &[BinaryMask], truths: &[BinaryMask], sources: &[String]) -> Result<FinderTable> {
    if preds.is_empty() {
        return Err(Error::EmptyDataset("no masks to evaluate".into()));
    }
    if preds.len() != truths.len() || preds.len() != sources.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions, {} truths, {} sources",
            preds.len(),
            truths.len(),
            sources.len()
        )));
    }
    let mut groups: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let (mut all_d, mut all_i) = (Vec::new(), Vec::new());
    for ((p, t), s) in preds.iter().zip(truths).zip(sources) {
        let c = confusion_counts(p, t)?;
        let (d, i) = (c.dice(), iou(&c));
        let g = groups.entry(s.as_str()).or_default();
        g.0.push(d);
        g.1.push(i);
        all_d.push(d);
        all_i.push(i);
    }
    Ok(FinderTable {
        rows: groups.iter().map(|(s, (d, i))| finder_row(s, d, i)).collect(),
        overall: finder_row("overall", &all_d, &all_i),
    })
}

/// Predict every eval mask and tabulate dice/IoU per source.
pub fn evaluate_finder(model: &mut SegmentationModel, eval: &[SegSample], threshold: f32) -> Result<FinderTable> {
    if eval.is_empty() {
        return Err(Error::EmptyDataset("finder eval set is empty".into()));
    }
    let preds = eval.iter().map(|s| predict_mask(model, &s.image, threshold).map(|r| r.0)).collect::<Result<Vec<_>>>()?;
    let truths: Vec<BinaryMask> = eval.iter().map(|s| s.mask.clone()).collect();
    let sources: Vec<String> = eval.iter().map(|s| s.source_tag.clone()).collect();
    score_masks(&preds, &truths, &sources)
}

/// Image and mask resized to a square side.
pub fn resize_seg_sample(s: &SegSample, size: usize) -> Result<SegSample> {
    SegSample::new(resize_image(&s.image, size, size)?, resize_mask(&s.mask, size, size)?, s.source_tag.clone(), s.id.clone())
}

fn seg_sample(item: &DataItem) -> Result<SegSample> {
    let mask = item
        .mask
        .clone()
        .ok_or_else(|| Error::Manifest { entry: item.id.clone(), message: "segmentation needs a ground-truth mask".into() })?;
    SegSample::new(item.image.clone(), mask, item.source_tag.clone(), item.id.clone())
}

/// U-Net mask at the item's native resolution.
pub fn predict_native_mask(model: &mut SegmentationModel, image: &RasterImage, threshold: f32) -> Result<BinaryMask> {
    let size = model.config().input_size;
    let small = resize_image(image, size, size)?;
    let (mask, _) = predict_mask(model, &small, threshold)?;
    resize_mask(&mask, image.height(), image.width())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub seed: u64,
    pub accuracy: f64,
    /// AUC of the `ROC_POSITIVE` one-vs-rest curve.
    pub auc: f64,
    /// One-vs-rest AUC per class in `ClassLabel::ALL` order (NaN when a
    /// class is absent from the test split); rebuilt on load.
    #[serde(skip)]
    pub per_class_auc: [f64; 3],
    /// Derived from `scores` and `labels`; rebuilt on load.
    #[serde(skip)]
    pub roc: RocCurve,
    pub test_ids: Vec<String>,
    pub labels: Vec<ClassLabel>,
    pub scores: Vec<[f64; 3]>,
    pub classifier_log: TrainingLog,
    pub finder_log: Option<TrainingLog>,
    /// Finder quality on the test images (U-Net pipeline only).
    pub finder_table: Option<FinderTable>,
    pub finder_train_ids: Vec<String>,
}

impl RepeatResult {
    fn from_scores(
        repeat: usize,
        seed: u64,
        test_ids: Vec<String>,
        labels: Vec<ClassLabel>,
        scores: Vec<[f64; 3]>,
    ) -> Result<Self> {
        let correct = scores.iter().zip(&labels).filter(|(s, &l)| ClassScores { probabilities: **s }.argmax() == l).count();
        let accuracy = correct as f64 / labels.len() as f64;
        let mut per_class_auc = [f64::NAN; 3];
        for c in ClassLabel::ALL {
            if labels.contains(&c) && labels.iter().any(|&l| l != c) {
                per_class_auc[c.index()] = auc(&roc_one_vs_rest(&scores, &labels, c)?);
            }
        }
        let roc = roc_one_vs_rest(&scores, &labels, ROC_POSITIVE)?;
        Ok(Self {
            repeat,
            seed,
            accuracy,
            auc: auc(&roc),
            per_class_auc,
            roc,
            test_ids,
            labels,
            scores,
            classifier_log: TrainingLog::new("eval_accuracy"),
            finder_log: None,
            finder_table: None,
            finder_train_ids: Vec::new(),
        })
    }

    /// Recompute accuracy, AUCs and the ROC curve from the raw scores.
    pub fn recompute(&self) -> Result<Self> {
        let fresh = Self::from_scores(self.repeat, self.seed, self.test_ids.clone(), self.labels.clone(), self.scores.clone())?;
        Ok(Self {
            classifier_log: self.classifier_log.clone(),
            finder_log: self.finder_log.clone(),
            finder_table: self.finder_table.clone(),
            finder_train_ids: self.finder_train_ids.clone(),
            ..fresh
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub pipeline: PipelineKind,
    pub repeats: Vec<RepeatResult>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_auc: f64,
    pub std_auc: f64,
}

impl ExperimentResult {
    pub fn from_repeats(pipeline: PipelineKind, repeats: Vec<RepeatResult>) -> Self {
        let acc: Vec<f64> = repeats.iter().map(|r| r.accuracy).collect();
        let aucs: Vec<f64> = repeats.iter().map(|r| r.auc).collect();
        let (mean_accuracy, std_accuracy) = mean_std(&acc);
        let (mean_auc, std_auc) = mean_std(&aucs);
        Self { pipeline, repeats, mean_accuracy, std_accuracy, mean_auc, std_auc }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parse and rebuild every derived number from the stored scores.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let repeats = raw.repeats.iter().map(RepeatResult::recompute).collect::<Result<Vec<_>>>()?;
        Ok(Self::from_repeats(raw.pipeline, repeats))
    }
}

/// Classifier input for one item under a pipeline.
fn classifier_input(
    kind: PipelineKind,
    item: &DataItem,
    finder: Option<&mut SegmentationModel>,
    cfg: &ExperimentConfig,
) -> Result<RasterImage> {
    let size = cfg.classifier_model.input_size;
    match kind {
        PipelineKind::FullImage => resize_image(&item.image.to_rgb(), size, size),
        PipelineKind::ManualFinder => {
            let mask = item.mask.as_ref().ok_or_else(|| Error::Manifest {
                entry: item.id.clone(),
                message: "manual_finder needs a ground-truth mask".into(),
            })?;
            extract_drop(&item.image.to_rgb(), mask, size, cfg.margin_fraction)
        }
        PipelineKind::UnetFinder => {
            let model = finder.expect("finder trained before extraction");
            let mask = predict_native_mask(model, &item.image.to_rgb(), cfg.finder_train.mask_threshold)?;
            extract_drop(&item.image.to_rgb(), &mask, size, cfg.margin_fraction)
        }
    }
}

/// Split indices, train the finder if needed, train and score the classifier.
pub fn run_repeat(items: &[DataItem], base: &ExperimentConfig, k: usize) -> Result<RepeatResult> {
    let cfg = base.for_repeat(k);
    let kind = cfg.pipeline;
    let (order, n_train) = cfg.split.assign(items.len())?;
    let (train_idx, test_idx) = order.split_at(n_train);

    let mut finder = None;
    let mut finder_log = None;
    let mut finder_train_ids = Vec::new();
    if kind == PipelineKind::UnetFinder {
        let pool: Vec<usize> = if cfg.finder_uses_test_images { (0..items.len()).collect() } else { train_idx.to_vec() };
        let size = cfg.finder_model.input_size;
        let seg = pool.iter().map(|&i| resize_seg_sample(&seg_sample(&items[i])?, size)).collect::<Result<Vec<_>>>()?;
        let (forder, f_train) = SplitSpec::new(cfg.finder_train_fraction, cfg.split.seed).assign(seg.len())?;
        let ftrain: Vec<SegSample> = forder[..f_train].iter().map(|&i| seg[i].clone()).collect();
        let feval: Vec<SegSample> = forder[f_train..].iter().map(|&i| seg[i].clone()).collect();
        finder_train_ids = forder.iter().map(|&i| seg[i].id.clone()).collect();
        let (model, log) = train_finder(build_unet(&cfg.finder_model)?, &ftrain, &feval, &cfg.finder_train, &cfg.finder_augment)?;
        finder = Some(model);
        finder_log = Some(log);
    } else if kind == PipelineKind::ManualFinder {
        if let Some(item) = items.iter().find(|i| i.mask.is_none()) {
            return Err(Error::Manifest { entry: item.id.clone(), message: "manual_finder needs ground-truth masks".into() });
        }
    }

    let mut labeled = |idx: &[usize]| -> Result<Vec<LabeledSample>> {
        idx.iter()
            .map(|&i| {
                let it = &items[i];
                Ok(LabeledSample {
                    image: classifier_input(kind, it, finder.as_mut(), &cfg)?,
                    label: it.label,
                    source_tag: it.source_tag.clone(),
                    id: it.id.clone(),
                })
            })
            .collect()
    };
    let train_all = labeled(train_idx)?;
    let test = labeled(test_idx)?;
    let (fit, select) = if cfg.validation_fraction > 0.0 {
        let (o, n) = SplitSpec::new(1.0 - cfg.validation_fraction, cfg.split.seed).assign(train_all.len())?;
        (o[..n].iter().map(|&i| train_all[i].clone()).collect(), o[n..].iter().map(|&i| train_all[i].clone()).collect())
    } else {
        (train_all.clone(), test.clone())
    };
    let (mut clf, clf_log) = train_classifier(
        build_classifier(&cfg.classifier_model)?,
        &fit,
        &select,
        &cfg.classifier_train,
        &cfg.classifier_augment,
    )?;
    let images: Vec<&RasterImage> = test.iter().map(|s| &s.image).collect();
    let scores: Vec<[f64; 3]> =
        predict_scores_batch(&mut clf, &images, cfg.classifier_train.batch_size)?.iter().map(|s| s.probabilities).collect();

    let mut result = RepeatResult::from_scores(
        k,
        cfg.split.seed,
        test.iter().map(|s| s.id.clone()).collect(),
        test.iter().map(|s| s.label).collect(),
        scores,
    )?;
    result.classifier_log = clf_log;
    result.finder_log = finder_log;
    result.finder_train_ids = finder_train_ids;
    if let Some(model) = finder.as_mut() {
        let size = model.config().input_size;
        let seg = test_idx
            .iter()
            .filter(|&&i| items[i].mask.is_some())
            .map(|&i| resize_seg_sample(&seg_sample(&items[i])?, size))
            .collect::<Result<Vec<_>>>()?;
        if !seg.is_empty() {
            result.finder_table = Some(evaluate_finder(model, &seg, cfg.finder_train.mask_threshold)?);
        }
    }
    Ok(result)
}

/// Run every repeat on preloaded items.
pub fn run_pipeline_on(items: &[DataItem], cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    if items.is_empty() {
        return Err(Error::EmptyDataset("experiment dataset is empty".into()));
    }
    let repeats = (0..cfg.repeats).map(|k| run_repeat(items, cfg, k)).collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult::from_repeats(cfg.pipeline, repeats))
}

pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let manifest = load_manifest(&cfg.dataset_root)?;
    if cfg.pipeline == PipelineKind::ManualFinder && !manifest.has_masks() {
        let e = manifest.entries.iter().find(|e| e.mask.is_none()).expect("some entry lacks a mask");
        return Err(Error::Manifest { entry: e.id.clone(), message: "manual_finder needs ground-truth masks".into() });
    }
    run_pipeline_on(&load_items(&manifest)?, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc(n: usize, r: f64) -> BinaryMask {
        BinaryMask::from_fn(n, n, |y, x| (y as f64 - 4.5).powi(2) + (x as f64 - 4.5).powi(2) <= r * r)
    }

    #[test]
    fn perfect_and_empty_predictors() {
        let truths = vec![disc(10, 3.0), disc(10, 2.0)];
        let src = vec!["a".to_string(), "b".to_string()];
        let t = score_masks(&truths, &truths, &src).unwrap();
        assert_eq!((t.overall.mean_dice, t.overall.mean_iou, t.overall.std_dice, t.overall.std_iou), (1.0, 1.0, 0.0, 0.0));
        let empty = vec![BinaryMask::zeros(10, 10); 2];
        let e = score_masks(&empty, &truths, &src).unwrap();
        assert_eq!((e.overall.mean_dice, e.overall.mean_iou), (0.0, 0.0));
        assert!(score_masks(&[], &[], &[]).is_err());
    }

    #[test]
    fn two_sample_hand_computed_means() {
        // Sample 1: pred 4 px, truth 2 px inside it -> IoU 2/4, dice 4/6.
        // Sample 2: pred 3 px, truth 3 px, 1 shared -> IoU 1/5, dice 2/6.
        let m = |px: &[(usize, usize)]| BinaryMask::from_fn(4, 4, |y, x| px.contains(&(y, x)));
        let p1 = m(&[(0, 0), (0, 1), (1, 0), (1, 1)]);
        let t1 = m(&[(0, 0), (0, 1)]);
        let p2 = m(&[(2, 0), (2, 1), (2, 2)]);
        let t2 = m(&[(2, 2), (3, 2), (3, 3)]);
        let src = vec!["s".to_string(), "s".to_string()];
        let t = score_masks(&[p1, p2], &[t1, t2], &src).unwrap();
        let row = t.row("s").unwrap();
        assert!((row.mean_iou - (0.5 + 0.2) / 2.0).abs() < 1e-12);
        assert!((row.mean_dice - (4.0 / 6.0 + 2.0 / 6.0) / 2.0).abs() < 1e-12);
        let sd = ((0.5f64 - 0.35).powi(2) * 2.0).sqrt();
        assert!((row.std_iou - sd).abs() < 1e-12);
        assert_eq!(row.count, 2);
    }

    #[test]
    fn mean_std_basics() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(m, 3.0);
        assert!((s - 2.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn recompute_rebuilds_derived_numbers() {
        let labels = vec![ClassLabel::Crystals, ClassLabel::Clear, ClassLabel::Precipitate, ClassLabel::Crystals];
        let scores = vec![[0.1, 0.8, 0.1], [0.6, 0.3, 0.1], [0.2, 0.2, 0.6], [0.5, 0.4, 0.1]];
        let r = RepeatResult::from_scores(0, 1, vec!["a".into(), "b".into(), "c".into(), "d".into()], labels, scores).unwrap();
        assert_eq!(r.accuracy, 0.75);
        assert_eq!(r.auc, 1.0);
        let json = ExperimentResult::from_repeats(PipelineKind::FullImage, vec![r.clone()]).to_json().unwrap();
        let back = ExperimentResult::from_json(&json).unwrap();
        assert_eq!(back.repeats[0], r);
    }
}
