//! Overlap metrics for segmentation and ROC/AUC for classification.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{BinaryMask, ClassLabel};

/// Pixel (or sample) confusion counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Counts of the background class: the roles of positives and negatives swap.
    pub fn complement(&self) -> ConfusionCounts {
        ConfusionCounts { tp: self.tn, fp: self.fn_, fn_: self.fp, tn: self.tp }
    }

    /// `2·tp / (2·tp + fp + fn)`; 1.0 when both masks are empty.
    pub fn dice(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }
}

fn check_dims(pred: &BinaryMask, truth: &BinaryMask) -> Result<()> {
    if pred.height() != truth.height() || pred.width() != truth.width() {
        return Err(Error::DimensionMismatch(format!(
            "prediction {}x{} vs truth {}x{}",
            pred.height(),
            pred.width(),
            truth.height(),
            truth.width()
        )));
    }
    Ok(())
}

pub fn confusion_counts(pred: &BinaryMask, truth: &BinaryMask) -> Result<ConfusionCounts> {
    check_dims(pred, truth)?;
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.values().iter().zip(truth.values()) {
        match (p, t) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 1) => c.fn_ += 1,
            _ => c.tn += 1,
        }
    }
    Ok(c)
}

/// `tp / (tp + fp + fn)`; 1.0 when both masks are empty.
pub fn iou(c: &ConfusionCounts) -> f64 {
    let denom = c.tp + c.fp + c.fn_;
    if denom == 0 {
        1.0
    } else {
        c.tp as f64 / denom as f64
    }
}

/// `2|X∩Y| / (|X|+|Y|)` over foreground pixels.
pub fn dice(pred: &BinaryMask, truth: &BinaryMask) -> Result<f64> {
    Ok(confusion_counts(pred, truth)?.dice())
}

/// Which segmentation classes enter the per-sample IoU average.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanIouClasses {
    #[default]
    ForegroundAndBackground,
    ForegroundOnly,
}

/// Per-sample class-averaged IoU, then averaged over samples.
pub fn mean_iou(preds: &[BinaryMask], truths: &[BinaryMask], classes: MeanIouClasses) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::EmptyDataset("mean IoU of zero samples".into()));
    }
    if preds.len() != truths.len() {
        return Err(Error::DimensionMismatch(format!("{} predictions vs {} truths", preds.len(), truths.len())));
    }
    let mut total = 0.0;
    for (p, t) in preds.iter().zip(truths) {
        let c = confusion_counts(p, t)?;
        total += match classes {
            MeanIouClasses::ForegroundAndBackground => (iou(&c) + iou(&c.complement())) / 2.0,
            MeanIouClasses::ForegroundOnly => iou(&c),
        };
    }
    Ok(total / preds.len() as f64)
}

pub fn accuracy(pred_labels: &[ClassLabel], true_labels: &[ClassLabel]) -> Result<f64> {
    if pred_labels.is_empty() {
        return Err(Error::EmptyDataset("accuracy of zero predictions".into()));
    }
    if pred_labels.len() != true_labels.len() {
        return Err(Error::DimensionMismatch(format!("{} predictions vs {} labels", pred_labels.len(), true_labels.len())));
    }
    let hits = pred_labels.iter().zip(true_labels).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / pred_labels.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve from (0,0) to (1,1) with non-decreasing rates.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

/// Sweep every distinct score from high to low; a sample is called
/// positive when its score is ≥ the cutoff.
pub fn roc_curve(scores: &[f64], positives: &[bool]) -> Result<RocCurve> {
    if scores.len() != positives.len() {
        return Err(Error::DimensionMismatch(format!("{} scores vs {} labels", scores.len(), positives.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidArgument(format!("ROC needs both classes, got {n_pos} positives and {n_neg} negatives")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let cutoff = scores[order[i]];
        while i < order.len() && scores[order[i]] == cutoff {
            if positives[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint { threshold: cutoff, fpr: fp as f64 / n_neg as f64, tpr: tp as f64 / n_pos as f64 });
    }
    let last = points.last().expect("nonempty");
    if (last.fpr, last.tpr) != (1.0, 1.0) {
        points.push(RocPoint { threshold: f64::NEG_INFINITY, fpr: 1.0, tpr: 1.0 });
    }
    Ok(RocCurve { points })
}

/// Trapezoidal area under the curve.
pub fn auc(curve: &RocCurve) -> f64 {
    curve.points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum::<f64>().clamp(0.0, 1.0)
}

/// One-vs-rest ROC: `probabilities[i][k]` is sample i's score for class k.
pub fn roc_one_vs_rest(probabilities: &[[f64; 3]], labels: &[ClassLabel], positive: ClassLabel) -> Result<RocCurve> {
    let scores: Vec<f64> = probabilities.iter().map(|p| p[positive.index()]).collect();
    let pos: Vec<bool> = labels.iter().map(|&l| l == positive).collect();
    roc_curve(&scores, &pos)
}

impl RocCurve {
    pub fn is_valid(&self) -> bool {
        let (Some(first), Some(last)) = (self.points.first(), self.points.last()) else {
            return false;
        };
        (first.fpr, first.tpr) == (0.0, 0.0)
            && (last.fpr, last.tpr) == (1.0, 1.0)
            && self.points.windows(2).all(|w| w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr)
    }

    /// CSV with header `threshold,fpr,tpr`; sentinel thresholds print as `inf`/`-inf`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,fpr,tpr\n");
        for p in &self.points {
            writeln!(s, "{},{},{}", p.threshold, p.fpr, p.tpr).expect("string write");
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<RocCurve> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut points = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::InvalidArgument(format!("ROC csv: {e}")))?;
            let num = |i: usize| {
                rec.get(i)
                    .and_then(|v| f64::from_str(v.trim()).ok())
                    .ok_or_else(|| Error::InvalidArgument(format!("ROC csv: bad field {i} in {rec:?}")))
            };
            points.push(RocPoint { threshold: num(0)?, fpr: num(1)?, tpr: num(2)? });
        }
        Ok(RocCurve { points })
    }
}
