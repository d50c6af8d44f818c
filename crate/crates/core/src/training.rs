//! Per-epoch training records shared by the finder and classifier loops.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_loss: f64,
    /// Eval mean IoU (finder) or eval accuracy (classifier).
    pub eval_metric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// CSV column name of `eval_metric`.
    pub metric_name: String,
    pub records: Vec<EpochRecord>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
}

impl TrainingLog {
    pub fn new(metric_name: &str) -> Self {
        Self { metric_name: metric_name.to_string(), records: Vec::new(), best_epoch: 0 }
    }

    pub fn first(&self) -> Option<&EpochRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.records.iter().find(|r| r.epoch == self.best_epoch)
    }

    /// `epoch,train_loss,eval_loss,<metric_name>`; floats are written with
    /// round-trip precision.
    pub fn to_csv(&self) -> String {
        let mut s = format!("epoch,train_loss,eval_loss,{}\n", self.metric_name);
        for r in &self.records {
            writeln!(s, "{},{},{},{}", r.epoch, r.train_loss, r.eval_loss, r.eval_metric).expect("string write");
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| Error::InvalidArgument(format!("training log: {e}")))?;
        let metric_name =
            headers.get(3).ok_or_else(|| Error::InvalidArgument("training log: missing metric column".into()))?.to_string();
        let mut log = TrainingLog::new(&metric_name);
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::InvalidArgument(format!("training log: {e}")))?;
            let f = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::InvalidArgument(format!("training log: bad field {i}")))
            };
            log.records.push(EpochRecord { epoch: f(0)? as usize, train_loss: f(1)?, eval_loss: f(2)?, eval_metric: f(3)? });
        }
        Ok(log)
    }
}

/// Tracks the best eval metric seen so far. A tie on the metric goes to
/// the lower eval loss; a full tie keeps the earlier epoch.
pub(crate) struct BestTracker {
    pub value: f64,
    pub loss: f64,
    pub epoch: usize,
}

impl BestTracker {
    pub fn new() -> Self {
        Self { value: f64::NEG_INFINITY, loss: f64::INFINITY, epoch: 0 }
    }

    pub fn offer(&mut self, epoch: usize, value: f64, loss: f64) -> bool {
        if value > self.value || (value == self.value && loss < self.loss) {
            self.value = value;
            self.loss = loss;
            self.epoch = epoch;
            true
        } else {
            false
        }
    }
}
