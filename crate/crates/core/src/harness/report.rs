use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, PipelineKind};
use super::pipeline::{run_pipeline, ExperimentResult, FinderTable};
use super::plot::{Chart, Series, PALETTE};
use crate::error::{Error, Result};
use crate::metrics::RocCurve;

pub const RESULT_JSON: &str = "result.json";
pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_TXT: &str = "results.txt";
pub const ROC_PNG: &str = "roc.png";
pub const ACCURACY_CSV: &str = "accuracy_curve.csv";
pub const ACCURACY_PNG: &str = "accuracy_curve.png";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn roc_points(c: &RocCurve) -> Vec<(f64, f64)> {
    c.points.iter().map(|p| (p.fpr, p.tpr)).collect()
}

/// `repeat,seed,accuracy,auc` rows followed by `mean` and `std` rows.
pub fn results_csv(result: &ExperimentResult) -> String {
    let mut s = String::from("repeat,seed,accuracy,auc\n");
    for r in &result.repeats {
        writeln!(s, "{},{},{},{}", r.repeat, r.seed, r.accuracy, r.auc).expect("string write");
    }
    writeln!(s, "mean,,{},{}", result.mean_accuracy, result.mean_auc).expect("string write");
    writeln!(s, "std,,{},{}", result.std_accuracy, result.std_auc).expect("string write");
    s
}

/// Per-repeat (accuracy, auc) from `results_csv` output, footer excluded.
pub fn parse_results_csv(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::InvalidArgument(format!("results csv: {e}")))?;
        if matches!(rec.get(0), Some("mean") | Some("std")) {
            continue;
        }
        let f = |i: usize| -> Result<f64> {
            rec.get(i).and_then(|v| v.parse().ok()).ok_or_else(|| Error::InvalidArgument(format!("results csv: bad field {i}")))
        };
        out.push((f(2)?, f(3)?));
    }
    Ok(out)
}

/// Raw per-image scores of one repeat.
pub fn scores_csv(result: &ExperimentResult, repeat: usize) -> String {
    let r = &result.repeats[repeat];
    let mut s = String::from("id,label,p_clear,p_crystals,p_precipitate\n");
    for ((id, label), p) in r.test_ids.iter().zip(&r.labels).zip(&r.scores) {
        writeln!(s, "{id},{label},{},{},{}", p[0], p[1], p[2]).expect("string write");
    }
    s
}

pub fn finder_table_text(t: &FinderTable) -> String {
    let mut s = format!("{:<20} {:>5} {:>8} {:>8} {:>8} {:>8}\n", "source", "n", "dice", "std", "iou", "std");
    for r in t.rows.iter().chain(std::iter::once(&t.overall)) {
        writeln!(
            s,
            "{:<20} {:>5} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            r.source, r.count, r.mean_dice, r.std_dice, r.mean_iou, r.std_iou
        )
        .expect("string write");
    }
    s
}

pub fn finder_table_csv(t: &FinderTable) -> String {
    let mut s = String::from("source,count,mean_dice,std_dice,mean_iou,std_iou\n");
    for r in t.rows.iter().chain(std::iter::once(&t.overall)) {
        writeln!(s, "{},{},{},{},{},{}", r.source, r.count, r.mean_dice, r.std_dice, r.mean_iou, r.std_iou)
            .expect("string write");
    }
    s
}

fn results_text(result: &ExperimentResult) -> String {
    let mut s = format!("pipeline: {}\n\n{:>6} {:>6} {:>9} {:>9}\n", result.pipeline, "repeat", "seed", "accuracy", "auc");
    for r in &result.repeats {
        writeln!(s, "{:>6} {:>6} {:>9.4} {:>9.4}", r.repeat, r.seed, r.accuracy, r.auc).expect("string write");
    }
    writeln!(s, "{:>6} {:>6} {:>9.4} {:>9.4}", "mean", "", result.mean_accuracy, result.mean_auc).expect("string write");
    writeln!(s, "{:>6} {:>6} {:>9.4} {:>9.4}", "std", "", result.std_accuracy, result.std_auc).expect("string write");
    for r in &result.repeats {
        if let Some(t) = &r.finder_table {
            write!(s, "\nfinder on test images, repeat {}\n{}", r.repeat, finder_table_text(t)).expect("string write");
        }
    }
    s
}

/// Write ROC curves (CSV per repeat + overlay PNG), per-epoch eval accuracy
/// (CSV + PNG), raw scores, training logs, the results table (CSV + text)
/// and the full result as JSON. Returns the files written.
pub fn emit_plots(result: &ExperimentResult, out: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(out)?;
    let mut files = Vec::new();
    let mut roc_series = Vec::new();
    for (i, r) in result.repeats.iter().enumerate() {
        files.push(write(&out.join(format!("roc_repeat{}.csv", r.repeat)), r.roc.to_csv())?);
        files.push(write(&out.join(format!("scores_repeat{}.csv", r.repeat)), scores_csv(result, i))?);
        files.push(write(&out.join(format!("classifier_log_repeat{}.csv", r.repeat)), r.classifier_log.to_csv())?);
        if let Some(log) = &r.finder_log {
            files.push(write(&out.join(format!("finder_log_repeat{}.csv", r.repeat)), log.to_csv())?);
        }
        if let Some(t) = &r.finder_table {
            files.push(write(&out.join(format!("finder_table_repeat{}.csv", r.repeat)), finder_table_csv(t))?);
        }
        roc_series.push(Series { points: roc_points(&r.roc), color: PALETTE[i % PALETTE.len()] });
    }
    let roc_chart = Chart { size: 320, x_range: (0.0, 1.0), y_range: (0.0, 1.0), diagonal: true };
    let path = out.join(ROC_PNG);
    roc_chart.render(&roc_series).save_png(&path)?;
    files.push(path);

    let epochs = result.repeats.iter().map(|r| r.classifier_log.records.len()).max().unwrap_or(0);
    let mut acc = String::from("epoch");
    for r in &result.repeats {
        write!(acc, ",repeat{}", r.repeat).expect("string write");
    }
    acc.push('\n');
    for e in 0..epochs {
        write!(acc, "{}", e + 1).expect("string write");
        for r in &result.repeats {
            match r.classifier_log.records.get(e) {
                Some(rec) => write!(acc, ",{}", rec.eval_metric),
                None => write!(acc, ","),
            }
            .expect("string write");
        }
        acc.push('\n');
    }
    files.push(write(&out.join(ACCURACY_CSV), acc)?);
    let acc_series: Vec<Series> = result
        .repeats
        .iter()
        .enumerate()
        .map(|(i, r)| Series {
            points: r.classifier_log.records.iter().map(|rec| (rec.epoch as f64, rec.eval_metric)).collect(),
            color: PALETTE[i % PALETTE.len()],
        })
        .collect();
    let acc_chart = Chart { size: 320, x_range: (1.0, epochs.max(2) as f64), y_range: (0.0, 1.0), diagonal: false };
    let path = out.join(ACCURACY_PNG);
    acc_chart.render(&acc_series).save_png(&path)?;
    files.push(path);

    files.push(write(&out.join(RESULTS_CSV), results_csv(result))?);
    files.push(write(&out.join(RESULTS_TXT), results_text(result))?);
    files.push(write(&out.join(RESULT_JSON), result.to_json()?)?);
    Ok(files)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub pipeline: PipelineKind,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_auc: f64,
    pub std_auc: f64,
    /// Mean AUC minus the baseline's mean AUC.
    pub auc_delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// Index into `rows` of the reference pipeline (full_image when present).
    pub baseline: usize,
    pub rows: Vec<ComparisonRow>,
    pub results: Vec<ExperimentResult>,
}

impl ComparisonReport {
    pub fn from_results(results: Vec<ExperimentResult>) -> Result<Self> {
        if results.len() < 2 {
            return Err(Error::InvalidArgument(format!("comparison needs ≥ 2 experiments, got {}", results.len())));
        }
        let baseline = results.iter().position(|r| r.pipeline == PipelineKind::FullImage).unwrap_or(0);
        let base_auc = results[baseline].mean_auc;
        let rows = results
            .iter()
            .map(|r| ComparisonRow {
                pipeline: r.pipeline,
                mean_accuracy: r.mean_accuracy,
                std_accuracy: r.std_accuracy,
                mean_auc: r.mean_auc,
                std_auc: r.std_auc,
                auc_delta: r.mean_auc - base_auc,
            })
            .collect();
        Ok(Self { baseline, rows, results })
    }

    /// Largest per-pipeline AUC standard deviation: the run-to-run noise
    /// against which deltas should be read.
    pub fn noise(&self) -> f64 {
        self.rows.iter().map(|r| r.std_auc).fold(0.0, f64::max)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<3} {:<14} {:>9} {:>8} {:>8} {:>8} {:>9}\n",
            "#", "pipeline", "accuracy", "std", "auc", "std", "auc_delta"
        );
        for (i, r) in self.rows.iter().enumerate() {
            writeln!(
                s,
                "{:<3} {:<14} {:>9.4} {:>8.4} {:>8.4} {:>8.4} {:>+9.4}",
                i, r.pipeline, r.mean_accuracy, r.std_accuracy, r.mean_auc, r.std_auc, r.auc_delta
            )
            .expect("string write");
        }
        writeln!(
            s,
            "baseline: row {} ({}); run-to-run AUC noise (max std): {:.4}",
            self.baseline,
            self.rows[self.baseline].pipeline,
            self.noise()
        )
        .expect("string write");
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("pipeline,mean_accuracy,std_accuracy,mean_auc,std_auc,auc_delta\n");
        for r in &self.rows {
            writeln!(s, "{},{},{},{},{},{}", r.pipeline, r.mean_accuracy, r.std_accuracy, r.mean_auc, r.std_auc, r.auc_delta)
                .expect("string write");
        }
        s
    }

    /// Table (CSV + text), overlaid ROC plot (first repeat of each
    /// pipeline), and each experiment's own files in a subdirectory.
    pub fn emit(&self, out: &Path) -> Result<Vec<PathBuf>> {
        ensure_dir(out)?;
        let mut files =
            vec![write(&out.join("comparison.csv"), self.to_csv())?, write(&out.join("comparison.txt"), self.to_text())?];
        let series: Vec<Series> = self
            .results
            .iter()
            .enumerate()
            .map(|(i, r)| Series { points: roc_points(&r.repeats[0].roc), color: PALETTE[i % PALETTE.len()] })
            .collect();
        let path = out.join("roc_comparison.png");
        Chart { size: 320, x_range: (0.0, 1.0), y_range: (0.0, 1.0), diagonal: true }.render(&series).save_png(&path)?;
        files.push(path);
        for (i, r) in self.results.iter().enumerate() {
            files.extend(emit_plots(r, &out.join(format!("{i}_{}", r.pipeline)))?);
        }
        Ok(files)
    }
}

/// Run each configuration and tabulate mean accuracy/AUC with deltas
/// against the full-image baseline.
pub fn compare_pipelines(configs: &[ExperimentConfig]) -> Result<ComparisonReport> {
    if configs.len() < 2 {
        return Err(Error::InvalidArgument(format!("comparison needs ≥ 2 configs, got {}", configs.len())));
    }
    if let Some(c) = configs.iter().find(|c| c.dataset_root != configs[0].dataset_root) {
        return Err(Error::InvalidArgument(format!(
            "configs use different datasets: {} vs {}",
            configs[0].dataset_root.display(),
            c.dataset_root.display()
        )));
    }
    let results = configs.iter().map(run_pipeline).collect::<Result<Vec<_>>>()?;
    ComparisonReport::from_results(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::pipeline::RepeatResult;
    use crate::imgcore::ClassLabel;
    use crate::metrics::{auc, roc_one_vs_rest};
    use crate::training::{EpochRecord, TrainingLog};

    fn fake_repeat(k: usize, shift: f64) -> RepeatResult {
        let labels =
            vec![ClassLabel::Crystals, ClassLabel::Clear, ClassLabel::Precipitate, ClassLabel::Crystals, ClassLabel::Clear];
        let scores = vec![[0.1, 0.8, 0.1], [0.6, 0.3 + shift, 0.1 - shift], [0.2, 0.2, 0.6], [0.5, 0.4, 0.1], [0.3, 0.35, 0.35]];
        let roc = roc_one_vs_rest(&scores, &labels, ClassLabel::Crystals).unwrap();
        let mut log = TrainingLog::new("eval_accuracy");
        for e in 1..=3 {
            log.records.push(EpochRecord { epoch: e, train_loss: 1.0 / e as f64, eval_loss: 0.5, eval_metric: 0.2 * e as f64 });
        }
        RepeatResult {
            repeat: k,
            seed: k as u64,
            accuracy: 0.6,
            auc: auc(&roc),
            per_class_auc: [0.5; 3],
            roc,
            test_ids: (0..5).map(|i| format!("s{i}")).collect(),
            labels,
            scores,
            classifier_log: log,
            finder_log: None,
            finder_table: None,
            finder_train_ids: vec![],
        }
    }

    #[test]
    fn emitted_files_parse_back() {
        let dir = tempfile::tempdir().unwrap();
        let result =
            ExperimentResult::from_repeats(PipelineKind::FullImage, (0..5).map(|k| fake_repeat(k, 0.01 * k as f64)).collect());
        let files = emit_plots(&result, dir.path()).unwrap();
        for f in &files {
            assert!(f.is_file(), "{}", f.display());
        }
        let table = fs::read_to_string(dir.path().join(RESULTS_CSV)).unwrap();
        assert_eq!(table.lines().count(), 1 + 5 + 2);
        let rows = parse_results_csv(&table).unwrap();
        assert_eq!(rows, result.repeats.iter().map(|r| (r.accuracy, r.auc)).collect::<Vec<_>>());
        let roc = RocCurve::from_csv(&fs::read_to_string(dir.path().join("roc_repeat2.csv")).unwrap()).unwrap();
        assert_eq!(roc, result.repeats[2].roc);
        let (first, last) = (roc.points.first().unwrap(), roc.points.last().unwrap());
        assert_eq!((first.fpr, first.tpr, last.fpr, last.tpr), (0.0, 0.0, 1.0, 1.0));
        let back = ExperimentResult::from_json(&fs::read_to_string(dir.path().join(RESULT_JSON)).unwrap()).unwrap();
        assert_eq!(back.mean_auc, result.mean_auc);
    }

    #[test]
    fn identical_results_have_zero_delta() {
        let r = ExperimentResult::from_repeats(PipelineKind::ManualFinder, vec![fake_repeat(0, 0.0), fake_repeat(1, 0.02)]);
        let report = ComparisonReport::from_results(vec![r.clone(), r]).unwrap();
        assert_eq!(report.rows[1].auc_delta, 0.0);
        assert!(report.to_text().contains("noise"));
        assert!(ComparisonReport::from_results(vec![]).is_err());
    }

    #[test]
    fn mismatched_datasets_are_rejected() {
        let a = ExperimentConfig { dataset_root: "a".into(), ..Default::default() };
        let b = ExperimentConfig { dataset_root: "b".into(), ..Default::default() };
        assert!(compare_pipelines(&[a.clone(), b]).is_err());
        assert!(compare_pipelines(&[a]).is_err());
    }

    #[test]
    fn unwritable_output_errors() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("f");
        fs::write(&file, b"x").unwrap();
        let result = ExperimentResult::from_repeats(PipelineKind::FullImage, vec![fake_repeat(0, 0.0)]);
        assert!(emit_plots(&result, &file.join("sub")).is_err());
    }
}
