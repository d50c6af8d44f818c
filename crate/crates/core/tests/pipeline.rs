//! End-to-end harness contracts on a tiny synthetic dataset.

use std::collections::HashSet;
use std::fs;

use xtalfind::classifier::ModelScale;
use xtalfind::harness::{
    compare_pipelines, emit_plots, parse_results_csv, run_pipeline, run_pipeline_on, DataItem, ExperimentConfig, PipelineKind,
    RESULTS_CSV,
};
use xtalfind::imgcore::{load_manifest, MANIFEST_FILE};
use xtalfind::synthdrop::{generate_dataset, generate_samples, SourceProfile, SynthConfig};
use xtalfind::Error;

/// Desk models shrunk to 32 px and a handful of epochs.
fn tiny(kind: PipelineKind, repeats: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::for_scale(ModelScale::Desk);
    c.pipeline = kind;
    c.repeats = repeats;
    c.finder_model.input_size = 32;
    c.finder_train.image_size = 32;
    c.finder_train.epochs = 2;
    c.classifier_model.input_size = 32;
    c.classifier_train.image_size = 32;
    c.classifier_train.epochs = 2;
    c
}

fn items(per_class: usize) -> Vec<DataItem> {
    let cfg = SynthConfig { image_size: 64, background_clutter: 0.6, seed: 77, ..Default::default() };
    generate_samples(&cfg, &SourceProfile::defaults(), per_class).unwrap().iter().map(DataItem::from).collect()
}

#[test]
fn single_repeat_full_image_has_one_valid_result() {
    let r = run_pipeline_on(&items(2), &tiny(PipelineKind::FullImage, 1)).unwrap();
    assert_eq!(r.repeats.len(), 1);
    assert!(r.repeats[0].roc.is_valid());
    assert!((0.0..=1.0).contains(&r.mean_accuracy) && (0.0..=1.0).contains(&r.mean_auc));
    assert_eq!(r.std_auc, 0.0);
}

#[test]
fn aggregates_are_means_of_repeats_and_rerun_exactly() {
    let data = items(4);
    let cfg = ExperimentConfig { base_seed: 11, ..tiny(PipelineKind::ManualFinder, 5) };
    let r = run_pipeline_on(&data, &cfg).unwrap();
    let acc: Vec<f64> = r.repeats.iter().map(|x| x.accuracy).collect();
    let aucs: Vec<f64> = r.repeats.iter().map(|x| x.auc).collect();
    assert_eq!(r.mean_accuracy, acc.iter().sum::<f64>() / 5.0);
    assert_eq!(r.mean_auc, aucs.iter().sum::<f64>() / 5.0);
    let seeds: Vec<u64> = r.repeats.iter().map(|x| x.seed).collect();
    assert_eq!(seeds, vec![11, 12, 13, 14, 15]);
    // A single repeat rerun alone reproduces its numbers.
    let again = xtalfind::harness::run_repeat(&data, &cfg, 3).unwrap();
    assert_eq!(again, r.repeats[3]);
    // Every aggregate is recomputable from the persisted raw scores.
    let back = xtalfind::harness::ExperimentResult::from_json(&r.to_json().unwrap()).unwrap();
    assert_eq!(back, r);
}

#[test]
fn finder_never_trains_on_test_images() {
    let data = items(2);
    let r = run_pipeline_on(&data, &tiny(PipelineKind::UnetFinder, 2)).unwrap();
    for rep in &r.repeats {
        let test: HashSet<&String> = rep.test_ids.iter().collect();
        assert!(!rep.finder_train_ids.is_empty());
        assert!(rep.finder_train_ids.iter().all(|id| !test.contains(id)));
        assert!(rep.finder_table.is_some());
    }
    let shared = ExperimentConfig { finder_uses_test_images: true, ..tiny(PipelineKind::UnetFinder, 1) };
    let rep = &run_pipeline_on(&data, &shared).unwrap().repeats[0];
    assert_eq!(rep.finder_train_ids.len(), data.len());
}

#[test]
fn manual_finder_needs_masks() {
    let dir = tempfile::tempdir().unwrap();
    let synth = SynthConfig { image_size: 64, ..Default::default() };
    generate_dataset(&synth, &SourceProfile::defaults()[..1], 2, dir.path()).unwrap();
    let path = dir.path().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    let mask_col = header.split(',').position(|h| h == "mask").unwrap();
    let stripped: Vec<String> = std::iter::once(header.to_string())
        .chain(lines.map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f[mask_col] = "";
            f.join(",")
        }))
        .collect();
    fs::write(&path, stripped.join("\n") + "\n").unwrap();
    assert!(!load_manifest(dir.path()).unwrap().has_masks());

    let cfg = ExperimentConfig { dataset_root: dir.path().to_path_buf(), ..tiny(PipelineKind::ManualFinder, 1) };
    assert!(matches!(run_pipeline(&cfg), Err(Error::Manifest { .. })));
    let full = ExperimentConfig { pipeline: PipelineKind::FullImage, ..cfg };
    run_pipeline(&full).unwrap();
}

#[test]
fn comparison_and_reports_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let synth = SynthConfig { image_size: 64, background_clutter: 0.6, seed: 5, ..Default::default() };
    generate_dataset(&synth, &SourceProfile::defaults(), 2, &data).unwrap();
    let configs: Vec<ExperimentConfig> = [PipelineKind::ManualFinder, PipelineKind::FullImage]
        .into_iter()
        .map(|k| ExperimentConfig { dataset_root: data.clone(), ..tiny(k, 2) })
        .collect();
    let report = compare_pipelines(&configs).unwrap();
    assert_eq!(report.rows[report.baseline].pipeline, PipelineKind::FullImage);
    assert_eq!(report.rows[report.baseline].auc_delta, 0.0);
    let manual = &report.rows[0];
    assert_eq!(manual.auc_delta, manual.mean_auc - report.rows[1].mean_auc);

    let out = dir.path().join("cmp");
    let files = report.emit(&out).unwrap();
    assert!(files.iter().all(|f| f.is_file()));
    assert!(out.join("roc_comparison.png").is_file());

    let single = dir.path().join("single");
    emit_plots(&report.results[0], &single).unwrap();
    let rows = parse_results_csv(&fs::read_to_string(single.join(RESULTS_CSV)).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1], (report.results[0].repeats[1].accuracy, report.results[0].repeats[1].auc));
}
