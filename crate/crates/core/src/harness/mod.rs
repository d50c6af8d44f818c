//! Experiment orchestration: the three classification pipelines, repeated
//! runs, finder evaluation, pipeline comparison and report files.

mod config;
mod demo;
mod pipeline;
pub mod plot;
mod report;

pub use config::{ExperimentConfig, PipelineKind};
pub use demo::{demo_config, ensure_demo_dataset, run_and_emit, DEMO_CLUTTER, DEMO_PER_CLASS};
pub use pipeline::{
    evaluate_finder, load_items, mean_std, predict_native_mask, resize_seg_sample, run_pipeline, run_pipeline_on, run_repeat,
    score_masks, DataItem, ExperimentResult, FinderRow, FinderTable, RepeatResult, ROC_POSITIVE,
};
pub use report::{
    compare_pipelines, emit_plots, finder_table_csv, finder_table_text, parse_results_csv, results_csv, scores_csv,
    ComparisonReport, ComparisonRow, ACCURACY_CSV, ACCURACY_PNG, RESULTS_CSV, RESULTS_TXT, RESULT_JSON, ROC_PNG,
};
