//! Self-contained experiment used when no configuration file is given:
//! a small cluttered synthetic dataset generated beside the outputs.

use std::path::Path;

use super::config::ExperimentConfig;
use super::pipeline::{run_pipeline, ExperimentResult};
use super::report::emit_plots;
use crate::classifier::ModelScale;
use crate::error::Result;
use crate::imgcore::MANIFEST_FILE;
use crate::synthdrop::{generate_dataset, SourceProfile, SynthConfig};

/// Samples per (profile, class) in the demo dataset.
pub const DEMO_PER_CLASS: usize = 6;
pub const DEMO_CLUTTER: f64 = 0.6;

/// Experiment over `out/dataset` with every seed derived from `seed`.
pub fn demo_config(scale: ModelScale, seed: u64, out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        dataset_root: out.join("dataset"),
        output_dir: out.to_path_buf(),
        base_seed: seed,
        ..ExperimentConfig::for_scale(scale)
    }
}

/// Generate the demo dataset at `cfg.dataset_root` unless a manifest is
/// already there. Returns whether anything was written.
pub fn ensure_demo_dataset(cfg: &ExperimentConfig) -> Result<bool> {
    if cfg.dataset_root.join(MANIFEST_FILE).is_file() {
        return Ok(false);
    }
    let synth = SynthConfig { background_clutter: DEMO_CLUTTER, seed: cfg.base_seed, ..Default::default() };
    generate_dataset(&synth, &SourceProfile::defaults(), DEMO_PER_CLASS, &cfg.dataset_root)?;
    Ok(true)
}

/// Run the configured pipeline and write its report into `cfg.output_dir`.
pub fn run_and_emit(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let result = run_pipeline(cfg)?;
    emit_plots(&result, &cfg.output_dir)?;
    Ok(result)
}
