use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::{ClassifierAugmentSpec, FinderAugmentSpec};
use crate::classifier::{ClassifierTrainConfig, InceptionConfig, ModelScale};
use crate::cropper::DEFAULT_MARGIN;
use crate::error::{Error, Result};
use crate::finder::{FinderTrainConfig, UNetConfig};
use crate::imgcore::SplitSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    /// Classifier on the whole resized plate image.
    FullImage,
    /// Classifier on the drop cut out with the ground-truth mask.
    ManualFinder,
    /// Classifier on the drop cut out with a trained U-Net's mask.
    UnetFinder,
}

impl PipelineKind {
    pub const ALL: [PipelineKind; 3] = [Self::FullImage, Self::ManualFinder, Self::UnetFinder];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::FullImage => "full_image",
            Self::ManualFinder => "manual_finder",
            Self::UnetFinder => "unet_finder",
        }
    }
}

impl std::fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PipelineKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown pipeline {s:?} (expected full_image, manual_finder or unet_finder)"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset_root: PathBuf,
    pub pipeline: PipelineKind,
    pub finder_model: UNetConfig,
    pub finder_train: FinderTrainConfig,
    pub finder_augment: FinderAugmentSpec,
    pub classifier_model: InceptionConfig,
    pub classifier_train: ClassifierTrainConfig,
    pub classifier_augment: ClassifierAugmentSpec,
    /// Classifier train/test split; its seed is replaced per repeat.
    pub split: SplitSpec,
    /// Fraction of the finder's pool used for fitting; the rest selects the
    /// best epoch.
    pub finder_train_fraction: f64,
    /// Fraction of the classifier training split held out to select the
    /// best epoch. Zero selects on the test split instead.
    pub validation_fraction: f64,
    /// Train the finder on every image, test images included.
    pub finder_uses_test_images: bool,
    pub margin_fraction: f64,
    pub repeats: usize,
    /// Repeat `k` runs with seed `base_seed + k`.
    pub base_seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::for_scale(ModelScale::Full)
    }
}

impl ExperimentConfig {
    /// Full-size architecture and training settings (`Full`), or a
    /// configuration that trains in minutes on one CPU core (`Desk`).
    pub fn for_scale(scale: ModelScale) -> Self {
        let mut cfg = Self {
            dataset_root: PathBuf::from("data"),
            pipeline: PipelineKind::UnetFinder,
            finder_model: UNetConfig::default(),
            finder_train: FinderTrainConfig::default(),
            finder_augment: FinderAugmentSpec::default(),
            classifier_model: InceptionConfig::default(),
            classifier_train: ClassifierTrainConfig::default(),
            classifier_augment: ClassifierAugmentSpec::default(),
            split: SplitSpec::new(0.7, 0),
            finder_train_fraction: 0.7,
            validation_fraction: 0.2,
            finder_uses_test_images: false,
            margin_fraction: DEFAULT_MARGIN,
            repeats: 5,
            base_seed: 0,
            output_dir: PathBuf::from("out"),
        };
        if scale == ModelScale::Desk {
            cfg.finder_model = UNetConfig { input_size: 64, ..UNetConfig::desk() };
            cfg.finder_train = FinderTrainConfig { image_size: 64, epochs: 30, learning_rate: 1e-3, ..cfg.finder_train };
            cfg.classifier_model = InceptionConfig::desk(64);
            cfg.classifier_train =
                ClassifierTrainConfig { image_size: 64, epochs: 40, learning_rate: 1e-3, ..cfg.classifier_train };
        }
        cfg
    }

    pub fn scale(&self) -> ModelScale {
        self.classifier_model.scale
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be ≥ 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!("validation fraction {} outside [0, 1)", self.validation_fraction)));
        }
        if !(self.finder_train_fraction > 0.0 && self.finder_train_fraction < 1.0) {
            return Err(Error::Config(format!("finder train fraction {} outside (0, 1)", self.finder_train_fraction)));
        }
        if self.finder_model.input_size != self.finder_train.image_size {
            return Err(Error::Config("finder model and training image sizes differ".into()));
        }
        if self.classifier_model.input_size != self.classifier_train.image_size {
            return Err(Error::Config("classifier model and training image sizes differ".into()));
        }
        self.finder_model.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.classifier_model.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.finder_train.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.classifier_train.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Settings for repeat `k`: every seed becomes `base_seed + k`.
    pub fn for_repeat(&self, k: usize) -> Self {
        let s = self.base_seed + k as u64;
        let mut c = self.clone();
        c.split.seed = s;
        c.finder_model.init_seed = s;
        c.finder_train.seed = s;
        c.finder_augment.seed = s;
        c.classifier_model.init_seed = s;
        c.classifier_train.seed = s;
        c.classifier_augment.seed = s;
        c
    }

    /// Read TOML (`.toml`) or JSON (anything else); absent keys keep the
    /// full-scale defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_file_over(path, &Self::default())
    }

    /// Like `from_file`, but keys absent from the file (at any nesting
    /// level) keep their values from `base`.
    pub fn from_file_over(path: &Path, base: &Self) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let bad = |e: &dyn std::fmt::Display| Error::Config(format!("{}: {e}", path.display()));
        let overlay: serde_json::Value = if is_toml {
            toml::from_str(&text).map_err(|e| bad(&e))?
        } else {
            serde_json::from_str(&text).map_err(|e| bad(&e))?
        };
        let mut merged = serde_json::to_value(base).map_err(|e| bad(&e))?;
        merge(&mut merged, overlay);
        serde_json::from_value(merged).map_err(|e| bad(&e))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

fn merge(base: &mut serde_json::Value, overlay: serde_json::Value) {
    match (base, overlay) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
