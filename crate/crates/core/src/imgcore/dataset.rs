use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::raster::{BinaryMask, RasterImage};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.csv";

/// Crystallization state. "Others" is deliberately not representable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    Clear,
    Crystals,
    Precipitate,
}

impl ClassLabel {
    /// Fixed class order, also used for argmax tie-breaking.
    pub const ALL: [ClassLabel; 3] = [ClassLabel::Clear, ClassLabel::Crystals, ClassLabel::Precipitate];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Clear => "Clear",
            ClassLabel::Crystals => "Crystals",
            ClassLabel::Precipitate => "Precipitate",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "clear" => Ok(ClassLabel::Clear),
            "crystals" | "crystal" => Ok(ClassLabel::Crystals),
            "precipitate" => Ok(ClassLabel::Precipitate),
            "others" | "other" => Err(format!("label {s:?} is excluded from the class set")),
            _ => Err(format!("unknown label {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub image: RasterImage,
    pub label: ClassLabel,
    pub source_tag: String,
    pub id: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegSample {
    pub image: RasterImage,
    pub mask: BinaryMask,
    pub source_tag: String,
    pub id: String,
}

impl SegSample {
    pub fn new(image: RasterImage, mask: BinaryMask, source_tag: impl Into<String>, id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if !mask.matches_image(&image) {
            return Err(Error::DimensionMismatch(format!(
                "sample {id}: mask {}x{} vs image {}x{}",
                mask.height(),
                mask.width(),
                image.height(),
                image.width()
            )));
        }
        Ok(Self { image, mask, source_tag: source_tag.into(), id })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to the manifest root.
    pub image: PathBuf,
    pub mask: Option<PathBuf>,
    pub label: Option<ClassLabel>,
    pub source_tag: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    id: String,
    image: String,
    mask: String,
    label: String,
    source_tag: String,
}

/// Dataset index: entries reference image/mask files under `root`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

/// Read `root/manifest.csv` and check every referenced file exists.
pub fn load_manifest(root: &Path) -> Result<DatasetManifest> {
    let path = root.join(MANIFEST_FILE);
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (line, row) in reader.deserialize::<ManifestRow>().enumerate() {
        let row =
            row.map_err(|e| Error::Manifest { entry: format!("row {}", line + 1), message: format!("malformed row: {e}") })?;
        let bad = |message: String| Error::Manifest { entry: row.id.clone(), message };
        if row.id.trim().is_empty() {
            return Err(Error::Manifest { entry: format!("row {}", line + 1), message: "empty id".into() });
        }
        if !seen.insert(row.id.clone()) {
            return Err(bad("duplicate id".into()));
        }
        let image = PathBuf::from(&row.image);
        if !root.join(&image).is_file() {
            return Err(bad(format!("image file {} does not exist", root.join(&image).display())));
        }
        let mask = (!row.mask.trim().is_empty()).then(|| PathBuf::from(row.mask.trim()));
        if let Some(m) = &mask {
            if !root.join(m).is_file() {
                return Err(bad(format!("mask file {} does not exist", root.join(m).display())));
            }
        }
        let label = if row.label.trim().is_empty() { None } else { Some(row.label.parse::<ClassLabel>().map_err(bad)?) };
        entries.push(ManifestEntry { id: row.id, image, mask, label, source_tag: row.source_tag });
    }
    Ok(DatasetManifest { root: root.to_path_buf(), entries })
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Self {
        Self { root: root.into(), entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn has_masks(&self) -> bool {
        self.entries.iter().all(|e| e.mask.is_some())
    }

    /// Write `root/manifest.csv`.
    pub fn write(&self) -> Result<()> {
        fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))?;
        let path = self.root.join(MANIFEST_FILE);
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::io(&path, e.into()))?;
        for e in &self.entries {
            w.serialize(ManifestRow {
                id: e.id.clone(),
                image: e.image.to_string_lossy().into_owned(),
                mask: e.mask.as_ref().map(|m| m.to_string_lossy().into_owned()).unwrap_or_default(),
                label: e.label.map(|l| l.to_string()).unwrap_or_default(),
                source_tag: e.source_tag.clone(),
            })
            .map_err(|err| Error::io(&path, err.into()))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }

    pub fn load_image(&self, entry: &ManifestEntry) -> Result<RasterImage> {
        RasterImage::load_png(&self.root.join(&entry.image))
    }

    pub fn load_mask(&self, entry: &ManifestEntry) -> Result<Option<BinaryMask>> {
        entry.mask.as_ref().map(|m| BinaryMask::load_png(&self.root.join(m))).transpose()
    }

    pub fn seg_samples(&self) -> Result<Vec<SegSample>> {
        self.entries
            .iter()
            .map(|e| {
                let mask = self
                    .load_mask(e)?
                    .ok_or_else(|| Error::Manifest { entry: e.id.clone(), message: "no mask for segmentation sample".into() })?;
                SegSample::new(self.load_image(e)?, mask, e.source_tag.clone(), e.id.clone())
            })
            .collect()
    }

    pub fn labeled_samples(&self) -> Result<Vec<LabeledSample>> {
        self.entries
            .iter()
            .map(|e| {
                let label = e.label.ok_or_else(|| Error::Manifest {
                    entry: e.id.clone(),
                    message: "no label for classification sample".into(),
                })?;
                Ok(LabeledSample { image: self.load_image(e)?, label, source_tag: e.source_tag.clone(), id: e.id.clone() })
            })
            .collect()
    }

    fn subset(&self, entries: Vec<ManifestEntry>) -> DatasetManifest {
        DatasetManifest { root: self.root.clone(), entries }
    }
}

/// Seeded shuffle-then-prefix split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Self {
        Self { train_fraction, seed }
    }

    /// Permuted indices and the train count for `n` items.
    pub fn assign(&self, n: usize) -> Result<(Vec<usize>, usize)> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!("train fraction {} outside (0, 1)", self.train_fraction)));
        }
        let n_train = (self.train_fraction * n as f64).round() as usize;
        if n_train == 0 || n_train >= n {
            return Err(Error::InvalidArgument(format!(
                "split of {n} items at fraction {} leaves a side empty",
                self.train_fraction
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        Ok((idx, n_train))
    }
}

pub fn split_dataset(manifest: &DatasetManifest, spec: &SplitSpec) -> Result<(DatasetManifest, DatasetManifest)> {
    if manifest.is_empty() {
        return Err(Error::EmptyDataset("cannot split an empty manifest".into()));
    }
    let (idx, n_train) = spec.assign(manifest.len())?;
    let pick = |ids: &[usize]| ids.iter().map(|&i| manifest.entries[i].clone()).collect();
    Ok((manifest.subset(pick(&idx[..n_train])), manifest.subset(pick(&idx[n_train..]))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn manifest(n: usize) -> DatasetManifest {
        DatasetManifest::new(
            "/nonexistent",
            (0..n)
                .map(|i| ManifestEntry {
                    id: format!("s{i}"),
                    image: format!("images/s{i}.png").into(),
                    mask: None,
                    label: Some(ClassLabel::ALL[i % 3]),
                    source_tag: "src".into(),
                })
                .collect(),
        )
    }

    fn write_dataset(dir: &Path, rows: &[(&str, &str, &str)]) {
        fs::create_dir_all(dir.join("images")).unwrap();
        let mut csv = String::from("id,image,mask,label,source_tag\n");
        for (id, label, file) in rows {
            csv.push_str(&format!("{id},images/{file},,{label},lab\n"));
        }
        fs::write(dir.join(MANIFEST_FILE), csv).unwrap();
        for (_, _, file) in rows {
            let p = dir.join("images").join(file);
            if !file.starts_with("missing") {
                RasterImage::filled(2, 2, 1, 7).save_png(&p).unwrap();
            }
        }
    }

    #[test]
    fn loads_valid_manifest() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &[("a", "Clear", "a.png"), ("b", "Crystals", "b.png"), ("c", "Precipitate", "c.png")]);
        let m = load_manifest(dir.path()).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.entries[1].label, Some(ClassLabel::Crystals));
        assert_eq!(m.labeled_samples().unwrap()[2].image.height(), 2);
    }

    #[test]
    fn missing_image_names_the_entry() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &[("a", "Clear", "a.png"), ("ghost", "Clear", "missing.png")]);
        let err = load_manifest(dir.path()).unwrap_err().to_string();
        assert!(err.contains("ghost"), "{err}");
    }

    #[test]
    fn others_label_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &[("o1", "Others", "o1.png")]);
        let err = load_manifest(dir.path()).unwrap_err().to_string();
        assert!(err.contains("o1") && err.contains("excluded"), "{err}");
    }

    #[test]
    fn duplicate_ids_and_malformed_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &[("a", "Clear", "a.png"), ("a", "Clear", "b.png")]);
        assert!(load_manifest(dir.path()).unwrap_err().to_string().contains("duplicate"));
        fs::write(dir.path().join(MANIFEST_FILE), "id,image,mask,label,source_tag\nx,images/a.png\n").unwrap();
        assert!(load_manifest(dir.path()).unwrap_err().to_string().contains("malformed"));
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &[("a", "Clear", "a.png"), ("b", "Crystals", "b.png")]);
        let mut m = load_manifest(dir.path()).unwrap();
        RasterImage::filled(2, 2, 1, 255).save_png(&dir.path().join("images/a_mask.png")).unwrap();
        m.entries[0].mask = Some("images/a_mask.png".into());
        m.entries[1].label = None;
        m.write().unwrap();
        assert_eq!(load_manifest(dir.path()).unwrap(), m);
    }

    #[test]
    fn split_sizes_follow_rounding() {
        let (t, e) = split_dataset(&manifest(150), &SplitSpec::new(0.6, 7)).unwrap();
        assert_eq!((t.len(), e.len()), (90, 60));
        let (t, e) = split_dataset(&manifest(10), &SplitSpec::new(0.7, 1)).unwrap();
        assert_eq!((t.len(), e.len()), (7, 3));
    }

    #[test]
    fn split_is_deterministic_and_rejects_empty_sides() {
        let m = manifest(40);
        let s = SplitSpec::new(0.6, 7);
        assert_eq!(split_dataset(&m, &s).unwrap(), split_dataset(&m, &s).unwrap());
        assert!(split_dataset(&manifest(1), &SplitSpec::new(0.5, 0)).is_err());
        assert!(split_dataset(&manifest(3), &SplitSpec::new(0.1, 0)).is_err());
        assert!(split_dataset(&manifest(0), &s).is_err());
    }

    #[test]
    fn label_parsing() {
        assert_eq!("crystals".parse::<ClassLabel>(), Ok(ClassLabel::Crystals));
        assert!("Others".parse::<ClassLabel>().is_err());
        assert!("Skin".parse::<ClassLabel>().is_err());
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 2usize..1000, frac in 0.05f64..0.95, seed in any::<u64>()) {
            let m = manifest(n);
            let spec = SplitSpec::new(frac, seed);
            let n_train = (frac * n as f64).round() as usize;
            prop_assume!(n_train >= 1 && n_train < n);
            let (t, e) = split_dataset(&m, &spec).unwrap();
            prop_assert_eq!(t.len(), n_train);
            let mut ids: Vec<_> = t.entries.iter().chain(&e.entries).map(|x| x.id.clone()).collect();
            ids.sort();
            let mut all: Vec<_> = m.entries.iter().map(|x| x.id.clone()).collect();
            all.sort();
            prop_assert_eq!(ids, all);
        }
    }
}
