use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{ClassLabel, RasterImage};
use crate::nn::{
    self, loss, AvgPool2d, Checkpoint, ConvSpec, ConvUnit, GlobalAvgPool, Layer, Linear, MaxPool2d, Mode, Padding, Parallel,
    Param, Sequential, Tensor,
};

pub const CHECKPOINT_KIND: &str = "inception";
/// Prefix of the classification layer's parameters; never loaded from
/// pretrained weights.
pub const HEAD_PREFIX: &str = "head.";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelScale {
    /// Inception-V3-depth stem, 3 + 4 + 2 blocks with two grid reductions.
    Full,
    /// Small stem and three inception blocks.
    #[default]
    Desk,
}

impl std::str::FromStr for ModelScale {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "full" => Ok(Self::Full),
            "desk" => Ok(Self::Desk),
            _ => Err(format!("unknown scale {s:?} (expected desk or full)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InceptionConfig {
    pub input_size: usize,
    pub num_classes: usize,
    pub scale: ModelScale,
    /// Checkpoint used as initial value for every layer except the head.
    #[serde(default)]
    pub pretrained_weights: Option<PathBuf>,
    #[serde(default)]
    pub init_seed: u64,
}

impl Default for InceptionConfig {
    fn default() -> Self {
        Self { input_size: 299, num_classes: 3, scale: ModelScale::Full, pretrained_weights: None, init_seed: 0 }
    }
}

/// Smallest input the full-scale stem's unpadded convolutions accept.
pub const FULL_MIN_INPUT: usize = 75;

impl InceptionConfig {
    pub fn desk(input_size: usize) -> Self {
        Self { input_size, scale: ModelScale::Desk, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size < 32 {
            return Err(Error::InvalidArgument(format!("input size {} is below 32", self.input_size)));
        }
        if self.scale == ModelScale::Full && self.input_size < FULL_MIN_INPUT {
            return Err(Error::InvalidArgument(format!("full scale needs input ≥ {FULL_MIN_INPUT}, got {}", self.input_size)));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidArgument(format!("need ≥ 2 classes, got {}", self.num_classes)));
        }
        Ok(())
    }
}

/// Output widths of the four branches and the 1x1 reductions feeding the
/// 3x3 and 5x5 convolutions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchWidths {
    pub one: usize,
    pub three_reduce: usize,
    pub three: usize,
    pub five_reduce: usize,
    pub five: usize,
    pub pool: usize,
}

impl BranchWidths {
    /// Reductions at half the branch output width (at least 1).
    pub fn from_outputs(one: usize, three: usize, five: usize, pool: usize) -> Self {
        Self { one, three_reduce: three.div_ceil(2), three, five_reduce: five.div_ceil(2), five, pool }
    }

    pub fn out_channels(&self) -> usize {
        self.one + self.three + self.five + self.pool
    }

    fn validate(&self) -> Result<()> {
        let w = [self.one, self.three_reduce, self.three, self.five_reduce, self.five, self.pool];
        if w.contains(&0) {
            return Err(Error::InvalidArgument(format!("branch widths must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Four parallel branches (1x1; 1x1 then 3x3; 1x1 then 5x5; 3x3 average
/// pool then 1x1) concatenated along channels. Spatial size is preserved.
pub struct InceptionBlock {
    pub name: String,
    pub in_channels: usize,
    pub widths: BranchWidths,
    layer: Parallel,
}

impl InceptionBlock {
    pub fn out_channels(&self) -> usize {
        self.widths.out_channels()
    }

    pub fn parameter_count(&mut self) -> usize {
        nn::trainable_count(&mut self.layer)
    }
}

impl Layer for InceptionBlock {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        self.layer.forward(x, mode)
    }
    fn backward(&mut self, grad: &Tensor) -> Tensor {
        self.layer.backward(grad)
    }
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.layer.visit_params(f)
    }
}

fn unit(name: String, cin: usize, cout: usize, k: usize, rng: &mut impl Rng) -> ConvUnit {
    ConvUnit::new(&name, ConvSpec::same(cin, cout, k, k, true), rng)
}

pub fn build_inception_block(
    name: &str,
    in_channels: usize,
    widths: &BranchWidths,
    rng: &mut impl Rng,
) -> Result<InceptionBlock> {
    widths.validate()?;
    if in_channels == 0 {
        return Err(Error::InvalidArgument("inception block needs input channels".into()));
    }
    let mut layer = Parallel::default();
    let mut b1 = Sequential::default();
    b1.push(unit(format!("{name}.b1x1"), in_channels, widths.one, 1, rng));
    let mut b3 = Sequential::default();
    b3.push(unit(format!("{name}.b3x3_reduce"), in_channels, widths.three_reduce, 1, rng));
    b3.push(unit(format!("{name}.b3x3"), widths.three_reduce, widths.three, 3, rng));
    let mut b5 = Sequential::default();
    b5.push(unit(format!("{name}.b5x5_reduce"), in_channels, widths.five_reduce, 1, rng));
    b5.push(unit(format!("{name}.b5x5"), widths.five_reduce, widths.five, 5, rng));
    let mut bp = Sequential::default();
    bp.push(AvgPool2d::new(3, 1, 1));
    bp.push(unit(format!("{name}.bpool"), in_channels, widths.pool, 1, rng));
    for b in [b1, b3, b5, bp] {
        layer.push(b);
    }
    Ok(InceptionBlock { name: name.to_string(), in_channels, widths: *widths, layer })
}

/// Unpadded stride-2 grid reduction: 3x3 conv, 1x1 -> 3x3 -> 3x3/2 conv,
/// and 3x3/2 max pool, concatenated. Output channels `a + b + in`.
fn grid_reduction(name: &str, cin: usize, a: usize, b_reduce: usize, b: usize, rng: &mut impl Rng) -> Parallel {
    let valid2 = |cin, cout| ConvSpec::same(cin, cout, 3, 3, true).strided(2, Padding::uniform(0));
    let mut p = Parallel::default();
    let mut s1 = Sequential::default();
    s1.push(ConvUnit::new(&format!("{name}.b3x3"), valid2(cin, a), rng));
    let mut s2 = Sequential::default();
    s2.push(unit(format!("{name}.bdbl_reduce"), cin, b_reduce, 1, rng));
    s2.push(unit(format!("{name}.bdbl_1"), b_reduce, b, 3, rng));
    s2.push(ConvUnit::new(&format!("{name}.bdbl_2"), valid2(b, b), rng));
    let mut s3 = Sequential::default();
    s3.push(MaxPool2d::new(3, 2, 0));
    for s in [s1, s2, s3] {
        p.push(s);
    }
    p
}

/// One row of the architecture listing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageInfo {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Output side length.
    pub size: usize,
}

pub struct ClassifierModel {
    config: InceptionConfig,
    body: Sequential,
    stages: Vec<StageInfo>,
    gap: GlobalAvgPool,
    head: Linear,
}

struct Builder<'a> {
    body: Sequential,
    stages: Vec<StageInfo>,
    channels: usize,
    size: usize,
    rng: &'a mut ChaCha8Rng,
}

impl Builder<'_> {
    fn conv(&mut self, name: &str, cout: usize, k: usize, stride: usize, padded: bool) {
        let pad = if padded { Padding::same(k, k) } else { Padding::uniform(0) };
        let spec = ConvSpec::same(self.channels, cout, k, k, true).strided(stride, pad);
        let u = ConvUnit::new(name, spec, self.rng);
        let (h, _) = u.conv.out_hw(self.size, self.size);
        self.record(name, cout, h);
        self.body.push(u);
    }

    fn max_pool(&mut self, name: &str, pad: usize) {
        let p = MaxPool2d::new(3, 2, pad);
        let (h, _) = p.out_hw(self.size, self.size);
        self.record(name, self.channels, h);
        self.body.push(p);
    }

    fn block(&mut self, name: &str, w: BranchWidths) -> Result<()> {
        let b = build_inception_block(name, self.channels, &w, self.rng)?;
        self.record(name, w.out_channels(), self.size);
        self.body.push(b);
        Ok(())
    }

    fn reduction(&mut self, name: &str, a: usize, b_reduce: usize, b: usize) {
        let p = grid_reduction(name, self.channels, a, b_reduce, b, self.rng);
        let h = (self.size - 3) / 2 + 1;
        self.record(name, a + b + self.channels, h);
        self.body.push(p);
    }

    fn record(&mut self, name: &str, cout: usize, size: usize) {
        self.stages.push(StageInfo { name: name.to_string(), in_channels: self.channels, out_channels: cout, size });
        self.channels = cout;
        self.size = size;
    }
}

pub fn build_classifier(config: &InceptionConfig) -> Result<ClassifierModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
    let mut b = Builder { body: Sequential::default(), stages: Vec::new(), channels: 3, size: config.input_size, rng: &mut rng };
    match config.scale {
        ModelScale::Desk => {
            b.conv("stem.0", 16, 3, 2, true);
            b.conv("stem.1", 32, 3, 1, true);
            b.max_pool("stem.pool", 1);
            b.block("mixed.0", BranchWidths { one: 16, three_reduce: 16, three: 24, five_reduce: 8, five: 8, pool: 8 })?;
            b.block("mixed.1", BranchWidths { one: 24, three_reduce: 24, three: 32, five_reduce: 8, five: 16, pool: 16 })?;
            b.max_pool("pool.1", 1);
            b.block("mixed.2", BranchWidths { one: 32, three_reduce: 32, three: 48, five_reduce: 12, five: 16, pool: 16 })?;
        }
        ModelScale::Full => {
            b.conv("stem.0", 32, 3, 2, false);
            b.conv("stem.1", 32, 3, 1, false);
            b.conv("stem.2", 64, 3, 1, true);
            b.max_pool("stem.pool0", 0);
            b.conv("stem.3", 80, 1, 1, false);
            b.conv("stem.4", 192, 3, 1, false);
            b.max_pool("stem.pool1", 0);
            for (i, pool) in [32, 64, 64].into_iter().enumerate() {
                b.block(
                    &format!("mixed.{i}"),
                    BranchWidths { one: 64, three_reduce: 48, three: 64, five_reduce: 64, five: 96, pool },
                )?;
            }
            b.reduction("reduce.0", 384, 64, 96);
            for (i, r) in [128, 160, 160, 192].into_iter().enumerate() {
                b.block(
                    &format!("mixed.{}", i + 3),
                    BranchWidths { one: 192, three_reduce: r, three: 192, five_reduce: r, five: 192, pool: 192 },
                )?;
            }
            b.reduction("reduce.1", 320, 192, 192);
            for i in 7..9 {
                b.block(
                    &format!("mixed.{i}"),
                    BranchWidths { one: 320, three_reduce: 384, three: 768, five_reduce: 448, five: 768, pool: 192 },
                )?;
            }
        }
    }
    let (body, stages, channels) = (b.body, b.stages, b.channels);
    let head = Linear::new("head", channels, config.num_classes, &mut rng);
    let mut model = ClassifierModel { config: config.clone(), body, stages, gap: GlobalAvgPool::default(), head };
    if let Some(path) = &config.pretrained_weights {
        let ck = Checkpoint::load(path)?;
        ck.load_into(&mut model, &|name| name.starts_with(HEAD_PREFIX))?;
    }
    Ok(model)
}

impl ClassifierModel {
    pub fn config(&self) -> &InceptionConfig {
        &self.config
    }

    pub fn stages(&self) -> &[StageInfo] {
        &self.stages
    }

    pub fn head_mut(&mut self) -> &mut Linear {
        &mut self.head
    }

    pub fn parameter_count(&mut self) -> usize {
        nn::trainable_count(self)
    }

    /// Excludes every parameter whose name starts with `prefix` from updates.
    /// Returns the number of tensors frozen.
    pub fn freeze_prefix(&mut self, prefix: &str) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| {
            if p.name.starts_with(prefix) {
                p.frozen = true;
                n += 1;
            }
        });
        n
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let s = self.config.input_size;
        if x.c() != 3 || x.h() != s || x.w() != s {
            return Err(Error::DimensionMismatch(format!(
                "classifier expects 3x{s}x{s} input, got {}x{}x{}",
                x.c(),
                x.h(),
                x.w()
            )));
        }
        Ok(())
    }

    /// Softmax probabilities, one row per batch item.
    pub fn predict_probabilities(&mut self, x: &Tensor) -> Result<Vec<Vec<f32>>> {
        self.check_input(x)?;
        let logits = self.forward(x, Mode::Eval);
        Ok(logits.data().chunks(self.config.num_classes).map(loss::softmax).collect())
    }

    /// Saved configuration never carries the pretrained path, so a loaded
    /// checkpoint saves back to identical bytes.
    pub fn save(&mut self, path: &Path) -> Result<()> {
        let cfg = InceptionConfig { pretrained_weights: None, ..self.config.clone() };
        let json = serde_json::to_string(&cfg).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Checkpoint::capture(CHECKPOINT_KIND, json, self).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck = Checkpoint::load(path)?;
        if ck.kind != CHECKPOINT_KIND {
            return Err(Error::Checkpoint(format!("expected a {CHECKPOINT_KIND} checkpoint, found {}", ck.kind)));
        }
        let cfg: InceptionConfig = serde_json::from_str(&ck.config_json).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut model = build_classifier(&InceptionConfig { pretrained_weights: None, ..cfg })?;
        ck.load_into(&mut model, &|_| false)?;
        Ok(model)
    }
}

impl Layer for ClassifierModel {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let f = self.body.forward(x, mode);
        let g = self.gap.forward(&f, mode);
        self.head.forward(&g, mode)
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let g = self.head.backward(grad);
        let g = self.gap.backward(&g);
        self.body.backward(&g)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.body.visit_params(f);
        self.head.visit_params(f);
    }
}

/// Per-class probabilities in `ClassLabel::ALL` order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub probabilities: [f64; 3],
}

impl ClassScores {
    pub fn new(probabilities: [f64; 3]) -> Result<Self> {
        let sum: f64 = probabilities.iter().sum();
        if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!("not a probability vector: {probabilities:?}")));
        }
        Ok(Self { probabilities })
    }

    pub fn get(&self, label: ClassLabel) -> f64 {
        self.probabilities[label.index()]
    }

    /// Highest-probability class; ties go to the earlier class.
    pub fn argmax(&self) -> ClassLabel {
        let mut best = 0;
        for i in 1..3 {
            if self.probabilities[i] > self.probabilities[best] {
                best = i;
            }
        }
        ClassLabel::from_index(best).expect("three classes")
    }
}

fn scores_from(p: &[f32]) -> Result<ClassScores> {
    if p.len() != 3 {
        return Err(Error::InvalidArgument(format!("class scores need 3 classes, model has {}", p.len())));
    }
    // Renormalize in f64 so the sum is 1 to double precision.
    let s: f64 = p.iter().map(|&v| v as f64).sum();
    ClassScores::new([p[0] as f64 / s, p[1] as f64 / s, p[2] as f64 / s])
}

pub fn predict_scores(model: &mut ClassifierModel, image: &RasterImage) -> Result<ClassScores> {
    let probs = model.predict_probabilities(&image.to_rgb().to_tensor())?;
    scores_from(&probs[0])
}

/// Scores for many images, evaluated `batch_size` at a time.
pub fn predict_scores_batch(model: &mut ClassifierModel, images: &[&RasterImage], batch_size: usize) -> Result<Vec<ClassScores>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(batch_size.max(1)) {
        let x = Tensor::stack(&chunk.iter().map(|i| i.to_rgb().to_tensor()).collect::<Vec<_>>());
        for p in model.predict_probabilities(&x)? {
            out.push(scores_from(&p)?);
        }
    }
    Ok(out)
}

pub fn predict_label(model: &mut ClassifierModel, image: &RasterImage) -> Result<ClassLabel> {
    Ok(predict_scores(model, image)?.argmax())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(5)
    }

    fn noise(size: usize, seed: u64) -> RasterImage {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        RasterImage::new(size, size, 3, (0..size * size * 3).map(|_| r.random()).collect()).unwrap()
    }

    #[test]
    fn block_concatenates_branches() {
        let w = BranchWidths::from_outputs(8, 8, 8, 8);
        let mut b = build_inception_block("m", 16, &w, &mut rng()).unwrap();
        assert_eq!(b.out_channels(), 32);
        let y = b.forward(&Tensor::zeros([1, 16, 32, 32]), Mode::Eval);
        assert_eq!(y.shape(), [1, 32, 32, 32]);
    }

    #[test]
    fn reduction_cuts_five_by_five_cost() {
        // Weights of the 5x5 path with a 1x1 reduction vs a direct 5x5 conv.
        let (cin, red, out) = (16, 8, 8);
        let reduced = ConvSpec::same(cin, red, 1, 1, true).weight_count() + ConvSpec::same(red, out, 5, 5, true).weight_count();
        let naive = ConvSpec::same(cin, out, 5, 5, true).weight_count();
        assert!(reduced < naive, "{reduced} vs {naive}");
        // Same count as the built branch.
        let w = BranchWidths { one: 1, three_reduce: 1, three: 1, five_reduce: red, five: out, pool: 1 };
        let mut b = build_inception_block("m", cin, &w, &mut rng()).unwrap();
        let others = ConvSpec::same(cin, 1, 1, 1, true).weight_count() * 3 + ConvSpec::same(1, 1, 3, 3, true).weight_count();
        assert_eq!(b.parameter_count(), reduced + others);
    }

    #[test]
    fn zero_width_is_rejected() {
        let w = BranchWidths::from_outputs(0, 8, 8, 8);
        assert!(build_inception_block("m", 4, &w, &mut rng()).is_err());
    }

    #[test]
    fn desk_scores_sum_to_one() {
        let mut m = build_classifier(&InceptionConfig::desk(64)).unwrap();
        let s = predict_scores(&mut m, &noise(64, 1)).unwrap();
        assert!((s.probabilities.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        assert_eq!(predict_scores(&mut m, &noise(64, 1)).unwrap(), s);
        assert!(predict_scores(&mut m, &noise(32, 1)).is_err());
    }

    #[test]
    fn zeroed_head_gives_uniform_scores_and_clear() {
        let mut m = build_classifier(&InceptionConfig::desk(64)).unwrap();
        m.head_mut().weight.value.fill(0.0);
        m.head_mut().bias.value.fill(0.0);
        let s = predict_scores(&mut m, &noise(64, 2)).unwrap();
        for p in s.probabilities {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        assert_eq!(predict_label(&mut m, &noise(64, 2)).unwrap(), ClassLabel::Clear);
    }

    #[test]
    fn argmax_and_ties() {
        assert_eq!(ClassScores::new([0.1, 0.7, 0.2]).unwrap().argmax(), ClassLabel::Crystals);
        let t = 1.0 / 3.0;
        assert_eq!(ClassScores { probabilities: [t, t, t] }.argmax(), ClassLabel::Clear);
        assert_eq!(ClassScores { probabilities: [0.2, 0.4, 0.4] }.argmax(), ClassLabel::Crystals);
    }

    #[test]
    fn config_validation() {
        assert!(build_classifier(&InceptionConfig::desk(16)).is_err());
        assert!(build_classifier(&InceptionConfig { input_size: 64, ..Default::default() }).is_err());
        assert!(build_classifier(&InceptionConfig { num_classes: 1, ..InceptionConfig::desk(64) }).is_err());
    }

    #[test]
    fn desk_stage_listing() {
        let m = build_classifier(&InceptionConfig::desk(64)).unwrap();
        let sizes: Vec<_> = m.stages().iter().map(|s| (s.name.as_str(), s.out_channels, s.size)).collect();
        assert_eq!(
            sizes,
            vec![
                ("stem.0", 16, 32),
                ("stem.1", 32, 32),
                ("stem.pool", 32, 16),
                ("mixed.0", 56, 16),
                ("mixed.1", 88, 16),
                ("pool.1", 88, 8),
                ("mixed.2", 112, 8)
            ]
        );
        for w in m.stages().windows(2) {
            assert_eq!(w[0].out_channels, w[1].in_channels);
        }
    }

    #[test]
    fn pretrained_load_skips_head_and_names_bad_layer() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pre.ckpt");
        let mut donor = build_classifier(&InceptionConfig { init_seed: 9, num_classes: 5, ..InceptionConfig::desk(64) }).unwrap();
        donor.save(&path).unwrap();
        let cfg = InceptionConfig { pretrained_weights: Some(path.clone()), ..InceptionConfig::desk(64) };
        let mut m = build_classifier(&cfg).unwrap();
        let stem = |m: &mut ClassifierModel| {
            let mut v = Vec::new();
            m.visit_params(&mut |p| {
                if p.name == "stem.0.conv.weight" {
                    v = p.value.clone()
                }
            });
            v
        };
        assert_eq!(stem(&mut m), stem(&mut donor));
        assert_eq!(m.head_mut().weight.shape, vec![3, 112]);

        let mut ck = Checkpoint::load(&path).unwrap();
        let t = ck.tensors.iter_mut().find(|t| t.name == "mixed.1.b3x3.conv.weight").unwrap();
        t.shape = vec![1, t.data.len()];
        ck.save(&path).unwrap();
        let err = build_classifier(&cfg).err().unwrap().to_string();
        assert!(err.contains("mixed.1.b3x3.conv.weight"), "{err}");
    }

    #[test]
    fn checkpoint_load_save_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
        build_classifier(&InceptionConfig { init_seed: 3, ..InceptionConfig::desk(48) }).unwrap().save(&a).unwrap();
        ClassifierModel::load(&a).unwrap().save(&b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn freeze_prefix_marks_params() {
        let mut m = build_classifier(&InceptionConfig::desk(64)).unwrap();
        assert_eq!(m.freeze_prefix("stem."), 10);
    }
}
