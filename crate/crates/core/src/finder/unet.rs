use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{binarize_mask, BinaryMask, RasterImage, ScoreMap};
use crate::nn::{loss, Checkpoint, Conv2d, ConvSpec, ConvUnit, Layer, MaxPool2d, Mode, Padding, Param, Tensor, Upsample2x};

pub const CHECKPOINT_KIND: &str = "unet";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UNetConfig {
    /// Number of downsampling units.
    pub depth: usize,
    /// Width of the first encoder stage.
    pub base_channels: usize,
    /// Square input side in pixels.
    pub input_size: usize,
    pub input_channels: usize,
    pub batch_norm: bool,
    /// Seed of the weight initializer.
    #[serde(default)]
    pub init_seed: u64,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self { depth: 4, base_channels: 64, input_size: 512, input_channels: 3, batch_norm: true, init_seed: 0 }
    }
}

impl UNetConfig {
    /// Workstation-sized variant.
    pub fn desk() -> Self {
        Self { depth: 3, base_channels: 8, input_size: 128, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.base_channels == 0 || self.input_channels == 0 {
            return Err(Error::InvalidArgument("depth, base_channels and input_channels must be ≥ 1".into()));
        }
        let unit = 1usize << self.depth;
        if self.input_size == 0 || !self.input_size.is_multiple_of(unit) {
            return Err(Error::InvalidArgument(format!(
                "input size {} is not divisible by 2^{} = {unit}",
                self.input_size, self.depth
            )));
        }
        Ok(())
    }

    /// Channel width of encoder stage `k`; `k == depth` is the bottleneck.
    pub fn stage_channels(&self, k: usize) -> usize {
        self.base_channels << k
    }
}

/// One row of the architecture listing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerInfo {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Output side length.
    pub size: usize,
}

struct DecoderStage {
    up: Upsample2x,
    up_conv: ConvUnit,
    convs: [ConvUnit; 2],
}

/// U-Net with same-padded convolutions: output height/width equal the input.
pub struct SegmentationModel {
    config: UNetConfig,
    encoder: Vec<[ConvUnit; 2]>,
    pools: Vec<MaxPool2d>,
    bottleneck: [ConvUnit; 2],
    /// Indexed by encoder stage; run from deepest to shallowest.
    decoder: Vec<DecoderStage>,
    head: Conv2d,
}

fn double_conv(name: &str, cin: usize, cout: usize, bn: bool, rng: &mut ChaCha8Rng) -> [ConvUnit; 2] {
    [
        ConvUnit::new(&format!("{name}.conv0"), ConvSpec::same(cin, cout, 3, 3, bn), rng),
        ConvUnit::new(&format!("{name}.conv1"), ConvSpec::same(cout, cout, 3, 3, bn), rng),
    ]
}

/// Construct a U-Net; weights are drawn from `config.init_seed`.
pub fn build_unet(config: &UNetConfig) -> Result<SegmentationModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
    let bn = config.batch_norm;
    let mut encoder = Vec::new();
    let mut pools = Vec::new();
    let mut cin = config.input_channels;
    for k in 0..config.depth {
        let c = config.stage_channels(k);
        encoder.push(double_conv(&format!("enc{k}"), cin, c, bn, &mut rng));
        pools.push(MaxPool2d::new(2, 2, 0));
        cin = c;
    }
    encoder[0][0].conv.skip_input_grad = true;
    let bottleneck = double_conv("bottleneck", cin, config.stage_channels(config.depth), bn, &mut rng);
    let mut decoder = Vec::new();
    for k in 0..config.depth {
        let below = config.stage_channels(k + 1);
        let c = config.stage_channels(k);
        decoder.push(DecoderStage {
            up: Upsample2x,
            up_conv: ConvUnit::new(&format!("dec{k}.up"), ConvSpec::same(below, c, 2, 2, bn), &mut rng),
            convs: double_conv(&format!("dec{k}"), 2 * c, c, bn, &mut rng),
        });
    }
    let head = Conv2d::new("head", config.base_channels, 1, (1, 1), 1, Padding::default(), true, &mut rng);
    Ok(SegmentationModel { config: config.clone(), encoder, pools, bottleneck, decoder, head })
}

impl SegmentationModel {
    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn parameter_count(&mut self) -> usize {
        crate::nn::trainable_count(self)
    }

    /// Architecture listing in execution order.
    pub fn layers(&self) -> Vec<LayerInfo> {
        let cfg = &self.config;
        let mut out = Vec::new();
        let mut size = cfg.input_size;
        let mut row = |name: String, unit_in: usize, unit_out: usize, size: usize| {
            out.push(LayerInfo { name, in_channels: unit_in, out_channels: unit_out, size })
        };
        for (k, stage) in self.encoder.iter().enumerate() {
            for (i, u) in stage.iter().enumerate() {
                row(format!("enc{k}.conv{i}"), u.conv.in_channels, u.out_channels(), size);
            }
            size /= 2;
            row(format!("enc{k}.pool"), stage[1].out_channels(), stage[1].out_channels(), size);
        }
        for (i, u) in self.bottleneck.iter().enumerate() {
            row(format!("bottleneck.conv{i}"), u.conv.in_channels, u.out_channels(), size);
        }
        for k in (0..cfg.depth).rev() {
            let d = &self.decoder[k];
            size *= 2;
            row(format!("dec{k}.up"), d.up_conv.conv.in_channels, d.up_conv.out_channels(), size);
            for (i, u) in d.convs.iter().enumerate() {
                row(format!("dec{k}.conv{i}"), u.conv.in_channels, u.out_channels(), size);
            }
        }
        row("head".into(), self.head.in_channels, 1, size);
        out
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let [_, c, h, w] = x.shape();
        let s = self.config.input_size;
        if (c, h, w) != (self.config.input_channels, s, s) {
            return Err(Error::DimensionMismatch(format!(
                "finder expects {s}x{s}x{} input, got {h}x{w}x{c}",
                self.config.input_channels
            )));
        }
        Ok(())
    }

    /// Per-pixel drop probabilities for a batch, shape `[n, 1, s, s]`.
    pub fn predict_scores(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        Ok(self.forward(x, Mode::Eval).map(loss::sigmoid))
    }

    pub fn save(&mut self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(&self.config).expect("config serializes");
        Checkpoint::capture(CHECKPOINT_KIND, json, self).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck = Checkpoint::load(path)?;
        if ck.kind != CHECKPOINT_KIND {
            return Err(Error::Checkpoint(format!("expected a {CHECKPOINT_KIND} checkpoint, found {}", ck.kind)));
        }
        let config: UNetConfig =
            serde_json::from_str(&ck.config_json).map_err(|e| Error::Checkpoint(format!("embedded config: {e}")))?;
        let mut model = build_unet(&config)?;
        ck.load_into(&mut model, &|_| false)?;
        Ok(model)
    }
}

impl Layer for SegmentationModel {
    /// Returns logits; apply a sigmoid for probabilities.
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let mut skips = Vec::with_capacity(self.config.depth);
        let mut h = x.clone();
        for (stage, pool) in self.encoder.iter_mut().zip(&mut self.pools) {
            h = stage[0].forward(&h, mode);
            h = stage[1].forward(&h, mode);
            let down = pool.forward(&h, mode);
            skips.push(h);
            h = down;
        }
        h = self.bottleneck[0].forward(&h, mode);
        h = self.bottleneck[1].forward(&h, mode);
        for (d, skip) in self.decoder.iter_mut().zip(&skips).rev() {
            let u = d.up.forward(&h, mode);
            let u = d.up_conv.forward(&u, mode);
            let cat = Tensor::concat_channels(&[&u, skip]);
            h = d.convs[0].forward(&cat, mode);
            h = d.convs[1].forward(&h, mode);
        }
        self.head.forward(&h, mode)
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let mut g = self.head.backward(grad);
        let mut skip_grads = Vec::with_capacity(self.config.depth);
        for d in self.decoder.iter_mut() {
            g = d.convs[1].backward(&g);
            g = d.convs[0].backward(&g);
            let c = d.up_conv.out_channels();
            let mut parts = g.split_channels(&[c, c]);
            skip_grads.push(parts.pop().expect("two parts"));
            g = d.up_conv.backward(&parts[0]);
            g = d.up.backward(&g);
        }
        g = self.bottleneck[1].backward(&g);
        g = self.bottleneck[0].backward(&g);
        for ((stage, pool), skip_grad) in self.encoder.iter_mut().zip(&mut self.pools).zip(&skip_grads).rev() {
            g = pool.backward(&g);
            g.add_assign(skip_grad);
            g = stage[1].backward(&g);
            g = stage[0].backward(&g);
        }
        g
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for stage in &mut self.encoder {
            stage.iter_mut().for_each(|u| u.visit_params(f));
        }
        self.bottleneck.iter_mut().for_each(|u| u.visit_params(f));
        for d in &mut self.decoder {
            d.up_conv.visit_params(f);
            d.convs.iter_mut().for_each(|u| u.visit_params(f));
        }
        self.head.visit_params(f);
    }
}

/// Segment one image already resized to the model input.
pub fn predict_mask(model: &mut SegmentationModel, image: &RasterImage, threshold: f32) -> Result<(BinaryMask, ScoreMap)> {
    let x = image.to_tensor();
    let scores = model.predict_scores(&x)?;
    let map = ScoreMap::single(image.height(), image.width(), scores.into_vec())?;
    Ok((binarize_mask(&map, threshold)?, map))
}
