use rand::Rng;

use super::layers::{BatchNorm2d, Conv2d, Layer, Mode, Padding, Relu};
use super::param::Param;
use super::tensor::Tensor;

/// Convolution, optional batch norm, optional ReLU.
///
/// With batch norm the convolution carries no bias (the norm's shift
/// replaces it).
pub struct ConvUnit {
    pub conv: Conv2d,
    pub bn: Option<BatchNorm2d>,
    relu: Option<Relu>,
}

#[derive(Clone, Copy, Debug)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub pad: Padding,
    pub batch_norm: bool,
    pub relu: bool,
}

impl ConvSpec {
    /// Stride-1 "same" convolution followed by (optional BN and) ReLU.
    pub fn same(in_channels: usize, out_channels: usize, kh: usize, kw: usize, batch_norm: bool) -> Self {
        Self { in_channels, out_channels, kernel: (kh, kw), stride: 1, pad: Padding::same(kh, kw), batch_norm, relu: true }
    }

    pub fn strided(mut self, stride: usize, pad: Padding) -> Self {
        self.stride = stride;
        self.pad = pad;
        self
    }

    pub fn weight_count(&self) -> usize {
        let (kh, kw) = self.kernel;
        let w = self.in_channels * self.out_channels * kh * kw;
        if self.batch_norm {
            w + 2 * self.out_channels
        } else {
            w + self.out_channels
        }
    }
}

impl ConvUnit {
    pub fn new(name: &str, spec: ConvSpec, rng: &mut impl Rng) -> Self {
        let conv = Conv2d::new(
            &format!("{name}.conv"),
            spec.in_channels,
            spec.out_channels,
            spec.kernel,
            spec.stride,
            spec.pad,
            !spec.batch_norm,
            rng,
        );
        Self {
            conv,
            bn: spec.batch_norm.then(|| BatchNorm2d::new(&format!("{name}.bn"), spec.out_channels)),
            relu: spec.relu.then(Relu::default),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.conv.out_channels
    }
}

impl Layer for ConvUnit {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let mut y = self.conv.forward(x, mode);
        if let Some(bn) = &mut self.bn {
            y = bn.forward(&y, mode);
        }
        if let Some(relu) = &mut self.relu {
            y = relu.forward(&y, mode);
        }
        y
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let mut g = match &mut self.relu {
            Some(relu) => relu.backward(grad),
            None => grad.clone(),
        };
        if let Some(bn) = &mut self.bn {
            g = bn.backward(&g);
        }
        self.conv.backward(&g)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.conv.visit_params(f);
        if let Some(bn) = &mut self.bn {
            bn.visit_params(f);
        }
    }
}

/// Layers applied in order.
#[derive(Default)]
pub struct Sequential {
    pub layers: Vec<Box<dyn Layer + Send + Sync>>,
}

impl Sequential {
    pub fn push(&mut self, layer: impl Layer + Send + Sync + 'static) {
        self.layers.push(Box::new(layer));
    }
}

impl Layer for Sequential {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let mut y = x.clone();
        for layer in &mut self.layers {
            y = layer.forward(&y, mode);
        }
        y
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let mut g = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g);
        }
        g
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for layer in &mut self.layers {
            layer.visit_params(f);
        }
    }
}

/// Branches applied to the same input, outputs concatenated along channels.
#[derive(Default)]
pub struct Parallel {
    pub branches: Vec<Sequential>,
    widths: Vec<usize>,
}

impl Parallel {
    pub fn push(&mut self, branch: Sequential) {
        self.branches.push(branch);
    }
}

impl Layer for Parallel {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let outs: Vec<Tensor> = self.branches.iter_mut().map(|b| b.forward(x, mode)).collect();
        self.widths = outs.iter().map(Tensor::c).collect();
        Tensor::concat_channels(&outs.iter().collect::<Vec<_>>())
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let parts = grad.split_channels(&self.widths);
        let mut acc: Option<Tensor> = None;
        for (b, g) in self.branches.iter_mut().zip(&parts) {
            let gi = b.backward(g);
            match &mut acc {
                Some(a) => a.add_assign(&gi),
                None => acc = Some(gi),
            }
        }
        acc.expect("at least one branch")
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for b in &mut self.branches {
            b.visit_params(f);
        }
    }
}
