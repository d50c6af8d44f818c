//! Layers with hand-written backward passes.
//!
//! Each layer caches what its backward pass needs during a training-mode
//! forward call. All loops run in a fixed order, so repeated runs are
//! bitwise identical.

use matrixmultiply::sgemm;
use rand::Rng;

use super::param::{Param, ParamKind};
use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub trait Layer {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor;

    /// Propagate `grad` (gradient w.r.t. the last forward output), accumulate
    /// parameter gradients and return the gradient w.r.t. the input.
    fn backward(&mut self, grad: &Tensor) -> Tensor;

    fn visit_params(&mut self, _f: &mut dyn FnMut(&mut Param)) {}
}

/// Zero padding on each side of the spatial plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub fn uniform(p: usize) -> Self {
        Self { top: p, bottom: p, left: p, right: p }
    }

    /// Output size equals input size for stride 1; even kernels put the
    /// extra row/column at the bottom/right.
    pub fn same(kh: usize, kw: usize) -> Self {
        Self { top: (kh - 1) / 2, bottom: kh / 2, left: (kw - 1) / 2, right: kw / 2 }
    }
}

/// Geometry shared by convolution and pooling windows.
#[derive(Clone, Copy, Debug)]
struct Window {
    kh: usize,
    kw: usize,
    stride: usize,
    pad: Padding,
}

impl Window {
    fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let ph = h + self.pad.top + self.pad.bottom;
        let pw = w + self.pad.left + self.pad.right;
        assert!(ph >= self.kh && pw >= self.kw, "window {}x{} larger than padded input {ph}x{pw}", self.kh, self.kw);
        ((ph - self.kh) / self.stride + 1, (pw - self.kw) / self.stride + 1)
    }
}

pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    win: Window,
    pub weight: Param,
    pub bias: Option<Param>,
    /// The first layer of a network never needs an input gradient.
    pub skip_input_grad: bool,
    input: Option<Tensor>,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        (kh, kw): (usize, usize),
        stride: usize,
        pad: Padding,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(stride >= 1 && kh >= 1 && kw >= 1);
        let fan_in = in_channels * kh * kw;
        let weight = Param::he_normal(format!("{name}.weight"), vec![out_channels, in_channels, kh, kw], fan_in, rng);
        let bias = bias.then(|| Param::filled(format!("{name}.bias"), vec![out_channels], 0.0, ParamKind::Weight));
        Self { in_channels, out_channels, win: Window { kh, kw, stride, pad }, weight, bias, skip_input_grad: false, input: None }
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.win.kh, self.win.kw)
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        self.win.out_hw(h, w)
    }

    fn is_pointwise(&self) -> bool {
        self.win.kh == 1 && self.win.kw == 1 && self.win.stride == 1 && self.win.pad == Padding::default()
    }

    fn k_len(&self) -> usize {
        self.in_channels * self.win.kh * self.win.kw
    }

    fn im2col(&self, x: &[f32], h: usize, w: usize, col: &mut [f32]) {
        let Window { kh, kw, stride, pad } = self.win;
        let (oh, ow) = self.win.out_hw(h, w);
        let p = oh * ow;
        for c in 0..self.in_channels {
            let plane = &x[c * h * w..(c + 1) * h * w];
            for ky in 0..kh {
                for kx in 0..kw {
                    let row = &mut col[((c * kh + ky) * kw + kx) * p..][..p];
                    for oy in 0..oh {
                        let dst = &mut row[oy * ow..(oy + 1) * ow];
                        let iy = (oy * stride + ky) as isize - pad.top as isize;
                        if iy < 0 || iy >= h as isize {
                            dst.fill(0.0);
                            continue;
                        }
                        let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                        if stride == 1 {
                            let shift = kx as isize - pad.left as isize;
                            let lo = (-shift).clamp(0, ow as isize) as usize;
                            let hi = (w as isize - shift).clamp(lo as isize, ow as isize) as usize;
                            dst[..lo].fill(0.0);
                            dst[hi..].fill(0.0);
                            let s0 = (lo as isize + shift) as usize;
                            dst[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
                        } else {
                            for (ox, d) in dst.iter_mut().enumerate() {
                                let ix = (ox * stride + kx) as isize - pad.left as isize;
                                *d = if ix < 0 || ix >= w as isize { 0.0 } else { src[ix as usize] };
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, col: &[f32], h: usize, w: usize, dx: &mut [f32]) {
        let Window { kh, kw, stride, pad } = self.win;
        let (oh, ow) = self.win.out_hw(h, w);
        let p = oh * ow;
        for c in 0..self.in_channels {
            let plane = &mut dx[c * h * w..(c + 1) * h * w];
            for ky in 0..kh {
                for kx in 0..kw {
                    let row = &col[((c * kh + ky) * kw + kx) * p..][..p];
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pad.top as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        let src = &row[oy * ow..(oy + 1) * ow];
                        for (ox, &g) in src.iter().enumerate() {
                            let ix = (ox * stride + kx) as isize - pad.left as isize;
                            if ix >= 0 && (ix as usize) < w {
                                dst[ix as usize] += g;
                            }
                        }
                    }
                }
            }
        }
    }
}

impl Layer for Conv2d {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let [n, c, h, w] = x.shape();
        assert_eq!(c, self.in_channels, "{}: expected {} input channels, got {c}", self.weight.name, self.in_channels);
        let (oh, ow) = self.win.out_hw(h, w);
        let p = oh * ow;
        let k = self.k_len();
        let m = self.out_channels;
        let mut out = Tensor::zeros([n, m, oh, ow]);
        let mut col = if self.is_pointwise() { Vec::new() } else { vec![0.0; k * p] };
        for i in 0..n {
            let xs = x.sample(i);
            let b: &[f32] = if self.is_pointwise() {
                xs
            } else {
                self.im2col(xs, h, w, &mut col);
                &col
            };
            let ys = out.sample_mut(i);
            if let Some(bias) = &self.bias {
                for (o, row) in ys.chunks_mut(p).enumerate() {
                    row.fill(bias.value[o]);
                }
            }
            let beta = if self.bias.is_some() { 1.0 } else { 0.0 };
            unsafe {
                sgemm(
                    m,
                    k,
                    p,
                    1.0,
                    self.weight.value.as_ptr(),
                    k as isize,
                    1,
                    b.as_ptr(),
                    p as isize,
                    1,
                    beta,
                    ys.as_mut_ptr(),
                    p as isize,
                    1,
                );
            }
        }
        if mode == Mode::Train {
            self.input = Some(x.clone());
        }
        out
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let x = self.input.take().expect("conv backward without training forward");
        let [n, _, h, w] = x.shape();
        let (oh, ow) = self.win.out_hw(h, w);
        let p = oh * ow;
        let k = self.k_len();
        let m = self.out_channels;
        assert_eq!(grad.shape(), [n, m, oh, ow]);
        let mut dx = Tensor::zeros(x.shape());
        let pointwise = self.is_pointwise();
        let mut col = if pointwise { Vec::new() } else { vec![0.0; k * p] };
        let mut dcol = if pointwise { Vec::new() } else { vec![0.0; k * p] };
        for i in 0..n {
            let dy = grad.sample(i);
            if let Some(bias) = &mut self.bias {
                for (o, row) in dy.chunks(p).enumerate() {
                    bias.grad[o] += row.iter().sum::<f32>();
                }
            }
            let xs = x.sample(i);
            let b: &[f32] = if pointwise {
                xs
            } else {
                self.im2col(xs, h, w, &mut col);
                &col
            };
            // dW[m,k] += dY[m,p] * col^T[p,k]
            unsafe {
                sgemm(
                    m,
                    p,
                    k,
                    1.0,
                    dy.as_ptr(),
                    p as isize,
                    1,
                    b.as_ptr(),
                    1,
                    p as isize,
                    1.0,
                    self.weight.grad.as_mut_ptr(),
                    k as isize,
                    1,
                );
            }
            if self.skip_input_grad {
                continue;
            }
            // dcol[k,p] = W^T[k,m] * dY[m,p]
            let target: &mut [f32] = if pointwise { dx.sample_mut(i) } else { &mut dcol };
            unsafe {
                sgemm(
                    k,
                    m,
                    p,
                    1.0,
                    self.weight.value.as_ptr(),
                    1,
                    k as isize,
                    dy.as_ptr(),
                    p as isize,
                    1,
                    0.0,
                    target.as_mut_ptr(),
                    p as isize,
                    1,
                );
            }
            if !pointwise {
                self.col2im(&dcol, h, w, dx.sample_mut(i));
            }
        }
        dx
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
    }
}

/// Per-channel batch normalization over (N, H, W).
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    momentum: f32,
    eps: f32,
    cache: Option<(Tensor, Vec<f32>)>,
}

impl BatchNorm2d {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Param::filled(format!("{name}.gamma"), vec![channels], 1.0, ParamKind::Weight),
            beta: Param::filled(format!("{name}.beta"), vec![channels], 0.0, ParamKind::Weight),
            running_mean: Param::filled(format!("{name}.running_mean"), vec![channels], 0.0, ParamKind::Buffer),
            running_var: Param::filled(format!("{name}.running_var"), vec![channels], 1.0, ParamKind::Buffer),
            momentum: 0.1,
            eps: 1e-3,
            cache: None,
        }
    }
}

impl Layer for BatchNorm2d {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let [n, c, h, w] = x.shape();
        let plane = h * w;
        let count = (n * plane) as f32;
        let mut out = Tensor::zeros(x.shape());
        match mode {
            Mode::Eval => {
                for ch in 0..c {
                    let inv = 1.0 / (self.running_var.value[ch] + self.eps).sqrt();
                    let scale = self.gamma.value[ch] * inv;
                    let shift = self.beta.value[ch] - self.running_mean.value[ch] * scale;
                    for i in 0..n {
                        let off = (i * c + ch) * plane;
                        for (o, &v) in out.data_mut()[off..off + plane].iter_mut().zip(&x.data()[off..off + plane]) {
                            *o = v * scale + shift;
                        }
                    }
                }
            }
            Mode::Train => {
                let mut x_hat = Tensor::zeros(x.shape());
                let mut inv_std = vec![0.0; c];
                for ch in 0..c {
                    let mut sum = 0.0f64;
                    for i in 0..n {
                        let off = (i * c + ch) * plane;
                        sum += x.data()[off..off + plane].iter().map(|&v| v as f64).sum::<f64>();
                    }
                    let mean = (sum / count as f64) as f32;
                    let mut sq = 0.0f64;
                    for i in 0..n {
                        let off = (i * c + ch) * plane;
                        sq += x.data()[off..off + plane].iter().map(|&v| ((v - mean) as f64).powi(2)).sum::<f64>();
                    }
                    let var = (sq / count as f64) as f32;
                    let inv = 1.0 / (var + self.eps).sqrt();
                    inv_std[ch] = inv;
                    let (g, b) = (self.gamma.value[ch], self.beta.value[ch]);
                    for i in 0..n {
                        let off = (i * c + ch) * plane;
                        for j in off..off + plane {
                            let xh = (x.data()[j] - mean) * inv;
                            x_hat.data_mut()[j] = xh;
                            out.data_mut()[j] = g * xh + b;
                        }
                    }
                    let unbiased = if count > 1.0 { var * count / (count - 1.0) } else { var };
                    let mo = self.momentum;
                    self.running_mean.value[ch] = (1.0 - mo) * self.running_mean.value[ch] + mo * mean;
                    self.running_var.value[ch] = (1.0 - mo) * self.running_var.value[ch] + mo * unbiased;
                }
                self.cache = Some((x_hat, inv_std));
            }
        }
        out
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let (x_hat, inv_std) = self.cache.take().expect("batch norm backward without training forward");
        let [n, c, h, w] = grad.shape();
        let plane = h * w;
        let count = (n * plane) as f32;
        let mut dx = Tensor::zeros(grad.shape());
        for ch in 0..c {
            let mut dgamma = 0.0f32;
            let mut dbeta = 0.0f32;
            for i in 0..n {
                let off = (i * c + ch) * plane;
                for j in off..off + plane {
                    dgamma += grad.data()[j] * x_hat.data()[j];
                    dbeta += grad.data()[j];
                }
            }
            self.gamma.grad[ch] += dgamma;
            self.beta.grad[ch] += dbeta;
            let k = self.gamma.value[ch] * inv_std[ch] / count;
            for i in 0..n {
                let off = (i * c + ch) * plane;
                for j in off..off + plane {
                    dx.data_mut()[j] = k * (count * grad.data()[j] - dbeta - x_hat.data()[j] * dgamma);
                }
            }
        }
        dx
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.gamma);
        f(&mut self.beta);
        f(&mut self.running_mean);
        f(&mut self.running_var);
    }
}

#[derive(Default)]
pub struct Relu {
    output: Option<Tensor>,
}

impl Layer for Relu {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let out = x.map(|v| v.max(0.0));
        if mode == Mode::Train {
            self.output = Some(out.clone());
        }
        out
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let out = self.output.take().expect("relu backward without training forward");
        let mut dx = grad.clone();
        for (g, &o) in dx.data_mut().iter_mut().zip(out.data()) {
            if o <= 0.0 {
                *g = 0.0;
            }
        }
        dx
    }
}

pub struct MaxPool2d {
    win: Window,
    cache: Option<([usize; 4], Vec<u32>)>,
}

impl MaxPool2d {
    pub fn new(k: usize, stride: usize, pad: usize) -> Self {
        Self { win: Window { kh: k, kw: k, stride, pad: Padding::uniform(pad) }, cache: None }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        self.win.out_hw(h, w)
    }
}

impl Layer for MaxPool2d {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let [n, c, h, w] = x.shape();
        let (oh, ow) = self.win.out_hw(h, w);
        let Window { kh, kw, stride, pad } = self.win;
        let mut out = Tensor::zeros([n, c, oh, ow]);
        let mut arg = vec![0u32; n * c * oh * ow];
        let mut idx = 0;
        for nc in 0..n * c {
            let plane = &x.data()[nc * h * w..(nc + 1) * h * w];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f32::NEG_INFINITY;
                    let mut best_i = 0usize;
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - pad.top as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - pad.left as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let j = iy as usize * w + ix as usize;
                            if plane[j] > best {
                                best = plane[j];
                                best_i = j;
                            }
                        }
                    }
                    out.data_mut()[idx] = best;
                    arg[idx] = best_i as u32;
                    idx += 1;
                }
            }
        }
        if mode == Mode::Train {
            self.cache = Some((x.shape(), arg));
        }
        out
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let (shape, arg) = self.cache.take().expect("max pool backward without training forward");
        let [_, _, h, w] = shape;
        let out_plane = grad.h() * grad.w();
        let mut dx = Tensor::zeros(shape);
        for (idx, (&g, &a)) in grad.data().iter().zip(&arg).enumerate() {
            let nc = idx / out_plane;
            dx.data_mut()[nc * h * w + a as usize] += g;
        }
        dx
    }
}

/// Average pooling; padded positions are excluded from the divisor.
pub struct AvgPool2d {
    win: Window,
    input_shape: Option<[usize; 4]>,
}

impl AvgPool2d {
    pub fn new(k: usize, stride: usize, pad: usize) -> Self {
        Self { win: Window { kh: k, kw: k, stride, pad: Padding::uniform(pad) }, input_shape: None }
    }

    fn for_each_window(&self, h: usize, w: usize, mut f: impl FnMut(usize, &[usize])) {
        let (oh, ow) = self.win.out_hw(h, w);
        let Window { kh, kw, stride, pad } = self.win;
        let mut members = Vec::with_capacity(kh * kw);
        for oy in 0..oh {
            for ox in 0..ow {
                members.clear();
                for ky in 0..kh {
                    let iy = (oy * stride + ky) as isize - pad.top as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = (ox * stride + kx) as isize - pad.left as isize;
                        if ix >= 0 && ix < w as isize {
                            members.push(iy as usize * w + ix as usize);
                        }
                    }
                }
                f(oy * ow + ox, &members);
            }
        }
    }
}

impl Layer for AvgPool2d {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let [n, c, h, w] = x.shape();
        let (oh, ow) = self.win.out_hw(h, w);
        let mut out = Tensor::zeros([n, c, oh, ow]);
        for nc in 0..n * c {
            let plane = &x.data()[nc * h * w..(nc + 1) * h * w];
            let dst = &mut out.data_mut()[nc * oh * ow..(nc + 1) * oh * ow];
            self.for_each_window(h, w, |o, members| {
                dst[o] = members.iter().map(|&j| plane[j]).sum::<f32>() / members.len() as f32;
            });
        }
        if mode == Mode::Train {
            self.input_shape = Some(x.shape());
        }
        out
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let shape = self.input_shape.take().expect("avg pool backward without training forward");
        let [n, c, h, w] = shape;
        let (oh, ow) = (grad.h(), grad.w());
        let mut dx = Tensor::zeros(shape);
        for nc in 0..n * c {
            let g = &grad.data()[nc * oh * ow..(nc + 1) * oh * ow];
            let dst = &mut dx.data_mut()[nc * h * w..(nc + 1) * h * w];
            self.for_each_window(h, w, |o, members| {
                let share = g[o] / members.len() as f32;
                for &j in members {
                    dst[j] += share;
                }
            });
        }
        dx
    }
}

/// Nearest-neighbour 2x upsampling.
#[derive(Default)]
pub struct Upsample2x;

impl Layer for Upsample2x {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Tensor {
        let [n, c, h, w] = x.shape();
        let mut out = Tensor::zeros([n, c, 2 * h, 2 * w]);
        for nc in 0..n * c {
            let src = &x.data()[nc * h * w..(nc + 1) * h * w];
            let dst = &mut out.data_mut()[nc * 4 * h * w..(nc + 1) * 4 * h * w];
            for y in 0..2 * h {
                for xx in 0..2 * w {
                    dst[y * 2 * w + xx] = src[(y / 2) * w + xx / 2];
                }
            }
        }
        out
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let [n, c, h2, w2] = grad.shape();
        let (h, w) = (h2 / 2, w2 / 2);
        let mut dx = Tensor::zeros([n, c, h, w]);
        for nc in 0..n * c {
            let src = &grad.data()[nc * h2 * w2..(nc + 1) * h2 * w2];
            let dst = &mut dx.data_mut()[nc * h * w..(nc + 1) * h * w];
            for y in 0..h2 {
                for xx in 0..w2 {
                    dst[(y / 2) * w + xx / 2] += src[y * w2 + xx];
                }
            }
        }
        dx
    }
}

#[derive(Default)]
pub struct GlobalAvgPool {
    input_shape: Option<[usize; 4]>,
}

impl Layer for GlobalAvgPool {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let [n, c, h, w] = x.shape();
        let plane = h * w;
        let data = x.data().chunks(plane).map(|p| p.iter().sum::<f32>() / plane as f32).collect();
        if mode == Mode::Train {
            self.input_shape = Some(x.shape());
        }
        Tensor::from_vec([n, c, 1, 1], data)
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let shape = self.input_shape.take().expect("pool backward without training forward");
        let plane = shape[2] * shape[3];
        let mut dx = Tensor::zeros(shape);
        for (chunk, &g) in dx.data_mut().chunks_mut(plane).zip(grad.data()) {
            chunk.fill(g / plane as f32);
        }
        dx
    }
}

/// Fully connected layer on `[n, in, 1, 1]` activations.
pub struct Linear {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl Linear {
    pub fn new(name: &str, in_features: usize, out_features: usize, rng: &mut impl Rng) -> Self {
        Self {
            in_features,
            out_features,
            weight: Param::glorot_uniform(
                format!("{name}.weight"),
                vec![out_features, in_features],
                in_features,
                out_features,
                rng,
            ),
            bias: Param::filled(format!("{name}.bias"), vec![out_features], 0.0, ParamKind::Weight),
            input: None,
        }
    }
}

impl Layer for Linear {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let n = x.n();
        assert_eq!(x.sample_len(), self.in_features, "{}: input width mismatch", self.weight.name);
        let (k, m) = (self.in_features, self.out_features);
        let mut out = Tensor::zeros([n, m, 1, 1]);
        for row in out.data_mut().chunks_mut(m) {
            row.copy_from_slice(&self.bias.value);
        }
        // Y[n,m] = X[n,k] * W^T[k,m] + b
        unsafe {
            sgemm(
                n,
                k,
                m,
                1.0,
                x.data().as_ptr(),
                k as isize,
                1,
                self.weight.value.as_ptr(),
                1,
                k as isize,
                1.0,
                out.data_mut().as_mut_ptr(),
                m as isize,
                1,
            );
        }
        if mode == Mode::Train {
            self.input = Some(x.clone());
        }
        out
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let x = self.input.take().expect("linear backward without training forward");
        let n = x.n();
        let (k, m) = (self.in_features, self.out_features);
        for row in grad.data().chunks(m) {
            for (b, g) in self.bias.grad.iter_mut().zip(row) {
                *b += g;
            }
        }
        let mut dx = Tensor::zeros(x.shape());
        unsafe {
            // dW[m,k] += dY^T[m,n] * X[n,k]
            sgemm(
                m,
                n,
                k,
                1.0,
                grad.data().as_ptr(),
                1,
                m as isize,
                x.data().as_ptr(),
                k as isize,
                1,
                1.0,
                self.weight.grad.as_mut_ptr(),
                k as isize,
                1,
            );
            // dX[n,k] = dY[n,m] * W[m,k]
            sgemm(
                n,
                m,
                k,
                1.0,
                grad.data().as_ptr(),
                m as isize,
                1,
                self.weight.value.as_ptr(),
                k as isize,
                1,
                0.0,
                dx.data_mut().as_mut_ptr(),
                k as isize,
                1,
            );
        }
        dx
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}
