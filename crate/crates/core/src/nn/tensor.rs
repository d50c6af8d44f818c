use std::fmt;

/// Dense `f32` tensor in NCHW layout.
///
/// Fully connected activations use `[n, features, 1, 1]`.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self { shape, data: vec![0.0; shape.iter().product()] }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f32>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "tensor data does not match shape {shape:?}");
        Self { shape, data }
    }

    #[inline]
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.shape[0]
    }

    #[inline]
    pub fn c(&self) -> usize {
        self.shape[1]
    }

    #[inline]
    pub fn h(&self) -> usize {
        self.shape[2]
    }

    #[inline]
    pub fn w(&self) -> usize {
        self.shape[3]
    }

    /// Elements in one sample (`c * h * w`).
    #[inline]
    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let len = self.sample_len();
        &self.data[i * len..(i + 1) * len]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [f32] {
        let len = self.sample_len();
        &mut self.data[i * len..(i + 1) * len]
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        let [_, ch, h, w] = self.shape;
        self.data[((n * ch + c) * h + y) * w + x]
    }

    /// Stack equally shaped single-sample tensors into one batch.
    pub fn stack(samples: &[Tensor]) -> Tensor {
        assert!(!samples.is_empty(), "cannot stack an empty batch");
        let [_, c, h, w] = samples[0].shape;
        let mut data = Vec::with_capacity(samples.len() * c * h * w);
        for s in samples {
            assert_eq!(&s.shape[1..], &[c, h, w], "stacked tensors differ in shape");
            data.extend_from_slice(&s.data);
        }
        Tensor::from_vec([data.len() / (c * h * w), c, h, w], data)
    }

    /// Concatenate along the channel axis.
    pub fn concat_channels(parts: &[&Tensor]) -> Tensor {
        let [n, _, h, w] = parts[0].shape;
        let total_c: usize = parts.iter().map(|p| p.c()).sum();
        let mut out = Tensor::zeros([n, total_c, h, w]);
        let plane = h * w;
        for i in 0..n {
            let mut offset = 0;
            let dst = out.sample_mut(i);
            for p in parts {
                assert_eq!((p.n(), p.h(), p.w()), (n, h, w), "concat shape mismatch");
                let len = p.c() * plane;
                dst[offset..offset + len].copy_from_slice(p.sample(i));
                offset += len;
            }
        }
        out
    }

    /// Inverse of [`Tensor::concat_channels`]: split channel ranges back apart.
    pub fn split_channels(&self, widths: &[usize]) -> Vec<Tensor> {
        let [n, c, h, w] = self.shape;
        assert_eq!(widths.iter().sum::<usize>(), c, "split widths must cover channels");
        let plane = h * w;
        let mut outs: Vec<Tensor> = widths.iter().map(|&wc| Tensor::zeros([n, wc, h, w])).collect();
        for i in 0..n {
            let src = self.sample(i);
            let mut offset = 0;
            for (o, &wc) in outs.iter_mut().zip(widths) {
                let len = wc * plane;
                o.sample_mut(i).copy_from_slice(&src[offset..offset + len]);
                offset += len;
            }
        }
        outs
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor").field("shape", &self.shape).finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_then_split_restores_parts() {
        let a = Tensor::from_vec([2, 1, 1, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = Tensor::from_vec([2, 2, 1, 2], (0..8).map(|v| v as f32 * 10.0).collect());
        let cat = Tensor::concat_channels(&[&a, &b]);
        assert_eq!(cat.shape(), [2, 3, 1, 2]);
        assert_eq!(cat.sample(0), &[1.0, 2.0, 0.0, 10.0, 20.0, 30.0]);
        let parts = cat.split_channels(&[1, 2]);
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }
}
