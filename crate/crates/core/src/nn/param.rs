use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Whether a parameter is learned by the optimizer or is a running statistic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Buffer,
}

/// A named parameter tensor with its gradient accumulator.
#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f32>,
    pub grad: Vec<f32>,
    pub kind: ParamKind,
    /// Frozen weights keep their value during training.
    pub frozen: bool,
}

impl Param {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, value: Vec<f32>, kind: ParamKind) -> Self {
        assert_eq!(shape.iter().product::<usize>(), value.len());
        let len = value.len();
        Self { name: name.into(), shape, value, grad: vec![0.0; len], kind, frozen: false }
    }

    pub fn filled(name: impl Into<String>, shape: Vec<usize>, fill: f32, kind: ParamKind) -> Self {
        let len = shape.iter().product();
        Self::new(name, shape, vec![fill; len], kind)
    }

    /// He-normal initialization, `std = sqrt(2 / fan_in)`.
    pub fn he_normal(name: impl Into<String>, shape: Vec<usize>, fan_in: usize, rng: &mut impl Rng) -> Self {
        let std = (2.0 / fan_in.max(1) as f32).sqrt();
        let dist = Normal::new(0.0, std).expect("finite std");
        let len = shape.iter().product();
        let value = (0..len).map(|_| dist.sample(rng)).collect();
        Self::new(name, shape, value, ParamKind::Weight)
    }

    /// Glorot-uniform initialization.
    pub fn glorot_uniform(name: impl Into<String>, shape: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out).max(1) as f32).sqrt();
        let len = shape.iter().product();
        let value = (0..len).map(|_| rng.random_range(-limit..=limit)).collect();
        Self::new(name, shape, value, ParamKind::Weight)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn is_trainable(&self) -> bool {
        self.kind == ParamKind::Weight && !self.frozen
    }
}
