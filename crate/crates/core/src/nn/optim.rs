use serde::{Deserialize, Serialize};

use super::layers::Layer;
use super::param::Param;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Rmsprop,
}

/// Adam / RMSprop with Keras default moment constants.
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f32,
    step: u32,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
}

const BETA1: f32 = 0.9;
const BETA2: f32 = 0.999;
const RHO: f32 = 0.9;
const EPS: f32 = 1e-7;

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f32) -> Self {
        Self { kind, lr, step: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn learning_rate(&self) -> f32 {
        self.lr
    }

    /// Apply one update from the accumulated gradients, then clear them.
    pub fn step(&mut self, model: &mut dyn Layer) {
        self.step += 1;
        let t = self.step as i32;
        let mut idx = 0;
        let (kind, lr) = (self.kind, self.lr);
        let first = &mut self.first;
        let second = &mut self.second;
        model.visit_params(&mut |p: &mut Param| {
            if idx == second.len() {
                first.push(vec![0.0; p.len()]);
                second.push(vec![0.0; p.len()]);
            }
            if p.is_trainable() {
                match kind {
                    OptimizerKind::Adam => {
                        let m = &mut first[idx];
                        let v = &mut second[idx];
                        let bc1 = 1.0 - BETA1.powi(t);
                        let bc2 = 1.0 - BETA2.powi(t);
                        let step = lr * bc2.sqrt() / bc1;
                        for j in 0..p.value.len() {
                            let g = p.grad[j];
                            m[j] = BETA1 * m[j] + (1.0 - BETA1) * g;
                            v[j] = BETA2 * v[j] + (1.0 - BETA2) * g * g;
                            p.value[j] -= step * m[j] / (v[j].sqrt() + EPS);
                        }
                    }
                    OptimizerKind::Rmsprop => {
                        let v = &mut second[idx];
                        for j in 0..p.value.len() {
                            let g = p.grad[j];
                            v[j] = RHO * v[j] + (1.0 - RHO) * g * g;
                            p.value[j] -= lr * g / (v[j].sqrt() + EPS);
                        }
                    }
                }
            }
            p.zero_grad();
            idx += 1;
        });
    }
}

/// Zero every gradient accumulator of a model.
pub fn zero_grads(model: &mut dyn Layer) {
    model.visit_params(&mut |p| p.zero_grad());
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::param::ParamKind;
    use crate::nn::tensor::Tensor;
    use crate::nn::Mode;

    struct Quadratic(Param);

    impl Layer for Quadratic {
        fn forward(&mut self, x: &Tensor, _: Mode) -> Tensor {
            x.clone()
        }
        fn backward(&mut self, g: &Tensor) -> Tensor {
            g.clone()
        }
        fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
            f(&mut self.0)
        }
    }

    fn minimize(kind: OptimizerKind) -> f32 {
        let mut q = Quadratic(Param::new("x", vec![1], vec![3.0], ParamKind::Weight));
        let mut opt = Optimizer::new(kind, 0.05);
        for _ in 0..500 {
            let x = q.0.value[0];
            q.0.grad[0] = 2.0 * (x - 1.0);
            opt.step(&mut q);
        }
        q.0.value[0]
    }

    #[test]
    fn both_optimizers_reach_quadratic_minimum() {
        assert!((minimize(OptimizerKind::Adam) - 1.0).abs() < 0.05);
        assert!((minimize(OptimizerKind::Rmsprop) - 1.0).abs() < 0.05);
    }

    #[test]
    fn buffers_and_frozen_weights_are_not_updated() {
        let mut buf = Quadratic(Param::new("b", vec![1], vec![3.0], ParamKind::Buffer));
        buf.0.grad[0] = 1.0;
        Optimizer::new(OptimizerKind::Adam, 0.1).step(&mut buf);
        assert_eq!(buf.0.value[0], 3.0);
        assert_eq!(buf.0.grad[0], 0.0);

        let mut frozen = Quadratic(Param::new("w", vec![1], vec![3.0], ParamKind::Weight));
        frozen.0.frozen = true;
        frozen.0.grad[0] = 1.0;
        Optimizer::new(OptimizerKind::Rmsprop, 0.1).step(&mut frozen);
        assert_eq!(frozen.0.value[0], 3.0);
    }
}
