//! Minimal CPU neural-network toolkit backing the finder and classifier.
//!
//! Single-threaded and order-deterministic: identical seeds give
//! bitwise-identical training runs.

mod blocks;
pub mod checkpoint;
mod layers;
pub mod loss;
mod optim;
mod param;
mod tensor;

pub use blocks::{ConvSpec, ConvUnit, Parallel, Sequential};
pub use checkpoint::{Checkpoint, NamedTensor};
pub use layers::{AvgPool2d, BatchNorm2d, Conv2d, GlobalAvgPool, Layer, Linear, MaxPool2d, Mode, Padding, Relu, Upsample2x};
pub use optim::{zero_grads, Optimizer, OptimizerKind};
pub use param::{Param, ParamKind};
pub use tensor::Tensor;

/// Copy of every parameter value, used to keep the best epoch's weights.
pub fn snapshot(model: &mut dyn Layer) -> Vec<Vec<f32>> {
    let mut out = Vec::new();
    model.visit_params(&mut |p| out.push(p.value.clone()));
    out
}

pub fn restore(model: &mut dyn Layer, state: &[Vec<f32>]) {
    let mut i = 0;
    model.visit_params(&mut |p| {
        p.value.copy_from_slice(&state[i]);
        i += 1;
    });
    assert_eq!(i, state.len(), "snapshot does not match model");
}

/// Number of learned scalars (running statistics excluded).
pub fn trainable_count(model: &mut dyn Layer) -> usize {
    let mut n = 0;
    model.visit_params(&mut |p| {
        if p.kind == ParamKind::Weight {
            n += p.len()
        }
    });
    n
}

#[cfg(test)]
mod gradcheck {
    //! Central finite differences against every hand-written backward pass.

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random_tensor(shape: [usize; 4], rng: &mut impl Rng) -> Tensor {
        let len = shape.iter().product();
        Tensor::from_vec(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    /// Scalar objective `sum(r * f(x))` in f64 for stable differencing.
    fn objective(layer: &mut dyn Layer, x: &Tensor, r: &Tensor) -> f64 {
        let y = layer.forward(x, Mode::Train);
        // discard caches of this probe
        let _ = layer.backward(&Tensor::zeros(y.shape()));
        zero_grads(layer);
        y.data().iter().zip(r.data()).map(|(&a, &b)| a as f64 * b as f64).sum()
    }

    fn check(layer: &mut dyn Layer, in_shape: [usize; 4], seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_tensor(in_shape, &mut rng);
        let y = layer.forward(&x, Mode::Train);
        let r = random_tensor(y.shape(), &mut rng);
        let dx = layer.backward(&r);
        let mut analytic = Vec::new();
        layer.visit_params(&mut |p| {
            if p.kind == ParamKind::Weight {
                analytic.push(p.grad.clone())
            }
        });
        zero_grads(layer);

        let eps = 1e-2f32;
        let tol = |a: f64, b: f64| (a - b).abs() <= 2e-2 * (1.0 + a.abs().max(b.abs()));
        for i in (0..x.data().len()).step_by((x.data().len() / 17).max(1)) {
            let mut xp = x.clone();
            xp.data_mut()[i] += eps;
            let mut xm = x.clone();
            xm.data_mut()[i] -= eps;
            let fd = (objective(layer, &xp, &r) - objective(layer, &xm, &r)) / (2.0 * eps as f64);
            assert!(tol(fd, dx.data()[i] as f64), "input grad {i}: fd {fd} vs {}", dx.data()[i]);
        }

        let mut pi = 0;
        let mut values: Vec<(usize, usize)> = Vec::new();
        layer.visit_params(&mut |p| {
            if p.kind == ParamKind::Weight {
                for j in (0..p.len()).step_by((p.len() / 7).max(1)) {
                    values.push((pi, j));
                }
                pi += 1;
            }
        });
        for (target, j) in values {
            let perturb = |layer: &mut dyn Layer, delta: f32| {
                let mut k = 0;
                layer.visit_params(&mut |p| {
                    if p.kind == ParamKind::Weight {
                        if k == target {
                            p.value[j] += delta;
                        }
                        k += 1;
                    }
                });
            };
            perturb(layer, eps);
            let up = objective(layer, &x, &r);
            perturb(layer, -2.0 * eps);
            let dn = objective(layer, &x, &r);
            perturb(layer, eps);
            let fd = (up - dn) / (2.0 * eps as f64);
            let a = analytic[target][j] as f64;
            assert!(tol(fd, a), "param {target}[{j}]: fd {fd} vs {a}");
        }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn conv_same_padding() {
        let mut c = Conv2d::new("c", 2, 3, (3, 3), 1, Padding::same(3, 3), true, &mut rng());
        check(&mut c, [2, 2, 5, 6], 1);
    }

    #[test]
    fn conv_even_kernel_and_stride() {
        let mut c = Conv2d::new("c", 2, 2, (2, 2), 1, Padding::same(2, 2), true, &mut rng());
        check(&mut c, [1, 2, 4, 4], 2);
        let mut s = Conv2d::new("s", 2, 3, (3, 3), 2, Padding::uniform(1), false, &mut rng());
        check(&mut s, [2, 2, 7, 7], 3);
        let mut r = Conv2d::new("r", 3, 2, (1, 5), 1, Padding::same(1, 5), true, &mut rng());
        check(&mut r, [1, 3, 4, 6], 4);
    }

    #[test]
    fn conv_pointwise() {
        let mut c = Conv2d::new("c", 4, 3, (1, 1), 1, Padding::default(), true, &mut rng());
        check(&mut c, [2, 4, 3, 3], 5);
    }

    #[test]
    fn batch_norm_training_mode() {
        let mut bn = BatchNorm2d::new("bn", 3);
        bn.gamma.value = vec![1.5, 0.5, -1.0];
        bn.beta.value = vec![0.1, 0.0, 0.3];
        check(&mut bn, [3, 3, 2, 2], 6);
    }

    #[test]
    fn pools_and_upsample() {
        check(&mut MaxPool2d::new(2, 2, 0), [2, 2, 4, 4], 7);
        check(&mut MaxPool2d::new(3, 2, 0), [1, 2, 7, 7], 8);
        check(&mut AvgPool2d::new(3, 1, 1), [1, 2, 4, 5], 9);
        check(&mut Upsample2x, [1, 2, 3, 3], 10);
        check(&mut GlobalAvgPool::default(), [2, 3, 3, 2], 11);
    }

    #[test]
    fn linear_and_units() {
        let mut l = Linear::new("fc", 6, 4, &mut rng());
        check(&mut l, [3, 6, 1, 1], 12);
        // ReLU kinks break finite differences; the unit is checked without it.
        let mut spec = ConvSpec::same(2, 3, 3, 3, true);
        spec.relu = false;
        let mut u = ConvUnit::new("u", spec, &mut rng());
        check(&mut u, [3, 2, 4, 4], 13);
    }

    #[test]
    fn parallel_branches() {
        let mut p = Parallel::default();
        let mut a = Sequential::default();
        a.push(Conv2d::new("a", 2, 3, (1, 1), 1, Padding::default(), true, &mut rng()));
        let mut b = Sequential::default();
        b.push(AvgPool2d::new(3, 1, 1));
        b.push(Conv2d::new("b", 2, 2, (3, 3), 1, Padding::same(3, 3), true, &mut rng()));
        p.push(a);
        p.push(b);
        check(&mut p, [2, 2, 4, 4], 14);
    }

    #[test]
    fn snapshot_restore_round_trip() {
        let mut l = Linear::new("fc", 3, 2, &mut rng());
        let snap = snapshot(&mut l);
        l.weight.value.iter_mut().for_each(|v| *v = 0.0);
        restore(&mut l, &snap);
        assert_eq!(snapshot(&mut l), snap);
        assert_eq!(trainable_count(&mut l), 8);
    }
}
