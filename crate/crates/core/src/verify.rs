//! Finite-difference verification of every differentiable kernel, in 64-bit
//! mode. Backs the `gradcheck` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{Architecture, GraphOptions, Mode, ModelGraph, Network, Task, WeightStore};
use crate::tensor::gradcheck::{finite_diff_gradient, max_relative_error};
use crate::tensor::{self, DropoutMode, DropoutState, KernelParams, OpRecord, Tensor};

/// Finite-difference step.
pub const STEP: f64 = 1e-3;

/// Maximum accepted relative error.
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelCheck {
    pub kernel: &'static str,
    /// Number of gradient elements compared.
    pub elements: usize,
    pub max_rel_error: f64,
}

impl KernelCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

struct Checker {
    rng: ChaCha8Rng,
}

impl Checker {
    fn uniform(&mut self, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
        Tensor::from_fn(shape.to_vec(), |_| self.rng.gen_range(lo..hi))
    }

    // Magnitudes in [0.05, 1) with random sign.
    fn away_from_zero(&mut self, shape: &[usize]) -> Tensor<f64> {
        Tensor::from_fn(shape.to_vec(), |_| {
            let mag = self.rng.gen_range(0.05..1.0);
            if self.rng.gen_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
    }

    fn one_hot(&mut self, n: usize, k: usize) -> Tensor<f64> {
        let mut t = Tensor::zeros(vec![n, k]);
        for row in 0..n {
            let c = self.rng.gen_range(0..k);
            t.data_mut()[row * k + c] = 1.0;
        }
        t
    }
}

fn project(out: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    out.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

fn record(kernel: &'static str, pairs: &[(Tensor<f64>, Tensor<f64>)]) -> KernelCheck {
    KernelCheck {
        kernel,
        elements: pairs.iter().map(|(a, _)| a.len()).sum(),
        max_rel_error: pairs
            .iter()
            .map(|(a, n)| max_relative_error(a, n))
            .fold(0.0, f64::max),
    }
}

fn check_conv(c: &mut Checker) -> Result<KernelCheck> {
    let p = KernelParams::VGG_CONV;
    let x = c.uniform(&[1, 2, 5, 5], -1.0, 1.0);
    let w = c.uniform(&[3, 2, 3, 3], -0.5, 0.5);
    let b = c.uniform(&[3], -0.5, 0.5);
    let y = tensor::conv2d(&x, &w, &b, p)?;
    let r = c.uniform(y.shape(), -1.0, 1.0);
    let (gx, gw, gb) = tensor::conv2d_backward(&x, &w, p, &r, true)?;
    let f = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| {
        project(&tensor::conv2d(x, w, b, p).expect("valid shapes"), &r)
    };
    Ok(record(
        "conv2d",
        &[
            (
                gx.expect("input gradient"),
                finite_diff_gradient(|t| f(t, &w, &b), &x, STEP),
            ),
            (gw, finite_diff_gradient(|t| f(&x, t, &b), &w, STEP)),
            (gb, finite_diff_gradient(|t| f(&x, &w, t), &b, STEP)),
        ],
    ))
}

fn check_dense(c: &mut Checker) -> Result<KernelCheck> {
    let x = c.uniform(&[4, 6], -1.0, 1.0);
    let w = c.uniform(&[5, 6], -1.0, 1.0);
    let b = c.uniform(&[5], -1.0, 1.0);
    let r = c.uniform(&[4, 5], -1.0, 1.0);
    let (gx, gw, gb) = tensor::dense_backward(&x, &w, &r, true)?;
    let f = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| {
        project(&tensor::dense(x, w, b).expect("valid shapes"), &r)
    };
    Ok(record(
        "dense",
        &[
            (
                gx.expect("input gradient"),
                finite_diff_gradient(|t| f(t, &w, &b), &x, STEP),
            ),
            (gw, finite_diff_gradient(|t| f(&x, t, &b), &w, STEP)),
            (gb, finite_diff_gradient(|t| f(&x, &w, t), &b, STEP)),
        ],
    ))
}

fn check_relu(c: &mut Checker) -> Result<KernelCheck> {
    let x = c.away_from_zero(&[5, 10]);
    let r = c.uniform(&[5, 10], -1.0, 1.0);
    let g = tensor::relu_backward(&x, &r)?;
    let numeric = finite_diff_gradient(|t| project(&tensor::relu(t), &r), &x, STEP);
    Ok(record("relu", &[(g, numeric)]))
}

fn check_maxpool(c: &mut Checker) -> Result<KernelCheck> {
    // a shuffled ladder keeps every window's entries at least 0.05 apart
    let mut ladder: Vec<f64> = (0..32).map(|i| i as f64 * 0.05).collect();
    for i in (1..ladder.len()).rev() {
        let j = c.rng.gen_range(0..=i);
        ladder.swap(i, j);
    }
    let x = Tensor::new(vec![1, 2, 4, 4], ladder)?;
    let (y, idx) = tensor::maxpool2x2(&x)?;
    let r = c.uniform(y.shape(), -1.0, 1.0);
    let g = tensor::maxpool2x2_backward(&idx, &r)?;
    let numeric = finite_diff_gradient(
        |t| project(&tensor::maxpool2x2(t).expect("even dims").0, &r),
        &x,
        STEP,
    );
    Ok(record("maxpool2x2", &[(g, numeric)]))
}

fn check_dropout(c: &mut Checker) -> Result<KernelCheck> {
    let x = c.uniform(&[4, 12], -1.0, 1.0);
    let r = c.uniform(&[4, 12], -1.0, 1.0);
    let seed = c.rng.gen();
    let mut state = DropoutState::new(0.5, DropoutMode::Training, seed)?;
    tensor::dropout(&x, &mut state);
    let rec = OpRecord::Dropout {
        mask: state.mask().to_vec(),
        scale: state.scale(),
    };
    let g = rec.backward(&r, true)?.input.expect("input gradient");
    // one seed, one mask across all probes
    let numeric = finite_diff_gradient(
        |t| {
            let mut s = DropoutState::new(0.5, DropoutMode::Training, seed).expect("valid rate");
            project(&tensor::dropout(t, &mut s), &r)
        },
        &x,
        STEP,
    );
    Ok(record("dropout", &[(g, numeric)]))
}

fn check_softmax(c: &mut Checker) -> Result<KernelCheck> {
    let logits = c.uniform(&[6, 3], -3.0, 3.0);
    let labels = c.one_hot(6, 3);
    let g = tensor::softmax_cross_entropy(&logits, &labels)?.grad;
    let numeric = finite_diff_gradient(
        |t| tensor::softmax_cross_entropy(t, &labels).expect("one-hot").loss,
        &logits,
        STEP,
    );
    Ok(record("softmax_cross_entropy", &[(g, numeric)]))
}

fn check_sigmoid(c: &mut Checker) -> Result<KernelCheck> {
    let logits = c.uniform(&[6, 2], -3.0, 3.0);
    let labels = c.one_hot(6, 2);
    let g = tensor::sigmoid_binary_loss(&logits, &labels)?.grad;
    let numeric = finite_diff_gradient(
        |t| tensor::sigmoid_binary_loss(t, &labels).expect("one-hot").loss,
        &logits,
        STEP,
    );
    Ok(record("sigmoid_binary_loss", &[(g, numeric)]))
}

/// Loss of the full multiclass network (reduced width) with respect to a
/// sample of fc1/fc3 weights, dropout masks held fixed by the seed.
fn check_head(c: &mut Checker) -> Result<KernelCheck> {
    let graph =
        ModelGraph::build(Architecture::Vgg16, Task::Multiclass, GraphOptions::tiny())?.freeze_features();
    let weights = WeightStore::<f64>::init(&graph, c.rng.gen());
    let batch = c.uniform(&[2, 3, 64, 64], 0.0, 1.0);
    let labels = c.one_hot(2, 3);
    let mode = Mode::Training { seed: c.rng.gen() };

    // (loss, ReLU sign pattern) at a weight setting
    let eval = |store: &WeightStore<f64>| -> Result<(f64, Vec<bool>)> {
        let net = Network::new(&graph, store)?;
        let pass = net.forward(&batch, mode)?;
        let loss = tensor::softmax_cross_entropy(&pass.logits, &labels)?.loss;
        Ok((loss, pass.tape.expect("training pass").relu_pattern(&graph)))
    };
    let net = Network::new(&graph, &weights)?;
    let pass = net.forward(&batch, mode)?;
    let base_pattern = pass.tape.as_ref().expect("training pass").relu_pattern(&graph);
    let out = tensor::softmax_cross_entropy(&pass.logits, &labels)?;
    let grads = net.backward(&pass, &out.grad)?;

    let mut pairs = Vec::new();
    for (layer, count) in [("fc3", 60), ("fc2", 40), ("fc1", 40)] {
        let analytic = &grads.get(layer).expect("trainable head layer").weights;
        let size = analytic.len();
        let mut a = Vec::with_capacity(count);
        let mut n = Vec::with_capacity(count);
        let mut attempts = 0;
        while a.len() < count && attempts < 20 * count {
            attempts += 1;
            let i = c.rng.gen_range(0..size);
            let mut probe = weights.clone();
            let orig = probe.get(layer).expect("layer").weights.data()[i];
            probe.get_mut(layer).expect("layer").weights.data_mut()[i] = orig + STEP;
            let (plus, plus_pattern) = eval(&probe)?;
            probe.get_mut(layer).expect("layer").weights.data_mut()[i] = orig - STEP;
            let (minus, minus_pattern) = eval(&probe)?;
            // a probe that flips a ReLU straddles a kink; central differences
            // are meaningless there
            if plus_pattern != base_pattern || minus_pattern != base_pattern {
                continue;
            }
            a.push(analytic.data()[i]);
            n.push((plus - minus) / (2.0 * STEP));
        }
        let len = a.len();
        pairs.push((Tensor::new(vec![len], a)?, Tensor::new(vec![len], n)?));
    }
    Ok(record("head_loss", &pairs))
}

/// Runs every kernel check with inputs drawn from `seed`.
pub fn gradient_suite(seed: u64) -> Result<Vec<KernelCheck>> {
    let mut c = Checker {
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    Ok(vec![
        check_conv(&mut c)?,
        check_dense(&mut c)?,
        check_relu(&mut c)?,
        check_maxpool(&mut c)?,
        check_dropout(&mut c)?,
        check_softmax(&mut c)?,
        check_sigmoid(&mut c)?,
        check_head(&mut c)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_kernel_passes() {
        for check in gradient_suite(7).unwrap() {
            assert!(check.passed(), "{check:?}");
            assert!(check.elements <= 200, "{check:?}");
        }
    }
}
