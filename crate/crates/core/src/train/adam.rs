use crate::error::{Error, Result};
use crate::model::{GradStore, WeightStore};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments<T> {
    name: String,
    m_w: Vec<T>,
    v_w: Vec<T>,
    m_b: Vec<T>,
    v_b: Vec<T>,
}

/// First/second moments per trainable layer plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T = f32> {
    layers: Vec<Moments<T>>,
    t: u64,
}

impl<T> Default for AdamState<T> {
    fn default() -> Self {
        Self {
            layers: Vec::new(),
            t: 0,
        }
    }
}

impl<T: Element> AdamState<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step(&self) -> u64 {
        self.t
    }

    /// `(m, v)` of a layer's weights, if it has been updated.
    pub fn weight_moments(&self, layer: &str) -> Option<(&[T], &[T])> {
        self.layers
            .iter()
            .find(|m| m.name == layer)
            .map(|m| (m.m_w.as_slice(), m.v_w.as_slice()))
    }

    fn moments(&mut self, name: &str, weights: usize, bias: usize) -> &mut Moments<T> {
        let idx = match self.layers.iter().position(|m| m.name == name) {
            Some(i) => i,
            None => {
                self.layers.push(Moments {
                    name: name.to_string(),
                    m_w: vec![T::zero(); weights],
                    v_w: vec![T::zero(); weights],
                    m_b: vec![T::zero(); bias],
                    v_b: vec![T::zero(); bias],
                });
                self.layers.len() - 1
            }
        };
        &mut self.layers[idx]
    }
}

/// One Adam update of `params` in place. `t` is the 1-based step number.
pub fn adam_update<T: Element>(
    params: &mut [T],
    grads: &[T],
    m: &mut [T],
    v: &mut [T],
    t: u64,
    cfg: &AdamConfig,
) -> Result<()> {
    for (axis, len) in [
        ("gradient", grads.len()),
        ("first moment", m.len()),
        ("second moment", v.len()),
    ] {
        if len != params.len() {
            return Err(Error::dim(axis, params.len(), len));
        }
    }
    let b1 = T::from_f64_lossy(cfg.beta1);
    let b2 = T::from_f64_lossy(cfg.beta2);
    let one = T::one();
    let c1 = T::from_f64_lossy(1.0 - cfg.beta1.powf(t as f64));
    let c2 = T::from_f64_lossy(1.0 - cfg.beta2.powf(t as f64));
    let lr = T::from_f64_lossy(cfg.learning_rate);
    let eps = T::from_f64_lossy(cfg.epsilon);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

fn check_shape<T: Element>(layer: &str, what: &str, param: &Tensor<T>, grad: &Tensor<T>) -> Result<()> {
    if param.shape() != grad.shape() {
        return Err(Error::Shape(format!(
            "{layer}: {what} gradient shape {:?} does not match parameter shape {:?}",
            grad.shape(),
            param.shape()
        )));
    }
    Ok(())
}

/// Applies one step to every layer in `grads`. Gradients for frozen or
/// unknown layers are rejected.
pub fn adam_step<T: Element>(
    store: &mut WeightStore<T>,
    grads: &GradStore<T>,
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    for g in &grads.layers {
        let entry = store.get(&g.name).ok_or_else(|| Error::Weight {
            layer: g.name.clone(),
            message: "gradient for a layer absent from the weight store".into(),
        })?;
        if entry.frozen {
            return Err(Error::State(format!(
                "gradient supplied for frozen layer {}",
                g.name
            )));
        }
        check_shape(&g.name, "weight", &entry.weights, &g.weights)?;
        check_shape(&g.name, "bias", &entry.bias, &g.bias)?;
    }
    state.t += 1;
    let t = state.t;
    for g in &grads.layers {
        let entry = store.get_mut(&g.name).expect("checked above");
        let mo = state.moments(&g.name, entry.weights.len(), entry.bias.len());
        adam_update(
            entry.weights.data_mut(),
            g.weights.data(),
            &mut mo.m_w,
            &mut mo.v_w,
            t,
            cfg,
        )?;
        adam_update(
            entry.bias.data_mut(),
            g.bias.data(),
            &mut mo.m_b,
            &mut mo.v_b,
            t,
            cfg,
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, GraphOptions, LayerGrads, ModelGraph, Task};

    fn one_step(g: f64) -> f64 {
        let mut p = [0.0f64];
        let (mut m, mut v) = ([0.0], [0.0]);
        adam_update(&mut p, &[g], &mut m, &mut v, 1, &AdamConfig::default()).unwrap();
        -p[0]
    }

    #[test]
    fn first_step_closed_form() {
        let step = one_step(0.5);
        assert!((step - 1e-4 * 0.5 / (0.5 + 1e-8)).abs() < 1e-18);
        assert!((step - 9.9999998e-5).abs() < 1e-12);
        assert!((one_step(50.0) - 1e-4).abs() < 1e-11);
        assert!((one_step(-0.5) + step).abs() < 1e-18);
        assert_eq!(one_step(0.0), 0.0);
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let cfg = AdamConfig::default();
        let mut p = [1.0f32];
        let (mut m, mut v) = ([0.0], [0.0]);
        let mut prev = p[0];
        for t in 1..=10 {
            adam_update(&mut p, &[0.3], &mut m, &mut v, t, &cfg).unwrap();
            assert!(p[0] < prev);
            assert!(v[0] >= 0.0);
            prev = p[0];
        }
    }

    #[test]
    fn mismatched_lengths() {
        let mut p = [0.0f32; 3];
        let err = adam_update(
            &mut p,
            &[0.0; 2],
            &mut [0.0; 3],
            &mut [0.0; 3],
            1,
            &AdamConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err.kind(), "dimension");
    }

    #[test]
    fn step_rejects_frozen_and_bad_shapes() {
        let graph = ModelGraph::build(Architecture::Vgg16, Task::Binary, GraphOptions::tiny())
            .unwrap()
            .freeze_features();
        let mut store = WeightStore::<f32>::init(&graph, 1);
        let mut state = AdamState::new();
        let cfg = AdamConfig::default();
        let frozen = GradStore {
            layers: vec![LayerGrads {
                name: "conv1_1".into(),
                weights: Tensor::zeros(store.get("conv1_1").unwrap().weights.shape().to_vec()),
                bias: Tensor::zeros(store.get("conv1_1").unwrap().bias.shape().to_vec()),
            }],
        };
        assert_eq!(
            adam_step(&mut store, &frozen, &mut state, &cfg)
                .unwrap_err()
                .kind(),
            "state"
        );
        let bad = GradStore {
            layers: vec![LayerGrads {
                name: "fc3".into(),
                weights: Tensor::zeros(vec![2, 2]),
                bias: Tensor::zeros(vec![512]),
            }],
        };
        assert_eq!(
            adam_step(&mut store, &bad, &mut state, &cfg).unwrap_err().kind(),
            "dimension"
        );
        assert_eq!(state.step(), 0);

        let fc3 = store.get("fc3").unwrap().clone();
        let good = GradStore {
            layers: vec![LayerGrads {
                name: "fc3".into(),
                weights: Tensor::full(fc3.weights.shape().to_vec(), 0.25),
                bias: Tensor::full(fc3.bias.shape().to_vec(), -0.25),
            }],
        };
        adam_step(&mut store, &good, &mut state, &cfg).unwrap();
        assert_eq!(state.step(), 1);
        let after = store.get("fc3").unwrap();
        assert!(after
            .weights
            .data()
            .iter()
            .zip(fc3.weights.data())
            .all(|(a, b)| a < b));
        assert!(after.bias.data().iter().all(|&b| b > 0.0));
        assert!(state.weight_moments("fc3").is_some());
    }
}
