use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{LayerKind, ModelGraph};
use crate::error::{Error, Result};
use crate::seed::{fnv1a, mix};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct WeightEntry<T = f32> {
    pub name: String,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub frozen: bool,
}

/// Weights and biases of every weight-bearing layer, in graph order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightStore<T = f32> {
    entries: Vec<WeightEntry<T>>,
}

impl<T: Element> WeightStore<T> {
    /// He-uniform weights `U(-sqrt(6/fan_in), sqrt(6/fan_in))` and zero biases.
    /// Each layer draws from its own stream keyed by `seed` and the layer name.
    pub fn init(graph: &ModelGraph, seed: u64) -> Self {
        let entries = graph
            .weighted_layers()
            .map(|layer| {
                let (w_shape, b_shape) = layer.param_shapes().expect("weighted layer");
                let limit = (6.0 / layer.fan_in() as f64).sqrt();
                let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, fnv1a(layer.name.as_bytes())));
                let weights = Tensor::from_fn(w_shape, |_| T::from_f64_lossy(rng.gen_range(-limit..limit)));
                WeightEntry {
                    name: layer.name.clone(),
                    weights,
                    bias: Tensor::zeros(b_shape),
                    frozen: !layer.trainable,
                }
            })
            .collect();
        Self { entries }
    }

    pub fn zeros(graph: &ModelGraph) -> Self {
        let entries = graph
            .weighted_layers()
            .map(|layer| {
                let (w_shape, b_shape) = layer.param_shapes().expect("weighted layer");
                WeightEntry {
                    name: layer.name.clone(),
                    weights: Tensor::zeros(w_shape),
                    bias: Tensor::zeros(b_shape),
                    frozen: !layer.trainable,
                }
            })
            .collect();
        Self { entries }
    }

    pub fn from_entries(entries: Vec<WeightEntry<T>>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[WeightEntry<T>] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [WeightEntry<T>] {
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&WeightEntry<T>> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut WeightEntry<T>> {
        self.entries.iter_mut().find(|e| e.name == name)
    }

    /// Looks up a layer's entry, failing with a weight error naming it.
    pub fn require(&self, name: &str) -> Result<&WeightEntry<T>> {
        self.get(name).ok_or_else(|| Error::Weight {
            layer: name.to_string(),
            message: "no weights loaded for this layer".into(),
        })
    }

    /// Copies the graph's trainable flags onto the entries.
    pub fn sync_frozen(&mut self, graph: &ModelGraph) {
        for layer in graph.weighted_layers() {
            if let Some(entry) = self.get_mut(&layer.name) {
                entry.frozen = !layer.trainable;
            }
        }
    }

    /// Every weight-bearing layer has exactly one entry of the right shape.
    pub fn validate(&self, graph: &ModelGraph) -> Result<()> {
        for layer in graph.weighted_layers() {
            let (w_shape, b_shape) = layer.param_shapes().expect("weighted layer");
            let matches: Vec<_> = self.entries.iter().filter(|e| e.name == layer.name).collect();
            let entry = match matches.as_slice() {
                [one] => one,
                [] => {
                    return Err(Error::Weight {
                        layer: layer.name.clone(),
                        message: "missing entry".into(),
                    })
                }
                _ => {
                    return Err(Error::Weight {
                        layer: layer.name.clone(),
                        message: "duplicate entries".into(),
                    })
                }
            };
            if entry.weights.shape() != w_shape || entry.bias.shape() != b_shape {
                return Err(Error::Weight {
                    layer: layer.name.clone(),
                    message: format!(
                        "shapes {:?}/{:?}, expected {w_shape:?}/{b_shape:?}",
                        entry.weights.shape(),
                        entry.bias.shape()
                    ),
                });
            }
        }
        Ok(())
    }

    /// Replaces the convolutional entries with those of `features`.
    pub fn transfer_features(&mut self, graph: &ModelGraph, features: &WeightStore<T>) -> Result<()> {
        for layer in graph.layers() {
            if !matches!(layer.kind, LayerKind::Conv { .. }) {
                continue;
            }
            let src = features.require(&layer.name)?;
            let dst = self.get_mut(&layer.name).ok_or_else(|| Error::Weight {
                layer: layer.name.clone(),
                message: "not present in the target store".into(),
            })?;
            if src.weights.shape() != dst.weights.shape() || src.bias.shape() != dst.bias.shape() {
                return Err(Error::Weight {
                    layer: layer.name.clone(),
                    message: format!(
                        "pretrained shape {:?} does not match {:?}",
                        src.weights.shape(),
                        dst.weights.shape()
                    ),
                });
            }
            dst.weights = src.weights.clone();
            dst.bias = src.bias.clone();
        }
        Ok(())
    }

    pub fn cast<U: Element>(&self) -> WeightStore<U> {
        WeightStore {
            entries: self
                .entries
                .iter()
                .map(|e| WeightEntry {
                    name: e.name.clone(),
                    weights: e.weights.cast(),
                    bias: e.bias.cast(),
                    frozen: e.frozen,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::graph::{Architecture, GraphOptions, Task};

    fn tiny() -> ModelGraph {
        ModelGraph::build(Architecture::Vgg16, Task::Multiclass, GraphOptions::tiny()).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let g = tiny();
        let a = WeightStore::<f32>::init(&g, 11);
        let b = WeightStore::<f32>::init(&g, 11);
        let c = WeightStore::<f32>::init(&g, 12);
        assert_eq!(a, b);
        assert_ne!(a, c);
        a.validate(&g).unwrap();
    }

    #[test]
    fn init_respects_he_bound() {
        let g = tiny();
        let s = WeightStore::<f64>::init(&g, 3);
        for (entry, layer) in s.entries().iter().zip(g.weighted_layers()) {
            let limit = (6.0 / layer.fan_in() as f64).sqrt();
            assert!(entry.weights.data().iter().all(|v| v.abs() < limit));
            assert!(entry.bias.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn validate_names_missing_layer() {
        let g = tiny();
        let mut s = WeightStore::<f32>::init(&g, 0);
        s.entries.retain(|e| e.name != "conv3_2");
        match s.validate(&g) {
            Err(Error::Weight { layer, .. }) => assert_eq!(layer, "conv3_2"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn frozen_flags_follow_graph() {
        let g = tiny().freeze_features();
        let s = WeightStore::<f32>::init(&g, 0);
        assert_eq!(s.entries().iter().filter(|e| !e.frozen).count(), 3);
    }
}
