use super::graph::{LayerKind, LayerSpec, ModelGraph, OutputActivation};
use super::weights::WeightStore;
use crate::error::{Error, Result};
use crate::seed::mix;
use crate::tensor::{
    self, conv2d_backward, dense_backward, maxpool2x2, maxpool2x2_backward, relu_backward, DropoutMode,
    DropoutState, Element, PoolIndices, Tensor,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active with masks drawn from `seed`; activations recorded.
    Training { seed: u64 },
    /// Plain forward pass, nothing recorded.
    Inference,
}

#[derive(Debug, Clone)]
enum Saved<T> {
    Input(Tensor<T>),
    Pool(PoolIndices),
    Mask(Vec<bool>, T),
    Shape(Vec<usize>),
    Nothing,
}

/// Activations kept by a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    first: usize,
    saved: Vec<Saved<T>>,
}

impl<T: Element> Tape<T> {
    /// Sign pattern (`x > 0`) of every recorded ReLU input. Two passes with
    /// equal patterns lie on the same linear piece of the network.
    pub fn relu_pattern(&self, graph: &ModelGraph) -> Vec<bool> {
        let mut pattern = Vec::new();
        for (layer, saved) in graph.layers()[self.first..].iter().zip(&self.saved) {
            if let (LayerKind::Relu, Saved::Input(x)) = (&layer.kind, saved) {
                pattern.extend(x.data().iter().map(|&v| v > T::zero()));
            }
        }
        pattern
    }
}

#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    pub logits: Tensor<T>,
    pub probs: Tensor<T>,
    pub tape: Option<Tape<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads<T> {
    pub name: String,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Parameter gradients of the trainable layers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradStore<T> {
    pub layers: Vec<LayerGrads<T>>,
}

impl<T: Element> GradStore<T> {
    pub fn get(&self, name: &str) -> Option<&LayerGrads<T>> {
        self.layers.iter().find(|g| g.name == name)
    }
}

/// A graph bound to a set of weights.
pub struct Network<'a, T> {
    graph: &'a ModelGraph,
    weights: &'a WeightStore<T>,
}

impl<'a, T: Element> Network<'a, T> {
    pub fn new(graph: &'a ModelGraph, weights: &'a WeightStore<T>) -> Result<Self> {
        if graph.task().is_none() {
            return Err(Error::State("graph has no classification head".into()));
        }
        for layer in graph.weighted_layers() {
            weights.require(&layer.name)?;
        }
        weights.validate(graph)?;
        Ok(Self { graph, weights })
    }

    fn is_trainable(&self, layer: &LayerSpec) -> bool {
        layer.trainable && self.weights.get(&layer.name).is_some_and(|e| !e.frozen)
    }

    /// Index of the first layer whose activations backward needs.
    fn first_recorded(&self) -> usize {
        self.graph
            .layers()
            .iter()
            .position(|l| l.is_weighted() && self.is_trainable(l))
            .unwrap_or(self.graph.layers().len())
    }

    fn flatten_index(&self) -> usize {
        self.graph
            .layers()
            .iter()
            .position(|l| l.kind == LayerKind::Flatten)
            .expect("head graphs contain a flatten layer")
    }

    fn last_dense(&self) -> usize {
        self.graph
            .layers()
            .iter()
            .rposition(|l| matches!(l.kind, LayerKind::Dense { .. }))
            .expect("head graphs contain dense layers")
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<()> {
        let [_, c, h, w] = batch.dims4("input batch")?;
        let [ec, eh, ew] = self.graph.input_shape();
        if c != ec {
            return Err(Error::dim("input channels (axis 1)", ec, c));
        }
        if h != eh {
            return Err(Error::dim("input height (axis 2)", eh, h));
        }
        if w != ew {
            return Err(Error::dim("input width (axis 3)", ew, w));
        }
        Ok(())
    }

    fn apply(&self, index: usize, x: Tensor<T>, mode: Mode, record: bool) -> Result<(Tensor<T>, Saved<T>)> {
        let layer = &self.graph.layers()[index];
        let saved_input = |x: &Tensor<T>| {
            if record {
                Saved::Input(x.clone())
            } else {
                Saved::Nothing
            }
        };
        Ok(match &layer.kind {
            LayerKind::Conv { params, .. } => {
                let e = self.weights.require(&layer.name)?;
                let y = tensor::conv2d(&x, &e.weights, &e.bias, *params)?;
                (y, saved_input(&x))
            }
            LayerKind::Dense { .. } => {
                let e = self.weights.require(&layer.name)?;
                let y = tensor::dense(&x, &e.weights, &e.bias)?;
                (y, saved_input(&x))
            }
            LayerKind::Relu => {
                let y = tensor::relu(&x);
                (y, saved_input(&x))
            }
            LayerKind::MaxPool { .. } => {
                let (y, idx) = maxpool2x2(&x)?;
                (y, if record { Saved::Pool(idx) } else { Saved::Nothing })
            }
            LayerKind::Flatten => {
                let shape = x.shape().to_vec();
                let n = shape[0];
                let width = shape[1..].iter().product::<usize>();
                let y = x.reshape(vec![n, width])?;
                (
                    y,
                    if record {
                        Saved::Shape(shape)
                    } else {
                        Saved::Nothing
                    },
                )
            }
            LayerKind::Dropout { rate } => match mode {
                Mode::Inference => (x, Saved::Nothing),
                Mode::Training { seed } => {
                    let mut state = DropoutState::new(*rate, DropoutMode::Training, mix(seed, index as u64))?;
                    let y = tensor::dropout(&x, &mut state);
                    let saved = if record {
                        Saved::Mask(state.mask().to_vec(), T::from_f64_lossy(state.scale()))
                    } else {
                        Saved::Nothing
                    };
                    (y, saved)
                }
            },
            LayerKind::Output(act) => {
                let y = match act {
                    OutputActivation::Softmax => tensor::softmax(&x)?,
                    OutputActivation::Sigmoid => tensor::sigmoid(&x),
                };
                (y, Saved::Nothing)
            }
        })
    }

    /// Runs the batch through the graph. The unrecorded convolutional prefix
    /// is evaluated one sample at a time to bound memory.
    pub fn forward(&self, batch: &Tensor<T>, mode: Mode) -> Result<ForwardPass<T>> {
        self.check_batch(batch)?;
        let layers = self.graph.layers();
        let recording = matches!(mode, Mode::Training { .. });
        let first = if recording {
            self.first_recorded()
        } else {
            layers.len()
        };
        let prefix_end = first.min(self.flatten_index() + 1);
        let n = batch.shape()[0];

        let mut x = if prefix_end > 0 {
            let mut samples = Vec::with_capacity(n);
            for s in 0..n {
                let mut xs = batch.slice_batch(s, 1)?;
                for i in 0..prefix_end {
                    xs = self.apply(i, xs, mode, false)?.0;
                }
                samples.push(xs);
            }
            let mut stacked = Tensor::stack(&samples)?;
            // stack adds an axis; drop the per-sample batch of one
            let mut shape = stacked.shape().to_vec();
            shape.remove(1);
            stacked = stacked.reshape(shape)?;
            stacked
        } else {
            batch.clone()
        };

        let mut saved = Vec::new();
        let last_dense = self.last_dense();
        let mut logits = None;
        for i in prefix_end..layers.len() {
            let record = recording && i >= first;
            let (y, s) = self.apply(i, x, mode, record)?;
            if record {
                saved.push(s);
            }
            if i == last_dense {
                logits = Some(y.clone());
            }
            x = y;
        }
        Ok(ForwardPass {
            logits: logits.expect("last dense layer executed"),
            probs: x,
            tape: recording.then_some(Tape {
                first: prefix_end.max(first),
                saved,
            }),
        })
    }

    /// Parameter gradients of the trainable layers given `d_logits`, the
    /// loss gradient at the output of the final dense layer.
    pub fn backward(&self, pass: &ForwardPass<T>, d_logits: &Tensor<T>) -> Result<GradStore<T>> {
        let tape = pass
            .tape
            .as_ref()
            .ok_or_else(|| Error::State("backward requires a training-mode forward pass".into()))?;
        if d_logits.shape() != pass.logits.shape() {
            return Err(Error::Shape(format!(
                "logit gradient {:?}, expected {:?}",
                d_logits.shape(),
                pass.logits.shape()
            )));
        }
        let layers = self.graph.layers();
        let mut grads = Vec::new();
        let mut upstream = d_logits.clone();
        for i in (tape.first..=self.last_dense()).rev() {
            let layer = &layers[i];
            let need_input = i > tape.first;
            let saved = &tape.saved[i - tape.first];
            let next = match (&layer.kind, saved) {
                (LayerKind::Conv { params, .. }, Saved::Input(x)) => {
                    let e = self.weights.require(&layer.name)?;
                    let (gi, gw, gb) = conv2d_backward(x, &e.weights, *params, &upstream, need_input)?;
                    if self.is_trainable(layer) {
                        grads.push(LayerGrads {
                            name: layer.name.clone(),
                            weights: gw,
                            bias: gb,
                        });
                    }
                    gi
                }
                (LayerKind::Dense { .. }, Saved::Input(x)) => {
                    let e = self.weights.require(&layer.name)?;
                    let (gi, gw, gb) = dense_backward(x, &e.weights, &upstream, need_input)?;
                    if self.is_trainable(layer) {
                        grads.push(LayerGrads {
                            name: layer.name.clone(),
                            weights: gw,
                            bias: gb,
                        });
                    }
                    gi
                }
                (LayerKind::Relu, Saved::Input(x)) => Some(relu_backward(x, &upstream)?),
                (LayerKind::MaxPool { .. }, Saved::Pool(idx)) => Some(maxpool2x2_backward(idx, &upstream)?),
                (LayerKind::Flatten, Saved::Shape(shape)) => Some(upstream.reshape(shape.clone())?),
                (LayerKind::Dropout { .. }, Saved::Mask(mask, scale)) => Some(
                    tensor::OpRecord::Dropout {
                        mask: mask.clone(),
                        scale: *scale,
                    }
                    .backward(&upstream, true)?
                    .input
                    .expect("dropout input gradient"),
                ),
                (LayerKind::Dropout { .. }, Saved::Nothing) => Some(upstream),
                (_, _) => {
                    return Err(Error::State(format!(
                        "no recorded activation for layer `{}`",
                        layer.name
                    )))
                }
            };
            match next {
                Some(g) => upstream = g,
                None => break,
            }
        }
        grads.reverse();
        Ok(GradStore { layers: grads })
    }
}
