use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::KernelParams;

/// Units in each of the two hidden fully-connected layers of the head.
pub const HEAD_UNITS: usize = 512;

/// Default dropout rate after the hidden fully-connected layers.
pub const DEFAULT_DROPOUT: f64 = 0.5;

/// Spatial input size of the fine-tuned networks.
pub const INPUT_SIZE: usize = 192;

const STAGE_WIDTHS: [usize; 5] = [64, 128, 256, 512, 512];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    Vgg16,
    Vgg19,
}

impl Architecture {
    /// Convolutions per stage.
    pub fn stage_depths(self) -> [usize; 5] {
        match self {
            Architecture::Vgg16 => [2, 2, 3, 3, 3],
            Architecture::Vgg19 => [2, 2, 4, 4, 4],
        }
    }

    pub fn id(self) -> u8 {
        match self {
            Architecture::Vgg16 => 1,
            Architecture::Vgg19 => 2,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(Architecture::Vgg16),
            2 => Some(Architecture::Vgg19),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Vgg16 => "vgg16",
            Architecture::Vgg19 => "vgg19",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "").as_str() {
            "vgg16" => Ok(Architecture::Vgg16),
            "vgg19" => Ok(Architecture::Vgg19),
            other => Err(Error::Config(format!(
                "unknown architecture `{other}` (expected vgg16 or vgg19)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    /// Two classes, two sigmoid output units.
    Binary,
    /// Three classes, softmax output.
    Multiclass,
}

impl Task {
    pub fn classes(self) -> usize {
        match self {
            Task::Binary => 2,
            Task::Multiclass => 3,
        }
    }

    /// Weight-file task id; equals the class count.
    pub fn id(self) -> u8 {
        self.classes() as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            2 => Some(Task::Binary),
            3 => Some(Task::Multiclass),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Binary => "binary",
            Task::Multiclass => "multiclass",
        }
    }

    pub fn output_activation(self) -> OutputActivation {
        match self {
            Task::Binary => OutputActivation::Sigmoid,
            Task::Multiclass => OutputActivation::Softmax,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "binary" => Ok(Task::Binary),
            "multiclass" => Ok(Task::Multiclass),
            other => Err(Error::Config(format!(
                "unknown task `{other}` (expected binary or multiclass)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Softmax,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Conv {
        in_channels: usize,
        out_channels: usize,
        params: KernelParams,
    },
    Relu,
    MaxPool {
        params: KernelParams,
    },
    Flatten,
    Dense {
        in_features: usize,
        out_features: usize,
    },
    Dropout {
        rate: f64,
    },
    Output(OutputActivation),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    /// Meaningful only for weight-bearing layers.
    pub trainable: bool,
}

impl LayerSpec {
    fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        Self {
            name: name.into(),
            kind,
            trainable: true,
        }
    }

    pub fn is_weighted(&self) -> bool {
        matches!(self.kind, LayerKind::Conv { .. } | LayerKind::Dense { .. })
    }

    /// (weight shape, bias shape) of a weight-bearing layer.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match self.kind {
            LayerKind::Conv {
                in_channels,
                out_channels,
                params,
            } => Some((
                vec![out_channels, in_channels, params.kernel_size, params.kernel_size],
                vec![out_channels],
            )),
            LayerKind::Dense {
                in_features,
                out_features,
            } => Some((vec![out_features, in_features], vec![out_features])),
            _ => None,
        }
    }

    pub fn param_count(&self) -> u64 {
        self.param_shapes()
            .map(|(w, b)| (w.iter().product::<usize>() + b.iter().product::<usize>()) as u64)
            .unwrap_or(0)
    }

    pub fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Conv {
                in_channels, params, ..
            } => in_channels * params.kernel_size * params.kernel_size,
            LayerKind::Dense { in_features, .. } => in_features,
            _ => 0,
        }
    }
}

/// Width/input scaling of the convolutional stack. The default is the
/// full-size network; `tiny` is a reduced variant for smoke tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphOptions {
    pub width_divisor: usize,
    pub input_size: usize,
    pub dropout_rate_pct: u8,
}

impl Default for GraphOptions {
    fn default() -> Self {
        Self {
            width_divisor: 1,
            input_size: INPUT_SIZE,
            dropout_rate_pct: (DEFAULT_DROPOUT * 100.0) as u8,
        }
    }
}

impl GraphOptions {
    /// Channel widths / 8 and a 64x64 input.
    pub fn tiny() -> Self {
        Self {
            width_divisor: 8,
            input_size: 64,
            ..Self::default()
        }
    }

    pub fn is_tiny(&self) -> bool {
        self.width_divisor != 1 || self.input_size != INPUT_SIZE
    }

    pub fn dropout_rate(&self) -> f64 {
        f64::from(self.dropout_rate_pct) / 100.0
    }

    pub fn with_dropout(mut self, rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        self.dropout_rate_pct = (rate * 100.0).round() as u8;
        Ok(self)
    }
}

/// Weight/parameter totals of a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParamCount {
    pub total: u64,
    pub trainable: u64,
    pub frozen: u64,
}

/// Ordered layer description of a VGG network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    arch: Architecture,
    task: Option<Task>,
    input_shape: [usize; 3],
    options: GraphOptions,
    layers: Vec<LayerSpec>,
}

impl ModelGraph {
    /// A graph with no layers.
    pub fn empty(arch: Architecture) -> Self {
        let options = GraphOptions::default();
        Self {
            arch,
            task: None,
            input_shape: [3, options.input_size, options.input_size],
            options,
            layers: Vec::new(),
        }
    }

    /// The convolutional feature extractor, ending at the flatten layer.
    pub fn features(arch: Architecture, options: GraphOptions) -> Result<Self> {
        if options.width_divisor == 0 || !options.input_size.is_multiple_of(32) || options.input_size == 0 {
            return Err(Error::Config(format!(
                "input size must be a positive multiple of 32 and width divisor >= 1 (got {}, {})",
                options.input_size, options.width_divisor
            )));
        }
        let mut layers = Vec::new();
        let mut channels = 3;
        for (stage, (&depth, &width)) in arch.stage_depths().iter().zip(&STAGE_WIDTHS).enumerate() {
            let width = (width / options.width_divisor).max(1);
            for i in 1..=depth {
                let name = format!("conv{}_{i}", stage + 1);
                layers.push(LayerSpec::new(
                    name.clone(),
                    LayerKind::Conv {
                        in_channels: channels,
                        out_channels: width,
                        params: KernelParams::VGG_CONV,
                    },
                ));
                layers.push(LayerSpec::new(format!("{name}_relu"), LayerKind::Relu));
                channels = width;
            }
            layers.push(LayerSpec::new(
                format!("pool{}", stage + 1),
                LayerKind::MaxPool {
                    params: KernelParams::VGG_POOL,
                },
            ));
        }
        layers.push(LayerSpec::new("flatten", LayerKind::Flatten));
        Ok(Self {
            arch,
            task: None,
            input_shape: [3, options.input_size, options.input_size],
            options,
            layers,
        })
    }

    /// Appends fc1 (flatten -> 512), ReLU, dropout, fc2 (512 -> 512), ReLU,
    /// dropout, fc3 (512 -> K) and the task's output activation.
    pub fn attach_finetune_head(mut self, task: Task) -> Result<Self> {
        if self.task.is_some() {
            return Err(Error::State("fine-tuning head already attached".into()));
        }
        if !matches!(self.layers.last(), Some(l) if l.kind == LayerKind::Flatten) {
            return Err(Error::State("graph must end at the flatten layer".into()));
        }
        let rate = self.options.dropout_rate();
        let mut width = self.flatten_width()?;
        for i in 1..=2 {
            self.layers.push(LayerSpec::new(
                format!("fc{i}"),
                LayerKind::Dense {
                    in_features: width,
                    out_features: HEAD_UNITS,
                },
            ));
            self.layers
                .push(LayerSpec::new(format!("fc{i}_relu"), LayerKind::Relu));
            self.layers.push(LayerSpec::new(
                format!("fc{i}_dropout"),
                LayerKind::Dropout { rate },
            ));
            width = HEAD_UNITS;
        }
        self.layers.push(LayerSpec::new(
            "fc3",
            LayerKind::Dense {
                in_features: width,
                out_features: task.classes(),
            },
        ));
        self.layers.push(LayerSpec::new(
            "output",
            LayerKind::Output(task.output_activation()),
        ));
        self.task = Some(task);
        Ok(self)
    }

    pub fn build(arch: Architecture, task: Task, options: GraphOptions) -> Result<Self> {
        Self::features(arch, options)?.attach_finetune_head(task)
    }

    /// Marks every convolution non-trainable and every dense layer trainable.
    pub fn freeze_features(mut self) -> Self {
        for layer in &mut self.layers {
            match layer.kind {
                LayerKind::Conv { .. } => layer.trainable = false,
                LayerKind::Dense { .. } => layer.trainable = true,
                _ => {}
            }
        }
        self
    }

    pub fn unfreeze_all(mut self) -> Self {
        for layer in &mut self.layers {
            layer.trainable = true;
        }
        self
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn task(&self) -> Option<Task> {
        self.task
    }

    pub fn options(&self) -> GraphOptions {
        self.options
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn layer(&self, name: &str) -> Option<&LayerSpec> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn weighted_layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.layers.iter().filter(|l| l.is_weighted())
    }

    pub fn count_kind(&self, pred: impl Fn(&LayerKind) -> bool) -> usize {
        self.layers.iter().filter(|l| pred(&l.kind)).count()
    }

    pub fn conv_count(&self) -> usize {
        self.count_kind(|k| matches!(k, LayerKind::Conv { .. }))
    }

    pub fn dense_count(&self) -> usize {
        self.count_kind(|k| matches!(k, LayerKind::Dense { .. }))
    }

    pub fn pool_count(&self) -> usize {
        self.count_kind(|k| matches!(k, LayerKind::MaxPool { .. }))
    }

    pub fn param_count(&self) -> ParamCount {
        let mut count = ParamCount::default();
        for layer in self.weighted_layers() {
            let n = layer.param_count();
            count.total += n;
            if layer.trainable {
                count.trainable += n;
            } else {
                count.frozen += n;
            }
        }
        count
    }

    /// Parameters held by convolutional layers.
    pub fn conv_param_count(&self) -> u64 {
        self.layers
            .iter()
            .filter(|l| matches!(l.kind, LayerKind::Conv { .. }))
            .map(LayerSpec::param_count)
            .sum()
    }

    /// Output shape (without the batch axis) after every layer.
    pub fn shape_trace(&self) -> Result<Vec<Vec<usize>>> {
        let mut shape = self.input_shape.to_vec();
        let mut trace = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            shape = match (&layer.kind, shape.as_slice()) {
                (
                    LayerKind::Conv {
                        in_channels,
                        out_channels,
                        params,
                    },
                    &[c, h, w],
                ) => {
                    if c != *in_channels {
                        return Err(Error::dim(
                            format!("{} input channels", layer.name),
                            *in_channels,
                            c,
                        ));
                    }
                    vec![
                        *out_channels,
                        params.output_size(h, "height")?,
                        params.output_size(w, "width")?,
                    ]
                }
                (LayerKind::MaxPool { params }, &[c, h, w]) => {
                    vec![
                        c,
                        params.output_size(h, "height")?,
                        params.output_size(w, "width")?,
                    ]
                }
                (LayerKind::Flatten, s) => vec![s.iter().product()],
                (
                    LayerKind::Dense {
                        in_features,
                        out_features,
                    },
                    &[d],
                ) => {
                    if d != *in_features {
                        return Err(Error::dim(
                            format!("{} input features", layer.name),
                            *in_features,
                            d,
                        ));
                    }
                    vec![*out_features]
                }
                (LayerKind::Relu | LayerKind::Dropout { .. } | LayerKind::Output(_), s) => s.to_vec(),
                (_, s) => {
                    return Err(Error::Shape(format!(
                        "layer {} cannot take input shape {s:?}",
                        layer.name
                    )))
                }
            };
            trace.push(shape.clone());
        }
        Ok(trace)
    }

    /// Width of the flattened feature vector.
    pub fn flatten_width(&self) -> Result<usize> {
        let trace = self.shape_trace()?;
        self.layers
            .iter()
            .position(|l| l.kind == LayerKind::Flatten)
            .map(|i| trace[i][0])
            .ok_or_else(|| Error::State("graph has no flatten layer".into()))
    }

    /// Checks the structural invariants of a VGG graph.
    pub fn audit(&self) -> Result<()> {
        let mut names = std::collections::HashSet::new();
        for layer in &self.layers {
            if !names.insert(layer.name.as_str()) {
                return Err(Error::State(format!("duplicate layer name `{}`", layer.name)));
            }
            match layer.kind {
                LayerKind::Conv { params, .. } if params != KernelParams::VGG_CONV => {
                    return Err(Error::State(format!("{}: conv params {params:?}", layer.name)))
                }
                LayerKind::MaxPool { params } if params != KernelParams::VGG_POOL => {
                    return Err(Error::State(format!("{}: pool params {params:?}", layer.name)))
                }
                _ => {}
            }
        }
        let convs: usize = self.arch.stage_depths().iter().sum();
        if self.conv_count() != convs || self.pool_count() != 5 {
            return Err(Error::State(format!(
                "{} needs {convs} convs and 5 pools, found {} and {}",
                self.arch,
                self.conv_count(),
                self.pool_count()
            )));
        }
        if self.task.is_some() && self.dense_count() != 3 {
            return Err(Error::State(format!(
                "head needs 3 dense layers, found {}",
                self.dense_count()
            )));
        }
        self.shape_trace().map(|_| ())
    }
}

pub fn build_vgg16(task: Task) -> ModelGraph {
    ModelGraph::build(Architecture::Vgg16, task, GraphOptions::default()).expect("default options are valid")
}

pub fn build_vgg19(task: Task) -> ModelGraph {
    ModelGraph::build(Architecture::Vgg19, task, GraphOptions::default()).expect("default options are valid")
}
