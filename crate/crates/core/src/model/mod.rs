//! VGG graph construction, the fine-tuning head, weights, and the network
//! forward/backward pass.

mod graph;
pub mod io;
mod network;
mod weights;

pub use graph::{
    build_vgg16, build_vgg19, Architecture, GraphOptions, LayerKind, LayerSpec, ModelGraph, OutputActivation,
    ParamCount, Task, DEFAULT_DROPOUT, HEAD_UNITS, INPUT_SIZE,
};
pub use io::{load_features, load_weights, read_header, save_features, save_weights, WeightFile};
pub use network::{ForwardPass, GradStore, LayerGrads, Mode, Network, Tape};
pub use weights::{WeightEntry, WeightStore};
