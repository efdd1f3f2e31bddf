//! Fine-tuned VGG-16/VGG-19 image classification built from first principles:
//! tensor kernels with hand-written backward passes, the VGG graphs with a
//! replaceable classifier head, Adam training, stratified dataset splits with
//! augmentation, and precision/recall/F-measure/accuracy reporting.

pub mod cli;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
mod seed;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result, WeightFileError};
pub use tensor::Tensor;
