use super::activation::apply_mask;
use super::{
    conv2d_backward, dense_backward, maxpool2x2_backward, relu_backward, Element, KernelParams, PoolIndices,
    Tensor,
};
use crate::error::{Error, Result};

/// What a forward kernel kept for its backward pass.
#[derive(Debug, Clone)]
pub enum OpRecord<T> {
    Conv2d {
        input: Tensor<T>,
        weights: Tensor<T>,
        params: KernelParams,
    },
    MaxPool(PoolIndices),
    Dense {
        input: Tensor<T>,
        weights: Tensor<T>,
    },
    Relu {
        input: Tensor<T>,
    },
    Dropout {
        mask: Vec<bool>,
        scale: T,
    },
    Flatten {
        input_shape: Vec<usize>,
    },
}

/// Gradients for a kernel's input and (when it has them) parameters.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    /// `None` only when the caller asked to skip the input gradient.
    pub input: Option<Tensor<T>>,
    pub weights: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

impl<T: Element> OpRecord<T> {
    pub fn backward(&self, upstream: &Tensor<T>, need_input: bool) -> Result<Gradients<T>> {
        let only_input = |input: Tensor<T>| Gradients {
            input: Some(input),
            weights: None,
            bias: None,
        };
        match self {
            OpRecord::Conv2d {
                input,
                weights,
                params,
            } => {
                let (gi, gw, gb) = conv2d_backward(input, weights, *params, upstream, need_input)?;
                Ok(Gradients {
                    input: gi,
                    weights: Some(gw),
                    bias: Some(gb),
                })
            }
            OpRecord::Dense { input, weights } => {
                let (gi, gw, gb) = dense_backward(input, weights, upstream, need_input)?;
                Ok(Gradients {
                    input: gi,
                    weights: Some(gw),
                    bias: Some(gb),
                })
            }
            OpRecord::MaxPool(indices) => Ok(only_input(maxpool2x2_backward(indices, upstream)?)),
            OpRecord::Relu { input } => Ok(only_input(relu_backward(input, upstream)?)),
            OpRecord::Dropout { mask, scale } => {
                if mask.len() != upstream.len() {
                    return Err(Error::dim("dropout upstream length", mask.len(), upstream.len()));
                }
                Ok(only_input(apply_mask(upstream, mask, *scale)))
            }
            OpRecord::Flatten { input_shape } => {
                Ok(only_input(upstream.clone().reshape(input_shape.clone())?))
            }
        }
    }
}

/// Backward through a single recorded kernel. A missing record means the
/// forward pass was run without recording.
pub fn backward<T: Element>(record: Option<&OpRecord<T>>, upstream: &Tensor<T>) -> Result<Gradients<T>> {
    record
        .ok_or_else(|| Error::State("backward called without a recorded forward pass".into()))?
        .backward(upstream, true)
}
