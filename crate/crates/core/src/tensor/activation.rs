use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Element, Tensor};
use crate::error::{Error, Result};

pub fn relu<T: Element>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes the upstream gradient only where the forward input was positive.
pub fn relu_backward<T: Element>(input: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    if input.shape() != upstream.shape() {
        return Err(Error::Shape(format!(
            "relu upstream gradient {:?}, expected {:?}",
            upstream.shape(),
            input.shape()
        )));
    }
    let data = input
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Training,
    Inference,
}

/// Inverted dropout: survivors are scaled by `1/(1-p)` at training time so
/// inference is a plain pass-through.
#[derive(Debug, Clone)]
pub struct DropoutState {
    rate: f64,
    pub mode: DropoutMode,
    pub rng_seed: u64,
    mask: Vec<bool>,
}

impl DropoutState {
    pub fn new(rate: f64, mode: DropoutMode, rng_seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        Ok(Self {
            rate,
            mode,
            rng_seed,
            mask: Vec::new(),
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Keep-mask of the last forward pass (`true` = unit survived).
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn scale(&self) -> f64 {
        1.0 / (1.0 - self.rate)
    }
}

pub fn dropout<T: Element>(input: &Tensor<T>, state: &mut DropoutState) -> Tensor<T> {
    match state.mode {
        DropoutMode::Inference => {
            state.mask = vec![true; input.len()];
            input.clone()
        }
        DropoutMode::Training => {
            let mut rng = ChaCha8Rng::seed_from_u64(state.rng_seed);
            let rate = state.rate;
            state.mask = (0..input.len()).map(|_| rng.gen::<f64>() >= rate).collect();
            apply_mask(input, &state.mask, T::from_f64_lossy(state.scale()))
        }
    }
}

/// `x * mask * scale`; also the backward of dropout for a recorded mask.
pub(crate) fn apply_mask<T: Element>(input: &Tensor<T>, mask: &[bool], scale: T) -> Tensor<T> {
    let data = input
        .data()
        .iter()
        .zip(mask)
        .map(|(&v, &keep)| if keep { v * scale } else { T::zero() })
        .collect();
    Tensor::new(input.shape().to_vec(), data).expect("mask matches input")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_values_and_idempotence() {
        let x = Tensor::<f32>::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap();
        let y = relu(&x);
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
        assert_eq!(relu(&y), y);
    }

    #[test]
    fn relu_backward_masks() {
        let x = Tensor::<f64>::new(vec![2], vec![-1.0, 2.0]).unwrap();
        let up = Tensor::<f64>::new(vec![2], vec![5.0, 5.0]).unwrap();
        assert_eq!(relu_backward(&x, &up).unwrap().data(), &[0.0, 5.0]);
    }

    #[test]
    fn rate_zero_and_inference_are_identity() {
        let x = Tensor::<f32>::from_fn(vec![4, 5], |i| i as f32 - 3.0);
        let mut s = DropoutState::new(0.0, DropoutMode::Training, 9).unwrap();
        assert_eq!(dropout(&x, &mut s), x);
        let mut s = DropoutState::new(0.5, DropoutMode::Inference, 9).unwrap();
        assert_eq!(dropout(&x, &mut s), x);
        assert!(s.mask().iter().all(|&m| m));
    }

    #[test]
    fn invalid_rate() {
        assert!(DropoutState::new(1.0, DropoutMode::Training, 0).is_err());
        assert!(DropoutState::new(-0.1, DropoutMode::Training, 0).is_err());
    }

    #[test]
    fn same_seed_same_mask() {
        let x = Tensor::<f32>::full(vec![64], 1.0);
        let mut a = DropoutState::new(0.5, DropoutMode::Training, 42).unwrap();
        let mut b = DropoutState::new(0.5, DropoutMode::Training, 42).unwrap();
        assert_eq!(dropout(&x, &mut a), dropout(&x, &mut b));
        assert!(a.mask().iter().any(|&m| !m));
    }
}
