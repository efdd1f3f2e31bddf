use super::{Element, Tensor};
use crate::error::{Error, Result};

/// Winning position (0..4, row-major within the 2x2 window) of every pooled
/// output, kept for backward routing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    input_shape: [usize; 4],
    winners: Vec<u8>,
}

impl PoolIndices {
    pub fn winners(&self) -> &[u8] {
        &self.winners
    }

    pub fn input_shape(&self) -> [usize; 4] {
        self.input_shape
    }
}

/// Max over disjoint 2x2 windows, stride 2. Ties go to the first position in
/// row-major window order.
pub fn maxpool2x2<T: Element>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices)> {
    let [n, c, h, w] = input.dims4("maxpool input")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Config(format!(
            "2x2 max-pool needs even spatial dims, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut winners = Vec::with_capacity(n * c * oh * ow);
    for plane in x.chunks(h * w) {
        for oy in 0..oh {
            let top = &plane[2 * oy * w..(2 * oy + 1) * w];
            let bottom = &plane[(2 * oy + 1) * w..(2 * oy + 2) * w];
            for ox in 0..ow {
                let window = [top[2 * ox], top[2 * ox + 1], bottom[2 * ox], bottom[2 * ox + 1]];
                let mut best = 0;
                for i in 1..4 {
                    if window[i] > window[best] {
                        best = i;
                    }
                }
                out.push(window[best]);
                winners.push(best as u8);
            }
        }
    }
    Ok((
        Tensor::new(vec![n, c, oh, ow], out)?,
        PoolIndices {
            input_shape: [n, c, h, w],
            winners,
        },
    ))
}

/// Routes each upstream value to the recorded winner of its window.
pub fn maxpool2x2_backward<T: Element>(indices: &PoolIndices, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = indices.input_shape;
    let (oh, ow) = (h / 2, w / 2);
    if upstream.shape() != [n, c, oh, ow] {
        return Err(Error::Shape(format!(
            "max-pool upstream gradient {:?}, expected {:?}",
            upstream.shape(),
            [n, c, oh, ow]
        )));
    }
    let mut grad = vec![T::zero(); n * c * h * w];
    for (p, plane) in grad.chunks_mut(h * w).enumerate() {
        for oy in 0..oh {
            for ox in 0..ow {
                let o = (p * oh + oy) * ow + ox;
                let win = indices.winners[o] as usize;
                let (dy, dx) = (win / 2, win % 2);
                plane[(2 * oy + dy) * w + 2 * ox + dx] = upstream.data()[o];
            }
        }
    }
    Tensor::new(vec![n, c, h, w], grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_window() {
        let t = Tensor::<f32>::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (out, idx) = maxpool2x2(&t).unwrap();
        assert_eq!(out.data(), &[4.0]);
        assert_eq!(idx.winners(), &[3]);
    }

    #[test]
    fn halves_spatial_dims() {
        let t = Tensor::<f32>::zeros(vec![1, 512, 12, 12]);
        let (out, _) = maxpool2x2(&t).unwrap();
        assert_eq!(out.shape(), &[1, 512, 6, 6]);
    }

    #[test]
    fn ties_choose_first() {
        let t = Tensor::<f32>::full(vec![1, 2, 4, 4], 7.0);
        let (out, idx) = maxpool2x2(&t).unwrap();
        assert!(out.data().iter().all(|&v| v == 7.0));
        assert!(idx.winners().iter().all(|&i| i == 0));
    }

    #[test]
    fn odd_dims_rejected() {
        let t = Tensor::<f32>::zeros(vec![1, 1, 3, 4]);
        assert!(matches!(maxpool2x2(&t), Err(Error::Config(_))));
    }

    #[test]
    fn backward_conserves_window_mass() {
        let t = Tensor::<f64>::from_fn(vec![1, 2, 4, 6], |i| ((i * 37) % 11) as f64);
        let (_, idx) = maxpool2x2(&t).unwrap();
        let up = Tensor::<f64>::from_fn(vec![1, 2, 2, 3], |i| i as f64 + 0.5);
        let g = maxpool2x2_backward(&idx, &up).unwrap();
        for p in 0..2 {
            for oy in 0..2 {
                for ox in 0..3 {
                    let mut mass = 0.0;
                    let mut nonzero = 0;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let v = g.data()[(p * 4 + 2 * oy + dy) * 6 + 2 * ox + dx];
                            mass += v;
                            nonzero += (v != 0.0) as usize;
                        }
                    }
                    assert_eq!(mass, up.data()[(p * 2 + oy) * 3 + ox]);
                    assert_eq!(nonzero, 1);
                }
            }
        }
    }
}
