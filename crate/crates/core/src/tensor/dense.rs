use super::{Element, ParamGrads, Tensor};
use crate::error::{Error, Result};

fn check<T: Element>(input: &Tensor<T>, weights: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let [n, din] = input.dims2("dense input")?;
    let [dout, wdin] = weights.dims2("dense weights")?;
    if wdin != din {
        return Err(Error::dim("dense input features (axis 1)", wdin, din));
    }
    Ok((n, din, dout))
}

/// `input * weights^T + bias`, with `weights` laid out `[Dout, Din]`.
pub fn dense<T: Element>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, din, dout) = check(input, weights)?;
    if bias.len() != dout {
        return Err(Error::dim("dense bias length", dout, bias.len()));
    }
    let mut out = Vec::with_capacity(n * dout);
    for _ in 0..n {
        out.extend_from_slice(bias.data());
    }
    T::gemm(
        n,
        din,
        dout,
        input.data(),
        false,
        weights.data(),
        true,
        T::one(),
        &mut out,
    );
    Tensor::new(vec![n, dout], out)
}

/// Gradients of [`dense`] with respect to (input, weights, bias).
pub fn dense_backward<T: Element>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    upstream: &Tensor<T>,
    need_input: bool,
) -> Result<ParamGrads<T>> {
    let (n, din, dout) = check(input, weights)?;
    if upstream.shape() != [n, dout] {
        return Err(Error::Shape(format!(
            "dense upstream gradient {:?}, expected {:?}",
            upstream.shape(),
            [n, dout]
        )));
    }
    let up = upstream.data();
    let mut d_weights = vec![T::zero(); dout * din];
    T::gemm(
        dout,
        n,
        din,
        up,
        true,
        input.data(),
        false,
        T::zero(),
        &mut d_weights,
    );
    let mut d_bias = vec![T::zero(); dout];
    for row in up.chunks(dout) {
        for (b, &g) in d_bias.iter_mut().zip(row) {
            *b = *b + g;
        }
    }
    let d_input = if need_input {
        let mut d = vec![T::zero(); n * din];
        T::gemm(n, dout, din, up, false, weights.data(), false, T::zero(), &mut d);
        Some(Tensor::new(vec![n, din], d)?)
    } else {
        None
    };
    Ok((
        d_input,
        Tensor::new(vec![dout, din], d_weights)?,
        Tensor::new(vec![dout], d_bias)?,
    ))
}
