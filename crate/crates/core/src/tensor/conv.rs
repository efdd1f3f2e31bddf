use super::{Element, ParamGrads, Tensor};
use crate::error::{Error, Result};

/// Spatial parameters shared by convolution and pooling windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KernelParams {
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
}

impl KernelParams {
    /// 3x3, stride 1, padding 1: the only convolution shape in the VGG stack.
    pub const VGG_CONV: KernelParams = KernelParams {
        kernel_size: 3,
        stride: 1,
        padding: 1,
    };

    /// 2x2, stride 2, no padding.
    pub const VGG_POOL: KernelParams = KernelParams {
        kernel_size: 2,
        stride: 2,
        padding: 0,
    };

    pub fn new(kernel_size: usize, stride: usize, padding: usize) -> Result<Self> {
        if kernel_size == 0 || stride == 0 {
            return Err(Error::Config(format!(
                "kernel size and stride must be >= 1 (got {kernel_size}, {stride})"
            )));
        }
        Ok(Self {
            kernel_size,
            stride,
            padding,
        })
    }

    /// Output extent along one spatial axis.
    pub fn output_size(&self, input: usize, axis: &str) -> Result<usize> {
        let padded = input + 2 * self.padding;
        if padded < self.kernel_size {
            return Err(Error::Config(format!(
                "{axis}: padded extent {padded} smaller than kernel {}",
                self.kernel_size
            )));
        }
        let span = padded - self.kernel_size;
        if !span.is_multiple_of(self.stride) {
            return Err(Error::Config(format!(
                "{axis}: ({input} + 2*{} - {}) is not divisible by stride {}",
                self.padding, self.kernel_size, self.stride
            )));
        }
        Ok(span / self.stride + 1)
    }
}

struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    k: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn patch_len(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn out_len(&self) -> usize {
        self.oh * self.ow
    }
}

// Unfolds one sample into a (Cin*k*k) x (OH*OW) matrix.
fn im2col<T: Element>(g: &Geometry, image: &[T], cols: &mut [T]) {
    let out_len = g.out_len();
    for c in 0..g.cin {
        let plane = &image[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * out_len..(row + 1) * out_len];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, slot) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *slot = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

// Scatter-adds a column matrix back onto an image gradient.
fn col2im<T: Element>(g: &Geometry, cols: &[T], image: &mut [T]) {
    let out_len = g.out_len();
    for c in 0..g.cin {
        let plane = &mut image[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &cols[row * out_len..(row + 1) * out_len];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] = dst[ix as usize] + src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

fn geometry<T: Element>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    params: KernelParams,
) -> Result<(usize, usize, Geometry)> {
    let [n, cin, h, w] = input.dims4("conv2d input")?;
    let [cout, wcin, kh, kw] = weights.dims4("conv2d weights")?;
    if wcin != cin {
        return Err(Error::dim("conv2d input channels (axis 1)", wcin, cin));
    }
    if kh != params.kernel_size {
        return Err(Error::dim(
            "conv2d kernel height (axis 2)",
            params.kernel_size,
            kh,
        ));
    }
    if kw != params.kernel_size {
        return Err(Error::dim("conv2d kernel width (axis 3)", params.kernel_size, kw));
    }
    let oh = params.output_size(h, "height")?;
    let ow = params.output_size(w, "width")?;
    Ok((
        n,
        cout,
        Geometry {
            cin,
            h,
            w,
            oh,
            ow,
            k: params.kernel_size,
            stride: params.stride,
            pad: params.padding,
        },
    ))
}

/// 2-D cross-correlation over an NCHW batch.
pub fn conv2d<T: Element>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    params: KernelParams,
) -> Result<Tensor<T>> {
    let (n, cout, g) = geometry(input, weights, params)?;
    if bias.len() != cout {
        return Err(Error::dim("conv2d bias length", cout, bias.len()));
    }
    let out_len = g.out_len();
    let patch = g.patch_len();
    let in_per = g.cin * g.h * g.w;
    let mut out = vec![T::zero(); n * cout * out_len];
    let mut cols = vec![T::zero(); patch * out_len];
    for s in 0..n {
        im2col(&g, &input.data()[s * in_per..(s + 1) * in_per], &mut cols);
        let dst = &mut out[s * cout * out_len..(s + 1) * cout * out_len];
        for (co, row) in dst.chunks_mut(out_len).enumerate() {
            row.fill(bias.data()[co]);
        }
        T::gemm(
            cout,
            patch,
            out_len,
            weights.data(),
            false,
            &cols,
            false,
            T::one(),
            dst,
        );
    }
    Tensor::new(vec![n, cout, g.oh, g.ow], out)
}

/// Gradients of [`conv2d`] with respect to (input, weights, bias).
///
/// `need_input` skips the input gradient when nothing upstream consumes it.
pub fn conv2d_backward<T: Element>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    params: KernelParams,
    upstream: &Tensor<T>,
    need_input: bool,
) -> Result<ParamGrads<T>> {
    let (n, cout, g) = geometry(input, weights, params)?;
    let expected = [n, cout, g.oh, g.ow];
    if upstream.shape() != expected {
        return Err(Error::Shape(format!(
            "conv2d upstream gradient {:?}, expected {expected:?}",
            upstream.shape()
        )));
    }
    let out_len = g.out_len();
    let patch = g.patch_len();
    let in_per = g.cin * g.h * g.w;
    let mut d_weights = vec![T::zero(); cout * patch];
    let mut d_bias = vec![T::zero(); cout];
    let mut d_input = need_input.then(|| vec![T::zero(); input.len()]);
    let mut cols = vec![T::zero(); patch * out_len];
    let mut d_cols = if need_input {
        vec![T::zero(); patch * out_len]
    } else {
        Vec::new()
    };
    for s in 0..n {
        let up = &upstream.data()[s * cout * out_len..(s + 1) * cout * out_len];
        for (co, row) in up.chunks(out_len).enumerate() {
            d_bias[co] = row.iter().fold(d_bias[co], |acc, &v| acc + v);
        }
        im2col(&g, &input.data()[s * in_per..(s + 1) * in_per], &mut cols);
        // dW += dY (cout x L) * cols^T (L x patch)
        T::gemm(
            cout,
            out_len,
            patch,
            up,
            false,
            &cols,
            true,
            T::one(),
            &mut d_weights,
        );
        if let Some(d_input) = d_input.as_mut() {
            // dcols = W^T (patch x cout) * dY (cout x L)
            T::gemm(
                patch,
                cout,
                out_len,
                weights.data(),
                true,
                up,
                false,
                T::zero(),
                &mut d_cols,
            );
            col2im(&g, &d_cols, &mut d_input[s * in_per..(s + 1) * in_per]);
        }
    }
    let d_input = d_input
        .map(|d| Tensor::new(input.shape().to_vec(), d))
        .transpose()?;
    Ok((
        d_input,
        Tensor::new(weights.shape().to_vec(), d_weights)?,
        Tensor::new(vec![cout], d_bias)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Nested-loop direct convolution, independent of im2col + gemm.
    fn direct_conv(
        input: &Tensor<f64>,
        weights: &Tensor<f64>,
        bias: &Tensor<f64>,
        p: KernelParams,
    ) -> Vec<f64> {
        let [n, cin, h, w] = input.dims4("x").unwrap();
        let [cout, _, k, _] = weights.dims4("w").unwrap();
        let oh = (h + 2 * p.padding - k) / p.stride + 1;
        let ow = (w + 2 * p.padding - k) / p.stride + 1;
        let x = input.data();
        let wt = weights.data();
        let mut out = Vec::new();
        for s in 0..n {
            for co in 0..cout {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias.data()[co];
                        for ci in 0..cin {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * p.stride + ky) as isize - p.padding as isize;
                                    let ix = (ox * p.stride + kx) as isize - p.padding as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    let xi = ((s * cin + ci) * h + iy as usize) * w + ix as usize;
                                    let wi = ((co * cin + ci) * k + ky) * k + kx;
                                    acc += x[xi] * wt[wi];
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
            }
        }
        out
    }

    fn pseudo(n: usize, seed: u64) -> Vec<f64> {
        let mut state = seed;
        (0..n)
            .map(|_| {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let input = Tensor::<f32>::from_fn(vec![1, 1, 3, 3], |i| i as f32 + 1.0);
        let mut w = vec![0.0f32; 9];
        w[4] = 1.0;
        let weights = Tensor::new(vec![1, 1, 3, 3], w).unwrap();
        let out = conv2d(&input, &weights, &Tensor::zeros(vec![1]), KernelParams::VGG_CONV).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn all_ones_two_by_two() {
        let input = Tensor::<f32>::full(vec![1, 1, 2, 2], 1.0);
        let weights = Tensor::<f32>::full(vec![1, 1, 3, 3], 1.0);
        let out = conv2d(&input, &weights, &Tensor::zeros(vec![1]), KernelParams::VGG_CONV).unwrap();
        assert_eq!(out.shape(), &[1, 1, 2, 2]);
        assert_eq!(out.data(), &[4.0; 4]);
    }

    #[test]
    fn first_vgg_layer_shape() {
        let input = Tensor::<f32>::zeros(vec![1, 3, 192, 192]);
        let weights = Tensor::<f32>::zeros(vec![64, 3, 3, 3]);
        let out = conv2d(&input, &weights, &Tensor::zeros(vec![64]), KernelParams::VGG_CONV).unwrap();
        assert_eq!(out.shape(), &[1, 64, 192, 192]);
    }

    #[test]
    fn matches_direct_oracle() {
        for (params, h, w) in [
            (KernelParams::VGG_CONV, 5, 7),
            (KernelParams::new(3, 2, 1).unwrap(), 7, 5),
            (KernelParams::new(2, 1, 0).unwrap(), 4, 4),
        ] {
            let input = Tensor::new(vec![2, 3, h, w], pseudo(2 * 3 * h * w, 1)).unwrap();
            let k = params.kernel_size;
            let weights = Tensor::new(vec![4, 3, k, k], pseudo(4 * 3 * k * k, 2)).unwrap();
            let bias = Tensor::new(vec![4], pseudo(4, 3)).unwrap();
            let fast = conv2d(&input, &weights, &bias, params).unwrap();
            let slow = direct_conv(&input, &weights, &bias, params);
            for (a, b) in fast.data().iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn errors_name_the_axis() {
        let input = Tensor::<f32>::zeros(vec![1, 2, 4, 4]);
        let weights = Tensor::<f32>::zeros(vec![1, 3, 3, 3]);
        let err = conv2d(&input, &weights, &Tensor::zeros(vec![1]), KernelParams::VGG_CONV).unwrap_err();
        assert!(err.to_string().contains("axis 1"), "{err}");

        let params = KernelParams::new(3, 2, 0).unwrap();
        let weights = Tensor::<f32>::zeros(vec![1, 2, 3, 3]);
        let err = conv2d(&input, &weights, &Tensor::zeros(vec![1]), params).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn spatial_dims_preserved() {
        for h in 1..7 {
            for w in 1..7 {
                assert_eq!(KernelParams::VGG_CONV.output_size(h, "h").unwrap(), h);
                assert_eq!(KernelParams::VGG_CONV.output_size(w, "w").unwrap(), w);
            }
        }
    }
}
