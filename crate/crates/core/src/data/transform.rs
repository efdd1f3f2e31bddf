use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Bilinear resize of a `[C, H, W]` image with half-pixel centres: output
/// pixel `d` samples the input at `(d + 0.5) * in / out - 0.5`, clamped to
/// the image.
pub fn resize_bilinear<T: Element>(image: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Config(format!(
            "resize target {out_h}x{out_w} must be positive"
        )));
    }
    let (c, h, w) = match image.shape() {
        &[c, h, w] => (c, h, w),
        s => return Err(Error::Shape(format!("resize expects [C, H, W], got {s:?}"))),
    };
    if (h, w) == (out_h, out_w) {
        return Ok(image.clone());
    }
    let taps = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|d| {
                let src = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(inp - 1);
                (lo, hi, src - lo as f64)
            })
            .collect()
    };
    let rows = taps(out_h, h);
    let cols = taps(out_w, w);
    let x = image.data();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &rows {
            for &(x0, x1, fx) in &cols {
                let p = |y: usize, x: usize| plane[y * w + x].to_f64().unwrap_or(0.0);
                let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                out.push(T::from_f64_lossy(top * (1.0 - fy) + bottom * fy));
            }
        }
    }
    Tensor::new(vec![c, out_h, out_w], out)
}

/// Pixel normalization applied after resizing.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum NormalizeScheme {
    /// `x / 255`, into [0, 1].
    #[default]
    Unit,
    /// `(x / 255 - mean[c]) / std[c]` per channel.
    MeanStd { mean: [f32; 3], std: [f32; 3] },
}

impl NormalizeScheme {
    pub const IMAGENET: NormalizeScheme = NormalizeScheme::MeanStd {
        mean: [0.485, 0.456, 0.406],
        std: [0.229, 0.224, 0.225],
    };

    pub const HALF: NormalizeScheme = NormalizeScheme::MeanStd {
        mean: [0.5; 3],
        std: [0.5; 3],
    };
}

impl FromStr for NormalizeScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "unit" => Ok(NormalizeScheme::Unit),
            "imagenet" => Ok(NormalizeScheme::IMAGENET),
            "half" => Ok(NormalizeScheme::HALF),
            other => Err(Error::Config(format!(
                "unknown normalization scheme `{other}` (expected unit, imagenet or half)"
            ))),
        }
    }
}

impl fmt::Display for NormalizeScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            NormalizeScheme::Unit => f.write_str("unit"),
            s if s == NormalizeScheme::IMAGENET => f.write_str("imagenet"),
            s if s == NormalizeScheme::HALF => f.write_str("half"),
            NormalizeScheme::MeanStd { mean, std } => write!(f, "mean{mean:?}/std{std:?}"),
        }
    }
}

pub fn normalize(image: &Tensor<f32>, scheme: NormalizeScheme) -> Result<Tensor<f32>> {
    match scheme {
        NormalizeScheme::Unit => Ok(image.map(|v| v / 255.0)),
        NormalizeScheme::MeanStd { mean, std } => {
            let (c, plane) = match image.shape() {
                &[c, h, w] => (c, h * w),
                s => return Err(Error::Shape(format!("normalize expects [C, H, W], got {s:?}"))),
            };
            if c != 3 {
                return Err(Error::dim("normalize channels", 3, c));
            }
            let data = image
                .data()
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let ch = i / plane;
                    (v / 255.0 - mean[ch]) / std[ch]
                })
                .collect();
            Tensor::new(image.shape().to_vec(), data)
        }
    }
}

/// Resize to a square input then normalize.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preprocess {
    pub size: usize,
    pub scheme: NormalizeScheme,
}

impl Preprocess {
    pub fn apply(&self, raw: &Tensor<f32>) -> Result<Tensor<f32>> {
        normalize(&resize_bilinear(raw, self.size, self.size)?, self.scheme)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn same_size_is_identity() {
        let t = Tensor::<f32>::from_fn(vec![3, 192, 192], |i| (i % 256) as f32);
        assert_eq!(resize_bilinear(&t, 192, 192).unwrap(), t);
    }

    #[test]
    fn upsample_two_by_two() {
        let t = Tensor::<f64>::new(vec![1, 2, 2], vec![0.0, 0.0, 100.0, 100.0]).unwrap();
        let r = resize_bilinear(&t, 4, 4).unwrap();
        // rows sample y = -0.25 (clamped to 0), 0.25, 0.75, 1.25 (clamped to 1)
        let expected_rows = [0.0, 25.0, 75.0, 100.0];
        for (y, &v) in expected_rows.iter().enumerate() {
            for x in 0..4 {
                assert!((r.data()[y * 4 + x] - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bad_target() {
        let t = Tensor::<f32>::zeros(vec![1, 2, 2]);
        assert!(matches!(resize_bilinear(&t, 0, 4), Err(Error::Config(_))));
    }

    #[test]
    fn normalization_values() {
        let t = Tensor::<f32>::new(vec![3, 1, 1], vec![0.0, 255.0, 51.0]).unwrap();
        let u = normalize(&t, NormalizeScheme::Unit).unwrap();
        assert_eq!(u.data(), &[0.0, 1.0, 0.2]);
        let h = normalize(&t, NormalizeScheme::HALF).unwrap();
        assert_eq!(&h.data()[..2], &[-1.0, 1.0]);
        assert!("zscore".parse::<NormalizeScheme>().is_err());
        assert_eq!(
            "imagenet".parse::<NormalizeScheme>().unwrap(),
            NormalizeScheme::IMAGENET
        );
    }

    proptest! {
        #[test]
        fn resize_stays_in_range(
            h in 1usize..9, w in 1usize..9, oh in 1usize..12, ow in 1usize..12,
            seed in 0u64..1000,
        ) {
            let t = Tensor::<f64>::from_fn(vec![2, h, w], |i| ((i as u64 * 7919 + seed) % 255) as f64);
            let lo = t.data().iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = t.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let r = resize_bilinear(&t, oh, ow).unwrap();
            prop_assert_eq!(r.shape(), &[2, oh, ow]);
            for &v in r.data() {
                prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            }
        }

        #[test]
        fn constant_stays_constant(h in 1usize..9, w in 1usize..9, oh in 1usize..12, c in 0.0f64..255.0) {
            let t = Tensor::<f64>::full(vec![1, h, w], c);
            let r = resize_bilinear(&t, oh, oh).unwrap();
            for &v in r.data() {
                prop_assert!((v - c).abs() < 1e-9);
            }
        }
    }
}
