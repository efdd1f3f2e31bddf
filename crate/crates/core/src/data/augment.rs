use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seed::{fnv1a, mix};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    /// Angles are drawn uniformly from `[-r, r]` degrees.
    pub rotation_degrees: f64,
    pub flip_probability: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            rotation_degrees: 15.0,
            flip_probability: 0.5,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rotation_degrees >= 0.0 && self.rotation_degrees.is_finite()) {
            return Err(Error::Config(format!(
                "rotation range {} must be a finite value >= 0",
                self.rotation_degrees
            )));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::Config(format!(
                "flip probability {} outside [0, 1]",
                self.flip_probability
            )));
        }
        Ok(())
    }
}

/// Stream for one sample in one epoch: `seed ^ hash(key, epoch)`. Independent
/// of visiting order.
pub fn sample_rng(seed: u64, key: &str, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ mix(fnv1a(key.as_bytes()), epoch as u64))
}

fn planes(image: &Tensor<f32>) -> (usize, usize, usize) {
    match image.shape() {
        &[c, h, w] => (c, h, w),
        s => panic!("augmentation expects [C, H, W], got {s:?}"),
    }
}

pub fn flip_horizontal(image: &Tensor<f32>) -> Tensor<f32> {
    let (_, _, w) = planes(image);
    let mut out = image.clone();
    for row in out.data_mut().chunks_exact_mut(w) {
        row.reverse();
    }
    out
}

/// Counter-clockwise rotation (as displayed, rows top to bottom) about
/// `((W-1)/2, (H-1)/2)`. Bilinear sampling; outside the source reads as 0.
pub fn rotate(image: &Tensor<f32>, degrees: f64) -> Tensor<f32> {
    if degrees == 0.0 {
        return image.clone();
    }
    let (c, h, w) = planes(image);
    let (sin, cos) = degrees.to_radians().sin_cos();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let src = image.data();
    let mut out = vec![0.0f32; c * h * w];
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let sx = cx + dx * cos - dy * sin;
            let sy = cy + dx * sin + dy * cos;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let taps = [
                (y0, x0, (1.0 - fy) * (1.0 - fx)),
                (y0, x0 + 1.0, (1.0 - fy) * fx),
                (y0 + 1.0, x0, fy * (1.0 - fx)),
                (y0 + 1.0, x0 + 1.0, fy * fx),
            ];
            for ch in 0..c {
                let plane = &src[ch * h * w..(ch + 1) * h * w];
                let mut acc = 0.0f64;
                for &(ty, tx, wt) in &taps {
                    if wt != 0.0 && ty >= 0.0 && tx >= 0.0 && (ty as usize) < h && (tx as usize) < w {
                        acc += wt * f64::from(plane[ty as usize * w + tx as usize]);
                    }
                }
                out[ch * h * w + y * w + x] = acc as f32;
            }
        }
    }
    Tensor::new(vec![c, h, w], out).expect("same shape as input")
}

/// Flip with the configured probability, then rotate by a uniform angle.
pub fn augment<R: Rng>(image: &Tensor<f32>, config: &AugmentConfig, rng: &mut R) -> Tensor<f32> {
    let flip = rng.gen_bool(config.flip_probability.clamp(0.0, 1.0));
    let angle = if config.rotation_degrees > 0.0 {
        rng.gen_range(-config.rotation_degrees..=config.rotation_degrees)
    } else {
        0.0
    };
    let flipped = if flip {
        flip_horizontal(image)
    } else {
        image.clone()
    };
    rotate(&flipped, angle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pattern(c: usize, h: usize, w: usize) -> Tensor<f32> {
        Tensor::from_fn(vec![c, h, w], |i| (i * 37 % 101) as f32)
    }

    #[test]
    fn flip_is_involution() {
        let t = pattern(3, 5, 7);
        let f = flip_horizontal(&t);
        assert_ne!(f, t);
        assert_eq!(f.data()[0], t.data()[6]);
        assert_eq!(flip_horizontal(&f), t);
    }

    #[test]
    fn zero_angle_identity() {
        let t = pattern(3, 8, 8);
        assert_eq!(rotate(&t, 0.0), t);
        let cfg = AugmentConfig {
            rotation_degrees: 0.0,
            flip_probability: 0.0,
            seed: 0,
        };
        assert_eq!(augment(&t, &cfg, &mut sample_rng(0, "x", 0)), t);
    }

    #[test]
    fn quarter_turn_permutes_indices() {
        // out[y][x] = in[x][W-1-y]: the right column becomes the top row
        let (h, w) = (2, 2);
        let t = Tensor::<f32>::new(vec![1, h, w], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let r = rotate(&t, 90.0);
        for y in 0..h {
            for x in 0..w {
                let expected = t.data()[x * w + (w - 1 - y)];
                assert!((r.data()[y * w + x] - expected).abs() < 1e-5, "{:?}", r.data());
            }
        }
    }

    #[test]
    fn rotation_zero_fills_corners() {
        let t = Tensor::<f32>::full(vec![1, 9, 9], 1.0);
        let r = rotate(&t, 45.0);
        assert_eq!(r.data()[0], 0.0);
        assert!((r.data()[4 * 9 + 4] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn config_checks() {
        assert!(AugmentConfig::default().validate().is_ok());
        let bad = AugmentConfig {
            flip_probability: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = AugmentConfig {
            rotation_degrees: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn streams_keyed_by_sample_and_epoch() {
        let t = pattern(3, 6, 6);
        let cfg = AugmentConfig::default();
        let a = augment(&t, &cfg, &mut sample_rng(9, "covid/a.pgm", 3));
        let b = augment(&t, &cfg, &mut sample_rng(9, "covid/a.pgm", 3));
        assert_eq!(a, b);
        let outs: Vec<_> = (0..6)
            .map(|e| augment(&t, &cfg, &mut sample_rng(9, "covid/a.pgm", e)))
            .collect();
        assert!(outs.iter().any(|o| o != &a));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn shape_preserved(h in 1usize..12, w in 1usize..12, seed in any::<u64>()) {
            let t = pattern(3, h, w);
            let out = augment(&t, &AugmentConfig::default(), &mut sample_rng(seed, "k", 0));
            prop_assert_eq!(out.shape(), t.shape());
            prop_assert!(out.all_finite());
        }
    }
}
