//! Image decoding to `[3, H, W]` tensors of raw 0-255 values.
//!
//! Binary and ASCII PGM/PPM are built in. Other formats plug in through
//! [`ImageDecoder`]; with the `codecs` feature PNG and JPEG are registered by
//! default.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Decoded pixels, channel-major, before replication to three channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImage {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// `channels * height * width` values in 0..=255, channel-major.
    pub data: Vec<f32>,
}

impl RawImage {
    /// Grayscale is replicated to three identical channels.
    pub fn into_rgb_tensor(self) -> Result<Tensor<f32>> {
        let plane = self.height * self.width;
        let data = match self.channels {
            1 => self.data.repeat(3),
            3 => self.data,
            c => return Err(Error::Input(format!("unsupported channel count {c}"))),
        };
        debug_assert_eq!(data.len(), 3 * plane);
        Tensor::new(vec![3, self.height, self.width], data)
    }
}

pub trait ImageDecoder: Send + Sync {
    fn name(&self) -> &str;
    fn accepts(&self, bytes: &[u8]) -> bool;
    fn decode(&self, bytes: &[u8]) -> std::result::Result<RawImage, String>;
}

/// Ordered decoder registry; the first decoder accepting the bytes wins.
pub struct Decoders {
    hooks: Vec<Box<dyn ImageDecoder>>,
}

impl Default for Decoders {
    fn default() -> Self {
        #[cfg_attr(not(feature = "codecs"), allow(unused_mut))]
        let mut d = Self::pnm_only();
        #[cfg(feature = "codecs")]
        d.register(Box::new(codecs::ImageCrateDecoder));
        d
    }
}

impl Decoders {
    pub fn pnm_only() -> Self {
        Self {
            hooks: vec![Box::new(PnmDecoder)],
        }
    }

    pub fn register(&mut self, decoder: Box<dyn ImageDecoder>) {
        self.hooks.push(decoder);
    }

    pub fn decode_bytes(&self, bytes: &[u8], path: &Path) -> Result<Tensor<f32>> {
        let err = |message: String| Error::Decode {
            path: path.to_path_buf(),
            message,
        };
        let decoder = self.hooks.iter().find(|d| d.accepts(bytes)).ok_or_else(|| {
            let head: Vec<u8> = bytes.iter().take(4).copied().collect();
            err(format!("unknown image format (leading bytes {head:?})"))
        })?;
        let raw = decoder
            .decode(bytes)
            .map_err(|m| err(format!("{}: {m}", decoder.name())))?;
        raw.into_rgb_tensor()
    }

    pub fn decode_file(&self, path: &Path) -> Result<Tensor<f32>> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.decode_bytes(&bytes, path)
    }
}

/// Decodes a file with the default decoder set.
pub fn decode_image(path: &Path) -> Result<Tensor<f32>> {
    Decoders::default().decode_file(path)
}

/// Netpbm: P2/P5 grayscale, P3/P6 color.
pub struct PnmDecoder;

impl ImageDecoder for PnmDecoder {
    fn name(&self) -> &str {
        "pnm"
    }

    fn accepts(&self, bytes: &[u8]) -> bool {
        matches!(bytes, [b'P', b'2' | b'3' | b'5' | b'6', ..])
    }

    fn decode(&self, bytes: &[u8]) -> std::result::Result<RawImage, String> {
        let (ascii, channels) = match bytes[1] {
            b'2' => (true, 1),
            b'3' => (true, 3),
            b'5' => (false, 1),
            b'6' => (false, 3),
            _ => return Err("not a PGM/PPM file".into()),
        };
        let mut pos = 2;
        let mut header = [0usize; 3];
        for (i, slot) in header.iter_mut().enumerate() {
            *slot =
                next_number(bytes, &mut pos).ok_or_else(|| format!("truncated header (field {})", i + 1))?;
        }
        let [width, height, maxval] = header;
        if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
            return Err(format!("invalid header {width}x{height} maxval {maxval}"));
        }
        let count = width * height * channels;
        let scale = 255.0 / maxval as f32;
        let mut samples = Vec::with_capacity(count);
        if ascii {
            for _ in 0..count {
                let v = next_number(bytes, &mut pos).ok_or("truncated pixel data")?;
                samples.push(v.min(maxval) as f32);
            }
        } else {
            // exactly one whitespace byte separates the header from the raster
            pos += 1;
            let wide = maxval > 255;
            let need = count * if wide { 2 } else { 1 };
            let raster = bytes
                .get(pos..pos + need)
                .ok_or_else(|| format!("truncated payload: need {need} bytes"))?;
            if wide {
                samples.extend(
                    raster
                        .chunks_exact(2)
                        .map(|c| f32::from(u16::from_be_bytes([c[0], c[1]]))),
                );
            } else {
                samples.extend(raster.iter().map(|&b| f32::from(b)));
            }
        }
        if maxval != 255 {
            for v in &mut samples {
                *v *= scale;
            }
        }
        // interleaved RGB to channel-major
        let plane = width * height;
        let mut data = vec![0.0; count];
        for (i, &v) in samples.iter().enumerate() {
            data[(i % channels) * plane + i / channels] = v;
        }
        Ok(RawImage {
            channels,
            height,
            width,
            data,
        })
    }
}

fn next_number(bytes: &[u8], pos: &mut usize) -> Option<usize> {
    loop {
        match bytes.get(*pos)? {
            b'#' => {
                while *bytes.get(*pos)? != b'\n' {
                    *pos += 1;
                }
            }
            c if c.is_ascii_whitespace() => *pos += 1,
            _ => break,
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos]).ok()?.parse().ok()
}

#[cfg(feature = "codecs")]
mod codecs {
    use super::{ImageDecoder, RawImage};

    /// PNG and JPEG through the `image` crate.
    pub struct ImageCrateDecoder;

    impl ImageDecoder for ImageCrateDecoder {
        fn name(&self) -> &str {
            "png/jpeg"
        }

        fn accepts(&self, bytes: &[u8]) -> bool {
            bytes.starts_with(b"\x89PNG\r\n\x1a\n") || bytes.starts_with(&[0xFF, 0xD8, 0xFF])
        }

        fn decode(&self, bytes: &[u8]) -> Result<RawImage, String> {
            let img = image::load_from_memory(bytes).map_err(|e| e.to_string())?;
            let (width, height) = (img.width() as usize, img.height() as usize);
            let gray = matches!(
                img.color(),
                image::ColorType::L8 | image::ColorType::L16 | image::ColorType::La8
            );
            if gray {
                let buf = img.to_luma8();
                return Ok(RawImage {
                    channels: 1,
                    height,
                    width,
                    data: buf.as_raw().iter().map(|&b| f32::from(b)).collect(),
                });
            }
            let buf = img.to_rgb8();
            let plane = width * height;
            let mut data = vec![0.0; 3 * plane];
            for (i, &v) in buf.as_raw().iter().enumerate() {
                data[(i % 3) * plane + i / 3] = f32::from(v);
            }
            Ok(RawImage {
                channels: 3,
                height,
                width,
                data,
            })
        }
    }
}
