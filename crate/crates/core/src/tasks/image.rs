use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major image with 1 or 3 interleaved channels, intensities in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "image must be non-empty");
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Self {
            width,
            height,
            channels,
            data: vec![value.clamp(0.0, 1.0); width * height * channels],
        }
    }

    /// Builds an image from raw data; values are clamped to [0, 1].
    pub fn from_data(width: usize, height: usize, channels: usize, mut data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || !(channels == 1 || channels == 3) {
            return Err(Error::config("image", "invalid image shape"));
        }
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch {
                expected: width * height * channels,
                found: data.len(),
            });
        }
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, color: &[f64]) {
        let i = (y * self.width + x) * self.channels;
        for (dst, src) in self.data[i..i + self.channels].iter_mut().zip(color) {
            *dst = src.clamp(0.0, 1.0);
        }
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Binary PPM (P6, maxval 255). Grayscale is replicated to RGB.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.width * self.height * 3);
        for px in self.data.chunks(self.channels) {
            if self.channels == 1 {
                let b = quantize(px[0]);
                out.extend_from_slice(&[b, b, b]);
            } else {
                out.extend(px.iter().map(|&v| quantize(v)));
            }
        }
        out
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_ppm())
    }
}

/// `floor(v * 255 + 0.5)` with `v` clamped to [0, 1].
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Mean over pixels and channels of the squared difference.
pub fn image_mse(a: &Image, b: &Image) -> Result<f64> {
    if a.width != b.width || a.height != b.height || a.channels != b.channels {
        return Err(Error::DimensionMismatch {
            expected: b.data.len(),
            found: a.data.len(),
        });
    }
    let sum: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.data.len() as f64)
}

/// Writes to a sibling temp file and renames it into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::io(path, std::io::Error::other("path has no file name")))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}
