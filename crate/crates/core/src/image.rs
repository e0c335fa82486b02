//! Row-major multi-channel image storage.

use crate::spectrum::Spectrum;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ImageError {
    #[error("image data length {len} does not match {width}x{height}x{channels}")]
    LengthMismatch {
        width: usize,
        height: usize,
        channels: usize,
        len: usize,
    },
    #[error("image must have at least one channel")]
    NoChannels,
    #[error("non-finite value at pixel ({x}, {y}) channel {channel}")]
    NonFinite { x: usize, y: usize, channel: usize },
    #[error("image dimensions differ: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize, usize), (usize, usize, usize)),
}

/// Dense image in double precision. Row 0 is the top scanline.
///
/// Channel count is arbitrary: 1 for depth and scalar maps, 3 for colour and
/// normals, anything for feature grids.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        assert!(channels > 0, "image must have at least one channel");
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        let mut img = Self::new(width, height, channels);
        img.data.fill(value);
        img
    }

    pub fn from_data(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, ImageError> {
        if channels == 0 {
            return Err(ImageError::NoChannels);
        }
        if data.len() != width * height * channels {
            return Err(ImageError::LengthMismatch {
                width,
                height,
                channels,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Self {
        let mut img = Self::new(width, height, channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    img.data[(y * width + x) * channels + c] = f(x, y, c);
                }
            }
        }
        img
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

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// All channels of the pixel with linear index `i`.
    #[inline]
    pub fn texel(&self, i: usize) -> &[f64] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    #[inline]
    pub fn texel_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.channels..(i + 1) * self.channels]
    }

    /// First three channels of pixel `i` as a spectrum; single-channel images
    /// are broadcast.
    #[inline]
    pub fn spectrum(&self, i: usize) -> Spectrum {
        let t = self.texel(i);
        if self.channels >= 3 {
            Spectrum::new(t[0], t[1], t[2])
        } else {
            Spectrum::splat(t[0])
        }
    }

    #[inline]
    pub fn set_spectrum(&mut self, i: usize, s: Spectrum) {
        let t = self.texel_mut(i);
        t[0] = s.r;
        t[1] = s.g;
        t[2] = s.b;
    }

    /// First non-finite sample, if any.
    pub fn check_finite(&self) -> Result<(), ImageError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(k) => {
                let p = k / self.channels;
                Err(ImageError::NonFinite {
                    x: p % self.width,
                    y: p / self.width,
                    channel: k % self.channels,
                })
            }
        }
    }

    pub fn ensure_same_shape(&self, other: &ImageBuffer) -> Result<(), ImageError> {
        if self.shape() != other.shape() {
            return Err(ImageError::ShapeMismatch(self.shape(), other.shape()));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Mean Rec. 709 luminance over all pixels (channel 0 for scalar images).
    pub fn mean_luminance(&self) -> f64 {
        let n = self.pixel_count();
        if n == 0 {
            return 0.0;
        }
        (0..n).map(|i| self.spectrum(i).luminance()).sum::<f64>() / n as f64
    }

    /// Copy out the `w`x`h` window whose top-left corner is (`x0`, `y0`).
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> ImageBuffer {
        assert!(x0 + w <= self.width && y0 + h <= self.height, "crop out of bounds");
        ImageBuffer::from_fn(w, h, self.channels, |x, y, c| self.get(x0 + x, y0 + y, c))
    }
}
