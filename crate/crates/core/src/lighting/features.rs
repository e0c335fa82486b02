use glam::DVec2;

use super::LightError;
use crate::image::ImageBuffer;

/// Per-pixel feature map, sampled bilinearly between pixel centres with
/// clamp-to-edge addressing.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGrid {
    image: ImageBuffer,
}

impl FeatureGrid {
    pub const DEFAULT_CHANNELS: usize = 64;

    pub fn new(image: ImageBuffer) -> Result<Self, LightError> {
        image
            .check_finite()
            .map_err(|e| LightError::Features(e.to_string()))?;
        Ok(Self { image })
    }

    pub fn channels(&self) -> usize {
        self.image.channels()
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub fn image(&self) -> &ImageBuffer {
        &self.image
    }

    pub fn sample(&self, pixel: DVec2) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.channels());
        self.sample_into(pixel, &mut out);
        out
    }

    pub(crate) fn sample_into(&self, pixel: DVec2, out: &mut Vec<f64>) {
        let (w, h) = (self.width(), self.height());
        let axis = |v: f64, n: usize| {
            let u = (v - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = u.floor() as usize;
            (i0, (i0 + 1).min(n - 1), u - i0 as f64)
        };
        let (x0, x1, tx) = axis(pixel.x, w);
        let (y0, y1, ty) = axis(pixel.y, h);
        let a = self.image.texel(y0 * w + x0);
        let b = self.image.texel(y0 * w + x1);
        let c = self.image.texel(y1 * w + x0);
        let d = self.image.texel(y1 * w + x1);
        for k in 0..self.channels() {
            let top = a[k] * (1.0 - tx) + b[k] * tx;
            let bottom = c[k] * (1.0 - tx) + d[k] * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
}
