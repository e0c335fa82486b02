use std::path::Path;

use super::IoError;
use crate::image::ImageBuffer;

pub const GAMMA: f64 = 2.2;

/// Inverse gamma `x^2.2` per channel. Values outside `[0, 1]` are clamped
/// with a warning.
pub fn srgb_to_linear(img: &ImageBuffer) -> ImageBuffer {
    let mut out = img.clone();
    let mut clamped = 0usize;
    for v in out.data_mut() {
        if !(0.0..=1.0).contains(v) {
            clamped += 1;
        }
        *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) }.powf(GAMMA);
    }
    if clamped > 0 {
        log::warn!("srgb_to_linear: clamped {clamped} values outside [0, 1]");
    }
    out
}

/// `(1 - exp(-exposure x))^(1/2.2)`, in `[0, 1]`.
pub fn tonemap(x: f64, exposure: f64) -> f64 {
    (1.0 - (-exposure * x.max(0.0)).exp()).clamp(0.0, 1.0).powf(1.0 / GAMMA)
}

pub fn tonemap_byte(x: f64, exposure: f64) -> u8 {
    (tonemap(x, exposure) * 255.0).round() as u8
}

/// 8-bit preview; one-channel images are written as grey, three as RGB.
pub fn write_png_preview(path: &Path, img: &ImageBuffer, exposure: f64) -> Result<(), IoError> {
    let (w, h, c) = img.shape();
    let (bytes, colour) = match c {
        1 => (
            img.data().iter().map(|&v| tonemap_byte(v, exposure)).collect::<Vec<_>>(),
            image::ExtendedColorType::L8,
        ),
        3 => (
            img.data().iter().map(|&v| tonemap_byte(v, exposure)).collect(),
            image::ExtendedColorType::Rgb8,
        ),
        _ => {
            // first three channels of a feature stack
            let mut out = Vec::with_capacity(w * h * 3);
            for i in 0..w * h {
                for k in 0..3 {
                    out.push(tonemap_byte(img.texel(i).get(k).copied().unwrap_or(0.0), exposure));
                }
            }
            (out, image::ExtendedColorType::Rgb8)
        }
    };
    image::save_buffer_with_format(path, &bytes, w as u32, h as u32, colour, image::ImageFormat::Png)?;
    Ok(())
}
