use std::path::Path;

use thiserror::Error;

use super::{read_bytes, write_bytes, IoError};
use crate::image::ImageBuffer;

#[derive(Debug, Error, PartialEq)]
#[error("byte {offset}: {message}")]
pub struct PfmError {
    pub offset: usize,
    pub message: String,
}

fn err(offset: usize, message: impl Into<String>) -> PfmError {
    PfmError {
        offset,
        message: message.into(),
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn token(&mut self, what: &str) -> Result<(usize, &str), PfmError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(err(start, format!("expected {what}")));
        }
        let s = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| err(start, format!("{what} is not ASCII")))?;
        Ok((start, s))
    }
}

/// Parse a PFM file. `PF` gives three channels, `Pf` one; a negative scale
/// means little-endian samples. Scanlines are stored bottom-up.
pub fn decode_pfm(bytes: &[u8]) -> Result<ImageBuffer, PfmError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let (_, magic) = cur.token("PF or Pf")?;
    let channels = match magic {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(err(0, format!("bad magic {other:?}"))),
    };
    let mut dim = |what| -> Result<usize, PfmError> {
        let (at, t) = cur.token(what)?;
        match t.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(err(at, format!("bad {what} {t:?}"))),
        }
    };
    let width = dim("width")?;
    let height = dim("height")?;
    let (at, t) = cur.token("scale")?;
    let scale: f64 = t
        .parse()
        .ok()
        .filter(|s: &f64| s.is_finite() && *s != 0.0)
        .ok_or_else(|| err(at, format!("bad scale {t:?}")))?;
    let little = scale < 0.0;
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(err(cur.pos, "expected a single whitespace byte after the scale"));
    }
    let start = cur.pos + 1;
    let n = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| err(0, "dimensions overflow"))?;
    let end = start + 4 * n;
    if bytes.len() < end {
        return Err(err(bytes.len(), format!("truncated payload: need {} bytes", end - start)));
    }
    if bytes.len() > end {
        return Err(err(end, format!("{} trailing bytes", bytes.len() - end)));
    }
    let mut data = vec![0.0f64; n];
    let row = width * channels;
    for (k, chunk) in bytes[start..end].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let file_row = k / row;
        let y = height - 1 - file_row;
        data[y * row + k % row] = v as f64;
    }
    Ok(ImageBuffer::from_data(width, height, channels, data).expect("length checked"))
}

/// Little-endian PFM. Values are stored as `f32`.
pub fn encode_pfm(img: &ImageBuffer) -> Result<Vec<u8>, PfmError> {
    let magic = match img.channels() {
        3 => "PF",
        1 => "Pf",
        c => return Err(err(0, format!("PFM holds 1 or 3 channels, not {c}"))),
    };
    let (w, h, c) = img.shape();
    let header = format!("{magic}\n{w} {h}\n-1.0\n");
    let mut out = Vec::with_capacity(header.len() + 4 * w * h * c);
    out.extend_from_slice(header.as_bytes());
    let row = w * c;
    for y in (0..h).rev() {
        for v in &img.data()[y * row..(y + 1) * row] {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_pfm(path: &Path) -> Result<ImageBuffer, IoError> {
    let bytes = read_bytes(path)?;
    decode_pfm(&bytes).map_err(|source| IoError::Pfm {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_pfm(path: &Path, img: &ImageBuffer) -> Result<(), IoError> {
    let bytes = encode_pfm(img).map_err(|source| IoError::Pfm {
        path: path.to_path_buf(),
        source,
    })?;
    write_bytes(path, &bytes)
}
