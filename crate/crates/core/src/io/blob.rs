//! Flat little-endian `f32` blobs described by JSON headers.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_bytes, read_json, read_pfm, write_bytes, write_json, write_pfm, IoError};
use crate::image::ImageBuffer;
use crate::lighting::{FeatureGrid, GridHeader, GridLight};
use crate::mlp::MlpWeights;
use crate::oov::HypernetParams;

fn sibling(header: &Path, name: &str) -> PathBuf {
    header.parent().unwrap_or(Path::new(".")).join(name)
}

pub fn write_f32_blob(path: &Path, values: &[f64]) -> Result<(), IoError> {
    let mut bytes = Vec::with_capacity(4 * values.len());
    for v in values {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    write_bytes(path, &bytes)
}

/// Read exactly `expected` values; shorter or longer files are errors.
pub fn read_f32_blob(path: &Path, expected: usize) -> Result<Vec<f64>, IoError> {
    let bytes = read_bytes(path)?;
    if bytes.len() != 4 * expected {
        return Err(IoError::format(
            path,
            format!("expected {} bytes ({expected} f32 values), found {}", 4 * expected, bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpHeader {
    pub dims: Vec<usize>,
    pub data: String,
}

/// Writes `<stem>.json` and the blob named in it.
pub fn write_mlp(header_path: &Path, weights: &MlpWeights) -> Result<(), IoError> {
    let data = blob_name(header_path);
    write_f32_blob(&sibling(header_path, &data), weights.params())?;
    write_json(
        header_path,
        &MlpHeader {
            dims: weights.dims().to_vec(),
            data,
        },
    )
}

pub fn read_mlp(header_path: &Path) -> Result<MlpWeights, IoError> {
    let h: MlpHeader = read_json(header_path)?;
    let n = MlpWeights::param_count_for(&h.dims);
    let params = read_f32_blob(&sibling(header_path, &h.data), n)?;
    Ok(MlpWeights::new(h.dims, params)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypernetHeader {
    pub feature_dim: usize,
    pub target_dims: Vec<usize>,
    pub data: String,
}

pub fn write_hypernet(header_path: &Path, h: &HypernetParams) -> Result<(), IoError> {
    let data = blob_name(header_path);
    write_f32_blob(&sibling(header_path, &data), &h.params)?;
    write_json(
        header_path,
        &HypernetHeader {
            feature_dim: h.feature_dim,
            target_dims: h.target_dims.clone(),
            data,
        },
    )
}

pub fn read_hypernet(header_path: &Path) -> Result<HypernetParams, IoError> {
    let h: HypernetHeader = read_json(header_path)?;
    let n = HypernetParams::param_count_for(h.feature_dim, &h.target_dims);
    let params = read_f32_blob(&sibling(header_path, &h.data), n)?;
    Ok(HypernetParams::new(h.feature_dim, h.target_dims, params)?)
}

pub fn write_grid_light(header_path: &Path, grid: &GridLight) -> Result<(), IoError> {
    let mut header = grid.header().clone();
    header.data = blob_name(header_path);
    write_f32_blob(&sibling(header_path, &header.data), grid.values())?;
    write_json(header_path, &header)
}

pub fn read_grid_light(header_path: &Path) -> Result<GridLight, IoError> {
    let header: GridHeader = read_json(header_path)?;
    let values = read_f32_blob(&sibling(header_path, &header.data), header.value_count())?;
    Ok(GridLight::new(header, values)?)
}

/// Feature grid stored as a stack of three-channel PFM slices. Channel `k`
/// lives in slice `k / 3`; unused channels of the last slice are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub slices: Vec<String>,
}

pub fn write_feature_grid(manifest_path: &Path, grid: &FeatureGrid) -> Result<(), IoError> {
    let (w, h, c) = grid.image().shape();
    let stem = manifest_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("features");
    let mut slices = Vec::new();
    for s in 0..c.div_ceil(3) {
        let slice = ImageBuffer::from_fn(w, h, 3, |x, y, k| {
            let ch = 3 * s + k;
            if ch < c {
                grid.image().get(x, y, ch)
            } else {
                0.0
            }
        });
        let name = format!("{stem}_{s}.pfm");
        write_pfm(&sibling(manifest_path, &name), &slice)?;
        slices.push(name);
    }
    write_json(
        manifest_path,
        &FeatureManifest {
            width: w,
            height: h,
            channels: c,
            slices,
        },
    )
}

pub fn read_feature_grid(manifest_path: &Path) -> Result<FeatureGrid, IoError> {
    let m: FeatureManifest = read_json(manifest_path)?;
    if m.channels == 0 || m.slices.len() != m.channels.div_ceil(3) {
        return Err(IoError::format(
            manifest_path,
            format!("{} channels need {} slices, found {}", m.channels, m.channels.div_ceil(3), m.slices.len()),
        ));
    }
    let mut img = ImageBuffer::new(m.width, m.height, m.channels);
    for (s, name) in m.slices.iter().enumerate() {
        let path = sibling(manifest_path, name);
        let slice = read_pfm(&path)?;
        if slice.shape() != (m.width, m.height, 3) {
            return Err(IoError::format(&path, "slice shape disagrees with the manifest"));
        }
        for y in 0..m.height {
            for x in 0..m.width {
                for k in 0..3 {
                    let ch = 3 * s + k;
                    if ch < m.channels {
                        img.set(x, y, ch, slice.get(x, y, k));
                    }
                }
            }
        }
    }
    Ok(FeatureGrid::new(img)?)
}

fn blob_name(header_path: &Path) -> String {
    let stem = header_path.file_stem().and_then(|s| s.to_str()).unwrap_or("blob");
    format!("{stem}.bin")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::Spectrum;

    /// Values exactly representable in f32.
    fn f32_exact(mut w: MlpWeights) -> MlpWeights {
        for v in w.params_mut() {
            *v = *v as f32 as f64;
        }
        w
    }

    #[test]
    fn mlp_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        let w = f32_exact(MlpWeights::random(vec![5, 7, 3], 11).unwrap());
        write_mlp(&path, &w).unwrap();
        let back = read_mlp(&path).unwrap();
        assert_eq!(back, w);
        let bytes = std::fs::read(dir.path().join("net.bin")).unwrap();
        write_mlp(&path, &back).unwrap();
        assert_eq!(std::fs::read(dir.path().join("net.bin")).unwrap(), bytes);
    }

    #[test]
    fn blob_length_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        write_f32_blob(&path, &[1.0, 2.0]).unwrap();
        assert!(read_f32_blob(&path, 1).is_err());
        assert!(read_f32_blob(&path, 3).is_err());
        assert_eq!(read_f32_blob(&path, 2).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn hypernet_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hyper.json");
        let bias = f32_exact(MlpWeights::random(vec![3, 4, 4], 2).unwrap());
        let mut h = HypernetParams::random(2, &bias, 0.1, 3).unwrap();
        for v in &mut h.params {
            *v = *v as f32 as f64;
        }
        write_hypernet(&path, &h).unwrap();
        assert_eq!(read_hypernet(&path).unwrap(), h);
    }

    #[test]
    fn grid_light_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.json");
        let header = GridHeader {
            dims: [1, 1, 2, 2, 4],
            bounds_min: [0.0, 0.0, 0.0],
            bounds_max: [1.0, 1.0, 1.0],
            data: String::new(),
        };
        let grid = GridLight::from_fn(header, |x, d| Spectrum::new(x.z, d.y.abs(), 0.5)).unwrap();
        write_grid_light(&path, &grid).unwrap();
        let back = read_grid_light(&path).unwrap();
        for (a, b) in back.values().iter().zip(grid.values()) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn feature_stack_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.json");
        let img = ImageBuffer::from_fn(4, 3, 5, |x, y, c| (x + 10 * y + 100 * c) as f64);
        let grid = FeatureGrid::new(img).unwrap();
        write_feature_grid(&path, &grid).unwrap();
        let back = read_feature_grid(&path).unwrap();
        assert_eq!(back, grid);
        let m: FeatureManifest = read_json(&path).unwrap();
        assert_eq!(m.slices.len(), 2);
    }
}
