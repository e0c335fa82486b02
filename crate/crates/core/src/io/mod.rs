//! On-disk formats: PFM images, f32 blobs with JSON headers, PNG previews
//! and G-buffer bundles.

mod blob;
mod bundle;
mod color;
mod pfm;

pub use blob::{
    read_f32_blob, read_feature_grid, read_grid_light, read_hypernet, read_mlp, write_f32_blob,
    write_feature_grid, write_grid_light, write_hypernet, write_mlp, FeatureManifest,
    HypernetHeader, MlpHeader,
};
pub use bundle::{Bundle, BundleManifest, LearnedSpec, LightSpec};
pub use color::{srgb_to_linear, tonemap, tonemap_byte, write_png_preview, GAMMA};
pub use pfm::{decode_pfm, encode_pfm, read_pfm, write_pfm, PfmError};

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Pfm { path: PathBuf, source: PfmError },
    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("missing map: {0}")]
    MissingMap(PathBuf),
    #[error("png: {0}")]
    Png(#[from] image::ImageError),
    #[error(transparent)]
    Camera(#[from] crate::camera::CameraError),
    #[error(transparent)]
    GBuffer(#[from] crate::gbuffer::GBufferError),
    #[error(transparent)]
    Light(#[from] crate::lighting::LightError),
    #[error(transparent)]
    Mlp(#[from] crate::mlp::MlpError),
    #[error(transparent)]
    Oov(#[from] crate::oov::OovError),
    #[error("bundle has no {0:?} lighting")]
    NoLighting(String),
}

impl IoError {
    pub(crate) fn format(path: &Path, message: impl Into<String>) -> Self {
        Self::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    std::fs::write(path, bytes).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}
