//! Differentiable screen-space Monte Carlo re-rendering from G-buffers.

pub mod brdf;
pub mod camera;
pub mod exec;
pub mod gbuffer;
pub mod gradcheck;
pub mod image;
pub mod inverse;
pub mod io;
pub mod lighting;
pub mod mlp;
pub mod oov;
pub mod render;
pub mod sampler;
pub mod scene;
pub mod spectrum;
pub mod ssrt;
