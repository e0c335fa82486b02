//! Lighting fields queried by the renderer: analytic and gridded ground
//! truth for tests, and the learned screen-space + out-of-view model.

mod analytic;
mod features;
mod learned;

pub use analytic::{direction_from_angles, direction_to_angles, AnalyticLight, GridHeader, GridLight, SKY_UP};
pub use features::FeatureGrid;
pub use learned::{
    lightnet_default_dims, lightnet_input_dim, lightnet_query, LearnedLight, LightNetInputs,
    LIGHTNET_DIRECTION_BANDS,
    LIGHTNET_HIDDEN,
};

use glam::DVec3;
use thiserror::Error;

use crate::mlp::MlpError;
use crate::oov::OovError;
use crate::sampler::SampleRng;
use crate::spectrum::Spectrum;
use crate::ssrt::SsrtError;

#[derive(Debug, Error)]
pub enum LightError {
    #[error("light field has {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("grid light: {0}")]
    Grid(String),
    #[error("feature grid: {0}")]
    Features(String),
    #[error("lightnet weights: {0}")]
    Weights(#[from] MlpError),
    #[error(transparent)]
    Oov(#[from] OovError),
    #[error(transparent)]
    Ssrt(#[from] SsrtError),
    #[error("{0} does not match the camera resolution")]
    Resolution(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PosEncConfig {
    pub bands: usize,
    pub include_input: bool,
}

impl PosEncConfig {
    pub fn output_dim(&self, input_dim: usize) -> usize {
        input_dim * (2 * self.bands + usize::from(self.include_input))
    }
}

/// Sinusoidal encoding, component-major: for each input component `x`,
/// `[x, sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^(L-1) pi x), cos(2^(L-1) pi x)]`.
pub fn posenc(x: &[f64], cfg: &PosEncConfig) -> Vec<f64> {
    let mut out = Vec::with_capacity(cfg.output_dim(x.len()));
    posenc_into(x, cfg, &mut out);
    out
}

pub(crate) fn posenc_into(x: &[f64], cfg: &PosEncConfig, out: &mut Vec<f64>) {
    for &v in x {
        if cfg.include_input {
            out.push(v);
        }
        let mut freq = std::f64::consts::PI;
        for _ in 0..cfg.bands {
            let (s, c) = (freq * v).sin_cos();
            out.push(s);
            out.push(c);
            freq *= 2.0;
        }
    }
}

/// Radiance arriving at a point, with the SSRT uncertainty used to blend it
/// when the field has a screen-space part.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LightSample {
    pub radiance: Spectrum,
    pub uncertainty: Option<f64>,
}

impl LightSample {
    pub fn analytic(radiance: Spectrum) -> Self {
        Self {
            radiance,
            uncertainty: None,
        }
    }
}

/// Incident radiance `L_i(p, d)`, `d` pointing from `p` toward the source.
///
/// Queries may draw from `rng` (volume rendering jitter); backward passes
/// are called with the generator in the same state as the forward query.
pub trait LightField: Sync {
    fn query(&self, p: DVec3, d: DVec3, rng: &mut SampleRng) -> LightSample;

    fn params(&self) -> Vec<f64> {
        Vec::new()
    }

    fn param_count(&self) -> usize {
        self.params().len()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<(), LightError> {
        if !params.is_empty() {
            return Err(LightError::ParamCount {
                expected: 0,
                got: params.len(),
            });
        }
        Ok(())
    }

    /// Length of the buffer `query_backward` accumulates into.
    fn grad_len(&self) -> usize {
        self.param_count()
    }

    /// Add the gradient of `g . L(p, d)` to `acc`.
    fn query_backward(
        &self,
        _p: DVec3,
        _d: DVec3,
        _rng: &mut SampleRng,
        _g: Spectrum,
        _acc: &mut [f64],
    ) {
    }

    /// Turn an accumulated buffer into a gradient over `params()`.
    fn finish_grad(&self, acc: Vec<f64>) -> Vec<f64> {
        acc
    }

    /// Clamp parameters back into their valid range after an update.
    fn project_params(&self, _params: &mut [f64]) {}
}
