//! Out-of-view lighting: a hypernetwork maps a global image feature to the
//! weights of a small density/colour MLP, which is volume rendered along the
//! light ray and blended with the screen-space estimate by SSRT uncertainty.

use glam::DVec3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lighting::{posenc, PosEncConfig};
use crate::mlp::{sigmoid, softplus, MlpError, MlpTrace, MlpWeights};
use crate::sampler::SampleRng;
use crate::spectrum::Spectrum;

#[derive(Debug, Error, PartialEq)]
pub enum OovError {
    #[error("global feature has {got} entries, hypernetwork expects {expected}")]
    FeatureDim { expected: usize, got: usize },
    #[error("hypernetwork has {got} parameters, expected {expected}")]
    ParamCount { expected: usize, got: usize },
    #[error("blend weight must lie in [0, 1], got {0}")]
    BlendWeight(f64),
    #[error("need t_near < t_far and at least two samples")]
    Range,
    #[error(transparent)]
    Mlp(#[from] MlpError),
}

/// Position encoding bands of the density/colour network.
pub const NERF_POSITION_BANDS: usize = 10;
pub const NERF_HIDDEN: [usize; 3] = [64, 64, 64];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NerfConfig {
    pub position_bands: usize,
    /// Colour is `radiance_scale * sigmoid(.)`.
    pub radiance_scale: f64,
    pub t_near: f64,
    pub t_far: f64,
    pub n_samples: usize,
}

impl Default for NerfConfig {
    fn default() -> Self {
        Self {
            position_bands: NERF_POSITION_BANDS,
            radiance_scale: 5.0,
            t_near: 0.05,
            t_far: 20.0,
            n_samples: 32,
        }
    }
}

impl NerfConfig {
    pub fn posenc(&self) -> PosEncConfig {
        PosEncConfig {
            bands: self.position_bands,
            include_input: true,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.posenc().output_dim(3)
    }

    /// Default layer widths for this encoding: four layers of 64 units
    /// producing density and RGB.
    pub fn default_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(NERF_HIDDEN);
        dims.push(4);
        dims
    }
}

/// Affine hypernetwork `Phi = W f_g + b`.
///
/// `params` holds `W` (`P x k`, row-major) followed by `b` (`P`), where `k` is
/// the global feature width and `P` the parameter count of `target_dims`.
#[derive(Clone, Debug, PartialEq)]
pub struct HypernetParams {
    pub feature_dim: usize,
    pub target_dims: Vec<usize>,
    pub params: Vec<f64>,
}

impl HypernetParams {
    pub fn param_count_for(feature_dim: usize, target_dims: &[usize]) -> usize {
        let p = MlpWeights::param_count_for(target_dims);
        p * feature_dim + p
    }

    pub fn new(
        feature_dim: usize,
        target_dims: Vec<usize>,
        params: Vec<f64>,
    ) -> Result<Self, OovError> {
        MlpWeights::zeros(target_dims.clone())?;
        let expected = Self::param_count_for(feature_dim, &target_dims);
        if params.len() != expected {
            return Err(OovError::ParamCount {
                expected,
                got: params.len(),
            });
        }
        Ok(Self {
            feature_dim,
            target_dims,
            params,
        })
    }

    pub fn zeros(feature_dim: usize, target_dims: Vec<usize>) -> Result<Self, OovError> {
        let n = Self::param_count_for(feature_dim, &target_dims);
        Self::new(feature_dim, target_dims, vec![0.0; n])
    }

    /// Weights `scale * U(-1, 1)`, bias taken from `bias`.
    pub fn random(
        feature_dim: usize,
        bias: &MlpWeights,
        scale: f64,
        seed: u64,
    ) -> Result<Self, OovError> {
        let mut h = Self::zeros(feature_dim, bias.dims().to_vec())?;
        let p = bias.param_count();
        let mut rng = SampleRng::from_seed(seed);
        for w in &mut h.params[..p * feature_dim] {
            *w = scale * (2.0 * rng.uniform() - 1.0);
        }
        h.params[p * feature_dim..].copy_from_slice(bias.params());
        Ok(h)
    }

    pub fn output_count(&self) -> usize {
        MlpWeights::param_count_for(&self.target_dims)
    }

    pub fn weight(&self) -> &[f64] {
        &self.params[..self.output_count() * self.feature_dim]
    }

    pub fn bias(&self) -> &[f64] {
        &self.params[self.output_count() * self.feature_dim..]
    }
}

pub fn hypernet_forward(fg: &[f64], h: &HypernetParams) -> Result<MlpWeights, OovError> {
    if fg.len() != h.feature_dim {
        return Err(OovError::FeatureDim {
            expected: h.feature_dim,
            got: fg.len(),
        });
    }
    let k = h.feature_dim;
    let w = h.weight();
    let phi = h
        .bias()
        .iter()
        .enumerate()
        .map(|(i, b)| b + w[i * k..(i + 1) * k].iter().zip(fg).map(|(a, x)| a * x).sum::<f64>())
        .collect();
    Ok(MlpWeights::new(h.target_dims.clone(), phi)?)
}

/// Gradients of `d_phi . Phi(fg)` with respect to the feature and the
/// hypernetwork parameters.
pub fn hypernet_backward(
    fg: &[f64],
    h: &HypernetParams,
    d_phi: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), OovError> {
    if fg.len() != h.feature_dim {
        return Err(OovError::FeatureDim {
            expected: h.feature_dim,
            got: fg.len(),
        });
    }
    let p = h.output_count();
    if d_phi.len() != p {
        return Err(OovError::ParamCount {
            expected: p,
            got: d_phi.len(),
        });
    }
    let k = h.feature_dim;
    let w = h.weight();
    let mut d_fg = vec![0.0; k];
    let mut d_params = vec![0.0; h.params.len()];
    for (i, &g) in d_phi.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        for j in 0..k {
            d_fg[j] += g * w[i * k + j];
            d_params[i * k + j] = g * fg[j];
        }
        d_params[p * k + i] = g;
    }
    Ok((d_fg, d_params))
}

/// Density and colour at `x`.
pub fn nerf_eval(
    weights: &MlpWeights,
    x: DVec3,
    cfg: &NerfConfig,
) -> Result<(f64, Spectrum), OovError> {
    weights.check_io(cfg.input_dim(), 4)?;
    let (sigma, c, _) = nerf_forward(weights, x, cfg);
    Ok((sigma, c))
}

fn nerf_forward(weights: &MlpWeights, x: DVec3, cfg: &NerfConfig) -> (f64, Spectrum, MlpTrace) {
    let input = posenc(&x.to_array(), &cfg.posenc());
    let trace = weights.forward_trace(&input);
    let o = trace.output();
    let sigma = softplus(o[0]);
    let c = Spectrum::new(sigmoid(o[1]), sigmoid(o[2]), sigmoid(o[3])) * cfg.radiance_scale;
    (sigma, c, trace)
}

/// Raw network outputs' adjoint given adjoints of density and colour.
fn nerf_output_adjoint(trace: &MlpTrace, d_sigma: f64, d_c: Spectrum, scale: f64) -> [f64; 4] {
    let o = trace.output();
    let ds = |z: f64| {
        let s = sigmoid(z);
        scale * s * (1.0 - s)
    };
    [
        d_sigma * sigmoid(o[0]),
        d_c.r * ds(o[1]),
        d_c.g * ds(o[2]),
        d_c.b * ds(o[3]),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VolumeSample {
    pub t: f64,
    pub x: DVec3,
    pub sigma: f64,
    pub color: Spectrum,
    pub delta: f64,
}

/// Alpha-composite samples ordered front to back. Returns the radiance and
/// the per-sample weights `T_i (1 - exp(-sigma_i delta_i))`.
pub fn composite(samples: &[VolumeSample]) -> (Spectrum, Vec<f64>) {
    let mut optical = 0.0f64;
    let mut out = Spectrum::ZERO;
    let mut weights = Vec::with_capacity(samples.len());
    let mut total = 0.0;
    for s in samples {
        let transmittance = (-optical).exp();
        optical += s.sigma * s.delta;
        // T_i - T_{i+1}; capped so rounding never lifts the sum above 1
        let w = (transmittance - (-optical).exp()).min(1.0 - total).max(0.0);
        total += w;
        out += s.color * w;
        weights.push(w);
    }
    (out, weights)
}

/// One jittered sample per stratum of `[t_near, t_far]`. Each sample's
/// spacing is its stratum width, so the strata tile the whole interval.
fn stratified_ts(cfg: &NerfConfig, rng: &mut SampleRng) -> (Vec<f64>, Vec<f64>) {
    let n = cfg.n_samples;
    let span = (cfg.t_far - cfg.t_near) / n as f64;
    let ts = (0..n)
        .map(|i| cfg.t_near + (i as f64 + rng.uniform()) * span)
        .collect();
    (ts, vec![span; n])
}

fn check_range(cfg: &NerfConfig) -> Result<(), OovError> {
    if !(cfg.t_near < cfg.t_far) || cfg.n_samples < 2 {
        return Err(OovError::Range);
    }
    Ok(())
}

/// Points along the light ray. `d` points from `p` toward the light, so the
/// samples lie at `p + t d`.
pub fn volume_samples(
    weights: &MlpWeights,
    p: DVec3,
    d: DVec3,
    cfg: &NerfConfig,
    rng: &mut SampleRng,
) -> Result<Vec<VolumeSample>, OovError> {
    check_range(cfg)?;
    weights.check_io(cfg.input_dim(), 4)?;
    let (ts, deltas) = stratified_ts(cfg, rng);
    Ok(ts
        .iter()
        .zip(deltas)
        .map(|(&t, delta)| {
            let x = p + d * t;
            let (sigma, color, _) = nerf_forward(weights, x, cfg);
            VolumeSample {
                t,
                x,
                sigma,
                color,
                delta,
            }
        })
        .collect())
}

pub fn volume_render(
    weights: &MlpWeights,
    p: DVec3,
    d: DVec3,
    cfg: &NerfConfig,
    rng: &mut SampleRng,
) -> Result<Spectrum, OovError> {
    Ok(composite(&volume_samples(weights, p, d, cfg, rng)?).0)
}

/// Accumulate the gradient of `d_radiance . volume_render(...)` with respect
/// to the network parameters into `grad`. `rng` must be in the state the
/// forward call started from.
pub fn volume_render_backward(
    weights: &MlpWeights,
    p: DVec3,
    d: DVec3,
    cfg: &NerfConfig,
    rng: &mut SampleRng,
    d_radiance: Spectrum,
    grad: &mut [f64],
) -> Result<(), OovError> {
    check_range(cfg)?;
    weights.check_io(cfg.input_dim(), 4)?;
    let (ts, deltas) = stratified_ts(cfg, rng);
    let n = ts.len();
    let mut traces = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut color = Vec::with_capacity(n);
    for &t in &ts {
        let (s, c, tr) = nerf_forward(weights, p + d * t, cfg);
        sigma.push(s);
        color.push(c);
        traces.push(tr);
    }
    // T_i and per-sample weights
    let mut trans = Vec::with_capacity(n + 1);
    let mut optical = 0.0f64;
    for i in 0..n {
        trans.push((-optical).exp());
        optical += sigma[i] * deltas[i];
    }
    trans.push((-optical).exp());
    let w: Vec<f64> = (0..n).map(|i| trans[i] - trans[i + 1]).collect();
    // suffix[i] = sum_{k > i} w_k (g . c_k)
    let gc: Vec<f64> = color.iter().map(|c| d_radiance.dot(*c)).collect();
    let mut suffix = vec![0.0; n];
    let mut acc = 0.0;
    for i in (0..n).rev() {
        suffix[i] = acc;
        acc += w[i] * gc[i];
    }
    for i in 0..n {
        let d_sigma = deltas[i] * (trans[i + 1] * gc[i] - suffix[i]);
        let d_c = d_radiance * w[i];
        let d_out = nerf_output_adjoint(&traces[i], d_sigma, d_c, cfg.radiance_scale);
        weights.backward(&traces[i], &d_out, grad);
    }
    Ok(())
}

/// `(1 - u) l_ssrt + u l_oov`.
pub fn blend(l_ssrt: Spectrum, l_oov: Spectrum, u: f64) -> Result<Spectrum, OovError> {
    if !(0.0..=1.0).contains(&u) {
        return Err(OovError::BlendWeight(u));
    }
    Ok(blend_unchecked(l_ssrt, l_oov, u))
}

#[inline]
pub(crate) fn blend_unchecked(l_ssrt: Spectrum, l_oov: Spectrum, u: f64) -> Spectrum {
    l_ssrt * (1.0 - u) + l_oov * u
}

/// Hypernetwork plus the global feature it is conditioned on, with the
/// generated network cached.
#[derive(Clone, Debug)]
pub struct OutOfViewModel {
    hypernet: HypernetParams,
    global_feature: Vec<f64>,
    weights: MlpWeights,
    pub cfg: NerfConfig,
}

impl OutOfViewModel {
    pub fn new(
        hypernet: HypernetParams,
        global_feature: Vec<f64>,
        cfg: NerfConfig,
    ) -> Result<Self, OovError> {
        let weights = hypernet_forward(&global_feature, &hypernet)?;
        weights.check_io(cfg.input_dim(), 4)?;
        check_range(&cfg)?;
        Ok(Self {
            hypernet,
            global_feature,
            weights,
            cfg,
        })
    }

    pub fn hypernet(&self) -> &HypernetParams {
        &self.hypernet
    }

    pub fn global_feature(&self) -> &[f64] {
        &self.global_feature
    }

    pub fn weights(&self) -> &MlpWeights {
        &self.weights
    }

    pub fn set_hypernet_params(&mut self, params: &[f64]) -> Result<(), OovError> {
        if params.len() != self.hypernet.params.len() {
            return Err(OovError::ParamCount {
                expected: self.hypernet.params.len(),
                got: params.len(),
            });
        }
        self.hypernet.params.copy_from_slice(params);
        self.weights = hypernet_forward(&self.global_feature, &self.hypernet)?;
        Ok(())
    }

    pub fn radiance(&self, p: DVec3, d: DVec3, rng: &mut SampleRng) -> Spectrum {
        volume_render(&self.weights, p, d, &self.cfg, rng).expect("validated at construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::softplus_inverse;

    fn small_cfg() -> NerfConfig {
        NerfConfig {
            position_bands: 2,
            n_samples: 16,
            t_near: 0.0,
            t_far: 4.0,
            ..NerfConfig::default()
        }
    }

    fn constant_field(cfg: &NerfConfig, sigma: f64, c: f64) -> MlpWeights {
        let mut w = MlpWeights::zeros(vec![cfg.input_dim(), 8, 4]).unwrap();
        let b = w.output_bias_index(0);
        w.params_mut()[b] = softplus_inverse(sigma);
        let logit = (c / cfg.radiance_scale / (1.0 - c / cfg.radiance_scale)).ln();
        for j in 1..4 {
            let b = w.output_bias_index(j);
            w.params_mut()[b] = logit;
        }
        w
    }

    #[test]
    fn hypernet_zero_and_identity() {
        let h = HypernetParams::zeros(3, vec![2, 2]).unwrap();
        let phi = hypernet_forward(&[0.0, 0.0, 0.0], &h).unwrap();
        assert!(phi.params().iter().all(|&v| v == 0.0));

        // P = 6 outputs from a 6-wide feature through an identity matrix
        let dims = vec![2, 2];
        let p = MlpWeights::param_count_for(&dims);
        let mut params = vec![0.0; p * p + p];
        for i in 0..p {
            params[i * p + i] = 1.0;
        }
        let h = HypernetParams::new(p, dims, params).unwrap();
        let target: Vec<f64> = (0..p).map(|i| i as f64 * 0.5 - 1.0).collect();
        assert_eq!(hypernet_forward(&target, &h).unwrap().params(), &target[..]);
        assert!(matches!(
            hypernet_forward(&[1.0], &h),
            Err(OovError::FeatureDim { .. })
        ));
    }

    #[test]
    fn hypernet_gradients_match_finite_differences() {
        let bias = MlpWeights::random(vec![3, 4, 2], 1).unwrap();
        let h = HypernetParams::random(5, &bias, 0.3, 2).unwrap();
        let fg = [0.2, -0.4, 0.9, 0.1, -1.3];
        let p = h.output_count();
        let d_phi: Vec<f64> = (0..p).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
        let obj = |fg: &[f64], h: &HypernetParams| {
            let phi = hypernet_forward(fg, h).unwrap();
            phi.params().iter().zip(&d_phi).map(|(a, b)| a * b).sum::<f64>()
        };
        let (d_fg, d_h) = hypernet_backward(&fg, &h, &d_phi).unwrap();
        let eps = 1e-6;
        for j in 0..fg.len() {
            let mut hi = fg;
            hi[j] += eps;
            let mut lo = fg;
            lo[j] -= eps;
            let fd = (obj(&hi, &h) - obj(&lo, &h)) / (2.0 * eps);
            assert!((fd - d_fg[j]).abs() <= 1e-6 * fd.abs().max(1e-6));
        }
        for k in (0..h.params.len()).step_by(7) {
            let mut hi = h.clone();
            hi.params[k] += eps;
            let mut lo = h.clone();
            lo.params[k] -= eps;
            let fd = (obj(&fg, &hi) - obj(&fg, &lo)) / (2.0 * eps);
            assert!((fd - d_h[k]).abs() <= 1e-6 * fd.abs().max(1e-6), "{k}");
        }
    }

    #[test]
    fn zero_network_density_and_colour() {
        let cfg = NerfConfig::default();
        let w = MlpWeights::zeros(cfg.default_dims()).unwrap();
        let (s, c) = nerf_eval(&w, DVec3::new(0.3, 1.0, -2.0), &cfg).unwrap();
        assert!((s - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(c, Spectrum::splat(2.5));
        assert_eq!(nerf_eval(&w, DVec3::ONE, &cfg), nerf_eval(&w, DVec3::ONE, &cfg));
        assert_eq!(cfg.input_dim(), 63);
    }

    #[test]
    fn hand_composite() {
        let s = |sigma, c: f64| VolumeSample {
            t: 0.0,
            x: DVec3::ZERO,
            sigma,
            color: Spectrum::splat(c),
            delta: 1.0,
        };
        let (l, w) = composite(&[s(1.0, 1.0), s(1.0, 0.0)]);
        let e = (-1.0f64).exp();
        assert!((l.r - (1.0 - e)).abs() < 1e-15);
        assert!((l.r - 0.632_120_558_828_557_7).abs() < 1e-12);
        assert!((w[1] - e * (1.0 - e)).abs() < 1e-15);
    }

    #[test]
    fn empty_medium_renders_black() {
        let cfg = small_cfg();
        let mut w = constant_field(&cfg, 1.0, 2.0);
        let b = w.output_bias_index(0);
        w.params_mut()[b] = -1e4;
        let mut rng = SampleRng::from_seed(3);
        let l = volume_render(&w, DVec3::ZERO, DVec3::Z, &cfg, &mut rng).unwrap();
        assert_eq!(l, Spectrum::ZERO);
    }

    #[test]
    fn homogeneous_medium_closed_form() {
        let cfg = NerfConfig {
            n_samples: 256,
            ..small_cfg()
        };
        let w = constant_field(&cfg, 0.5, 1.5);
        let mut rng = SampleRng::from_seed(5);
        let l = volume_render(&w, DVec3::ZERO, DVec3::X, &cfg, &mut rng).unwrap();
        let expect = 1.5 * (1.0 - (-2.0f64).exp());
        assert!((l.g - expect).abs() < 1e-3, "{} vs {expect}", l.g);
        assert!((l.g - expect).abs() < 1e-12);
    }

    #[test]
    fn compositing_weights_are_sub_stochastic() {
        let cfg = small_cfg();
        let w = MlpWeights::random(vec![cfg.input_dim(), 8, 8, 4], 4).unwrap();
        for k in 0..20 {
            let mut rng = SampleRng::from_seed(k);
            let d = DVec3::new(1.0, k as f64 * 0.1, 0.5).normalize();
            let samples = volume_samples(&w, DVec3::ZERO, d, &cfg, &mut rng).unwrap();
            let (_, weights) = composite(&samples);
            assert!(weights.iter().all(|&v| v >= 0.0));
            assert!(weights.iter().sum::<f64>() <= 1.0 + 1e-12);
            assert!(samples.windows(2).all(|p| p[0].t < p[1].t));
        }
    }

    #[test]
    fn scaling_colour_scales_radiance() {
        let cfg = small_cfg();
        let w = MlpWeights::random(vec![cfg.input_dim(), 8, 4], 8).unwrap();
        let mut rng = SampleRng::from_seed(1);
        let samples = volume_samples(&w, DVec3::ZERO, DVec3::Y, &cfg, &mut rng).unwrap();
        let (l, _) = composite(&samples);
        let scaled: Vec<_> = samples
            .iter()
            .map(|s| VolumeSample {
                color: s.color * 3.0,
                ..*s
            })
            .collect();
        let (l3, _) = composite(&scaled);
        assert!((l3 - l * 3.0).max_component().abs() < 1e-12);
    }

    #[test]
    fn volume_render_gradient_matches_finite_differences() {
        let cfg = small_cfg();
        let mut w = MlpWeights::random(vec![cfg.input_dim(), 6, 4], 21).unwrap();
        let b = w.output_bias_index(0);
        w.params_mut()[b] = -1.0;
        let p = DVec3::new(0.1, -0.2, 0.3);
        let d = DVec3::new(0.3, 0.4, 1.0).normalize();
        let g = Spectrum::new(0.7, -0.2, 1.1);
        let obj = |w: &MlpWeights| {
            let mut rng = SampleRng::from_seed(77);
            g.dot(volume_render(w, p, d, &cfg, &mut rng).unwrap())
        };
        let mut grad = vec![0.0; w.param_count()];
        let mut rng = SampleRng::from_seed(77);
        volume_render_backward(&w, p, d, &cfg, &mut rng, g, &mut grad).unwrap();
        let eps = 1e-6;
        for k in 0..w.param_count() {
            let mut hi = w.clone();
            hi.params_mut()[k] += eps;
            let mut lo = w.clone();
            lo.params_mut()[k] -= eps;
            let fd = (obj(&hi) - obj(&lo)) / (2.0 * eps);
            let err = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-8);
            assert!(err < 1e-4, "param {k}: fd {fd} adjoint {}", grad[k]);
        }
    }

    #[test]
    fn blend_cases() {
        let a = Spectrum::new(4.0, 0.0, 0.0);
        let b = Spectrum::new(0.0, 4.0, 0.0);
        assert_eq!(blend(a, b, 0.0).unwrap(), a);
        assert_eq!(blend(a, b, 1.0).unwrap(), b);
        assert_eq!(blend(a, b, 0.25).unwrap(), Spectrum::new(3.0, 1.0, 0.0));
        assert!(blend(a, b, 1.5).is_err());
        assert!(blend(a, b, -0.1).is_err());
    }

    #[test]
    fn range_errors() {
        let cfg = NerfConfig {
            t_near: 2.0,
            t_far: 1.0,
            ..small_cfg()
        };
        let w = MlpWeights::zeros(vec![cfg.input_dim(), 4]).unwrap();
        let mut rng = SampleRng::from_seed(0);
        assert_eq!(
            volume_render(&w, DVec3::ZERO, DVec3::Z, &cfg, &mut rng),
            Err(OovError::Range)
        );
    }
}
