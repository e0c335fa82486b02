use glam::{DVec2, DVec3};

use super::{posenc_into, FeatureGrid, LightError, LightField, LightSample, PosEncConfig};
use crate::brdf::DIELECTRIC_F0;
use crate::camera::Camera;
use crate::gbuffer::GBuffer;
use crate::mlp::{sigmoid, softplus, MlpWeights};
use crate::oov::{blend_unchecked, hypernet_backward, volume_render_backward, OutOfViewModel};
use crate::sampler::SampleRng;
use crate::spectrum::Spectrum;
use crate::ssrt::{trace, trace_unchecked, SsrtConfig, SsrtHit};

pub const LIGHTNET_DIRECTION_BANDS: usize = 6;
pub const LIGHTNET_HIDDEN: [usize; 3] = [128, 128, 128];

const DIRECTION_ENCODING: PosEncConfig = PosEncConfig {
    bands: LIGHTNET_DIRECTION_BANDS,
    include_input: true,
};

/// `|gamma(d)| + C + 10` for a feature grid with `channels` channels.
pub fn lightnet_input_dim(channels: usize) -> usize {
    DIRECTION_ENCODING.output_dim(3) + channels + 10
}

/// Layer widths of the default decoder.
pub fn lightnet_default_dims(channels: usize) -> Vec<usize> {
    let mut dims = vec![lightnet_input_dim(channels)];
    dims.extend(LIGHTNET_HIDDEN);
    dims.push(3);
    dims
}

/// Decoder inputs at a traced source point.
#[derive(Clone, Debug, PartialEq)]
pub struct LightNetInputs {
    pub direction: Vec<f64>,
    pub feature: Vec<f64>,
    pub k_d: Spectrum,
    pub k_s: Spectrum,
    pub normal: DVec3,
    pub roughness: f64,
}

fn nearest_index(pixel: DVec2, w: usize, h: usize) -> usize {
    let x = (pixel.x.floor().max(0.0) as usize).min(w - 1);
    let y = (pixel.y.floor().max(0.0) as usize).min(h - 1);
    y * w + x
}

impl LightNetInputs {
    /// Features are interpolated at `pixel`; G-buffer values come from the
    /// nearest pixel.
    pub fn gather(features: &FeatureGrid, g: &GBuffer, d: DVec3, pixel: DVec2) -> Self {
        let mut direction = Vec::with_capacity(DIRECTION_ENCODING.output_dim(3));
        posenc_into(&d.to_array(), &DIRECTION_ENCODING, &mut direction);
        let i = nearest_index(pixel, g.width(), g.height());
        let a = g.albedo(i);
        let m = g.metallic(i);
        Self {
            direction,
            feature: features.sample(pixel),
            k_d: a * (1.0 - m),
            k_s: Spectrum::splat(DIELECTRIC_F0).lerp(a, m),
            normal: g.normal(i),
            roughness: g.roughness(i),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.direction.len() + self.feature.len() + 10);
        x.extend_from_slice(&self.direction);
        x.extend_from_slice(&self.feature);
        x.extend(self.k_d.to_array());
        x.extend(self.k_s.to_array());
        x.extend(self.normal.to_array());
        x.push(self.roughness);
        x
    }
}

fn check_inputs(
    features: &FeatureGrid,
    g: &GBuffer,
    weights: &MlpWeights,
    camera: &Camera,
) -> Result<(), LightError> {
    if (features.width(), features.height()) != (camera.width, camera.height) {
        return Err(LightError::Resolution("feature grid"));
    }
    if (g.width(), g.height()) != (camera.width, camera.height) {
        return Err(LightError::Resolution("G-buffer"));
    }
    weights.check_io(lightnet_input_dim(features.channels()), 3)?;
    Ok(())
}

fn decode(weights: &MlpWeights, x: &[f64]) -> Spectrum {
    let o = weights.forward(x);
    Spectrum::new(softplus(o[0]), softplus(o[1]), softplus(o[2]))
}

/// Screen-space radiance toward `p` from direction `d`: trace the depth map
/// along `d`, then decode at the source pixel. Misses return zero radiance.
pub fn lightnet_query(
    features: &FeatureGrid,
    g: &GBuffer,
    weights: &MlpWeights,
    camera: &Camera,
    p: DVec3,
    d: DVec3,
    cfg: &SsrtConfig,
) -> Result<(Spectrum, SsrtHit), LightError> {
    check_inputs(features, g, weights, camera)?;
    let hit = trace(&g.depth, camera, p, d, cfg)?;
    if !hit.is_hit() {
        return Ok((Spectrum::ZERO, hit));
    }
    let x = LightNetInputs::gather(features, g, d.normalize(), hit.pixel).to_vec();
    Ok((decode(weights, &x), hit))
}

/// Screen-space decoder blended with the out-of-view model by SSRT
/// uncertainty. Parameters are the decoder weights followed by the
/// hypernetwork parameters.
#[derive(Clone, Debug)]
pub struct LearnedLight {
    features: FeatureGrid,
    gbuffer: GBuffer,
    camera: Camera,
    lightnet: MlpWeights,
    oov: OutOfViewModel,
    ssrt: SsrtConfig,
}

impl LearnedLight {
    pub fn new(
        features: FeatureGrid,
        gbuffer: GBuffer,
        camera: Camera,
        lightnet: MlpWeights,
        oov: OutOfViewModel,
        ssrt: SsrtConfig,
    ) -> Result<Self, LightError> {
        check_inputs(&features, &gbuffer, &lightnet, &camera)?;
        ssrt.validate()?;
        Ok(Self {
            features,
            gbuffer,
            camera,
            lightnet,
            oov,
            ssrt,
        })
    }

    pub fn features(&self) -> &FeatureGrid {
        &self.features
    }

    pub fn lightnet(&self) -> &MlpWeights {
        &self.lightnet
    }

    pub fn out_of_view(&self) -> &OutOfViewModel {
        &self.oov
    }

    fn trace(&self, p: DVec3, d: DVec3) -> SsrtHit {
        trace_unchecked(&self.gbuffer.depth, &self.camera, p, d, &self.ssrt)
    }

    fn inputs(&self, d: DVec3, hit: &SsrtHit) -> Vec<f64> {
        LightNetInputs::gather(&self.features, &self.gbuffer, d, hit.pixel).to_vec()
    }
}

impl LightField for LearnedLight {
    fn query(&self, p: DVec3, d: DVec3, rng: &mut SampleRng) -> LightSample {
        let hit = self.trace(p, d);
        let u = hit.uncertainty;
        let l_ssrt = if hit.is_hit() && u < 1.0 {
            decode(&self.lightnet, &self.inputs(d, &hit))
        } else {
            Spectrum::ZERO
        };
        let l_oov = if u > 0.0 {
            self.oov.radiance(p, d, rng)
        } else {
            Spectrum::ZERO
        };
        LightSample {
            radiance: blend_unchecked(l_ssrt, l_oov, u),
            uncertainty: Some(u),
        }
    }

    fn params(&self) -> Vec<f64> {
        let mut p = self.lightnet.params().to_vec();
        p.extend_from_slice(&self.oov.hypernet().params);
        p
    }

    fn param_count(&self) -> usize {
        self.lightnet.param_count() + self.oov.hypernet().params.len()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<(), LightError> {
        if params.len() != self.param_count() {
            return Err(LightError::ParamCount {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let (net, hyper) = params.split_at(self.lightnet.param_count());
        self.lightnet.params_mut().copy_from_slice(net);
        self.oov.set_hypernet_params(hyper)?;
        Ok(())
    }

    /// Decoder gradient followed by the gradient with respect to the
    /// generated out-of-view weights.
    fn grad_len(&self) -> usize {
        self.lightnet.param_count() + self.oov.weights().param_count()
    }

    fn query_backward(
        &self,
        p: DVec3,
        d: DVec3,
        rng: &mut SampleRng,
        g: Spectrum,
        acc: &mut [f64],
    ) {
        let hit = self.trace(p, d);
        let u = hit.uncertainty;
        let (net_acc, phi_acc) = acc.split_at_mut(self.lightnet.param_count());
        if hit.is_hit() && u < 1.0 {
            let trace = self.lightnet.forward_trace(&self.inputs(d, &hit));
            let o = trace.output();
            let d_out: Vec<f64> = (0..3).map(|c| g[c] * (1.0 - u) * sigmoid(o[c])).collect();
            self.lightnet.backward(&trace, &d_out, net_acc);
        }
        if u > 0.0 {
            volume_render_backward(self.oov.weights(), p, d, &self.oov.cfg, rng, g * u, phi_acc)
                .expect("validated at construction");
        }
    }

    fn finish_grad(&self, mut acc: Vec<f64>) -> Vec<f64> {
        let d_phi = acc.split_off(self.lightnet.param_count());
        let (_, d_hyper) = hypernet_backward(self.oov.global_feature(), self.oov.hypernet(), &d_phi)
            .expect("validated at construction");
        acc.extend(d_hyper);
        acc
    }
}
