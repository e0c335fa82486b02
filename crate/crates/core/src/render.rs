//! Monte Carlo re-rendering of a G-buffer under a light field, its adjoint,
//! and fixed-direction quadrature estimators used as baselines and
//! references.
//!
//! Per pixel the estimate is `(1/N) sum_i f_r(v, d_i) L(p, d_i) (n.d_i) /
//! max(p(d_i), pdf_floor)` with `d_i` drawn by BRDF importance sampling.
//! Invalid samples count towards `N` but contribute nothing.

use glam::DVec3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::brdf::{BrdfModel, BrdfParams, Shading};
use crate::camera::Camera;
use crate::exec::{fold_chunks, try_map_range, Execution};
use crate::gbuffer::GBuffer;
use crate::image::ImageBuffer;
use crate::lighting::LightField;
use crate::sampler::SamplerState;
use crate::spectrum::Spectrum;

pub const DEFAULT_PDF_FLOOR: f64 = 1e-6;
/// Pixels per work item in the backward pass; fixed so the reduction
/// order of lighting gradients never depends on the thread count.
const BACKWARD_CHUNK: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("samples per pixel must be at least 1")]
    ZeroSpp,
    #[error("pdf floor must be finite and non-negative, got {0}")]
    PdfFloor(f64),
    #[error("G-buffer is {gw}x{gh} but the camera is {cw}x{ch}")]
    Shape {
        gw: usize,
        gh: usize,
        cw: usize,
        ch: usize,
    },
    #[error("adjoint image must be {0}x{1} with 3 channels")]
    AdjointShape(usize, usize),
    #[error("quadrature grid must be at least 2x4, got {0}x{1}")]
    Grid(usize, usize),
    #[error("non-finite value at pixel ({x}, {y}), sample {sample}: {detail}")]
    NonFinite {
        x: usize,
        y: usize,
        sample: usize,
        detail: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub spp: usize,
    pub seed: u64,
    pub pdf_floor: f64,
    /// Componentwise clamp of output pixels, for previews. Ignored by the
    /// backward pass.
    pub clamp_max: Option<f64>,
    pub brdf_model: BrdfModel,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            spp: 64,
            seed: 0,
            pdf_floor: DEFAULT_PDF_FLOOR,
            clamp_max: None,
            brdf_model: BrdfModel::Ggx,
            exec: Execution::Parallel,
        }
    }
}

impl RenderConfig {
    pub fn new(spp: usize, seed: u64) -> Self {
        Self {
            spp,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        if self.spp == 0 {
            return Err(RenderError::ZeroSpp);
        }
        if !(self.pdf_floor >= 0.0 && self.pdf_floor.is_finite()) {
            return Err(RenderError::PdfFloor(self.pdf_floor));
        }
        Ok(())
    }
}

/// Per-pixel adjoints of the rendered image plus the lighting-parameter
/// gradient when requested.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientImage {
    pub albedo: ImageBuffer,
    pub roughness: ImageBuffer,
    pub metallic: ImageBuffer,
    /// Projected onto the tangent plane of the stored normal.
    pub normal: ImageBuffer,
    pub light: Vec<f64>,
}

impl GradientImage {
    fn zeros(w: usize, h: usize, light: usize) -> Self {
        Self {
            albedo: ImageBuffer::new(w, h, 3),
            roughness: ImageBuffer::new(w, h, 1),
            metallic: ImageBuffer::new(w, h, 1),
            normal: ImageBuffer::new(w, h, 3),
            light: vec![0.0; light],
        }
    }

    pub fn is_finite(&self) -> bool {
        [&self.albedo, &self.roughness, &self.metallic, &self.normal]
            .iter()
            .all(|b| b.data().iter().all(|v| v.is_finite()))
            && self.light.iter().all(|v| v.is_finite())
    }
}

/// Geometry and material of one pixel.
struct PixelSetup {
    p: DVec3,
    n: DVec3,
    shading: Shading,
}

fn setup(g: &GBuffer, camera: &Camera, i: usize, model: BrdfModel) -> Option<PixelSetup> {
    if !g.is_surface(i) {
        return None;
    }
    let (x, y) = (i % g.width(), i / g.width());
    let p = camera.unproject_unchecked(Camera::pixel_center(x, y), g.depth(i));
    let v = -p.normalize();
    let n = g.normal(i);
    if n.dot(v) <= 0.0 {
        return None;
    }
    let params = BrdfParams::new(g.albedo(i), g.roughness(i), g.metallic(i)).with_model(model);
    Some(PixelSetup {
        p,
        n,
        shading: Shading::new(v, n, params),
    })
}

fn check_shape(g: &GBuffer, camera: &Camera) -> Result<(), RenderError> {
    if (g.width(), g.height()) != (camera.width, camera.height) {
        return Err(RenderError::Shape {
            gw: g.width(),
            gh: g.height(),
            cw: camera.width,
            ch: camera.height,
        });
    }
    Ok(())
}

fn non_finite(g: &GBuffer, i: usize, sample: usize, detail: String) -> RenderError {
    RenderError::NonFinite {
        x: i % g.width(),
        y: i / g.width(),
        sample,
        detail,
    }
}

fn assemble(w: usize, h: usize, pixels: Vec<Spectrum>, clamp_max: Option<f64>) -> ImageBuffer {
    let mut img = ImageBuffer::new(w, h, 3);
    for (i, s) in pixels.into_iter().enumerate() {
        let s = match clamp_max {
            Some(m) => s.map(|c| c.min(m)),
            None => s,
        };
        img.set_spectrum(i, s);
    }
    img
}

/// Monte Carlo estimate of the re-rendered image.
pub fn render_mc(
    g: &GBuffer,
    camera: &Camera,
    light: &dyn LightField,
    cfg: &RenderConfig,
) -> Result<ImageBuffer, RenderError> {
    render_mc_with_proposal(g, g, camera, light, cfg)
}

/// Monte Carlo estimate of `eval`'s image using directions and densities
/// drawn from `proposal`'s materials and normals. With equal buffers this
/// is [`render_mc`]; finite-difference checks perturb `eval` only, which is
/// the function whose derivative [`render_backward`] returns.
pub fn render_mc_with_proposal(
    eval: &GBuffer,
    proposal: &GBuffer,
    camera: &Camera,
    light: &dyn LightField,
    cfg: &RenderConfig,
) -> Result<ImageBuffer, RenderError> {
    cfg.validate()?;
    check_shape(eval, camera)?;
    check_shape(proposal, camera)?;
    let same = std::ptr::eq(eval, proposal);
    let pixels = try_map_range(cfg.exec, eval.pixel_count(), |i| {
        let Some(e) = setup(eval, camera, i, cfg.brdf_model) else {
            return Ok(Spectrum::ZERO);
        };
        let prop = if same {
            None
        } else {
            match setup(proposal, camera, i, cfg.brdf_model) {
                Some(s) => Some(s.shading),
                None => return Ok(Spectrum::ZERO),
            }
        };
        let sampler = prop.as_ref().unwrap_or(&e.shading);
        let mut acc = Spectrum::ZERO;
        for s in 0..cfg.spp {
            let mut rng = SamplerState::new(cfg.seed, i as u64, s as u64).rng();
            let bs = sampler.sample(&mut rng);
            if !bs.is_valid() {
                continue;
            }
            let d = bs.direction;
            let cos = e.n.dot(d);
            if cos <= 0.0 {
                continue;
            }
            let f = if same { bs.value } else { e.shading.eval(d) };
            let l = light.query(e.p, d, &mut rng).radiance;
            let c = f * l * (cos / bs.pdf.max(cfg.pdf_floor));
            if !c.is_finite() {
                return Err(non_finite(
                    eval,
                    i,
                    s,
                    format!("f = {f:?}, L = {l:?}, pdf = {}", bs.pdf),
                ));
            }
            acc += c;
        }
        Ok(acc / cfg.spp as f64)
    })?;
    Ok(assemble(camera.width, camera.height, pixels, cfg.clamp_max))
}

#[derive(Clone, Copy, Default)]
struct PixelGrad {
    albedo: Spectrum,
    roughness: f64,
    metallic: f64,
    normal: DVec3,
}

/// Adjoint of [`render_mc`] for the upstream image gradient `adjoint`,
/// with sampled directions and densities held fixed. Must use the same
/// configuration (seed, spp) as the forward call. The lighting gradient is
/// accumulated only when `light_grad` is set.
pub fn render_backward(
    g: &GBuffer,
    camera: &Camera,
    light: &dyn LightField,
    cfg: &RenderConfig,
    adjoint: &ImageBuffer,
    light_grad: bool,
) -> Result<GradientImage, RenderError> {
    cfg.validate()?;
    check_shape(g, camera)?;
    let (w, h) = (camera.width, camera.height);
    if adjoint.shape() != (w, h, 3) {
        return Err(RenderError::AdjointShape(w, h));
    }
    let light_len = if light_grad { light.grad_len() } else { 0 };
    let chunks = fold_chunks(cfg.exec, g.pixel_count(), BACKWARD_CHUNK, |range| {
        let mut light_acc = vec![0.0; light_len];
        let mut grads = Vec::with_capacity(range.len());
        for i in range {
            grads.push(pixel_backward(g, camera, light, cfg, adjoint, i, &mut light_acc)?);
        }
        Ok((grads, light_acc))
    });
    let mut out = GradientImage::zeros(w, h, light_len);
    let mut i = 0;
    for chunk in chunks {
        let (grads, acc) = chunk?;
        for pg in grads {
            let n = g.normal(i);
            out.albedo.set_spectrum(i, pg.albedo);
            out.roughness.data_mut()[i] = pg.roughness;
            out.metallic.data_mut()[i] = pg.metallic;
            let dn = pg.normal - n * pg.normal.dot(n) / n.length_squared().max(1e-300);
            out.normal.texel_mut(i).copy_from_slice(&dn.to_array());
            i += 1;
        }
        for (o, a) in out.light.iter_mut().zip(acc) {
            *o += a;
        }
    }
    if light_len > 0 {
        out.light = light.finish_grad(out.light);
    }
    if !out.is_finite() {
        return Err(RenderError::NonFinite {
            x: 0,
            y: 0,
            sample: 0,
            detail: "gradient image".into(),
        });
    }
    Ok(out)
}

fn pixel_backward(
    g: &GBuffer,
    camera: &Camera,
    light: &dyn LightField,
    cfg: &RenderConfig,
    adjoint: &ImageBuffer,
    i: usize,
    light_acc: &mut [f64],
) -> Result<PixelGrad, RenderError> {
    let mut pg = PixelGrad::default();
    let gi = adjoint.spectrum(i);
    if gi == Spectrum::ZERO {
        return Ok(pg);
    }
    let Some(e) = setup(g, camera, i, cfg.brdf_model) else {
        return Ok(pg);
    };
    for s in 0..cfg.spp {
        let mut rng = SamplerState::new(cfg.seed, i as u64, s as u64).rng();
        let bs = e.shading.sample(&mut rng);
        if !bs.is_valid() {
            continue;
        }
        let d = bs.direction;
        let cos = e.n.dot(d);
        if cos <= 0.0 {
            continue;
        }
        let q = 1.0 / (cfg.spp as f64 * bs.pdf.max(cfg.pdf_floor));
        let light_rng = rng.clone();
        let l = light.query(e.p, d, &mut rng).radiance;
        let adj = e.shading.eval_cos_backward(d, gi * l * q);
        pg.albedo += adj.albedo;
        pg.roughness += adj.roughness;
        pg.metallic += adj.metallic;
        pg.normal += adj.normal;
        if !light_acc.is_empty() {
            let mut light_rng = light_rng;
            light.query_backward(e.p, d, &mut light_rng, gi * bs.value * (cos * q), light_acc);
        }
    }
    let finite = pg.albedo.is_finite()
        && pg.roughness.is_finite()
        && pg.metallic.is_finite()
        && pg.normal.is_finite();
    if !finite {
        return Err(non_finite(g, i, cfg.spp, "pixel adjoint".into()));
    }
    Ok(pg)
}

/// Deterministic cosine-weighted quadrature: `n_theta x n_phi` cell
/// centres of the cosine-warped hemisphere, fixed per pixel. Light queries
/// draw from a stream keyed by the cell index.
pub fn render_discretized(
    g: &GBuffer,
    camera: &Camera,
    light: &dyn LightField,
    grid: (usize, usize),
    cfg: &RenderConfig,
) -> Result<ImageBuffer, RenderError> {
    let (nt, np) = grid;
    if nt < 2 || np < 4 {
        return Err(RenderError::Grid(nt, np));
    }
    check_shape(g, camera)?;
    let cells = nt * np;
    let pixels = try_map_range(cfg.exec, g.pixel_count(), |i| {
        let Some(e) = setup(g, camera, i, cfg.brdf_model) else {
            return Ok(Spectrum::ZERO);
        };
        let mut acc = Spectrum::ZERO;
        for it in 0..nt {
            for ip in 0..np {
                let u1 = (it as f64 + 0.5) / nt as f64;
                let u2 = (ip as f64 + 0.5) / np as f64;
                let d = e.shading.diffuse_direction(u1, u2);
                let mut rng = SamplerState::new(cfg.seed, i as u64, (it * np + ip) as u64).rng();
                let l = light.query(e.p, d, &mut rng).radiance;
                // f L cos / (cos / pi)
                acc += e.shading.eval(d) * l * std::f64::consts::PI;
            }
        }
        let out = acc / cells as f64;
        if !out.is_finite() {
            return Err(non_finite(g, i, cells, format!("{out:?}")));
        }
        Ok(out)
    })?;
    Ok(assemble(camera.width, camera.height, pixels, cfg.clamp_max))
}

/// High-resolution deterministic reference: the diffuse term integrated on a
/// `res x res` cosine-warped grid plus the specular term on a `res x res`
/// grid of half-vectors warped by `D(h)(n.h)`, `2 res^2` light queries per
/// pixel in total. Each lobe reads one random stream per pixel.
pub fn render_reference(
    g: &GBuffer,
    camera: &Camera,
    light: &dyn LightField,
    res: usize,
    cfg: &RenderConfig,
) -> Result<ImageBuffer, RenderError> {
    if res < 2 {
        return Err(RenderError::Grid(res, res));
    }
    check_shape(g, camera)?;
    let pixels = try_map_range(cfg.exec, g.pixel_count(), |i| {
        let Some(e) = setup(g, camera, i, cfg.brdf_model) else {
            return Ok(Spectrum::ZERO);
        };
        let out = reference_pixel(&e, light, res, cfg.seed, i as u64);
        if !out.is_finite() {
            return Err(non_finite(g, i, 0, format!("{out:?}")));
        }
        Ok(out)
    })?;
    Ok(assemble(camera.width, camera.height, pixels, cfg.clamp_max))
}

fn reference_pixel(e: &PixelSetup, light: &dyn LightField, res: usize, seed: u64, pixel: u64) -> Spectrum {
    let sh = &e.shading;
    let cells = (res * res) as f64;
    let diffuse = sh.eval_diffuse();
    let mut diff_acc = Spectrum::ZERO;
    let mut spec_acc = Spectrum::ZERO;
    let has_specular = sh.params.model == BrdfModel::Ggx;
    let mut diff_rng = SamplerState::new(seed, pixel, 0).rng();
    let mut spec_rng = SamplerState::new(seed, pixel, 1 << 63).rng();
    for a in 0..res {
        for b in 0..res {
            let u1 = (a as f64 + 0.5) / res as f64;
            let u2 = (b as f64 + 0.5) / res as f64;
            if diffuse != Spectrum::ZERO {
                let d = sh.diffuse_direction(u1, u2);
                diff_acc += light.query(e.p, d, &mut diff_rng).radiance;
            }
            if has_specular {
                let h = sh.half_vector(u1, u2);
                let vh = sh.v.dot(h);
                if vh <= 0.0 {
                    continue;
                }
                let d = (2.0 * vh * h - sh.v).normalize();
                let nd = e.n.dot(d);
                if nd <= 0.0 {
                    continue;
                }
                let pdf = sh.reflection_pdf(d);
                if pdf <= 0.0 {
                    continue;
                }
                let l = light.query(e.p, d, &mut spec_rng).radiance;
                spec_acc += sh.eval_specular(d) * l * (nd / pdf);
            }
        }
    }
    diffuse * std::f64::consts::PI * diff_acc / cells + spec_acc / cells
}
