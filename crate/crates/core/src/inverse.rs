//! Losses and analysis-by-synthesis optimisation of materials and lighting
//! through the render layer.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use glam::DVec3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::Camera;
use crate::gbuffer::GBuffer;
use crate::image::{ImageBuffer, ImageError};
use crate::lighting::{LightError, LightField};
use crate::render::{render_backward, render_mc, RenderConfig, RenderError};
use crate::spectrum::Spectrum;

#[derive(Debug, Error)]
pub enum InverseError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("HDR loss needs non-negative inputs, got {0} at sample {1}")]
    NegativeRadiance(f64, usize),
    #[error("HDR loss batches differ in length ({0} vs {1})")]
    BatchLength(usize, usize),
    #[error("unknown parameter class {0:?} (expected a, r, m, n or light)")]
    UnknownParam(String),
    #[error("no parameters selected")]
    NoParams,
    #[error("non-finite loss {loss} at iteration {iteration}")]
    NonFiniteLoss { iteration: usize, loss: f64 },
    #[error("render failed at iteration {iteration}: {source}")]
    Render {
        iteration: usize,
        source: RenderError,
    },
    #[error(transparent)]
    Light(#[from] LightError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mean squared error over all pixels and channels and its gradient with
/// respect to `pred`.
pub fn loss_rerender(
    pred: &ImageBuffer,
    target: &ImageBuffer,
) -> Result<(f64, ImageBuffer), InverseError> {
    pred.ensure_same_shape(target)?;
    let n = pred.data().len() as f64;
    let mut adj = ImageBuffer::new(pred.width(), pred.height(), pred.channels());
    let mut loss = 0.0;
    for ((a, p), t) in adj.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let r = p - t;
        loss += r * r;
        *a = 2.0 * r / n;
    }
    Ok((loss / n, adj))
}

/// Mean over samples and channels of `(log(1 + pred) - log(1 + gt))^2`, with
/// the gradient with respect to `pred`.
pub fn loss_light_hdr(
    pred: &[Spectrum],
    gt: &[Spectrum],
) -> Result<(f64, Vec<Spectrum>), InverseError> {
    if pred.len() != gt.len() {
        return Err(InverseError::BatchLength(pred.len(), gt.len()));
    }
    for (k, s) in pred.iter().chain(gt).enumerate() {
        if let Some(v) = s.to_array().into_iter().find(|v| !(*v >= 0.0)) {
            return Err(InverseError::NegativeRadiance(v, k % pred.len().max(1)));
        }
    }
    let n = (3 * pred.len()) as f64;
    let mut loss = 0.0;
    let adj = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            let r = p.map(f64::ln_1p) - g.map(f64::ln_1p);
            loss += r.dot(r);
            r.zip(*p, |ri, pi| 2.0 * ri / ((1.0 + pi) * n))
        })
        .collect();
    Ok((loss / n, adj))
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// Which parameter classes to optimise.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSet {
    pub albedo: bool,
    pub roughness: bool,
    pub metallic: bool,
    pub normal: bool,
    pub light: bool,
}

impl ParamSet {
    pub fn is_empty(&self) -> bool {
        !(self.albedo || self.roughness || self.metallic || self.normal || self.light)
    }

    pub fn any_material(&self) -> bool {
        self.albedo || self.roughness || self.metallic || self.normal
    }
}

impl FromStr for ParamSet {
    type Err = InverseError;

    /// Comma-separated subset of `a`, `r`, `m`, `n`, `light`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut set = ParamSet::default();
        for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match tok {
                "a" | "albedo" => set.albedo = true,
                "r" | "roughness" => set.roughness = true,
                "m" | "metallic" => set.metallic = true,
                "n" | "normal" => set.normal = true,
                "light" => set.light = true,
                other => return Err(InverseError::UnknownParam(other.to_string())),
            }
        }
        if set.is_empty() {
            return Err(InverseError::NoParams);
        }
        Ok(set)
    }
}

impl fmt::Display for ParamSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [
            (self.albedo, "a"),
            (self.roughness, "r"),
            (self.metallic, "m"),
            (self.normal, "n"),
            (self.light, "light"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| *n)
        .collect();
        f.write_str(&names.join(","))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Weight of the re-rendering loss.
    pub lambda_r: f64,
    /// Weights of the material-network terms. Accepted for completeness;
    /// they have no effect here.
    pub lambda_a: f64,
    pub lambda_n: f64,
    pub lambda_m: f64,
    pub lambda_d: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    /// Multiplicative step-size decay per iteration.
    pub lr_decay: f64,
    pub params: ParamSet,
    /// Optimise one value per material class for the whole image instead
    /// of one per pixel.
    pub shared: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_r: 1.0,
            lambda_a: 0.0,
            lambda_n: 0.0,
            lambda_m: 0.0,
            lambda_d: 0.0,
            iterations: 200,
            learning_rate: 0.02,
            lr_decay: 1.0,
            params: ParamSet {
                albedo: true,
                ..ParamSet::default()
            },
            shared: false,
        }
    }
}

/// Loss and parameter summaries at one iterate. Summaries are means over
/// surface pixels (or over all lighting parameters).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub loss: f64,
    pub albedo: Option<f64>,
    pub roughness: Option<f64>,
    pub metallic: Option<f64>,
    pub light: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct OptimizeResult {
    pub gbuffer: GBuffer,
    pub light_params: Vec<f64>,
    /// One row per evaluated iterate: the initial point, then the point
    /// after each update.
    pub trace: Vec<TraceRow>,
}

impl OptimizeResult {
    pub fn initial_loss(&self) -> f64 {
        self.trace.first().map_or(f64::NAN, |r| r.loss)
    }

    pub fn final_loss(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.loss)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), InverseError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "loss", "albedo", "roughness", "metallic", "light"])
            .map_err(csv_io)?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.9e}")).unwrap_or_default();
        for r in &self.trace {
            w.write_record([
                r.iteration.to_string(),
                format!("{:.9e}", r.loss),
                opt(r.albedo),
                opt(r.roughness),
                opt(r.metallic),
                opt(r.light),
            ])
            .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> InverseError {
    InverseError::Io(std::io::Error::other(e))
}

/// Flat view of the selected parameters.
struct Layout {
    set: ParamSet,
    shared: bool,
    surface: Vec<usize>,
    light_len: usize,
}

impl Layout {
    fn slots(&self) -> usize {
        if self.shared {
            1
        } else {
            self.surface.len()
        }
    }

    fn len(&self) -> usize {
        let s = self.slots();
        let mut n = 0;
        if self.set.albedo {
            n += 3 * s;
        }
        if self.set.roughness {
            n += s;
        }
        if self.set.metallic {
            n += s;
        }
        if self.set.normal {
            n += 3 * s;
        }
        if self.set.light {
            n += self.light_len;
        }
        n
    }

    fn gather(&self, g: &GBuffer, light: &dyn LightField) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.len());
        // shared slots start from the mean over surface pixels
        let mean = |f: &dyn Fn(usize) -> Vec<f64>, k: usize| -> Vec<f64> {
            let mut acc = vec![0.0; k];
            for &i in &self.surface {
                for (a, v) in acc.iter_mut().zip(f(i)) {
                    *a += v;
                }
            }
            acc.iter().map(|a| a / self.surface.len().max(1) as f64).collect()
        };
        let mut push = |f: &dyn Fn(usize) -> Vec<f64>, k: usize| {
            if self.shared {
                x.extend(mean(f, k));
            } else {
                for &i in &self.surface {
                    x.extend(f(i));
                }
            }
        };
        if self.set.albedo {
            push(&|i| g.albedo(i).to_array().to_vec(), 3);
        }
        if self.set.roughness {
            push(&|i| vec![g.roughness(i)], 1);
        }
        if self.set.metallic {
            push(&|i| vec![g.metallic(i)], 1);
        }
        if self.set.normal {
            push(&|i| g.normal(i).to_array().to_vec(), 3);
        }
        if self.set.light {
            x.extend(light.params());
        }
        x
    }

    fn project(&self, x: &mut [f64], light: &dyn LightField) {
        let s = self.slots();
        let mut off = 0;
        if self.set.albedo {
            x[off..off + 3 * s].iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
            off += 3 * s;
        }
        for on in [self.set.roughness, self.set.metallic] {
            if on {
                x[off..off + s].iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
                off += s;
            }
        }
        if self.set.normal {
            for k in 0..s {
                let n = DVec3::from_slice(&x[off + 3 * k..off + 3 * k + 3]);
                let n = n.try_normalize().unwrap_or(DVec3::NEG_Z);
                x[off + 3 * k..off + 3 * k + 3].copy_from_slice(&n.to_array());
            }
            off += 3 * s;
        }
        if self.set.light {
            light.project_params(&mut x[off..off + self.light_len]);
        }
    }

    fn scatter(
        &self,
        x: &[f64],
        g: &mut GBuffer,
        light: &mut dyn LightField,
    ) -> Result<(), InverseError> {
        let s = self.slots();
        let slot = |k: usize| if self.shared { 0 } else { k };
        let mut off = 0;
        if self.set.albedo {
            for (k, &i) in self.surface.iter().enumerate() {
                let j = off + 3 * slot(k);
                g.albedo.texel_mut(i).copy_from_slice(&x[j..j + 3]);
            }
            off += 3 * s;
        }
        if self.set.roughness {
            for (k, &i) in self.surface.iter().enumerate() {
                g.roughness.data_mut()[i] = x[off + slot(k)];
            }
            off += s;
        }
        if self.set.metallic {
            for (k, &i) in self.surface.iter().enumerate() {
                g.metallic.data_mut()[i] = x[off + slot(k)];
            }
            off += s;
        }
        if self.set.normal {
            for (k, &i) in self.surface.iter().enumerate() {
                let j = off + 3 * slot(k);
                g.normal.texel_mut(i).copy_from_slice(&x[j..j + 3]);
            }
            off += 3 * s;
        }
        if self.set.light {
            light.set_params(&x[off..off + self.light_len])?;
        }
        Ok(())
    }

    fn gradient(&self, grad: &crate::render::GradientImage) -> Vec<f64> {
        let s = self.slots();
        let mut out = vec![0.0; self.len()];
        let slot = |k: usize| if self.shared { 0 } else { k };
        let mut off = 0;
        let mut add = |buf: &ImageBuffer, width: usize, off: usize| {
            for (k, &i) in self.surface.iter().enumerate() {
                for c in 0..width {
                    out[off + width * slot(k) + c] += buf.texel(i)[c];
                }
            }
        };
        if self.set.albedo {
            add(&grad.albedo, 3, off);
            off += 3 * s;
        }
        if self.set.roughness {
            add(&grad.roughness, 1, off);
            off += s;
        }
        if self.set.metallic {
            add(&grad.metallic, 1, off);
            off += s;
        }
        if self.set.normal {
            add(&grad.normal, 3, off);
            off += 3 * s;
        }
        if self.set.light {
            out[off..off + self.light_len].copy_from_slice(&grad.light);
        }
        out
    }

    fn summary(&self, g: &GBuffer, light: &dyn LightField, iteration: usize, loss: f64) -> TraceRow {
        let mean = |f: &dyn Fn(usize) -> f64| {
            self.surface.iter().map(|&i| f(i)).sum::<f64>() / self.surface.len().max(1) as f64
        };
        let lp = light.params();
        TraceRow {
            iteration,
            loss,
            albedo: self.set.albedo.then(|| mean(&|i| g.albedo(i).luminance())),
            roughness: self.set.roughness.then(|| mean(&|i| g.roughness(i))),
            metallic: self.set.metallic.then(|| mean(&|i| g.metallic(i))),
            light: (self.set.light && !lp.is_empty())
                .then(|| lp.iter().sum::<f64>() / lp.len() as f64),
        }
    }
}

/// Gradient descent on the re-rendering loss. The light field is updated in
/// place when lighting parameters are selected; the recovered G-buffer is
/// returned.
pub fn optimize(
    g: &GBuffer,
    camera: &Camera,
    light: &mut dyn LightField,
    target: &ImageBuffer,
    cfg: &LossConfig,
    render: &RenderConfig,
) -> Result<OptimizeResult, InverseError> {
    if cfg.params.is_empty() {
        return Err(InverseError::NoParams);
    }
    let layout = Layout {
        set: cfg.params,
        shared: cfg.shared,
        surface: (0..g.pixel_count()).filter(|&i| g.is_surface(i)).collect(),
        light_len: light.param_count(),
    };
    let mut gbuf = g.clone();
    let mut x = layout.gather(&gbuf, light);
    let mut adam = Adam::new(x.len());
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    let mut lr = cfg.learning_rate;

    let eval = |gbuf: &GBuffer, light: &dyn LightField, iteration: usize| {
        let pred = render_mc(gbuf, camera, light, render)
            .map_err(|source| InverseError::Render { iteration, source })?;
        let (loss, adj) = loss_rerender(&pred, target)?;
        let loss = cfg.lambda_r * loss;
        if !loss.is_finite() {
            return Err(InverseError::NonFiniteLoss { iteration, loss });
        }
        Ok((loss, adj))
    };

    for it in 0..cfg.iterations {
        let (loss, mut adj) = eval(&gbuf, light, it)?;
        trace.push(layout.summary(&gbuf, light, it, loss));
        log::debug!("iteration {it}: loss {loss:.6e}");
        adj.data_mut().iter_mut().for_each(|v| *v *= cfg.lambda_r);
        let grad = render_backward(&gbuf, camera, light, render, &adj, cfg.params.light)
            .map_err(|source| InverseError::Render {
                iteration: it,
                source,
            })?;
        let dx = layout.gradient(&grad);
        if lr != 0.0 {
            adam.step(&mut x, &dx, lr);
            layout.project(&mut x, light);
            layout.scatter(&x, &mut gbuf, light)?;
        }
        lr *= cfg.lr_decay;
    }
    let (loss, _) = eval(&gbuf, light, cfg.iterations)?;
    trace.push(layout.summary(&gbuf, light, cfg.iterations, loss));
    Ok(OptimizeResult {
        gbuffer: gbuf,
        light_params: light.params(),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brdf::BrdfModel;
    use crate::lighting::AnalyticLight;

    #[test]
    fn rerender_loss_examples() {
        let a = ImageBuffer::filled(1, 1, 3, 1.0);
        let z = ImageBuffer::new(1, 1, 3);
        let (l, adj) = loss_rerender(&a, &z).unwrap();
        assert_eq!(l, 1.0);
        for v in adj.data() {
            assert!((v - 2.0 / 3.0).abs() < 1e-15);
        }
        let (l, adj) = loss_rerender(&a, &a).unwrap();
        assert_eq!(l, 0.0);
        assert!(adj.data().iter().all(|&v| v == 0.0));
        let b = ImageBuffer::filled(1, 1, 3, 3.0);
        assert!((loss_rerender(&b, &z).unwrap().0 - 9.0).abs() < 1e-12);
        assert!(loss_rerender(&a, &ImageBuffer::new(2, 1, 3)).is_err());
    }

    #[test]
    fn hdr_loss_examples() {
        let e1 = std::f64::consts::E - 1.0;
        let (l, _) = loss_light_hdr(&[Spectrum::splat(e1)], &[Spectrum::ZERO]).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        let (l, _) = loss_light_hdr(&[Spectrum::ONE], &[Spectrum::ZERO]).unwrap();
        assert!((l - std::f64::consts::LN_2.powi(2)).abs() < 1e-12);
        assert!((l - 0.4805).abs() < 1e-4);
        let (l, _) = loss_light_hdr(&[Spectrum::splat(2.0)], &[Spectrum::ZERO]).unwrap();
        assert!((l - 0.4805).abs() > 0.1);
        let (l, _) = loss_light_hdr(&[Spectrum::splat(0.3)], &[Spectrum::splat(0.3)]).unwrap();
        assert_eq!(l, 0.0);
        assert!(loss_light_hdr(&[Spectrum::splat(-1.0)], &[Spectrum::ZERO]).is_err());
    }

    #[test]
    fn loss_adjoints_match_finite_differences() {
        let pred = ImageBuffer::from_fn(3, 2, 3, |x, y, c| (x + 2 * y + c) as f64 * 0.3);
        let target = ImageBuffer::from_fn(3, 2, 3, |x, y, c| ((x * y + c) % 3) as f64 * 0.5);
        let (_, adj) = loss_rerender(&pred, &target).unwrap();
        let eps = 1e-6;
        for k in 0..pred.data().len() {
            let mut hi = pred.clone();
            hi.data_mut()[k] += eps;
            let mut lo = pred.clone();
            lo.data_mut()[k] -= eps;
            let fd = (loss_rerender(&hi, &target).unwrap().0 - loss_rerender(&lo, &target).unwrap().0)
                / (2.0 * eps);
            assert!((fd - adj.data()[k]).abs() <= 1e-6 * fd.abs().max(1e-3));
        }
        let p = vec![Spectrum::new(0.2, 1.5, 4.0), Spectrum::new(0.05, 0.7, 2.0)];
        let t = vec![Spectrum::new(1.0, 0.5, 0.1), Spectrum::new(0.3, 0.3, 0.3)];
        let (_, adj) = loss_light_hdr(&p, &t).unwrap();
        for s in 0..2 {
            for c in 0..3 {
                let mut hi = p.clone();
                hi[s][c] += eps;
                let mut lo = p.clone();
                lo[s][c] -= eps;
                let fd = (loss_light_hdr(&hi, &t).unwrap().0 - loss_light_hdr(&lo, &t).unwrap().0)
                    / (2.0 * eps);
                assert!((fd - adj[s][c]).abs() <= 1e-6 * fd.abs().max(1e-2), "{fd} {}", adj[s][c]);
            }
        }
    }

    #[test]
    fn param_set_parsing() {
        let s: ParamSet = "a,r,light".parse().unwrap();
        assert!(s.albedo && s.roughness && s.light && !s.metallic && !s.normal);
        assert_eq!(s.to_string(), "a,r,light");
        assert!(matches!("a,x".parse::<ParamSet>(), Err(InverseError::UnknownParam(_))));
        assert!("".parse::<ParamSet>().is_err());
    }

    #[test]
    fn adam_minimises_a_quadratic() {
        let mut x = vec![3.0, -2.0];
        let mut opt = Adam::new(2);
        for _ in 0..2000 {
            let g = vec![2.0 * (x[0] - 1.0), 2.0 * (x[1] + 0.5)];
            opt.step(&mut x, &g, 0.01);
        }
        assert!((x[0] - 1.0).abs() < 1e-3 && (x[1] + 0.5).abs() < 1e-3);
    }

    fn lambertian_plane(albedo: f64) -> (GBuffer, Camera) {
        let (w, h) = (8, 8);
        let cam = Camera::new(8.0, 8.0, 4.0, 4.0, w, h).unwrap();
        let depth = ImageBuffer::filled(w, h, 1, 2.0);
        let normal = ImageBuffer::from_fn(w, h, 3, |_, _, c| if c == 2 { -1.0 } else { 0.0 });
        let g = GBuffer::uniform(depth, normal, Spectrum::splat(albedo), 1.0, 0.0).unwrap();
        (g, cam)
    }

    #[test]
    fn zero_iterations_and_zero_step_are_identity() {
        let (g, cam) = lambertian_plane(0.2);
        let (truth, _) = lambertian_plane(0.6);
        let rc = RenderConfig {
            brdf_model: BrdfModel::Lambertian,
            ..RenderConfig::new(4, 0)
        };
        let mut light = AnalyticLight::constant(1.0);
        let target = render_mc(&truth, &cam, &light, &rc).unwrap();
        for cfg in [
            LossConfig {
                iterations: 0,
                ..LossConfig::default()
            },
            LossConfig {
                iterations: 5,
                learning_rate: 0.0,
                ..LossConfig::default()
            },
        ] {
            let r = optimize(&g, &cam, &mut light, &target, &cfg, &rc).unwrap();
            assert_eq!(r.gbuffer, g);
            assert_eq!(r.trace.len(), cfg.iterations + 1);
        }
    }

    #[test]
    fn recovers_lambertian_albedo_per_pixel() {
        let (g, cam) = lambertian_plane(0.2);
        let (truth, _) = lambertian_plane(0.6);
        let rc = RenderConfig {
            brdf_model: BrdfModel::Lambertian,
            ..RenderConfig::new(4, 0)
        };
        let mut light = AnalyticLight::constant(1.0);
        let target = render_mc(&truth, &cam, &light, &rc).unwrap();
        let cfg = LossConfig::default();
        let r = optimize(&g, &cam, &mut light, &target, &cfg, &rc).unwrap();
        for i in 0..64 {
            assert!((r.gbuffer.albedo(i).g - 0.6).abs() < 0.02);
        }
        assert!(r.final_loss() < 0.01 * r.initial_loss());
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("iteration,loss,albedo"));
        assert_eq!(text.lines().count(), cfg.iterations + 2);
    }

    #[test]
    fn recovers_constant_light() {
        let (g, cam) = lambertian_plane(0.5);
        let rc = RenderConfig {
            brdf_model: BrdfModel::Lambertian,
            ..RenderConfig::new(4, 0)
        };
        let target = render_mc(&g, &cam, &AnalyticLight::constant(2.0), &rc).unwrap();
        let mut light = AnalyticLight::constant(0.5);
        let cfg = LossConfig {
            params: "light".parse().unwrap(),
            learning_rate: 0.05,
            ..LossConfig::default()
        };
        let r = optimize(&g, &cam, &mut light, &target, &cfg, &rc).unwrap();
        for v in r.light_params {
            assert!((v - 2.0).abs() < 0.02, "{v}");
        }
    }
}
