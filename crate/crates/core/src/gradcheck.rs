//! Finite-difference checks of [`render_backward`] on a small patch.
//!
//! The forward side is [`render_mc_with_proposal`] with the proposal frozen
//! at the unperturbed G-buffer and the same seed on both sides, so the
//! difference quotient converges to exactly the derivative the adjoint
//! computes.

use std::fmt;

use glam::DVec3;
use serde::Serialize;

use crate::camera::Camera;
use crate::gbuffer::GBuffer;
use crate::image::ImageBuffer;
use crate::inverse::ParamSet;
use crate::lighting::{LightError, LightField};
use crate::render::{render_backward, render_mc_with_proposal, RenderConfig, RenderError};
use crate::sampler::SampleRng;

pub const DEFAULT_PATCH: usize = 8;
pub const DEFAULT_EPS: f64 = 1e-5;
/// Lower bound of the relative-error denominator.
pub const ABS_FLOOR: f64 = 1e-6;
/// Lighting parameters checked at most, evenly spaced.
pub const MAX_LIGHT_PARAMS: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum GradCheckError {
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Light(#[from] LightError),
    #[error("patch {size}x{size} at ({x}, {y}) does not fit a {w}x{h} image")]
    Patch {
        x: usize,
        y: usize,
        size: usize,
        w: usize,
        h: usize,
    },
}

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Top-left corner; `None` centres the patch.
    pub origin: Option<(usize, usize)>,
    pub size: usize,
    pub params: ParamSet,
    pub render: RenderConfig,
    pub eps: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            origin: None,
            size: DEFAULT_PATCH,
            params: ParamSet {
                albedo: true,
                roughness: true,
                metallic: true,
                normal: true,
                light: false,
            },
            render: RenderConfig::new(64, 0),
            eps: DEFAULT_EPS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckRow {
    pub param: &'static str,
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_adjoint: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub rows: Vec<GradCheckRow>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.rows.iter().map(|r| r.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.rows.iter().all(|r| r.max_rel_error <= tol)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rows {
            writeln!(
                f,
                "{:<9} n={:<5} max_rel_err={:.3e} max|grad|={:.3e}",
                r.param, r.checked, r.max_rel_error, r.max_abs_adjoint
            )?;
        }
        Ok(())
    }
}

pub fn rel_error(fd: f64, adjoint: f64) -> f64 {
    (fd - adjoint).abs() / fd.abs().max(adjoint.abs()).max(ABS_FLOOR)
}

fn weighted(img: &ImageBuffer, w: &ImageBuffer) -> f64 {
    img.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

struct Row {
    param: &'static str,
    checked: usize,
    err: f64,
    max_ad: f64,
}

impl Row {
    fn new(param: &'static str) -> Self {
        Self {
            param,
            checked: 0,
            err: 0.0,
            max_ad: 0.0,
        }
    }

    fn push(&mut self, fd: f64, ad: f64) {
        self.checked += 1;
        self.err = self.err.max(rel_error(fd, ad));
        self.max_ad = self.max_ad.max(ad.abs());
    }

    fn finish(self) -> GradCheckRow {
        GradCheckRow {
            param: self.param,
            checked: self.checked,
            max_rel_error: self.err,
            max_abs_adjoint: self.max_ad,
        }
    }
}

/// Orthonormal tangents of `n`.
fn tangents(n: DVec3) -> [DVec3; 2] {
    let n = n.normalize();
    let t = n.any_orthonormal_vector();
    [t, n.cross(t)]
}

/// Compares adjoint and central differences of `sum(w * image)` for every
/// selected parameter class on a `size`x`size` patch, with fixed weights
/// `w` drawn from the render seed.
pub fn gradcheck(
    g: &GBuffer,
    camera: &Camera,
    light: &mut dyn LightField,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport, GradCheckError> {
    let s = cfg.size;
    let (w, h) = (g.width(), g.height());
    let (x0, y0) = cfg
        .origin
        .unwrap_or((w.saturating_sub(s) / 2, h.saturating_sub(s) / 2));
    if s == 0 || x0 + s > w || y0 + s > h {
        return Err(GradCheckError::Patch {
            x: x0,
            y: y0,
            size: s,
            w,
            h,
        });
    }
    let g = g.crop(x0, y0, s, s);
    let cam = camera.crop(x0, y0, s, s);
    let rc = cfg.render;
    let mut wrng = SampleRng::from_seed(rc.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut weights = ImageBuffer::new(s, s, 3);
    for v in weights.data_mut() {
        *v = 0.5 + wrng.uniform();
    }
    let grad = render_backward(&g, &cam, light, &rc, &weights, cfg.params.light)?;
    let eps = cfg.eps;

    let loss_of = |eval: &GBuffer, light: &dyn LightField| -> Result<f64, GradCheckError> {
        Ok(weighted(&render_mc_with_proposal(eval, &g, &cam, light, &rc)?, &weights))
    };
    let at = |edit: &dyn Fn(&mut GBuffer, f64), light: &dyn LightField, e: f64| -> Result<f64, GradCheckError> {
        let mut b = g.clone();
        edit(&mut b, e);
        loss_of(&b, light)
    };
    let central = |edit: &dyn Fn(&mut GBuffer, f64), light: &dyn LightField| -> Result<f64, GradCheckError> {
        Ok((at(edit, light, eps)? - at(edit, light, -eps)?) / (2.0 * eps))
    };
    // Values in [0, 1] are clamped by the renderer; next to a bound the
    // difference is taken one-sided into the interior, second order.
    let bounded = |edit: &dyn Fn(&mut GBuffer, f64), light: &dyn LightField, v: f64| -> Result<f64, GradCheckError> {
        let side = if v - eps < 0.0 {
            1.0
        } else if v + eps > 1.0 {
            -1.0
        } else {
            return central(edit, light);
        };
        let h = side * eps;
        let f0 = at(edit, light, 0.0)?;
        Ok((4.0 * at(edit, light, h)? - at(edit, light, 2.0 * h)? - 3.0 * f0) / (2.0 * h))
    };

    let mut rows = Vec::new();
    let surface: Vec<usize> = (0..s * s).filter(|&i| g.is_surface(i)).collect();
    if cfg.params.albedo {
        let mut row = Row::new("albedo");
        for &i in &surface {
            for c in 0..3 {
                let fd = bounded(&|b, e| b.albedo.texel_mut(i)[c] += e, &*light, g.albedo.texel(i)[c])?;
                row.push(fd, grad.albedo.texel(i)[c]);
            }
        }
        rows.push(row.finish());
    }
    if cfg.params.roughness {
        let mut row = Row::new("roughness");
        for &i in &surface {
            let fd = bounded(&|b, e| b.roughness.data_mut()[i] += e, &*light, g.roughness.data()[i])?;
            row.push(fd, grad.roughness.data()[i]);
        }
        rows.push(row.finish());
    }
    if cfg.params.metallic {
        let mut row = Row::new("metallic");
        for &i in &surface {
            let fd = bounded(&|b, e| b.metallic.data_mut()[i] += e, &*light, g.metallic.data()[i])?;
            row.push(fd, grad.metallic.data()[i]);
        }
        rows.push(row.finish());
    }
    if cfg.params.normal {
        let mut row = Row::new("normal");
        for &i in &surface {
            let n = g.normal(i);
            let dn = DVec3::from_slice(grad.normal.texel(i));
            for t in tangents(n) {
                let fd = central(&|b, e| b.set_normal(i, n + e * t), &*light)?;
                row.push(fd, dn.dot(t));
            }
        }
        rows.push(row.finish());
    }
    if cfg.params.light {
        let mut row = Row::new("light");
        let base = light.params();
        let n = base.len();
        let stride = n.div_ceil(MAX_LIGHT_PARAMS).max(1);
        let result = (|| {
            for k in (0..n).step_by(stride) {
                let mut p = base.clone();
                p[k] = base[k] + eps;
                light.set_params(&p)?;
                let lp = loss_of(&g, &*light)?;
                p[k] = base[k] - eps;
                light.set_params(&p)?;
                let lm = loss_of(&g, &*light)?;
                row.push((lp - lm) / (2.0 * eps), grad.light[k]);
            }
            Ok::<(), GradCheckError>(())
        })();
        light.set_params(&base)?;
        result?;
        rows.push(row.finish());
    }
    Ok(GradCheckReport { rows })
}
