//! GGX microfacet BRDF in the metallic-roughness parameterisation.
//!
//! `f_r = (1 - M) A / pi + D(h) F(v.h) G(v, d) / (4 (n.v)(n.d))` with
//! `F0 = lerp(0.04, A, M)` and `alpha = max(R, 0.01)^2`. Fresnel is Schlick's
//! with the grazing value `F90 = min(1, 50 lum(F0))`, so a black metal
//! reflects nothing.
//!
//! Sampling picks the diffuse lobe (cosine-weighted) or the specular lobe
//! (half-vector drawn from `D(h)(n.h)` and reflected). Reflected directions
//! that fall below the surface are rejected and redrawn; the specular lobe
//! density is divided by the probability of drawing a valid direction, so
//! the mixture pdf integrates to one over the upper hemisphere.

use std::f64::consts::{FRAC_1_PI, PI};

use glam::DVec3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sampler::SampleRng;
use crate::spectrum::Spectrum;

pub const MIN_ROUGHNESS: f64 = 0.01;
pub const DIELECTRIC_F0: f64 = 0.04;
/// Tolerance on the length of direction arguments to the checked entry points.
pub const UNIT_TOLERANCE: f64 = 1e-3;
/// Redraws of the specular lobe before a sample is reported invalid.
const MAX_SPECULAR_TRIES: usize = 64;
/// Midpoint nodes used to integrate the valid-reflection probability.
const VALID_FRACTION_NODES: usize = 2048;
const F90_SCALE: f64 = 50.0;

#[derive(Debug, Error, PartialEq)]
pub enum BrdfError {
    #[error("{name} is not unit length (|{name}| = {length})")]
    NotUnit { name: &'static str, length: f64 },
    #[error("view direction is below the surface (v.n = {0})")]
    ViewBelowSurface(f64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrdfModel {
    /// Diffuse plus GGX specular.
    #[default]
    Ggx,
    /// Diffuse term only; the specular lobe has zero weight.
    Lambertian,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BrdfParams {
    pub albedo: Spectrum,
    pub roughness: f64,
    pub metallic: f64,
    pub model: BrdfModel,
}

impl BrdfParams {
    /// Parameters clamped to `[0, 1]`.
    pub fn new(albedo: Spectrum, roughness: f64, metallic: f64) -> Self {
        Self {
            albedo: albedo.clamp(0.0, 1.0),
            roughness: roughness.clamp(0.0, 1.0),
            metallic: metallic.clamp(0.0, 1.0),
            model: BrdfModel::Ggx,
        }
    }

    pub fn lambertian(albedo: Spectrum) -> Self {
        Self {
            model: BrdfModel::Lambertian,
            ..Self::new(albedo, 1.0, 0.0)
        }
    }

    pub fn with_model(mut self, model: BrdfModel) -> Self {
        self.model = model;
        self
    }

    /// GGX width.
    pub fn alpha(&self) -> f64 {
        let r = self.roughness.max(MIN_ROUGHNESS);
        r * r
    }

    pub fn f0(&self) -> Spectrum {
        Spectrum::splat(DIELECTRIC_F0).lerp(self.albedo, self.metallic)
    }

    /// Grazing-angle reflectance.
    pub fn f90(&self) -> f64 {
        (F90_SCALE * self.f0().luminance()).min(1.0)
    }

    /// Probability of choosing the specular lobe.
    pub fn specular_weight(&self) -> f64 {
        match self.model {
            BrdfModel::Lambertian => 0.0,
            BrdfModel::Ggx => {
                let spec = DIELECTRIC_F0 + (1.0 - DIELECTRIC_F0) * self.metallic;
                let diff = (1.0 - self.metallic) * self.albedo.luminance().max(0.0);
                spec / (spec + diff)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lobe {
    Diffuse,
    Specular,
}

/// An importance-sampled incident direction. `pdf == 0` marks an invalid
/// sample that the caller should skip.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BrdfSample {
    pub direction: DVec3,
    pub pdf: f64,
    pub value: Spectrum,
    pub lobe: Lobe,
}

impl BrdfSample {
    pub fn is_valid(&self) -> bool {
        self.pdf > 0.0
    }
}

/// Vector-Jacobian product of `f_r(d) * max(n.d, 0)` with respect to the
/// material parameters and the (unnormalised) normal.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BrdfAdjoint {
    pub albedo: Spectrum,
    pub roughness: f64,
    pub metallic: f64,
    pub normal: DVec3,
}

#[inline]
fn ggx_d(nh: f64, a2: f64) -> f64 {
    let q = nh * nh * (a2 - 1.0) + 1.0;
    a2 / (PI * q * q)
}

#[inline]
fn smith_g1(x: f64, a2: f64) -> f64 {
    let s = (a2 + (1.0 - a2) * x * x).sqrt();
    2.0 * x / (x + s)
}

#[inline]
fn schlick_weight(vh: f64) -> f64 {
    let m = (1.0 - vh).clamp(0.0, 1.0);
    let m2 = m * m;
    m2 * m2 * m
}

/// Probability that a half-vector drawn from `D(h)(n.h)` reflects a view
/// direction with `n.v = cos_v` into the upper hemisphere.
pub fn specular_valid_fraction(cos_v: f64, alpha: f64) -> f64 {
    let cv = cos_v.clamp(0.0, 1.0);
    let sv = (1.0 - cv * cv).max(0.0).sqrt();
    let a2 = alpha * alpha;
    let k = VALID_FRACTION_NODES;
    let mut acc = 0.0;
    for i in 0..k {
        let xi = (i as f64 + 0.5) / k as f64;
        let ch2 = (1.0 - xi) / (1.0 + (a2 - 1.0) * xi);
        let ch = ch2.sqrt();
        let sh = (1.0 - ch2).max(0.0).sqrt();
        // n.d = 2 (v.h)(n.h) - n.v > 0  <=>  sv sh cos(phi) > cv (1/(2ch) - ch)
        let rhs = cv * (0.5 / ch - ch);
        let denom = sv * sh;
        let frac = if denom <= 1e-300 {
            if rhs < 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            let c = rhs / denom;
            if c <= -1.0 {
                1.0
            } else if c >= 1.0 {
                0.0
            } else {
                c.acos() * FRAC_1_PI
            }
        };
        acc += frac;
    }
    acc / k as f64
}

/// BRDF prepared for one shading point: fixed view direction, normal and
/// material. All per-direction queries go through this.
#[derive(Clone, Copy, Debug)]
pub struct Shading {
    pub v: DVec3,
    pub n: DVec3,
    pub params: BrdfParams,
    tangent: DVec3,
    bitangent: DVec3,
    nv: f64,
    a2: f64,
    spec_weight: f64,
    /// Probability that the specular lobe produces an upper-hemisphere direction.
    spec_valid: f64,
}

impl Shading {
    /// Assumes unit `v` and `n` with `v.n > 0`; see [`eval`] for a checked
    /// entry point.
    pub fn new(v: DVec3, n: DVec3, params: BrdfParams) -> Self {
        let (tangent, bitangent) = n.any_orthonormal_pair();
        let alpha = params.alpha();
        let nv = n.dot(v);
        let spec_weight = params.specular_weight();
        let spec_valid = if spec_weight > 0.0 {
            specular_valid_fraction(nv, alpha)
        } else {
            1.0
        };
        Self {
            v,
            n,
            params,
            tangent,
            bitangent,
            nv,
            a2: alpha * alpha,
            spec_weight,
            spec_valid,
        }
    }

    pub fn specular_weight(&self) -> f64 {
        self.spec_weight
    }

    pub fn specular_valid_fraction(&self) -> f64 {
        self.spec_valid
    }

    #[inline]
    fn to_world(&self, l: DVec3) -> DVec3 {
        self.tangent * l.x + self.bitangent * l.y + self.n * l.z
    }

    /// `f_r(v, d)`; zero below the surface.
    pub fn eval(&self, d: DVec3) -> Spectrum {
        if self.n.dot(d) <= 0.0 || self.nv <= 0.0 {
            return Spectrum::ZERO;
        }
        self.eval_diffuse() + self.eval_specular(d)
    }

    /// The direction-independent diffuse term `(1 - M) A / pi`.
    pub fn eval_diffuse(&self) -> Spectrum {
        self.params.albedo * ((1.0 - self.params.metallic) * FRAC_1_PI)
    }

    /// Microfacet term of `f_r`; zero below the surface or for the
    /// Lambertian model.
    pub fn eval_specular(&self, d: DVec3) -> Spectrum {
        let nd = self.n.dot(d);
        if nd <= 0.0 || self.nv <= 0.0 || self.params.model == BrdfModel::Lambertian {
            return Spectrum::ZERO;
        }
        let p = &self.params;
        let h = (self.v + d).normalize();
        let nh = self.n.dot(h);
        let vh = self.v.dot(h).max(0.0);
        let dd = ggx_d(nh, self.a2);
        let g = smith_g1(self.nv, self.a2) * smith_g1(nd, self.a2);
        let w = schlick_weight(vh);
        let f90 = p.f90();
        let fresnel = p.f0().map(|f0| f0 * (1.0 - w) + f90 * w);
        fresnel * (dd * g / (4.0 * self.nv * nd))
    }

    /// Mixture density of [`Shading::sample`] in solid angle.
    pub fn pdf(&self, d: DVec3) -> f64 {
        let nd = self.n.dot(d);
        if nd <= 0.0 {
            return 0.0;
        }
        let diffuse = (1.0 - self.spec_weight) * nd * FRAC_1_PI;
        if self.spec_weight == 0.0 {
            return diffuse;
        }
        let h = (self.v + d).normalize();
        let nh = self.n.dot(h);
        let vh = self.v.dot(h);
        if nh <= 0.0 || vh <= 0.0 {
            return diffuse;
        }
        let spec = ggx_d(nh, self.a2) * nh / (4.0 * vh) / self.spec_valid;
        diffuse + self.spec_weight * spec
    }

    /// Density of `reflect(-v, h)` with `h` drawn from `D(h)(n.h)`, before
    /// rejecting directions below the surface.
    pub fn reflection_pdf(&self, d: DVec3) -> f64 {
        let h = (self.v + d).normalize();
        let nh = self.n.dot(h);
        let vh = self.v.dot(h);
        if nh <= 0.0 || vh <= 0.0 {
            return 0.0;
        }
        ggx_d(nh, self.a2) * nh / (4.0 * vh)
    }

    /// Draw an incident direction.
    pub fn sample(&self, rng: &mut SampleRng) -> BrdfSample {
        let choose = rng.uniform();
        let (direction, lobe) = if choose < self.spec_weight {
            (self.sample_specular(rng), Lobe::Specular)
        } else {
            (Some(self.sample_diffuse(rng)), Lobe::Diffuse)
        };
        match direction {
            Some(d) if self.n.dot(d) > 0.0 => BrdfSample {
                direction: d,
                pdf: self.pdf(d),
                value: self.eval(d),
                lobe,
            },
            other => BrdfSample {
                direction: other.unwrap_or(self.n),
                pdf: 0.0,
                value: Spectrum::ZERO,
                lobe,
            },
        }
    }

    /// Cosine-weighted hemisphere warp of the unit square.
    pub fn diffuse_direction(&self, u1: f64, u2: f64) -> DVec3 {
        let r = u1.sqrt();
        let phi = 2.0 * PI * u2;
        let z = (1.0 - u1).max(0.0).sqrt();
        self.to_world(DVec3::new(r * phi.cos(), r * phi.sin(), z))
    }

    /// Half-vector warp with density `D(h)(n.h)`.
    pub fn half_vector(&self, u1: f64, u2: f64) -> DVec3 {
        let ch2 = (1.0 - u1) / (1.0 + (self.a2 - 1.0) * u1);
        let ch = ch2.sqrt();
        let sh = (1.0 - ch2).max(0.0).sqrt();
        let phi = 2.0 * PI * u2;
        self.to_world(DVec3::new(sh * phi.cos(), sh * phi.sin(), ch))
    }

    fn sample_diffuse(&self, rng: &mut SampleRng) -> DVec3 {
        let (u1, u2) = rng.uniform2();
        self.diffuse_direction(u1, u2)
    }

    fn sample_specular(&self, rng: &mut SampleRng) -> Option<DVec3> {
        for _ in 0..MAX_SPECULAR_TRIES {
            let (u1, u2) = rng.uniform2();
            let h = self.half_vector(u1, u2);
            let vh = self.v.dot(h);
            if vh <= 0.0 {
                continue;
            }
            let d = 2.0 * vh * h - self.v;
            if self.n.dot(d) > 0.0 {
                return Some(d.normalize());
            }
        }
        None
    }

    /// Adjoint of `f_r(d) * max(n.d, 0)` for the upstream weights `g`.
    ///
    /// The normal gradient is with respect to the raw vector (no
    /// renormalisation); callers project it onto the tangent plane.
    pub fn eval_cos_backward(&self, d: DVec3, g: Spectrum) -> BrdfAdjoint {
        let nd = self.n.dot(d);
        if nd <= 0.0 || self.nv <= 0.0 {
            return BrdfAdjoint::default();
        }
        let p = &self.params;
        let m = p.metallic;
        let a = p.albedo;
        let mut adj = BrdfAdjoint {
            albedo: g * ((1.0 - m) * nd * FRAC_1_PI),
            roughness: 0.0,
            metallic: -g.dot(a) * nd * FRAC_1_PI,
            normal: d * (g.dot(a) * (1.0 - m) * FRAC_1_PI),
        };
        if p.model == BrdfModel::Lambertian {
            return adj;
        }

        let a2 = self.a2;
        let nv = self.nv;
        let h = (self.v + d).normalize();
        let nh = self.n.dot(h);
        let vh = self.v.dot(h).max(0.0);
        let w = schlick_weight(vh);
        let f90 = p.f90();
        let fresnel = p.f0().map(|f0| f0 * (1.0 - w) + f90 * w);

        let q = nh * nh * (a2 - 1.0) + 1.0;
        let dd = a2 / (PI * q * q);
        let dd_a2 = (q - 2.0 * a2 * nh * nh) / (PI * q * q * q);
        let dd_nh = -4.0 * a2 * nh * (a2 - 1.0) / (PI * q * q * q);

        let g1 = |x: f64| {
            let s = (a2 + (1.0 - a2) * x * x).sqrt();
            let xs = x + s;
            (
                2.0 * x / xs,
                2.0 * a2 / (s * xs * xs),
                -x * (1.0 - x * x) / (s * xs * xs),
            )
        };
        let (gv, gv_x, gv_a2) = g1(nv);
        let (gd, gd_x, gd_a2) = g1(nd);

        // K = D G1(n.v) G1(n.d) / (4 n.v), the specular factor of f_r cos
        let k = dd * gv * gd / (4.0 * nv);
        let k_nv = dd * gd * (gv_x * nv - gv) / (4.0 * nv * nv);
        let k_nd = dd * gv * gd_x / (4.0 * nv);
        let k_nh = dd_nh * gv * gd / (4.0 * nv);
        let k_a2 = (dd_a2 * gv * gd + dd * (gv_a2 * gd + gv * gd_a2)) / (4.0 * nv);

        let gf = g.dot(fresnel);
        adj.albedo += g * (m * (1.0 - w) * k);
        adj.metallic += g.dot(a.map(|c| c - DIELECTRIC_F0)) * (1.0 - w) * k;
        if f90 < 1.0 {
            let g90 = (g.r + g.g + g.b) * w * k * F90_SCALE;
            adj.albedo += Spectrum::LUMINANCE * (g90 * m);
            adj.metallic += g90 * (a.luminance() - DIELECTRIC_F0);
        }
        if p.roughness > MIN_ROUGHNESS {
            let r = p.roughness;
            adj.roughness = gf * k_a2 * 4.0 * r * r * r;
        }
        adj.normal += (self.v * k_nv + d * k_nd + h * k_nh) * gf;
        adj
    }
}

fn check_unit(name: &'static str, x: DVec3) -> Result<(), BrdfError> {
    let length = x.length();
    if (length - 1.0).abs() > UNIT_TOLERANCE || !length.is_finite() {
        return Err(BrdfError::NotUnit { name, length });
    }
    Ok(())
}

fn checked_shading(v: DVec3, n: DVec3, params: &BrdfParams) -> Result<Shading, BrdfError> {
    check_unit("v", v)?;
    check_unit("n", n)?;
    let nv = v.dot(n);
    if nv <= 0.0 {
        return Err(BrdfError::ViewBelowSurface(nv));
    }
    Ok(Shading::new(v, n, *params))
}

/// Checked `f_r(v, d)`. Prefer [`Shading`] when querying many directions.
pub fn eval(v: DVec3, d: DVec3, n: DVec3, params: &BrdfParams) -> Result<Spectrum, BrdfError> {
    check_unit("d", d)?;
    Ok(checked_shading(v, n, params)?.eval(d))
}

/// Checked importance sample.
pub fn sample(
    v: DVec3,
    n: DVec3,
    params: &BrdfParams,
    rng: &mut SampleRng,
) -> Result<BrdfSample, BrdfError> {
    Ok(checked_shading(v, n, params)?.sample(rng))
}

/// Checked mixture pdf.
pub fn pdf(v: DVec3, d: DVec3, n: DVec3, params: &BrdfParams) -> Result<f64, BrdfError> {
    check_unit("d", d)?;
    Ok(checked_shading(v, n, params)?.pdf(d))
}
