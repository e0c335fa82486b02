use std::f64::consts::PI;

use glam::DVec3;
use serde::{Deserialize, Serialize};

use super::{LightError, LightField, LightSample};
use crate::sampler::SampleRng;
use crate::spectrum::Spectrum;

/// World "up" in view space (+y points down the image).
pub const SKY_UP: DVec3 = DVec3::NEG_Y;

/// Closed-form light fields. Each is differentiable in its colours.
#[derive(Clone, Debug, PartialEq)]
pub enum AnalyticLight {
    Constant(Spectrum),
    /// `lerp(horizon, zenith, max(d . up, 0))`.
    Sky {
        zenith: Spectrum,
        horizon: Spectrum,
        up: DVec3,
    },
    /// Uniform ambient term plus a disk of half-angle `acos(cos_half_angle)`
    /// around `direction`.
    Sun {
        ambient: Spectrum,
        radiance: Spectrum,
        direction: DVec3,
        cos_half_angle: f64,
    },
}

impl AnalyticLight {
    pub fn constant(l: f64) -> Self {
        Self::Constant(Spectrum::splat(l))
    }

    pub fn sky(zenith: Spectrum, horizon: Spectrum) -> Self {
        Self::Sky {
            zenith,
            horizon,
            up: SKY_UP,
        }
    }

    pub fn sun(ambient: Spectrum, radiance: Spectrum, direction: DVec3, half_angle: f64) -> Self {
        Self::Sun {
            ambient,
            radiance,
            direction: direction.normalize(),
            cos_half_angle: half_angle.cos(),
        }
    }

    pub fn radiance(&self, d: DVec3) -> Spectrum {
        match *self {
            Self::Constant(l) => l,
            Self::Sky {
                zenith,
                horizon,
                up,
            } => {
                let t = d.dot(up).clamp(0.0, 1.0);
                horizon * (1.0 - t) + zenith * t
            }
            Self::Sun {
                ambient,
                radiance,
                direction,
                cos_half_angle,
            } => {
                if d.dot(direction) >= cos_half_angle {
                    ambient + radiance
                } else {
                    ambient
                }
            }
        }
    }

    fn colours(&self) -> Vec<Spectrum> {
        match *self {
            Self::Constant(l) => vec![l],
            Self::Sky {
                zenith, horizon, ..
            } => vec![zenith, horizon],
            Self::Sun {
                ambient, radiance, ..
            } => vec![ambient, radiance],
        }
    }

    /// d L / d colour_k for each colour slot, as scalars (channels are
    /// independent).
    fn colour_weights(&self, d: DVec3) -> Vec<f64> {
        match *self {
            Self::Constant(_) => vec![1.0],
            Self::Sky { up, .. } => {
                let t = d.dot(up).clamp(0.0, 1.0);
                vec![t, 1.0 - t]
            }
            Self::Sun {
                direction,
                cos_half_angle,
                ..
            } => vec![1.0, f64::from(u8::from(d.dot(direction) >= cos_half_angle))],
        }
    }
}

impl LightField for AnalyticLight {
    fn query(&self, _p: DVec3, d: DVec3, _rng: &mut SampleRng) -> LightSample {
        LightSample::analytic(self.radiance(d))
    }

    fn params(&self) -> Vec<f64> {
        self.colours().iter().flat_map(|s| s.to_array()).collect()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<(), LightError> {
        let expected = self.colours().len() * 3;
        if params.len() != expected {
            return Err(LightError::ParamCount {
                expected,
                got: params.len(),
            });
        }
        let s = |k: usize| Spectrum::new(params[3 * k], params[3 * k + 1], params[3 * k + 2]);
        match self {
            Self::Constant(l) => *l = s(0),
            Self::Sky {
                zenith, horizon, ..
            } => {
                *zenith = s(0);
                *horizon = s(1);
            }
            Self::Sun {
                ambient, radiance, ..
            } => {
                *ambient = s(0);
                *radiance = s(1);
            }
        }
        Ok(())
    }

    fn query_backward(
        &self,
        _p: DVec3,
        d: DVec3,
        _rng: &mut SampleRng,
        g: Spectrum,
        acc: &mut [f64],
    ) {
        for (k, w) in self.colour_weights(d).into_iter().enumerate() {
            for c in 0..3 {
                acc[3 * k + c] += w * g[c];
            }
        }
    }

    fn project_params(&self, params: &mut [f64]) {
        for v in params {
            *v = v.max(0.0);
        }
    }
}

/// Polar angle from [`SKY_UP`] and azimuth in the x-z plane, in `[0, pi]`
/// and `[0, 2 pi)`.
pub fn direction_to_angles(d: DVec3) -> (f64, f64) {
    let theta = d.dot(SKY_UP).clamp(-1.0, 1.0).acos();
    let mut phi = d.z.atan2(d.x);
    if phi < 0.0 {
        phi += 2.0 * PI;
    }
    (theta, phi)
}

pub fn direction_from_angles(theta: f64, phi: f64) -> DVec3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    DVec3::new(st * cp, 0.0, st * sp) + SKY_UP * ct
}

/// On-disk description of a gridded light field. Values are stored with
/// the azimuth index fastest, then polar angle, z, y, x, and three colour
/// channels per entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    /// `[nx, ny, nz, n_theta, n_phi]`
    pub dims: [usize; 5],
    pub bounds_min: [f64; 3],
    pub bounds_max: [f64; 3],
    /// Blob file name, relative to the header.
    #[serde(default = "default_blob")]
    pub data: String,
}

fn default_blob() -> String {
    "grid.bin".into()
}

impl GridHeader {
    pub fn cells(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn value_count(&self) -> usize {
        self.cells() * 3
    }
}

/// 5D radiance grid sampled at cell centres: trilinear in position,
/// bilinear in direction (azimuth wraps around).
#[derive(Clone, Debug, PartialEq)]
pub struct GridLight {
    header: GridHeader,
    values: Vec<f64>,
}

struct Axis {
    i0: usize,
    i1: usize,
    t: f64,
}

fn snap(u: f64) -> f64 {
    let r = u.round();
    if (u - r).abs() < 1e-9 {
        r
    } else {
        u
    }
}

fn clamped_axis(u: f64, n: usize) -> Axis {
    let u = snap(u).clamp(0.0, (n - 1) as f64);
    let i0 = u.floor() as usize;
    let i1 = (i0 + 1).min(n - 1);
    Axis {
        i0,
        i1,
        t: u - i0 as f64,
    }
}

fn wrapped_axis(u: f64, n: usize) -> Axis {
    let u = snap(u);
    let f = u.floor();
    let i0 = (f as i64).rem_euclid(n as i64) as usize;
    Axis {
        i0,
        i1: (i0 + 1) % n,
        t: u - f,
    }
}

impl GridLight {
    pub fn new(header: GridHeader, values: Vec<f64>) -> Result<Self, LightError> {
        if header.dims.iter().any(|&n| n == 0) {
            return Err(LightError::Grid(format!("zero dimension in {:?}", header.dims)));
        }
        if values.len() != header.value_count() {
            return Err(LightError::Grid(format!(
                "expected {} values for dims {:?}, got {}",
                header.value_count(),
                header.dims,
                values.len()
            )));
        }
        if (0..3).any(|a| !(header.bounds_max[a] > header.bounds_min[a])) {
            return Err(LightError::Grid("empty bounds".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(LightError::Grid("values must be finite and non-negative".into()));
        }
        Ok(Self { header, values })
    }

    /// Fill a grid by evaluating `f(x, d)` at every cell centre.
    pub fn from_fn(
        header: GridHeader,
        f: impl Fn(DVec3, DVec3) -> Spectrum,
    ) -> Result<Self, LightError> {
        let mut values = Vec::with_capacity(header.value_count());
        let [nx, ny, nz, nt, np] = header.dims;
        for ix in 0..nx {
            for iy in 0..ny {
                for iz in 0..nz {
                    for it in 0..nt {
                        for ip in 0..np {
                            let x = Self::cell_position(&header, [ix, iy, iz]);
                            let theta = (it as f64 + 0.5) * PI / nt as f64;
                            let phi = (ip as f64 + 0.5) * 2.0 * PI / np as f64;
                            values.extend(f(x, direction_from_angles(theta, phi)).to_array());
                        }
                    }
                }
            }
        }
        Self::new(header, values)
    }

    fn cell_position(header: &GridHeader, idx: [usize; 3]) -> DVec3 {
        let lo = DVec3::from_array(header.bounds_min);
        let hi = DVec3::from_array(header.bounds_max);
        let n = DVec3::new(
            header.dims[0] as f64,
            header.dims[1] as f64,
            header.dims[2] as f64,
        );
        let i = DVec3::new(idx[0] as f64, idx[1] as f64, idx[2] as f64);
        lo + (hi - lo) * (i + 0.5) / n
    }

    /// Position and direction at the centre of a cell.
    pub fn cell_center(&self, idx: [usize; 5]) -> (DVec3, DVec3) {
        let [_, _, _, nt, np] = self.header.dims;
        let theta = (idx[3] as f64 + 0.5) * PI / nt as f64;
        let phi = (idx[4] as f64 + 0.5) * 2.0 * PI / np as f64;
        (
            Self::cell_position(&self.header, [idx[0], idx[1], idx[2]]),
            direction_from_angles(theta, phi),
        )
    }

    pub fn header(&self) -> &GridHeader {
        &self.header
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn flat_index(&self, idx: [usize; 5]) -> usize {
        let [_, ny, nz, nt, np] = self.header.dims;
        ((((idx[0] * ny + idx[1]) * nz + idx[2]) * nt + idx[3]) * np + idx[4]) * 3
    }

    /// Corner offsets and weights for a query.
    fn stencil(&self, p: DVec3, d: DVec3) -> [(usize, f64); 32] {
        let h = &self.header;
        let [nx, ny, nz, nt, np] = h.dims;
        let lo = DVec3::from_array(h.bounds_min);
        let hi = DVec3::from_array(h.bounds_max);
        let u = (p - lo) / (hi - lo);
        let ax = clamped_axis(u.x * nx as f64 - 0.5, nx);
        let ay = clamped_axis(u.y * ny as f64 - 0.5, ny);
        let az = clamped_axis(u.z * nz as f64 - 0.5, nz);
        let (theta, phi) = direction_to_angles(d);
        let at = clamped_axis(theta / PI * nt as f64 - 0.5, nt);
        let ap = wrapped_axis(phi / (2.0 * PI) * np as f64 - 0.5, np);
        let axes = [ax, ay, az, at, ap];
        let mut out = [(0usize, 0.0f64); 32];
        for (corner, slot) in out.iter_mut().enumerate() {
            let mut idx = [0usize; 5];
            let mut w = 1.0;
            for (k, a) in axes.iter().enumerate() {
                if corner >> k & 1 == 1 {
                    idx[k] = a.i1;
                    w *= a.t;
                } else {
                    idx[k] = a.i0;
                    w *= 1.0 - a.t;
                }
            }
            *slot = (self.flat_index(idx), w);
        }
        out
    }

    pub fn radiance(&self, p: DVec3, d: DVec3) -> Spectrum {
        let mut out = Spectrum::ZERO;
        for (off, w) in self.stencil(p, d) {
            if w != 0.0 {
                let v = &self.values[off..off + 3];
                out += Spectrum::new(v[0], v[1], v[2]) * w;
            }
        }
        out
    }
}

impl LightField for GridLight {
    fn query(&self, p: DVec3, d: DVec3, _rng: &mut SampleRng) -> LightSample {
        LightSample::analytic(self.radiance(p, d))
    }

    fn params(&self) -> Vec<f64> {
        self.values.clone()
    }

    fn param_count(&self) -> usize {
        self.values.len()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<(), LightError> {
        if params.len() != self.values.len() {
            return Err(LightError::ParamCount {
                expected: self.values.len(),
                got: params.len(),
            });
        }
        self.values.copy_from_slice(params);
        Ok(())
    }

    fn query_backward(
        &self,
        p: DVec3,
        d: DVec3,
        _rng: &mut SampleRng,
        g: Spectrum,
        acc: &mut [f64],
    ) {
        for (off, w) in self.stencil(p, d) {
            for c in 0..3 {
                acc[off + c] += w * g[c];
            }
        }
    }

    fn project_params(&self, params: &mut [f64]) {
        for v in params {
            *v = v.max(0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> SampleRng {
        SampleRng::from_seed(0)
    }

    #[test]
    fn constant_everywhere() {
        let l = AnalyticLight::constant(2.0);
        for d in [DVec3::X, DVec3::NEG_Y, DVec3::new(0.3, 0.4, -0.5).normalize()] {
            assert_eq!(l.query(DVec3::new(1.0, 2.0, 3.0), d, &mut rng()).radiance, Spectrum::splat(2.0));
        }
    }

    #[test]
    fn sky_zenith_and_horizon() {
        let z = Spectrum::new(0.3, 0.5, 0.9);
        let h = Spectrum::new(1.0, 0.9, 0.7);
        let l = AnalyticLight::sky(z, h);
        assert_eq!(l.radiance(SKY_UP), z);
        assert_eq!(l.radiance(DVec3::X), h);
        assert_eq!(l.radiance(-SKY_UP), h);
    }

    #[test]
    fn sun_disk() {
        let l = AnalyticLight::sun(Spectrum::splat(0.1), Spectrum::splat(50.0), DVec3::NEG_Y, 0.1);
        assert_eq!(l.radiance(DVec3::NEG_Y), Spectrum::splat(50.1));
        assert_eq!(l.radiance(DVec3::X), Spectrum::splat(0.1));
    }

    #[test]
    fn analytic_params_round_trip_and_gradient() {
        let mut l = AnalyticLight::sky(Spectrum::splat(1.0), Spectrum::splat(0.2));
        let p = l.params();
        assert_eq!(p.len(), 6);
        l.set_params(&p).unwrap();
        assert!(l.set_params(&p[..3]).is_err());
        let d = DVec3::new(0.2, -0.6, 0.3).normalize();
        let g = Spectrum::new(1.0, 2.0, -1.0);
        let mut acc = vec![0.0; 6];
        l.query_backward(DVec3::ZERO, d, &mut rng(), g, &mut acc);
        let eps = 1e-6;
        for k in 0..6 {
            let mut hi = l.clone();
            let mut q = p.clone();
            q[k] += eps;
            hi.set_params(&q).unwrap();
            let fd = (g.dot(hi.radiance(d)) - g.dot(l.radiance(d))) / eps;
            assert!((fd - acc[k]).abs() < 1e-6);
        }
    }

    fn small_header() -> GridHeader {
        GridHeader {
            dims: [2, 2, 2, 4, 8],
            bounds_min: [-1.0, -1.0, 0.0],
            bounds_max: [1.0, 1.0, 4.0],
            data: default_blob(),
        }
    }

    #[test]
    fn angles_round_trip() {
        for (t, p) in [(0.3, 0.1), (1.2, 3.0), (2.9, 6.0)] {
            let (t2, p2) = direction_to_angles(direction_from_angles(t, p));
            assert!((t - t2).abs() < 1e-12 && (p - p2).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_node_is_reproduced() {
        let h = small_header();
        let mut values = vec![0.0; h.value_count()];
        let idx = [1, 0, 1, 2, 5];
        let mut grid = GridLight::new(h.clone(), values.clone()).unwrap();
        let off = grid.flat_index(idx);
        values[off] = 1.0;
        grid.set_params(&values).unwrap();
        let (x, d) = grid.cell_center(idx);
        assert_eq!(grid.radiance(x, d), Spectrum::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn grid_of_constant_is_constant() {
        let grid = GridLight::from_fn(small_header(), |_, _| Spectrum::splat(0.7)).unwrap();
        for k in 0..50 {
            let f = k as f64;
            let d = DVec3::new((f * 0.7).sin(), (f * 1.3).cos(), (f * 0.3).sin()).normalize();
            let p = DVec3::new(f.sin() * 3.0, f.cos(), f * 0.1);
            assert!((grid.radiance(p, d).g - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_gradient_is_the_stencil() {
        let grid = GridLight::from_fn(small_header(), |x, d| {
            Spectrum::new(x.x.abs() + d.y.abs(), 0.5, d.z.abs())
        })
        .unwrap();
        let p = DVec3::new(0.13, -0.4, 1.7);
        let d = DVec3::new(0.3, -0.5, 0.7).normalize();
        let g = Spectrum::new(0.5, 1.0, 2.0);
        let mut acc = vec![0.0; grid.param_count()];
        grid.query_backward(p, d, &mut rng(), g, &mut acc);
        // linear in values: gradient . values == g . radiance
        let lhs: f64 = acc.iter().zip(grid.values()).map(|(a, v)| a * v).sum();
        assert!((lhs - g.dot(grid.radiance(p, d))).abs() < 1e-12);
    }

    #[test]
    fn grid_shape_errors() {
        let h = small_header();
        assert!(GridLight::new(h.clone(), vec![0.0; 5]).is_err());
        let mut bad = h;
        bad.dims[3] = 0;
        assert!(GridLight::new(bad, vec![]).is_err());
    }
}
