//! Screen-space ray marching over a depth map.
//!
//! The ray is projected to the image and marched in pixel space with a fixed
//! stride. Ray depth is interpolated perspective-correctly (linear in 1/z).
//! The first step where the ray is behind the stored surface is refined by
//! bisection between the last miss and that step.

use glam::{DVec2, DVec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::Camera;
use crate::gbuffer::is_surface_depth;
use crate::image::ImageBuffer;

/// Scale inside `tanh` mapping a depth gap in metres to uncertainty.
pub const UNCERTAINTY_SCALE: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum SsrtError {
    #[error("ray direction must be finite and non-zero")]
    BadDirection,
    #[error("ray origin must be finite and in front of the camera")]
    BadOrigin,
    #[error("depth gap must be non-negative, got {0}")]
    NegativeGap(f64),
    #[error("invalid ssrt config: {0}")]
    Config(&'static str),
    #[error("depth map is {0}x{1}, camera expects {2}x{3}")]
    DepthShape(usize, usize, usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsrtConfig {
    pub max_steps: usize,
    /// Pixels advanced per step.
    pub stride: f64,
    /// Metres behind the surface still accepted as a hit to refine.
    pub thickness: f64,
    pub refinement_steps: usize,
    /// Longest ray segment considered, in metres.
    pub max_distance: f64,
    /// Near clip depth for rays heading toward the camera.
    pub near: f64,
}

impl Default for SsrtConfig {
    fn default() -> Self {
        Self {
            max_steps: 1024,
            stride: 1.0,
            thickness: 0.05,
            refinement_steps: 8,
            max_distance: 100.0,
            near: 1e-3,
        }
    }
}

impl SsrtConfig {
    pub fn validate(&self) -> Result<(), SsrtError> {
        if self.max_steps < 1 {
            return Err(SsrtError::Config("max_steps must be >= 1"));
        }
        if !(self.stride >= 0.5) {
            return Err(SsrtError::Config("stride must be >= 0.5"));
        }
        if !(self.thickness > 0.0) {
            return Err(SsrtError::Config("thickness must be > 0"));
        }
        if !(self.max_distance > 0.0 && self.near > 0.0) {
            return Err(SsrtError::Config("max_distance and near must be > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HitStatus {
    Hit,
    ExitedView,
    ExhaustedSteps,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsrtHit {
    pub status: HitStatus,
    /// Source point on the depth surface for hits; last ray point otherwise.
    pub point: DVec3,
    /// Continuous pixel coordinates of `point`.
    pub pixel: DVec2,
    /// `|ray depth - surface depth|` at the hit; infinite for misses.
    pub delta_d: f64,
    pub uncertainty: f64,
}

impl SsrtHit {
    pub fn is_hit(&self) -> bool {
        self.status == HitStatus::Hit
    }

    fn miss(status: HitStatus, point: DVec3, pixel: DVec2) -> Self {
        Self {
            status,
            point,
            pixel,
            delta_d: f64::INFINITY,
            uncertainty: 1.0,
        }
    }
}

/// `tanh(10 * delta_d)`.
pub fn uncertainty(delta_d: f64) -> Result<f64, SsrtError> {
    if delta_d < 0.0 || delta_d.is_nan() {
        return Err(SsrtError::NegativeGap(delta_d));
    }
    Ok((UNCERTAINTY_SCALE * delta_d).tanh())
}

/// Surface depth at a continuous pixel position.
///
/// Inverse depth is interpolated bilinearly between the four surrounding
/// pixel centres, which reproduces planes exactly. If any of the four has no
/// geometry the nearest pixel is used instead.
pub fn sample_depth(depth: &ImageBuffer, pixel: DVec2) -> Option<f64> {
    let (w, h) = (depth.width(), depth.height());
    let nearest = |px: DVec2| {
        let x = (px.x.floor().max(0.0) as usize).min(w - 1);
        let y = (px.y.floor().max(0.0) as usize).min(h - 1);
        let d = depth.get(x, y, 0);
        is_surface_depth(d).then_some(d)
    };
    let fx = pixel.x - 0.5;
    let fy = pixel.y - 0.5;
    let x0f = fx.floor();
    let y0f = fy.floor();
    let tx = fx - x0f;
    let ty = fy - y0f;
    let clampi = |v: f64, n: usize| (v.max(0.0) as usize).min(n - 1);
    let (x0, x1) = (clampi(x0f, w), clampi(x0f + 1.0, w));
    let (y0, y1) = (clampi(y0f, h), clampi(y0f + 1.0, h));
    let corners = [
        depth.get(x0, y0, 0),
        depth.get(x1, y0, 0),
        depth.get(x0, y1, 0),
        depth.get(x1, y1, 0),
    ];
    if corners.iter().any(|&d| !is_surface_depth(d)) {
        return nearest(pixel);
    }
    let inv = |d: f64| 1.0 / d;
    let top = inv(corners[0]) * (1.0 - tx) + inv(corners[1]) * tx;
    let bottom = inv(corners[2]) * (1.0 - tx) + inv(corners[3]) * tx;
    Some(1.0 / (top * (1.0 - ty) + bottom * ty))
}

struct Segment {
    p0: DVec2,
    delta: DVec2,
    inv_z0: f64,
    inv_z1: f64,
}

impl Segment {
    #[inline]
    fn pixel(&self, s: f64) -> DVec2 {
        self.p0 + self.delta * s
    }

    #[inline]
    fn ray_depth(&self, s: f64) -> f64 {
        1.0 / (self.inv_z0 + (self.inv_z1 - self.inv_z0) * s)
    }
}

/// March from `origin` along `dir` through the depth map.
pub fn trace(
    depth: &ImageBuffer,
    camera: &Camera,
    origin: DVec3,
    dir: DVec3,
    cfg: &SsrtConfig,
) -> Result<SsrtHit, SsrtError> {
    cfg.validate()?;
    if depth.width() != camera.width || depth.height() != camera.height {
        return Err(SsrtError::DepthShape(
            depth.width(),
            depth.height(),
            camera.width,
            camera.height,
        ));
    }
    let len = dir.length();
    if !(len > 0.0 && len.is_finite()) {
        return Err(SsrtError::BadDirection);
    }
    if !origin.is_finite() || origin.z <= 0.0 {
        return Err(SsrtError::BadOrigin);
    }
    Ok(trace_unchecked(depth, camera, origin, dir / len, cfg))
}

pub(crate) fn trace_unchecked(
    depth: &ImageBuffer,
    camera: &Camera,
    origin: DVec3,
    dir: DVec3,
    cfg: &SsrtConfig,
) -> SsrtHit {
    let mut t_max = cfg.max_distance;
    if dir.z < 0.0 {
        t_max = t_max.min((origin.z - cfg.near) / -dir.z);
    }
    let start_px = camera.project_unchecked(origin);
    if t_max <= 0.0 {
        return SsrtHit::miss(HitStatus::ExhaustedSteps, origin, start_px);
    }
    let end = origin + dir * t_max;
    let seg = Segment {
        p0: start_px,
        delta: camera.project_unchecked(end) - start_px,
        inv_z0: 1.0 / origin.z,
        inv_z1: 1.0 / end.z,
    };
    let px_len = seg.delta.length();
    let ds = if px_len > 1e-9 {
        cfg.stride / px_len
    } else {
        1.0 / cfg.max_steps as f64
    };

    let mut s_prev = 0.0;
    for k in 1..=cfg.max_steps {
        let s = (k as f64 * ds).min(1.0);
        let px = seg.pixel(s);
        if !camera.contains(px) {
            let point = camera.unproject_unchecked(px, seg.ray_depth(s));
            return SsrtHit::miss(HitStatus::ExitedView, point, px);
        }
        let z_ray = seg.ray_depth(s);
        if let Some(z_surf) = sample_depth(depth, px) {
            if z_ray > z_surf {
                let s_hit = if z_ray - z_surf <= cfg.thickness {
                    refine(depth, &seg, s_prev, s, cfg.refinement_steps)
                } else {
                    s
                };
                return finish_hit(depth, camera, &seg, s_hit);
            }
        }
        if s >= 1.0 {
            break;
        }
        s_prev = s;
    }
    let s_end = (cfg.max_steps as f64 * ds).min(1.0);
    let px = seg.pixel(s_end);
    SsrtHit::miss(
        HitStatus::ExhaustedSteps,
        camera.unproject_unchecked(px, seg.ray_depth(s_end)),
        px,
    )
}

fn refine(depth: &ImageBuffer, seg: &Segment, mut lo: f64, mut hi: f64, steps: usize) -> f64 {
    for _ in 0..steps {
        let mid = 0.5 * (lo + hi);
        let behind = sample_depth(depth, seg.pixel(mid)).is_some_and(|z| seg.ray_depth(mid) > z);
        if behind {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn finish_hit(depth: &ImageBuffer, camera: &Camera, seg: &Segment, s: f64) -> SsrtHit {
    let pixel = seg.pixel(s);
    let z_ray = seg.ray_depth(s);
    // the bisection only ever lands on positions with geometry
    let z_surf = sample_depth(depth, pixel).unwrap_or(z_ray);
    let delta_d = (z_ray - z_surf).abs();
    SsrtHit {
        status: HitStatus::Hit,
        point: camera.unproject_unchecked(pixel, z_surf),
        pixel,
        delta_d,
        uncertainty: (UNCERTAINTY_SCALE * delta_d).tanh(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane_scene(z: f64) -> (ImageBuffer, Camera) {
        let cam = Camera::new(64.0, 64.0, 32.0, 32.0, 64, 64).unwrap();
        (ImageBuffer::filled(64, 64, 1, z), cam)
    }

    #[test]
    fn uncertainty_values() {
        assert_eq!(uncertainty(0.0).unwrap(), 0.0);
        assert!((uncertainty(0.1).unwrap() - 0.761_594_155_955_764_9).abs() < 1e-12);
        assert_eq!(uncertainty(1e6).unwrap(), 1.0);
        assert!(uncertainty(-1e-9).is_err());
        let mut prev = -1.0;
        for k in 0..300 {
            let u = uncertainty(k as f64 * 1e-3).unwrap();
            assert!(u > prev);
            prev = u;
        }
    }

    #[test]
    fn plane_depth_is_reproduced() {
        // tilted plane z = 2 + 0.3 x seen by fx = 50, cx = 16
        let depth = ImageBuffer::from_fn(32, 32, 1, |x, _, _| {
            let xn = (x as f64 + 0.5 - 16.0) / 50.0;
            2.0 / (1.0 - 0.3 * xn)
        });
        for &(px, py) in &[(3.3, 7.9), (16.0, 16.0), (20.75, 1.2)] {
            let xn = (px - 16.0) / 50.0;
            let expect = 2.0 / (1.0 - 0.3 * xn);
            let got = sample_depth(&depth, DVec2::new(px, py)).unwrap();
            assert!((got - expect).abs() < 1e-12, "{got} {expect}");
        }
    }

    #[test]
    fn ray_into_plane_hits_analytic_point() {
        let (depth, cam) = plane_scene(2.0);
        // start in front of the plane and head into it at an angle
        let origin = DVec3::new(-0.2, 0.1, 1.5);
        let dir = DVec3::new(0.4, -0.1, 0.6).normalize();
        let t = (2.0 - origin.z) / dir.z;
        let expect = cam.project(origin + dir * t).unwrap().pixel;
        let hit = trace(&depth, &cam, origin, dir, &SsrtConfig::default()).unwrap();
        assert_eq!(hit.status, HitStatus::Hit);
        assert!((hit.pixel - expect).length() < 1.0, "{:?} {:?}", hit.pixel, expect);
        assert!((hit.point.z - 2.0).abs() < 1e-12);
        assert!(hit.delta_d <= 0.05);
    }

    #[test]
    fn ray_into_empty_sky_misses() {
        let cam = Camera::new(64.0, 64.0, 32.0, 32.0, 64, 64).unwrap();
        let depth = ImageBuffer::from_fn(64, 64, 1, |_, y, _| if y > 40 { 2.0 } else { f64::INFINITY });
        let origin = cam.unproject(Camera::pixel_center(32, 50), 2.0).unwrap();
        let hit = trace(&depth, &cam, origin, DVec3::new(0.0, -1.0, -0.2).normalize(), &SsrtConfig::default())
            .unwrap();
        assert_ne!(hit.status, HitStatus::Hit);
        assert_eq!(hit.uncertainty, 1.0);
    }

    #[test]
    fn toward_camera_exhausts_or_exits() {
        let (depth, cam) = plane_scene(2.0);
        let origin = DVec3::new(0.0, 0.0, 2.0);
        let hit = trace(&depth, &cam, origin, DVec3::new(0.01, 0.0, -1.0).normalize(), &SsrtConfig::default())
            .unwrap();
        assert_ne!(hit.status, HitStatus::Hit);
        assert_eq!(hit.uncertainty, 1.0);
    }

    #[test]
    fn occluder_gives_large_gap() {
        // near box in the middle of a far wall: a ray passing behind it
        let cam = Camera::new(64.0, 64.0, 32.0, 32.0, 64, 64).unwrap();
        let depth = ImageBuffer::from_fn(64, 64, 1, |x, _, _| if (28..36).contains(&x) { 1.0 } else { 5.0 });
        let origin = cam.unproject(Camera::pixel_center(10, 32), 2.5).unwrap();
        let dir = DVec3::new(1.0, 0.0, 0.0);
        let hit = trace(&depth, &cam, origin, dir, &SsrtConfig::default()).unwrap();
        assert_eq!(hit.status, HitStatus::Hit);
        assert!(hit.delta_d > 1.0);
        assert!(hit.uncertainty > 0.99);
    }

    #[test]
    fn bad_inputs() {
        let (depth, cam) = plane_scene(2.0);
        let cfg = SsrtConfig::default();
        assert_eq!(
            trace(&depth, &cam, DVec3::Z, DVec3::ZERO, &cfg),
            Err(SsrtError::BadDirection)
        );
        assert_eq!(
            trace(&depth, &cam, DVec3::new(f64::NAN, 0.0, 1.0), DVec3::Z, &cfg),
            Err(SsrtError::BadOrigin)
        );
        let bad = SsrtConfig {
            stride: 0.25,
            ..cfg
        };
        assert!(trace(&depth, &cam, DVec3::Z, DVec3::Z, &bad).is_err());
    }

    #[test]
    fn trace_is_pure() {
        let (depth, cam) = plane_scene(3.0);
        let o = DVec3::new(0.1, 0.2, 1.0);
        let d = DVec3::new(0.3, 0.2, 0.9).normalize();
        let cfg = SsrtConfig::default();
        assert_eq!(trace(&depth, &cam, o, d, &cfg), trace(&depth, &cam, o, d, &cfg));
    }
}
