//! Pinhole camera in view space.
//!
//! View space is right-handed with the camera looking down +z, +x to the
//! right and +y down the image. Depth maps store the z coordinate. Pixel
//! `(i, j)` covers `[i, i+1) x [j, j+1)` in continuous pixel coordinates, so
//! its centre sits at `(i + 0.5, j + 0.5)`.

use glam::{DVec2, DVec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CameraError {
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("depth must be positive and finite, got {0}")]
    InvalidDepth(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

/// Result of projecting a view-space point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub pixel: DVec2,
    pub inside: bool,
}

impl Camera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, CameraError> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera with the given horizontal field of view (radians) and the
    /// principal point at the image centre.
    pub fn from_fov(width: usize, height: usize, fov_x: f64) -> Result<Self, CameraError> {
        let f = 0.5 * width as f64 / (0.5 * fov_x).tan();
        Self::new(f, f, 0.5 * width as f64, 0.5 * height as f64, width, height)
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        let bad = |m: &str| Err(CameraError::InvalidIntrinsics(m.to_string()));
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return bad("focal lengths must be positive");
        }
        if self.width == 0 || self.height == 0 {
            return bad("image size must be non-zero");
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return bad("cx outside [0, width)");
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return bad("cy outside [0, height)");
        }
        Ok(())
    }

    /// Continuous pixel coordinates of a view-space point.
    pub fn project(&self, x: DVec3) -> Result<Projection, CameraError> {
        if !(x.z > 0.0) {
            return Err(CameraError::BehindCamera(x.z));
        }
        let pixel = self.project_unchecked(x);
        Ok(Projection {
            pixel,
            inside: self.contains(pixel),
        })
    }

    #[inline]
    pub(crate) fn project_unchecked(&self, x: DVec3) -> DVec2 {
        DVec2::new(self.fx * x.x / x.z + self.cx, self.fy * x.y / x.z + self.cy)
    }

    /// View-space point at `depth` (z) seen through continuous pixel `pixel`.
    pub fn unproject(&self, pixel: DVec2, depth: f64) -> Result<DVec3, CameraError> {
        if !(depth > 0.0 && depth.is_finite()) {
            return Err(CameraError::InvalidDepth(depth));
        }
        Ok(self.unproject_unchecked(pixel, depth))
    }

    #[inline]
    pub(crate) fn unproject_unchecked(&self, pixel: DVec2, depth: f64) -> DVec3 {
        DVec3::new(
            (pixel.x - self.cx) / self.fx * depth,
            (pixel.y - self.cy) / self.fy * depth,
            depth,
        )
    }

    #[inline]
    pub fn contains(&self, pixel: DVec2) -> bool {
        pixel.x >= 0.0
            && pixel.y >= 0.0
            && pixel.x < self.width as f64
            && pixel.y < self.height as f64
    }

    #[inline]
    pub fn pixel_center(x: usize, y: usize) -> DVec2 {
        DVec2::new(x as f64 + 0.5, y as f64 + 0.5)
    }

    /// Intrinsics for the `w`x`h` window starting at (`x0`, `y0`).
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Camera {
        Camera {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx - x0 as f64,
            cy: self.cy - y0 as f64,
            width: w,
            height: h,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cam() -> Camera {
        Camera::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap()
    }

    #[test]
    fn optical_axis_projects_to_principal_point() {
        for z in [0.1, 1.0, 37.5] {
            let p = cam().project(DVec3::new(0.0, 0.0, z)).unwrap();
            assert_eq!(p.pixel, DVec2::new(50.0, 50.0));
            assert!(p.inside);
        }
    }

    #[test]
    fn project_known_point() {
        let p = cam().project(DVec3::new(1.0, 0.0, 2.0)).unwrap();
        assert_eq!(p.pixel, DVec2::new(100.0, 50.0));
        // x = width is outside the half-open range
        assert!(!p.inside);
    }

    #[test]
    fn behind_camera_is_an_error() {
        assert_eq!(
            cam().project(DVec3::new(0.0, 0.0, -1.0)),
            Err(CameraError::BehindCamera(-1.0))
        );
        assert!(cam().project(DVec3::ZERO).is_err());
    }

    #[test]
    fn unproject_known_points() {
        let c = cam();
        assert_eq!(
            c.unproject(DVec2::new(50.0, 50.0), 3.0).unwrap(),
            DVec3::new(0.0, 0.0, 3.0)
        );
        assert_eq!(
            c.unproject(DVec2::new(100.0, 50.0), 2.0).unwrap(),
            DVec3::new(1.0, 0.0, 2.0)
        );
        assert!(c.unproject(DVec2::new(1.0, 1.0), 0.0).is_err());
        assert!(c.unproject(DVec2::new(1.0, 1.0), -2.0).is_err());
    }

    #[test]
    fn rejects_bad_intrinsics() {
        assert!(Camera::new(0.0, 1.0, 0.0, 0.0, 4, 4).is_err());
        assert!(Camera::new(1.0, 1.0, 4.0, 0.0, 4, 4).is_err());
        assert!(Camera::new(1.0, 1.0, 0.0, -0.5, 4, 4).is_err());
    }

    proptest! {
        #[test]
        fn project_unproject_round_trip(px in 0.0f64..100.0, py in 0.0f64..100.0, d in 0.05f64..50.0) {
            let c = cam();
            let x = c.unproject(DVec2::new(px, py), d).unwrap();
            prop_assert!((x.z - d).abs() <= 1e-12 * d);
            let back = c.project(x).unwrap();
            prop_assert!((back.pixel.x - px).abs() < 1e-6);
            prop_assert!((back.pixel.y - py).abs() < 1e-6);
        }

        #[test]
        fn unproject_project_round_trip(x in -5.0f64..5.0, y in -5.0f64..5.0, z in 0.1f64..20.0) {
            let c = cam();
            let p = DVec3::new(x, y, z);
            let q = c.unproject(c.project(p).unwrap().pixel, z).unwrap();
            prop_assert!((q - p).length() < 1e-9 * (1.0 + p.length()));
        }
    }
}
