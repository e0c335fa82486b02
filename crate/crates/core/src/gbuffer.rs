//! Per-pixel scene description: albedo, normal, depth, roughness, metallic.

use glam::DVec3;
use serde::Serialize;
use thiserror::Error;

use crate::image::ImageBuffer;
use crate::spectrum::Spectrum;

/// Tolerance on `|N| - 1` before a normal is reported.
pub const NORMAL_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error, PartialEq)]
pub enum GBufferError {
    #[error("{map} map is {got:?}, expected {expected:?} (width, height, channels)")]
    Shape {
        map: &'static str,
        got: (usize, usize, usize),
        expected: (usize, usize, usize),
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GBuffer {
    pub albedo: ImageBuffer,
    pub normal: ImageBuffer,
    pub depth: ImageBuffer,
    pub roughness: ImageBuffer,
    pub metallic: ImageBuffer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Albedo,
    Normal,
    Depth,
    Roughness,
    Metallic,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NonUnitNormal { length: f64 },
    OutOfRange { map: MapKind, value: f64 },
    NonFinite { map: MapKind },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Issue {
    pub x: usize,
    pub y: usize,
    pub violation: Violation,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn len(&self) -> usize {
        self.issues.len()
    }
}

/// Depth values that are non-positive or infinite mark pixels without geometry.
#[inline]
pub fn is_surface_depth(d: f64) -> bool {
    d > 0.0 && d.is_finite()
}

impl GBuffer {
    pub fn new(
        albedo: ImageBuffer,
        normal: ImageBuffer,
        depth: ImageBuffer,
        roughness: ImageBuffer,
        metallic: ImageBuffer,
    ) -> Result<Self, GBufferError> {
        let g = Self {
            albedo,
            normal,
            depth,
            roughness,
            metallic,
        };
        g.check_shapes()?;
        Ok(g)
    }

    /// Uniform material over the given depth and normal maps.
    pub fn uniform(
        depth: ImageBuffer,
        normal: ImageBuffer,
        albedo: Spectrum,
        roughness: f64,
        metallic: f64,
    ) -> Result<Self, GBufferError> {
        let (w, h) = (depth.width(), depth.height());
        Self::new(
            ImageBuffer::from_fn(w, h, 3, |_, _, c| albedo[c]),
            normal,
            depth,
            ImageBuffer::filled(w, h, 1, roughness),
            ImageBuffer::filled(w, h, 1, metallic),
        )
    }

    pub fn width(&self) -> usize {
        self.depth.width()
    }

    pub fn height(&self) -> usize {
        self.depth.height()
    }

    pub fn pixel_count(&self) -> usize {
        self.depth.pixel_count()
    }

    fn check_shapes(&self) -> Result<(), GBufferError> {
        let (w, h) = (self.depth.width(), self.depth.height());
        let maps: [(&'static str, &ImageBuffer, usize); 5] = [
            ("depth", &self.depth, 1),
            ("albedo", &self.albedo, 3),
            ("normal", &self.normal, 3),
            ("roughness", &self.roughness, 1),
            ("metallic", &self.metallic, 1),
        ];
        for (name, img, ch) in maps {
            if img.shape() != (w, h, ch) {
                return Err(GBufferError::Shape {
                    map: name,
                    got: img.shape(),
                    expected: (w, h, ch),
                });
            }
        }
        Ok(())
    }

    #[inline]
    pub fn albedo(&self, i: usize) -> Spectrum {
        self.albedo.spectrum(i)
    }

    #[inline]
    pub fn normal(&self, i: usize) -> DVec3 {
        let t = self.normal.texel(i);
        DVec3::new(t[0], t[1], t[2])
    }

    #[inline]
    pub fn depth(&self, i: usize) -> f64 {
        self.depth.data()[i]
    }

    #[inline]
    pub fn roughness(&self, i: usize) -> f64 {
        self.roughness.data()[i]
    }

    #[inline]
    pub fn metallic(&self, i: usize) -> f64 {
        self.metallic.data()[i]
    }

    #[inline]
    pub fn is_surface(&self, i: usize) -> bool {
        is_surface_depth(self.depth(i))
    }

    pub fn set_normal(&mut self, i: usize, n: DVec3) {
        let t = self.normal.texel_mut(i);
        t[0] = n.x;
        t[1] = n.y;
        t[2] = n.z;
    }

    /// Every violated invariant, in scanline order.
    pub fn validate(&self) -> Result<ValidationReport, GBufferError> {
        self.check_shapes()?;
        let mut report = ValidationReport::default();
        let w = self.width();
        for i in 0..self.pixel_count() {
            let (x, y) = (i % w, i / w);
            for v in self.pixel_violations(i) {
                report.issues.push(Issue { x, y, violation: v });
            }
        }
        Ok(report)
    }

    /// A copy with normals renormalised and scalars clamped, plus the report
    /// of what was wrong before the repair.
    pub fn repaired(&self) -> Result<(GBuffer, ValidationReport), GBufferError> {
        let report = self.validate()?;
        let mut g = self.clone();
        for issue in &report.issues {
            let i = issue.y * g.width() + issue.x;
            match &issue.violation {
                Violation::NonUnitNormal { .. } | Violation::NonFinite { map: MapKind::Normal } => {
                    let n = g.normal(i);
                    let len = n.length();
                    let fixed = if len.is_finite() && len > 1e-12 {
                        n / len
                    } else {
                        // face the camera
                        DVec3::NEG_Z
                    };
                    g.set_normal(i, fixed);
                }
                Violation::NonFinite { map: MapKind::Depth } => g.depth.data_mut()[i] = 0.0,
                Violation::NonFinite { map } | Violation::OutOfRange { map, .. } => {
                    let img = match map {
                        MapKind::Albedo => &mut g.albedo,
                        MapKind::Roughness => &mut g.roughness,
                        MapKind::Metallic => &mut g.metallic,
                        MapKind::Normal | MapKind::Depth => continue,
                    };
                    for v in img.texel_mut(i) {
                        *v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
                    }
                }
            }
        }
        Ok((g, report))
    }

    fn pixel_violations(&self, i: usize) -> Vec<Violation> {
        let mut out = Vec::new();
        let d = self.depth(i);
        if d.is_nan() {
            out.push(Violation::NonFinite {
                map: MapKind::Depth,
            });
        }
        let unit_range = |map: MapKind, img: &ImageBuffer, out: &mut Vec<Violation>| {
            for &v in img.texel(i) {
                if !v.is_finite() {
                    out.push(Violation::NonFinite { map });
                    return;
                }
                if !(0.0..=1.0).contains(&v) {
                    out.push(Violation::OutOfRange { map, value: v });
                    return;
                }
            }
        };
        unit_range(MapKind::Albedo, &self.albedo, &mut out);
        unit_range(MapKind::Roughness, &self.roughness, &mut out);
        unit_range(MapKind::Metallic, &self.metallic, &mut out);
        if self.is_surface(i) {
            let n = self.normal(i);
            if !n.is_finite() {
                out.push(Violation::NonFinite {
                    map: MapKind::Normal,
                });
            } else {
                let len = n.length();
                if (len - 1.0).abs() > NORMAL_TOLERANCE {
                    out.push(Violation::NonUnitNormal { length: len });
                }
            }
        }
        out
    }

    /// The `w`x`h` window starting at (`x0`, `y0`).
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> GBuffer {
        GBuffer {
            albedo: self.albedo.crop(x0, y0, w, h),
            normal: self.normal.crop(x0, y0, w, h),
            depth: self.depth.crop(x0, y0, w, h),
            roughness: self.roughness.crop(x0, y0, w, h),
            metallic: self.metallic.crop(x0, y0, w, h),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn valid(w: usize, h: usize) -> GBuffer {
        GBuffer::uniform(
            ImageBuffer::filled(w, h, 1, 2.0),
            ImageBuffer::from_fn(w, h, 3, |_, _, c| if c == 2 { -1.0 } else { 0.0 }),
            Spectrum::splat(0.5),
            0.5,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn valid_buffer_has_empty_report() {
        assert!(valid(4, 3).validate().unwrap().is_empty());
    }

    #[test]
    fn long_normal_is_reported_and_repaired() {
        let mut g = valid(4, 3);
        g.set_normal(5, DVec3::new(0.0, 0.0, 2.0));
        let report = g.validate().unwrap();
        assert_eq!(report.len(), 1);
        assert_eq!(report.issues[0].x, 1);
        assert_eq!(report.issues[0].y, 1);
        assert!(matches!(
            report.issues[0].violation,
            Violation::NonUnitNormal { length } if length == 2.0
        ));
        let (fixed, _) = g.repaired().unwrap();
        assert_eq!(fixed.normal(5), DVec3::new(0.0, 0.0, 1.0));
        assert!(fixed.validate().unwrap().is_empty());
    }

    #[test]
    fn roughness_is_clamped_on_repair() {
        let mut g = valid(2, 2);
        g.roughness.data_mut()[3] = 1.5;
        let report = g.validate().unwrap();
        assert_eq!(
            report.issues[0].violation,
            Violation::OutOfRange {
                map: MapKind::Roughness,
                value: 1.5
            }
        );
        let (fixed, _) = g.repaired().unwrap();
        assert_eq!(fixed.roughness(3), 1.0);
    }

    #[test]
    fn mismatched_maps_are_fatal() {
        let g = valid(4, 4);
        let err = GBuffer::new(
            g.albedo.clone(),
            g.normal.clone(),
            g.depth.clone(),
            ImageBuffer::new(3, 4, 1),
            g.metallic.clone(),
        )
        .unwrap_err();
        assert!(matches!(err, GBufferError::Shape { map: "roughness", .. }));

        let mut g = valid(4, 4);
        g.metallic = ImageBuffer::new(4, 4, 3);
        assert!(g.validate().is_err());
    }

    #[test]
    fn sky_pixels_skip_normal_checks() {
        let mut g = valid(2, 1);
        g.depth.data_mut()[0] = f64::INFINITY;
        g.set_normal(0, DVec3::ZERO);
        assert!(g.validate().unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn repair_is_idempotent(
            vals in proptest::collection::vec(-2.0f64..2.0, 9 * 4),
            nan_at in proptest::option::of(0usize..4),
        ) {
            let mut g = valid(2, 2);
            for i in 0..4 {
                let v = &vals[i * 9..(i + 1) * 9];
                g.set_normal(i, DVec3::new(v[0], v[1], v[2]));
                g.albedo.set_spectrum(i, Spectrum::new(v[3], v[4], v[5]));
                g.roughness.data_mut()[i] = v[6];
                g.metallic.data_mut()[i] = v[7];
                g.depth.data_mut()[i] = v[8];
            }
            if let Some(i) = nan_at {
                g.roughness.data_mut()[i] = f64::NAN;
            }
            let (once, _) = g.repaired().unwrap();
            let (twice, report) = once.repaired().unwrap();
            prop_assert!(report.is_empty());
            prop_assert_eq!(once, twice);
        }
    }
}
