//! G-buffer bundle directories.
//!
//! A bundle holds `albedo.pfm`, `normal.pfm`, `depth.pfm`, `roughness.pfm`,
//! `metallic.pfm` and `camera.json`. An optional `bundle.json` renames those
//! files and lists light fields, a target image and a reference image.

use std::path::{Path, PathBuf};

use glam::DVec3;
use serde::{Deserialize, Serialize};

use super::{
    read_feature_grid, read_f32_blob, read_grid_light, read_hypernet, read_json, read_mlp,
    read_pfm, write_json, write_pfm, IoError,
};
use crate::brdf::BrdfModel;
use crate::camera::Camera;
use crate::gbuffer::GBuffer;
use crate::image::ImageBuffer;
use crate::lighting::{AnalyticLight, LearnedLight, LightField};
use crate::oov::{NerfConfig, OutOfViewModel};
use crate::spectrum::Spectrum;
use crate::ssrt::SsrtConfig;

pub const MANIFEST_NAME: &str = "bundle.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BundleManifest {
    pub albedo: String,
    pub normal: String,
    pub depth: String,
    pub roughness: String,
    pub metallic: String,
    pub camera: String,
    pub brdf_model: BrdfModel,
    pub lights: Vec<LightSpec>,
    /// Image the inverse optimizer fits, if any.
    pub target: Option<String>,
    /// Converged rendering of the bundle under its first light.
    pub reference: Option<String>,
}

impl Default for BundleManifest {
    fn default() -> Self {
        Self {
            albedo: "albedo.pfm".into(),
            normal: "normal.pfm".into(),
            depth: "depth.pfm".into(),
            roughness: "roughness.pfm".into(),
            metallic: "metallic.pfm".into(),
            camera: "camera.json".into(),
            brdf_model: BrdfModel::default(),
            lights: Vec::new(),
            target: None,
            reference: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LightSpec {
    Constant {
        radiance: [f64; 3],
    },
    Sky {
        zenith: [f64; 3],
        horizon: [f64; 3],
    },
    Sun {
        ambient: [f64; 3],
        radiance: [f64; 3],
        /// Direction towards the sun, view space.
        direction: [f64; 3],
        half_angle_deg: f64,
    },
    Grid {
        header: String,
    },
    Learned(LearnedSpec),
}

/// File names of the learned lighting assets, relative to the bundle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnedSpec {
    pub features: String,
    pub lightnet: String,
    pub hypernet: String,
    /// f32 blob of length `hypernet.feature_dim`.
    pub global_feature: String,
    #[serde(default)]
    pub nerf: NerfConfig,
    #[serde(default)]
    pub ssrt: SsrtConfig,
}

impl LightSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Constant { .. } => "constant",
            Self::Sky { .. } => "sky",
            Self::Sun { .. } => "sun",
            Self::Grid { .. } => "grid",
            Self::Learned(_) => "learned",
        }
    }

    /// The light as an analytic field; `None` for grid and learned lights.
    pub fn analytic(&self) -> Option<AnalyticLight> {
        let s = Spectrum::from_array;
        Some(match self {
            Self::Constant { radiance } => AnalyticLight::Constant(s(*radiance)),
            Self::Sky { zenith, horizon } => AnalyticLight::sky(s(*zenith), s(*horizon)),
            Self::Sun {
                ambient,
                radiance,
                direction,
                half_angle_deg,
            } => AnalyticLight::sun(
                s(*ambient),
                s(*radiance),
                DVec3::from_array(*direction).normalize(),
                half_angle_deg.to_radians(),
            ),
            Self::Grid { .. } | Self::Learned(_) => return None,
        })
    }

    pub fn default_constant() -> Self {
        Self::Constant {
            radiance: [1.0; 3],
        }
    }

    pub fn default_sky() -> Self {
        Self::Sky {
            zenith: [0.5, 0.7, 1.0],
            horizon: [1.0, 0.95, 0.9],
        }
    }
}

#[derive(Clone, Debug)]
pub struct Bundle {
    pub dir: PathBuf,
    pub manifest: BundleManifest,
    pub gbuffer: GBuffer,
    pub camera: Camera,
    pub target: Option<ImageBuffer>,
    pub reference: Option<ImageBuffer>,
}

impl Bundle {
    pub fn new(dir: impl Into<PathBuf>, gbuffer: GBuffer, camera: Camera) -> Self {
        Self {
            dir: dir.into(),
            manifest: BundleManifest::default(),
            gbuffer,
            camera,
            target: None,
            reference: None,
        }
    }

    pub fn load(dir: &Path) -> Result<Self, IoError> {
        let manifest_path = dir.join(MANIFEST_NAME);
        let manifest: BundleManifest = if manifest_path.exists() {
            read_json(&manifest_path)?
        } else {
            BundleManifest::default()
        };
        let map = |name: &str| -> Result<ImageBuffer, IoError> {
            let path = dir.join(name);
            if !path.is_file() {
                return Err(IoError::MissingMap(path));
            }
            read_pfm(&path)
        };
        let albedo = map(&manifest.albedo)?;
        let normal = map(&manifest.normal)?;
        let depth = map(&manifest.depth)?;
        let roughness = map(&manifest.roughness)?;
        let metallic = map(&manifest.metallic)?;
        let camera_path = dir.join(&manifest.camera);
        if !camera_path.is_file() {
            return Err(IoError::MissingMap(camera_path));
        }
        let camera: Camera = read_json(&camera_path)?;
        camera.validate()?;
        let gbuffer = GBuffer::new(albedo, normal, depth, roughness, metallic)?;
        if (camera.width, camera.height) != (gbuffer.width(), gbuffer.height()) {
            return Err(IoError::format(
                &camera_path,
                format!(
                    "camera is {}x{} but the maps are {}x{}",
                    camera.width,
                    camera.height,
                    gbuffer.width(),
                    gbuffer.height()
                ),
            ));
        }
        let optional = |name: &Option<String>| -> Result<Option<ImageBuffer>, IoError> {
            name.as_ref().map(|n| map(n)).transpose()
        };
        let target = optional(&manifest.target)?;
        let reference = optional(&manifest.reference)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            gbuffer,
            camera,
            target,
            reference,
        })
    }

    /// Writes maps, camera and manifest into `self.dir`. Target and
    /// reference images get default names when the manifest has none.
    pub fn save(&mut self) -> Result<(), IoError> {
        std::fs::create_dir_all(&self.dir).map_err(|source| IoError::File {
            path: self.dir.clone(),
            source,
        })?;
        let m = &mut self.manifest;
        let g = &self.gbuffer;
        write_pfm(&self.dir.join(&m.albedo), &g.albedo)?;
        write_pfm(&self.dir.join(&m.normal), &g.normal)?;
        write_pfm(&self.dir.join(&m.depth), &g.depth)?;
        write_pfm(&self.dir.join(&m.roughness), &g.roughness)?;
        write_pfm(&self.dir.join(&m.metallic), &g.metallic)?;
        write_json(&self.dir.join(&m.camera), &self.camera)?;
        if let Some(t) = &self.target {
            let name = m.target.get_or_insert_with(|| "target.pfm".into());
            write_pfm(&self.dir.join(name.as_str()), t)?;
        }
        if let Some(r) = &self.reference {
            let name = m.reference.get_or_insert_with(|| "reference.pfm".into());
            write_pfm(&self.dir.join(name.as_str()), r)?;
        }
        write_json(&self.dir.join(MANIFEST_NAME), m)
    }

    /// First manifest light of the given kind. Constant and sky lights fall
    /// back to defaults when the manifest lists none.
    pub fn light_spec(&self, kind: &str) -> Result<LightSpec, IoError> {
        if let Some(s) = self.manifest.lights.iter().find(|s| s.kind() == kind) {
            return Ok(s.clone());
        }
        match kind {
            "constant" => Ok(LightSpec::default_constant()),
            "sky" => Ok(LightSpec::default_sky()),
            _ => Err(IoError::NoLighting(kind.to_string())),
        }
    }

    /// The first listed light, or the default constant light.
    pub fn default_light_spec(&self) -> LightSpec {
        self.manifest
            .lights
            .first()
            .cloned()
            .unwrap_or_else(LightSpec::default_constant)
    }

    pub fn load_light(&self, spec: &LightSpec) -> Result<Box<dyn LightField>, IoError> {
        if let Some(a) = spec.analytic() {
            return Ok(Box::new(a));
        }
        Ok(match spec {
            LightSpec::Grid { header } => Box::new(read_grid_light(&self.dir.join(header))?),
            LightSpec::Learned(l) => Box::new(self.load_learned(l)?),
            _ => unreachable!("analytic lights handled above"),
        })
    }

    pub fn load_learned(&self, spec: &LearnedSpec) -> Result<LearnedLight, IoError> {
        let features = read_feature_grid(&self.dir.join(&spec.features))?;
        let lightnet = read_mlp(&self.dir.join(&spec.lightnet))?;
        let hypernet = read_hypernet(&self.dir.join(&spec.hypernet))?;
        let global = read_f32_blob(&self.dir.join(&spec.global_feature), hypernet.feature_dim)?;
        let oov = OutOfViewModel::new(hypernet, global, spec.nerf)?;
        Ok(LearnedLight::new(
            features,
            self.gbuffer.clone(),
            self.camera,
            lightnet,
            oov,
            spec.ssrt,
        )?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Bundle {
        let cam = Camera::from_fov(4, 3, 1.0).unwrap();
        let depth = ImageBuffer::from_fn(4, 3, 1, |x, _, _| if x == 0 { f64::INFINITY } else { 2.0 });
        let normal = ImageBuffer::from_fn(4, 3, 3, |_, _, c| if c == 2 { -1.0 } else { 0.0 });
        let g = GBuffer::uniform(depth, normal, Spectrum::splat(0.5), 0.25, 0.0).unwrap();
        Bundle::new(PathBuf::new(), g, cam)
    }

    #[test]
    fn save_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = tiny();
        b.dir = dir.path().to_path_buf();
        b.manifest.lights.push(LightSpec::default_sky());
        b.target = Some(ImageBuffer::filled(4, 3, 3, 0.25));
        b.save().unwrap();
        let back = Bundle::load(dir.path()).unwrap();
        assert_eq!(back.gbuffer.depth.get(0, 0, 0), f64::INFINITY);
        assert_eq!(back.gbuffer.albedo, b.gbuffer.albedo);
        assert_eq!(back.camera, b.camera);
        assert_eq!(back.target, b.target);
        assert_eq!(back.light_spec("sky").unwrap(), LightSpec::default_sky());
        assert!(matches!(back.light_spec("grid"), Err(IoError::NoLighting(_))));
    }

    #[test]
    fn missing_depth_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = tiny();
        b.dir = dir.path().to_path_buf();
        b.save().unwrap();
        std::fs::remove_file(dir.path().join("depth.pfm")).unwrap();
        let err = Bundle::load(dir.path()).unwrap_err();
        assert!(err.to_string().contains("missing map"), "{err}");
    }

    #[test]
    fn manifest_is_optional() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = tiny();
        b.dir = dir.path().to_path_buf();
        b.save().unwrap();
        std::fs::remove_file(dir.path().join(MANIFEST_NAME)).unwrap();
        assert!(Bundle::load(dir.path()).is_ok());
    }

    #[test]
    fn light_spec_json_shape() {
        let s: LightSpec = serde_json::from_str(r#"{"kind":"constant","radiance":[2,2,2]}"#).unwrap();
        assert_eq!(s, LightSpec::Constant { radiance: [2.0; 3] });
    }
}
