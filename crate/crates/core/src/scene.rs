//! Analytic test scenes built from planes seen by a pinhole camera at the
//! origin.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use glam::DVec3;

use crate::brdf::BrdfModel;
use crate::camera::Camera;
use crate::gbuffer::GBuffer;
use crate::image::ImageBuffer;
use crate::io::{
    write_f32_blob, write_feature_grid, write_grid_light, write_hypernet, write_mlp, Bundle, IoError,
    LearnedSpec, LightSpec,
};
use crate::lighting::{lightnet_default_dims, AnalyticLight, FeatureGrid, GridHeader, GridLight, LightField};
use crate::mlp::MlpWeights;
use crate::oov::{HypernetParams, NerfConfig};
use crate::sampler::SampleRng;
use crate::render::{render_reference, RenderConfig, RenderError};
use crate::spectrum::Spectrum;

/// Per-lobe grid resolution giving about 10^6 quadrature nodes per pixel.
pub const REFERENCE_RES: usize = 708;
/// Feature channels of generated learned-lighting assets.
pub const LEARNED_CHANNELS: usize = 16;
pub const GLOBAL_FEATURE_DIM: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Material {
    pub albedo: Spectrum,
    pub roughness: f64,
    pub metallic: f64,
}

impl Material {
    pub const fn new(albedo: Spectrum, roughness: f64, metallic: f64) -> Self {
        Self {
            albedo,
            roughness,
            metallic,
        }
    }
}

/// Points with `normal . x = offset`. The normal faces the camera, so
/// `offset < 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    pub normal: DVec3,
    pub offset: f64,
    pub material: Material,
}

impl Plane {
    pub fn new(normal: DVec3, offset: f64, material: Material) -> Self {
        Self {
            normal,
            offset,
            material,
        }
    }

    /// Ray parameter of the crossing, if ahead of the origin.
    pub fn intersect(&self, o: DVec3, d: DVec3) -> Option<f64> {
        let nd = self.normal.dot(d);
        if nd >= 0.0 {
            return None;
        }
        let t = (self.offset - self.normal.dot(o)) / nd;
        (t > 0.0 && t.is_finite()).then_some(t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SceneKind {
    CornellLike,
    TwoPlane,
    GlossyFloor,
    /// A single Lambertian plane facing the camera.
    Plane,
}

impl SceneKind {
    pub const ALL: [SceneKind; 4] = [
        SceneKind::CornellLike,
        SceneKind::TwoPlane,
        SceneKind::GlossyFloor,
        SceneKind::Plane,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::CornellLike => "cornell-like",
            Self::TwoPlane => "two-plane",
            Self::GlossyFloor => "glossy-floor",
            Self::Plane => "plane",
        }
    }
}

impl fmt::Display for SceneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SceneKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
                format!("unknown scene {s:?}, expected one of {}", names.join(", "))
            })
    }
}

#[derive(Clone, Debug)]
pub struct Scene {
    pub kind: SceneKind,
    pub camera: Camera,
    pub planes: Vec<Plane>,
    pub brdf_model: BrdfModel,
    /// The first entry is the scene's reference lighting.
    pub lights: Vec<LightSpec>,
}

const UP: DVec3 = DVec3::new(0.0, -1.0, 0.0);

fn grey(v: f64) -> Spectrum {
    Spectrum::splat(v)
}

impl Scene {
    pub fn new(kind: SceneKind) -> Self {
        match kind {
            SceneKind::Plane => Self::with_size(kind, 64, 64),
            _ => Self::with_size(kind, 32, 24),
        }
    }

    pub fn with_size(kind: SceneKind, width: usize, height: usize) -> Self {
        let camera = Camera::from_fov(width, height, 1.2).expect("positive size");
        let matte = |a: Spectrum| Material::new(a, 1.0, 0.0);
        let (planes, brdf_model, lights) = match kind {
            SceneKind::CornellLike => (
                vec![
                    Plane::new(UP, -1.0, matte(grey(0.725))),
                    Plane::new(-UP, -1.0, matte(grey(0.725))),
                    Plane::new(DVec3::X, -1.0, matte(Spectrum::new(0.63, 0.065, 0.05))),
                    Plane::new(-DVec3::X, -1.0, matte(Spectrum::new(0.14, 0.45, 0.091))),
                    Plane::new(-DVec3::Z, -5.0, matte(grey(0.725))),
                ],
                BrdfModel::Lambertian,
                vec![LightSpec::default_constant(), LightSpec::default_sky()],
            ),
            SceneKind::TwoPlane => (
                vec![
                    Plane::new(UP, -1.0, Material::new(grey(0.6), 0.3, 0.0)),
                    Plane::new(-DVec3::Z, -4.0, Material::new(Spectrum::new(0.7, 0.4, 0.3), 0.8, 0.0)),
                ],
                BrdfModel::Ggx,
                vec![LightSpec::default_sky(), LightSpec::default_constant()],
            ),
            SceneKind::GlossyFloor => (
                vec![
                    Plane::new(UP, -1.0, Material::new(grey(0.9), 0.1, 1.0)),
                    Plane::new(-DVec3::Z, -8.0, Material::new(grey(0.5), 0.1, 0.0)),
                ],
                BrdfModel::Ggx,
                vec![
                    LightSpec::Sun {
                        ambient: [0.1; 3],
                        radiance: [50.0, 45.0, 40.0],
                        direction: [0.0, -0.35, 1.0],
                        half_angle_deg: 2.0,
                    },
                    LightSpec::default_constant(),
                ],
            ),
            SceneKind::Plane => (
                vec![Plane::new(-DVec3::Z, -2.0, matte(grey(0.5)))],
                BrdfModel::Lambertian,
                vec![LightSpec::default_constant()],
            ),
        };
        Self {
            kind,
            camera,
            planes,
            brdf_model,
            lights,
        }
    }

    /// Nearest plane hit: ray parameter and plane index.
    pub fn intersect(&self, o: DVec3, d: DVec3) -> Option<(f64, usize)> {
        self.planes
            .iter()
            .enumerate()
            .filter_map(|(k, p)| p.intersect(o, d).map(|t| (t, k)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }

    /// View-space depth (z) seen through pixel `(x, y)`, infinite on a miss.
    pub fn depth_at(&self, x: usize, y: usize) -> f64 {
        let d = self.camera.unproject_unchecked(Camera::pixel_center(x, y), 1.0);
        self.intersect(DVec3::ZERO, d)
            .map_or(f64::INFINITY, |(t, _)| t * d.z)
    }

    pub fn gbuffer(&self) -> GBuffer {
        let (w, h) = (self.camera.width, self.camera.height);
        let hit: Vec<Option<usize>> = (0..w * h)
            .map(|i| {
                let d = self
                    .camera
                    .unproject_unchecked(Camera::pixel_center(i % w, i / w), 1.0);
                self.intersect(DVec3::ZERO, d).map(|(_, k)| k)
            })
            .collect();
        let mat = |x: usize, y: usize| hit[y * w + x].map(|k| self.planes[k]);
        let albedo = ImageBuffer::from_fn(w, h, 3, |x, y, c| mat(x, y).map_or(0.0, |p| p.material.albedo[c]));
        let normal = ImageBuffer::from_fn(w, h, 3, |x, y, c| mat(x, y).map_or(0.0, |p| p.normal[c]));
        let depth = ImageBuffer::from_fn(w, h, 1, |x, y, _| self.depth_at(x, y));
        let roughness = ImageBuffer::from_fn(w, h, 1, |x, y, _| mat(x, y).map_or(1.0, |p| p.material.roughness));
        let metallic = ImageBuffer::from_fn(w, h, 1, |x, y, _| mat(x, y).map_or(0.0, |p| p.material.metallic));
        GBuffer::new(albedo, normal, depth, roughness, metallic).expect("maps share one size")
    }

    pub fn light(&self) -> AnalyticLight {
        self.lights[0].analytic().expect("scene lights are analytic")
    }

    /// Axis-aligned box around the visible geometry, used as grid bounds.
    fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let g = self.gbuffer();
        let mut lo = DVec3::splat(f64::INFINITY);
        let mut hi = DVec3::splat(f64::NEG_INFINITY);
        for y in 0..self.camera.height {
            for x in 0..self.camera.width {
                let z = g.depth.get(x, y, 0);
                if z.is_finite() {
                    let p = self.camera.unproject_unchecked(Camera::pixel_center(x, y), z);
                    lo = lo.min(p);
                    hi = hi.max(p);
                }
            }
        }
        ((lo - 0.01).to_array(), (hi + 0.01).to_array())
    }

    /// Grid light field sampled from the reference light.
    pub fn grid_light(&self) -> GridLight {
        let (bounds_min, bounds_max) = self.bounds();
        let header = GridHeader {
            dims: [2, 2, 2, 16, 32],
            bounds_min,
            bounds_max,
            data: "grid.bin".into(),
        };
        let light = self.light();
        GridLight::from_fn(header, |_, d| light.radiance(d)).expect("valid grid dims")
    }

    /// Writes the bundle into `dir`. With `reference_res` the reference
    /// image under the first light is rendered by `render_reference`.
    pub fn write_bundle(
        &self,
        dir: &Path,
        reference_res: Option<usize>,
        cfg: &RenderConfig,
    ) -> Result<Bundle, SceneError> {
        let mut bundle = Bundle::new(dir, self.gbuffer(), self.camera);
        bundle.manifest.brdf_model = self.brdf_model;
        bundle.manifest.lights = self.lights.clone();
        std::fs::create_dir_all(dir).map_err(|source| IoError::File {
            path: dir.to_path_buf(),
            source,
        })?;
        write_grid_light(&dir.join("grid.json"), &self.grid_light())?;
        bundle.manifest.lights.push(LightSpec::Grid {
            header: "grid.json".into(),
        });
        if let Some(res) = reference_res {
            let cfg = RenderConfig {
                brdf_model: self.brdf_model,
                ..cfg.clone()
            };
            let light = self.light();
            bundle.reference = Some(render_reference(
                &bundle.gbuffer,
                &self.camera,
                &light as &dyn LightField,
                res,
                &cfg,
            )?);
        }
        bundle.save()?;
        Ok(bundle)
    }
}

/// Randomly initialised learned-lighting assets for a `width`x`height`
/// image, written into `dir`. The returned spec names the files relative
/// to `dir`.
pub fn write_learned_assets(
    dir: &Path,
    width: usize,
    height: usize,
    seed: u64,
) -> Result<LearnedSpec, IoError> {
    let mut rng = SampleRng::from_seed(seed);
    let mut img = ImageBuffer::new(width, height, LEARNED_CHANNELS);
    for v in img.data_mut() {
        *v = rng.uniform();
    }
    write_feature_grid(&dir.join("features.json"), &FeatureGrid::new(img)?)?;
    let lightnet = MlpWeights::random(lightnet_default_dims(LEARNED_CHANNELS), seed ^ 1)?;
    write_mlp(&dir.join("lightnet.json"), &lightnet)?;
    let nerf = NerfConfig::default();
    let bias = MlpWeights::random(nerf.default_dims(), seed ^ 2)?;
    let hypernet = HypernetParams::random(GLOBAL_FEATURE_DIM, &bias, 0.01, seed ^ 3)?;
    write_hypernet(&dir.join("hypernet.json"), &hypernet)?;
    let global: Vec<f64> = (0..GLOBAL_FEATURE_DIM).map(|_| 2.0 * rng.uniform() - 1.0).collect();
    write_f32_blob(&dir.join("global_feature.bin"), &global)?;
    Ok(LearnedSpec {
        features: "features.json".into(),
        lightnet: "lightnet.json".into(),
        hypernet: "hypernet.json".into(),
        global_feature: "global_feature.bin".into(),
        nerf,
        ssrt: Default::default(),
    })
}

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Render(#[from] RenderError),
}
