//! Static scene: triangles, point lights and ray queries.

mod bvh;
pub mod obj;
mod trajectory;

use std::path::{Path, PathBuf};

use glam::DVec3;
use serde::Deserialize;
use thiserror::Error;

pub use bvh::{Aabb, Bvh};
pub use trajectory::{sample_trajectory, Keyframe, Trajectory, TrajectoryError};

/// Ray epsilon in world units (scenes are authored in meters).
pub const RAY_EPSILON: f64 = 1e-4;
pub const DEFAULT_MAX_LIGHTS: usize = 32;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("scene declares {count} lights but at most {max} are allowed")]
    TooManyLights { count: usize, max: usize },
    #[error("invalid scene: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct PointLight {
    pub position: DVec3,
    /// Radiometric intensity per channel.
    pub intensity: DVec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triangle {
    pub positions: [DVec3; 3],
    /// Unit normals per vertex (the face normal repeated for flat faces).
    pub normals: [DVec3; 3],
    pub material: u32,
}

impl Triangle {
    /// Builds a flat-shaded triangle. `None` when the triangle has no area.
    pub fn flat(positions: [DVec3; 3], material: u32) -> Option<Self> {
        let n = (positions[1] - positions[0]).cross(positions[2] - positions[0]);
        let len = n.length();
        if !(len > 1e-18) {
            return None;
        }
        let n = n / len;
        Some(Self {
            positions,
            normals: [n; 3],
            material,
        })
    }

    /// Möller–Trumbore. Returns `(t, u, v)` for a front- or back-facing hit
    /// with `t` in `(t_min, t_max)`.
    #[inline]
    pub fn intersect(
        &self,
        origin: DVec3,
        direction: DVec3,
        t_min: f64,
        t_max: f64,
    ) -> Option<(f64, f64, f64)> {
        let [a, b, c] = self.positions;
        let e1 = b - a;
        let e2 = c - a;
        let p = direction.cross(e2);
        let det = e1.dot(p);
        if det.abs() < 1e-14 {
            return None;
        }
        let inv = 1.0 / det;
        let s = origin - a;
        let u = s.dot(p) * inv;
        if !(0.0..=1.0).contains(&u) {
            return None;
        }
        let q = s.cross(e1);
        let v = direction.dot(q) * inv;
        if v < 0.0 || u + v > 1.0 {
            return None;
        }
        let t = e2.dot(q) * inv;
        (t > t_min && t < t_max).then_some((t, u, v))
    }
}

/// Nearest intersection along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub position: DVec3,
    /// Interpolated unit normal, oriented against the incoming ray.
    pub normal: DVec3,
    pub albedo: DVec3,
    pub triangle: u32,
}

#[derive(Debug, Clone)]
pub struct Scene {
    triangles: Vec<Triangle>,
    albedos: Vec<DVec3>,
    lights: Vec<PointLight>,
    background: DVec3,
    bvh: Bvh,
}

impl Scene {
    pub fn new(
        triangles: Vec<Triangle>,
        albedos: Vec<DVec3>,
        lights: Vec<PointLight>,
        background: DVec3,
        max_lights: usize,
    ) -> Result<Self, SceneError> {
        if lights.len() > max_lights {
            return Err(SceneError::TooManyLights {
                count: lights.len(),
                max: max_lights,
            });
        }
        for (i, l) in lights.iter().enumerate() {
            if !l.position.is_finite() || !l.intensity.is_finite() || l.intensity.min_element() < 0.0
            {
                return Err(SceneError::Invalid(format!(
                    "light {i} has a non-finite position or negative intensity"
                )));
            }
        }
        for (i, t) in triangles.iter().enumerate() {
            if t.material as usize >= albedos.len() {
                return Err(SceneError::Invalid(format!(
                    "triangle {i} references missing material {}",
                    t.material
                )));
            }
            if t.normals.iter().any(|n| (n.length() - 1.0).abs() > 1e-4) {
                return Err(SceneError::Invalid(format!(
                    "triangle {i} has a non-unit normal"
                )));
            }
        }
        let bvh = Bvh::build(&triangles);
        Ok(Self {
            triangles,
            albedos,
            lights,
            background,
            bvh,
        })
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn lights(&self) -> &[PointLight] {
        &self.lights
    }

    pub fn num_lights(&self) -> usize {
        self.lights.len()
    }

    pub fn background(&self) -> DVec3 {
        self.background
    }

    pub fn albedo(&self, material: u32) -> DVec3 {
        self.albedos[material as usize]
    }

    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    fn make_hit(&self, index: u32, t: f64, u: f64, v: f64, origin: DVec3, direction: DVec3) -> Hit {
        let tri = &self.triangles[index as usize];
        let w = 1.0 - u - v;
        let mut normal = (w * tri.normals[0] + u * tri.normals[1] + v * tri.normals[2])
            .try_normalize()
            .unwrap_or(tri.normals[0]);
        if normal.dot(direction) > 0.0 {
            normal = -normal;
        }
        Hit {
            t,
            position: origin + t * direction,
            normal,
            albedo: self.albedos[tri.material as usize],
            triangle: index,
        }
    }

    /// Nearest hit with `t` in `(RAY_EPSILON, t_max)`. Equal distances resolve
    /// to the lowest triangle index.
    pub fn intersect_ray(&self, origin: DVec3, direction: DVec3, t_max: f64) -> Option<Hit> {
        let mut best: Option<(f64, f64, f64, u32)> = None;
        self.bvh.traverse(origin, direction, t_max, |index| {
            let (t, u, v) =
                self.triangles[index as usize].intersect(origin, direction, RAY_EPSILON, t_max)?;
            let better = match best {
                None => true,
                Some((bt, _, _, bi)) => t < bt || (t == bt && index < bi),
            };
            if better {
                best = Some((t, u, v, index));
                Some(t)
            } else {
                None
            }
        });
        best.map(|(t, u, v, i)| self.make_hit(i, t, u, v, origin, direction))
    }

    /// Reference nearest-hit query over every triangle, without the BVH.
    pub fn intersect_ray_brute_force(
        &self,
        origin: DVec3,
        direction: DVec3,
        t_max: f64,
    ) -> Option<Hit> {
        let mut best: Option<(f64, f64, f64, u32)> = None;
        for (i, tri) in self.triangles.iter().enumerate() {
            if let Some((t, u, v)) = tri.intersect(origin, direction, RAY_EPSILON, t_max) {
                if best.is_none_or(|(bt, ..)| t < bt) {
                    best = Some((t, u, v, i as u32));
                }
            }
        }
        best.map(|(t, u, v, i)| self.make_hit(i, t, u, v, origin, direction))
    }

    /// True iff a triangle crosses the open segment between the two points,
    /// shortened by `RAY_EPSILON` at both ends.
    pub fn occluded(&self, from: DVec3, to: DVec3) -> bool {
        let delta = to - from;
        let dist = delta.length();
        if !(dist > 2.0 * RAY_EPSILON) {
            return false;
        }
        let direction = delta / dist;
        let t_max = dist - RAY_EPSILON;
        let mut blocked = false;
        self.bvh.traverse(from, direction, t_max, |index| {
            self.triangles[index as usize]
                .intersect(from, direction, RAY_EPSILON, t_max)
                .map(|_| {
                    blocked = true;
                    -1.0
                })
        });
        blocked
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LightsFile {
    #[serde(default)]
    background: Option<DVec3>,
    #[serde(default)]
    max_lights: Option<usize>,
    #[serde(default)]
    default_albedo: Option<DVec3>,
    #[serde(default)]
    materials: std::collections::BTreeMap<String, DVec3>,
    #[serde(default)]
    lights: Vec<PointLight>,
}

fn read(path: &Path) -> Result<String, SceneError> {
    std::fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads an OBJ mesh and its lights/materials file.
///
/// The lights file is TOML:
///
/// ```toml
/// background = [0.05, 0.05, 0.08]
/// max_lights = 32                  # optional
/// default_albedo = [0.8, 0.8, 0.8] # faces without `usemtl`
///
/// [materials]
/// red = [0.8, 0.1, 0.1]            # referenced by `usemtl red`
///
/// [[lights]]
/// position = [0.0, 2.5, 0.0]
/// intensity = [4.0, 4.0, 4.0]
/// ```
pub fn load_scene(scene_path: &Path, lights_path: &Path) -> Result<Scene, SceneError> {
    let obj_text = read(scene_path)?;
    let faces = obj::parse_obj(&obj_text).map_err(|e| SceneError::Parse {
        path: scene_path.to_path_buf(),
        message: e.to_string(),
    })?;
    let lights_text = read(lights_path)?;
    let config: LightsFile = toml::from_str(&lights_text).map_err(|e| SceneError::Parse {
        path: lights_path.to_path_buf(),
        message: e.to_string(),
    })?;

    let max_lights = config.max_lights.unwrap_or(DEFAULT_MAX_LIGHTS);
    if config.lights.len() > max_lights {
        return Err(SceneError::TooManyLights {
            count: config.lights.len(),
            max: max_lights,
        });
    }

    let mut names: Vec<&str> = vec![""];
    let mut albedos = vec![config.default_albedo.unwrap_or(DVec3::splat(0.8))];
    for (name, albedo) in &config.materials {
        names.push(name);
        albedos.push(*albedo);
    }
    if albedos
        .iter()
        .any(|a| !a.is_finite() || a.min_element() < 0.0 || a.max_element() > 1.0)
    {
        return Err(SceneError::Parse {
            path: lights_path.to_path_buf(),
            message: "albedo components must lie in [0, 1]".into(),
        });
    }

    let mut triangles = Vec::with_capacity(faces.len());
    for (i, face) in faces.into_iter().enumerate() {
        let material = match face.material.as_deref() {
            None => 0,
            Some(name) => names.iter().position(|n| *n == name).unwrap_or_else(|| {
                log::warn!("{}: unknown material {name:?}, using default", scene_path.display());
                0
            }) as u32,
        };
        let Some(mut tri) = Triangle::flat(face.positions, material) else {
            log::warn!("{}: skipping degenerate face {i}", scene_path.display());
            continue;
        };
        if let Some(normals) = face.normals {
            for (slot, n) in tri.normals.iter_mut().zip(normals) {
                *slot = n.try_normalize().ok_or_else(|| SceneError::Parse {
                    path: scene_path.to_path_buf(),
                    message: format!("face {i} references a zero-length normal"),
                })?;
            }
        }
        triangles.push(tri);
    }

    Scene::new(
        triangles,
        albedos,
        config.lights,
        config.background.unwrap_or(DVec3::ZERO),
        max_lights,
    )
}
