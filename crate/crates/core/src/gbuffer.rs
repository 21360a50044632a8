//! Client-side G-Buffer produced by primary ray casting.

use std::path::Path;

use glam::DVec3;
use image::RgbImage;
use rayon::prelude::*;

use crate::camera::{Camera, CameraError, CameraPose, Intrinsics};
use crate::scene::{Hit, Scene};

/// Nearest surface seen through a pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surface {
    pub position: DVec3,
    pub normal: DVec3,
    pub albedo: DVec3,
}

impl From<Hit> for Surface {
    fn from(hit: Hit) -> Self {
        Self {
            position: hit.position,
            normal: hit.normal,
            albedo: hit.albedo,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GBuffer {
    pub width: u32,
    pub height: u32,
    pub frame_index: u32,
    pub pose: CameraPose,
    /// Row-major; `None` where the primary ray missed.
    pub pixels: Vec<Option<Surface>>,
}

impl GBuffer {
    pub fn get(&self, x: u32, y: u32) -> Option<&Surface> {
        self.pixels[(y * self.width + x) as usize].as_ref()
    }

    pub fn valid_mask(&self) -> Vec<bool> {
        self.pixels.iter().map(Option::is_some).collect()
    }

    /// Writes albedo, normal and validity planes as PNG images into `dir`.
    pub fn write_debug_images(&self, dir: &Path, stem: &str) -> image::ImageResult<()> {
        let to_u8 = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        let mut albedo = RgbImage::new(self.width, self.height);
        let mut normal = RgbImage::new(self.width, self.height);
        let mut valid = RgbImage::new(self.width, self.height);
        for (i, px) in self.pixels.iter().enumerate() {
            let (x, y) = (i as u32 % self.width, i as u32 / self.width);
            if let Some(s) = px {
                albedo.put_pixel(x, y, image::Rgb(s.albedo.to_array().map(to_u8)));
                let n = s.normal * 0.5 + DVec3::splat(0.5);
                normal.put_pixel(x, y, image::Rgb(n.to_array().map(to_u8)));
                valid.put_pixel(x, y, image::Rgb([255; 3]));
            }
        }
        albedo.save(dir.join(format!("{stem}_albedo.png")))?;
        normal.save(dir.join(format!("{stem}_normal.png")))?;
        valid.save(dir.join(format!("{stem}_valid.png")))
    }
}

/// Casts the primary ray through pixel center `(x, y)`. Client and server
/// share this kernel so both agree on every surface position.
#[inline]
pub fn cast_primary(scene: &Scene, camera: &Camera, x: u32, y: u32, enlarged: bool) -> Option<Hit> {
    let ray = camera.primary_ray(x as f64 + 0.5, y as f64 + 0.5, enlarged);
    scene.intersect_ray(ray.origin, ray.direction, f64::INFINITY)
}

pub fn render_gbuffer(
    scene: &Scene,
    pose: &CameraPose,
    intrinsics: &Intrinsics,
) -> Result<GBuffer, CameraError> {
    let camera = Camera::new(*pose, *intrinsics)?;
    let (width, height) = (intrinsics.display_width, intrinsics.display_height);
    let mut pixels = vec![None; (width * height) as usize];
    pixels
        .par_chunks_mut(width as usize)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, slot) in row.iter_mut().enumerate() {
                *slot = cast_primary(scene, &camera, x as u32, y as u32, false).map(Surface::from);
            }
        });
    Ok(GBuffer {
        width,
        height,
        frame_index: pose.frame_index,
        pose: *pose,
        pixels,
    })
}
