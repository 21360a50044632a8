//! Diffuse shading from a G-Buffer and per-light visibility:
//! `I = albedo / pi * sum_i k_i * saturate(N . L_i) * I_i`.

use std::f64::consts::PI;

use glam::DVec3;
use image::RgbImage;
use rayon::prelude::*;
use thiserror::Error;

use crate::gbuffer::{GBuffer, Surface};
use crate::scene::PointLight;
use crate::visibility::VisibilityBitmap;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShadeError {
    #[error("visibility is {vis_w}x{vis_h}, G-Buffer is {g_w}x{g_h}")]
    DimensionMismatch { vis_w: u32, vis_h: u32, g_w: u32, g_h: u32 },
    #[error("visibility carries {bits} lights, scene has {lights}")]
    LightCountMismatch { bits: u32, lights: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ShadingOptions {
    /// Divide each light's contribution by the squared distance.
    pub inverse_square: bool,
}

/// Linear RGB image, channels clamped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    pub frame_index: u32,
    pub pixels: Vec<DVec3>,
}

fn encode_channel(c: f64) -> u8 {
    (c.clamp(0.0, 1.0).powf(1.0 / 2.2) * 255.0).round() as u8
}

impl Frame {
    /// Gamma 1/2.2, 8 bits per channel.
    pub fn encode(&self) -> RgbImage {
        let mut img = RgbImage::new(self.width, self.height);
        for (dst, src) in img.pixels_mut().zip(&self.pixels) {
            *dst = image::Rgb(src.to_array().map(encode_channel));
        }
        img
    }
}

/// Unclamped radiance of one surface under the lights whose bits are set.
pub fn shade_surface(
    surface: &Surface,
    visibility: &[u32],
    lights: &[PointLight],
    options: ShadingOptions,
) -> DVec3 {
    let mut sum = DVec3::ZERO;
    for (i, light) in lights.iter().enumerate() {
        if visibility[i / 32] >> (i % 32) & 1 == 0 {
            continue;
        }
        let to_light = light.position - surface.position;
        let dist2 = to_light.length_squared();
        let Some(dir) = to_light.try_normalize() else {
            continue;
        };
        let cosine = surface.normal.dot(dir).clamp(0.0, 1.0);
        let mut contribution = cosine * light.intensity;
        if options.inverse_square {
            contribution /= dist2;
        }
        sum += contribution;
    }
    surface.albedo / PI * sum
}

pub fn shade_frame(
    gbuffer: &GBuffer,
    visibility: &VisibilityBitmap,
    lights: &[PointLight],
    background: DVec3,
    options: ShadingOptions,
) -> Result<Frame, ShadeError> {
    if visibility.width != gbuffer.width || visibility.height != gbuffer.height {
        return Err(ShadeError::DimensionMismatch {
            vis_w: visibility.width,
            vis_h: visibility.height,
            g_w: gbuffer.width,
            g_h: gbuffer.height,
        });
    }
    if visibility.num_lights as usize != lights.len() {
        return Err(ShadeError::LightCountMismatch {
            bits: visibility.num_lights,
            lights: lights.len(),
        });
    }
    let width = gbuffer.width;
    let mut pixels = vec![DVec3::ZERO; gbuffer.pixels.len()];
    pixels
        .par_chunks_mut(width as usize)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                let (x, y) = (x as u32, y as u32);
                *out = match gbuffer.get(x, y) {
                    Some(surface) => {
                        shade_surface(surface, visibility.pixel(x, y), lights, options)
                    }
                    None => background,
                }
                .clamp(DVec3::ZERO, DVec3::ONE);
            }
        });
    Ok(Frame {
        width,
        height: gbuffer.height,
        frame_index: gbuffer.frame_index,
        pixels,
    })
}
