//! Packed per-pixel light visibility and the server-side shadow ray pass.
//!
//! Layout: row-major pixels, each owning `words_per_pixel` contiguous 32-bit
//! words. Light `i` lives in word `i / 32` at bit `i % 32`. Serialized words
//! are little-endian.

use std::io::{Read, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::camera::{Camera, CameraError, CameraPose, Intrinsics};
use crate::gbuffer::cast_primary;
use crate::scene::Scene;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BitmapError {
    #[error("pixel ({x}, {y}) / light {light} outside {width}x{height} bitmap with {num_lights} lights")]
    OutOfRange {
        x: u32,
        y: u32,
        light: u32,
        width: u32,
        height: u32,
        num_lights: u32,
    },
    #[error("bitmap dimensions differ: {0}")]
    DimensionMismatch(String),
    #[error("malformed bitmap dump: {0}")]
    Malformed(String),
}

pub fn words_per_pixel(num_lights: u32) -> usize {
    num_lights.div_ceil(32) as usize
}

/// Word pattern with the bits of every light set.
pub fn all_lights_mask(num_lights: u32) -> Vec<u32> {
    (0..words_per_pixel(num_lights))
        .map(|w| {
            let remaining = num_lights - 32 * w as u32;
            if remaining >= 32 {
                u32::MAX
            } else {
                (1u32 << remaining) - 1
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibilityBitmap {
    pub width: u32,
    pub height: u32,
    pub num_lights: u32,
    pub frame_index: u32,
    data: Vec<u32>,
}

impl VisibilityBitmap {
    /// All bits clear.
    pub fn new(width: u32, height: u32, num_lights: u32, frame_index: u32) -> Self {
        let len = (width * height) as usize * words_per_pixel(num_lights);
        Self {
            width,
            height,
            num_lights,
            frame_index,
            data: vec![0; len],
        }
    }

    /// Every light visible at every pixel.
    pub fn all_visible(width: u32, height: u32, num_lights: u32, frame_index: u32) -> Self {
        let mask = all_lights_mask(num_lights);
        let data = mask
            .iter()
            .copied()
            .cycle()
            .take((width * height) as usize * mask.len())
            .collect();
        Self {
            width,
            height,
            num_lights,
            frame_index,
            data,
        }
    }

    pub fn from_words(
        width: u32,
        height: u32,
        num_lights: u32,
        frame_index: u32,
        data: Vec<u32>,
    ) -> Result<Self, BitmapError> {
        let expected = (width * height) as usize * words_per_pixel(num_lights);
        if data.len() != expected {
            return Err(BitmapError::DimensionMismatch(format!(
                "{} words supplied, {expected} expected",
                data.len()
            )));
        }
        let bitmap = Self {
            width,
            height,
            num_lights,
            frame_index,
            data,
        };
        let mask = all_lights_mask(num_lights);
        if bitmap
            .data
            .chunks(mask.len().max(1))
            .any(|px| px.iter().zip(&mask).any(|(w, m)| w & !m != 0))
        {
            return Err(BitmapError::Malformed("bits set beyond num_lights".into()));
        }
        Ok(bitmap)
    }

    pub fn words_per_pixel(&self) -> usize {
        words_per_pixel(self.num_lights)
    }

    pub fn words(&self) -> &[u32] {
        &self.data
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height && self.num_lights == other.num_lights
    }

    fn check(&self, x: u32, y: u32, light: u32) -> Result<(), BitmapError> {
        if x < self.width && y < self.height && light < self.num_lights {
            Ok(())
        } else {
            Err(BitmapError::OutOfRange {
                x,
                y,
                light,
                width: self.width,
                height: self.height,
                num_lights: self.num_lights,
            })
        }
    }

    fn word_index(&self, x: u32, y: u32, light: u32) -> usize {
        (y * self.width + x) as usize * self.words_per_pixel() + (light / 32) as usize
    }

    pub fn get_bit(&self, x: u32, y: u32, light: u32) -> Result<bool, BitmapError> {
        self.check(x, y, light)?;
        Ok(self.data[self.word_index(x, y, light)] >> (light % 32) & 1 == 1)
    }

    pub fn set_bit(&mut self, x: u32, y: u32, light: u32, visible: bool) -> Result<(), BitmapError> {
        self.check(x, y, light)?;
        let i = self.word_index(x, y, light);
        let bit = 1u32 << (light % 32);
        if visible {
            self.data[i] |= bit;
        } else {
            self.data[i] &= !bit;
        }
        Ok(())
    }

    /// The words of pixel `(x, y)`. Panics when out of range.
    pub fn pixel(&self, x: u32, y: u32) -> &[u32] {
        let wpp = self.words_per_pixel();
        let start = (y * self.width + x) as usize * wpp;
        &self.data[start..start + wpp]
    }

    pub fn pixel_mut(&mut self, x: u32, y: u32) -> &mut [u32] {
        let wpp = self.words_per_pixel();
        let start = (y * self.width + x) as usize * wpp;
        &mut self.data[start..start + wpp]
    }

    /// Copies the `width x height` window starting at `(x0, y0)`.
    pub fn crop(&self, x0: u32, y0: u32, width: u32, height: u32) -> Result<Self, BitmapError> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(BitmapError::DimensionMismatch(format!(
                "window {width}x{height}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let wpp = self.words_per_pixel();
        let mut data = Vec::with_capacity((width * height) as usize * wpp);
        for y in y0..y0 + height {
            let start = (y * self.width + x0) as usize * wpp;
            data.extend_from_slice(&self.data[start..start + width as usize * wpp]);
        }
        Ok(Self {
            width,
            height,
            num_lights: self.num_lights,
            frame_index: self.frame_index,
            data,
        })
    }

    /// The display region of an enlarged buffer traced with `intrinsics`.
    pub fn display_region(&self, intrinsics: &Intrinsics) -> Result<Self, BitmapError> {
        let (ox, oy) = intrinsics.guard_offset();
        self.crop(ox, oy, intrinsics.display_width, intrinsics.display_height)
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|w| w.to_le_bytes()).collect()
    }

    pub fn byte_len(&self) -> usize {
        self.data.len() * 4
    }

    /// Raw dump: `width, height, num_lights, frame` as little-endian u32,
    /// followed by the data words.
    pub fn write_dump(&self, mut out: impl Write) -> std::io::Result<()> {
        for v in [self.width, self.height, self.num_lights, self.frame_index] {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&self.to_le_bytes())
    }

    pub fn read_dump(mut input: impl Read) -> Result<Self, BitmapError> {
        let mut header = [0u8; 16];
        input
            .read_exact(&mut header)
            .map_err(|e| BitmapError::Malformed(e.to_string()))?;
        let field = |i: usize| u32::from_le_bytes(header[4 * i..4 * i + 4].try_into().unwrap());
        let (width, height, num_lights, frame) = (field(0), field(1), field(2), field(3));
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| BitmapError::Malformed(e.to_string()))?;
        if bytes.len() % 4 != 0 {
            return Err(BitmapError::Malformed("data is not a whole number of words".into()));
        }
        let words = bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_words(width, height, num_lights, frame, words)
    }
}

/// Traces one shadow ray per light from every surface point of the enlarged
/// buffer. Pixels without a surface report every light as visible.
pub fn trace_visibility(
    scene: &Scene,
    pose: &CameraPose,
    intrinsics: &Intrinsics,
) -> Result<VisibilityBitmap, CameraError> {
    let camera = Camera::new(*pose, *intrinsics)?;
    let width = intrinsics.buffer_width(true);
    let height = intrinsics.buffer_height(true);
    let num_lights = scene.num_lights() as u32;
    let mut bitmap = VisibilityBitmap::all_visible(width, height, num_lights, pose.frame_index);
    let wpp = bitmap.words_per_pixel();
    if wpp == 0 {
        return Ok(bitmap);
    }
    bitmap
        .data
        .par_chunks_mut(width as usize * wpp)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..width {
                let Some(hit) = cast_primary(scene, &camera, x, y as u32, true) else {
                    continue;
                };
                let words = &mut row[x as usize * wpp..(x as usize + 1) * wpp];
                words.fill(0);
                for (i, light) in scene.lights().iter().enumerate() {
                    if !scene.occluded(hit.position, light.position) {
                        words[i / 32] |= 1 << (i % 32);
                    }
                }
            }
        });
    Ok(bitmap)
}
