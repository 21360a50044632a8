//! Camera matrices, primary ray generation and world-to-pixel projection.
//!
//! Pixel coordinates are continuous with the origin at the top-left corner of
//! the buffer; pixel `(i, j)` covers `[i, i+1) x [j, j+1)` and has its center at
//! `(i + 0.5, j + 0.5)`. Screen-space y grows downward.
//!
//! The enlarged (guard band) buffer shares the display buffer's pixel pitch:
//! it is the display image plane extended by `guard_x` columns and `guard_y`
//! rows, split `guard / 2` on the left/top and the remainder on the
//! right/bottom. Display pixel `(u, v)` is enlarged pixel
//! `(u + guard_x / 2, v + guard_y / 2)`.

use glam::{DMat4, DVec3, DVec4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("degenerate camera pose: {0}")]
    DegeneratePose(&'static str),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
}

/// Camera state for one frame; the payload the client streams to the server.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: DVec3,
    pub target: DVec3,
    pub up: DVec3,
    pub frame_index: u32,
}

impl CameraPose {
    pub fn new(position: DVec3, target: DVec3, up: DVec3, frame_index: u32) -> Self {
        Self {
            position,
            target,
            up,
            frame_index,
        }
    }

    /// The pose with every component rounded to `f32`, i.e. exactly what a
    /// camera update packet can carry. Both ends render from quantized poses.
    pub fn quantized(&self) -> Self {
        let q = |v: DVec3| v.as_vec3().as_dvec3();
        Self {
            position: q(self.position),
            target: q(self.target),
            up: q(self.up),
            frame_index: self.frame_index,
        }
    }

    /// Orthonormal `(forward, right, up)` basis of a right-handed look-at camera.
    pub fn basis(&self) -> Result<(DVec3, DVec3, DVec3), CameraError> {
        let view = self.target - self.position;
        let len = view.length();
        if !len.is_finite() || len < 1e-12 {
            return Err(CameraError::DegeneratePose("target coincides with position"));
        }
        let forward = view / len;
        let up_len = self.up.length();
        if !up_len.is_finite() || up_len < 1e-12 {
            return Err(CameraError::DegeneratePose("zero up vector"));
        }
        let side = forward.cross(self.up / up_len);
        let side_len = side.length();
        if side_len < 1e-6 {
            return Err(CameraError::DegeneratePose("up parallel to view direction"));
        }
        let right = side / side_len;
        let true_up = right.cross(forward);
        Ok((forward, right, true_up))
    }
}

/// Projection parameters shared by client and server.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    /// Vertical field of view of the display region, radians.
    pub vertical_fov: f64,
    pub near: f64,
    pub far: f64,
    pub display_width: u32,
    pub display_height: u32,
    /// Extra columns in the visibility buffer (total over both sides).
    pub guard_x: u32,
    /// Extra rows in the visibility buffer (total over both sides).
    pub guard_y: u32,
}

impl Intrinsics {
    pub fn validate(&self) -> Result<(), CameraError> {
        let fov = self.vertical_fov;
        if !(fov > 0.0 && fov < std::f64::consts::PI) {
            return Err(CameraError::InvalidIntrinsics(format!(
                "vertical_fov {fov} outside (0, pi)"
            )));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(CameraError::InvalidIntrinsics(format!(
                "near {} / far {} must satisfy 0 < near < far",
                self.near, self.far
            )));
        }
        if self.display_width == 0 || self.display_height == 0 {
            return Err(CameraError::InvalidIntrinsics(
                "display resolution must be non-zero".into(),
            ));
        }
        Ok(())
    }

    /// Intrinsics with the guard band removed.
    pub fn without_guard(&self) -> Self {
        Self {
            guard_x: 0,
            guard_y: 0,
            ..*self
        }
    }

    /// Width of the display buffer or of the enlarged visibility buffer.
    pub fn buffer_width(&self, enlarged: bool) -> u32 {
        if enlarged {
            self.display_width + self.guard_x
        } else {
            self.display_width
        }
    }

    pub fn buffer_height(&self, enlarged: bool) -> u32 {
        if enlarged {
            self.display_height + self.guard_y
        } else {
            self.display_height
        }
    }

    /// Position of display pixel `(0, 0)` inside the enlarged buffer.
    pub fn guard_offset(&self) -> (u32, u32) {
        (self.guard_x / 2, self.guard_y / 2)
    }

    /// Size of one pixel on the image plane at unit distance.
    fn pixel_pitch(&self) -> f64 {
        2.0 * (0.5 * self.vertical_fov).tan() / self.display_height as f64
    }

    /// Image-plane extents `(left, right, top, bottom)` at unit distance.
    fn plane_extents(&self, enlarged: bool) -> (f64, f64, f64, f64) {
        let pitch = self.pixel_pitch();
        let w = self.display_width as f64;
        let h = self.display_height as f64;
        let (ox, oy, gx, gy) = if enlarged {
            let (ox, oy) = self.guard_offset();
            (ox as f64, oy as f64, self.guard_x as f64, self.guard_y as f64)
        } else {
            (0.0, 0.0, 0.0, 0.0)
        };
        let left = -(0.5 * w + ox) * pitch;
        let right = (0.5 * w + gx - ox) * pitch;
        let top = (0.5 * h + oy) * pitch;
        let bottom = -(0.5 * h + gy - oy) * pitch;
        (left, right, top, bottom)
    }
}

/// World to clip transform, `clip = M * (x, y, z, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewProjection(pub DMat4);

impl ViewProjection {
    /// Matrix entries in row-major order.
    pub fn rows(&self) -> [[f64; 4]; 4] {
        self.0.transpose().to_cols_array_2d()
    }

    pub fn inverse(&self) -> Option<DMat4> {
        let det = self.0.determinant();
        if det.is_finite() && det.abs() > 1e-300 {
            Some(self.0.inverse())
        } else {
            None
        }
    }
}

/// A ray with unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: DVec3,
    pub direction: DVec3,
}

/// Continuous pixel position of a projected world point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelSample {
    pub x: f64,
    pub y: f64,
    /// NDC depth in `[-1, 1]` between the near and far planes.
    pub depth: f64,
}

impl PixelSample {
    /// Index of the pixel whose cell contains this sample, i.e. the pixel with
    /// the nearest center. `None` when outside a `width x height` buffer.
    pub fn nearest_pixel(&self, width: u32, height: u32) -> Option<(u32, u32)> {
        let x = self.x.floor();
        let y = self.y.floor();
        if x >= 0.0 && y >= 0.0 && x < width as f64 && y < height as f64 {
            Some((x as u32, y as u32))
        } else {
            None
        }
    }
}

/// A pose paired with intrinsics, with the basis precomputed for ray generation.
#[derive(Debug, Clone, Copy)]
pub struct Camera {
    pub pose: CameraPose,
    pub intrinsics: Intrinsics,
    forward: DVec3,
    right: DVec3,
    up: DVec3,
    pitch: f64,
}

impl Camera {
    pub fn new(pose: CameraPose, intrinsics: Intrinsics) -> Result<Self, CameraError> {
        intrinsics.validate()?;
        let (forward, right, up) = pose.basis()?;
        Ok(Self {
            pose,
            intrinsics,
            forward,
            right,
            up,
            pitch: intrinsics.pixel_pitch(),
        })
    }

    pub fn view_matrix(&self) -> DMat4 {
        let eye = self.pose.position;
        let (f, r, u) = (self.forward, self.right, self.up);
        DMat4::from_cols(
            DVec4::new(r.x, u.x, -f.x, 0.0),
            DVec4::new(r.y, u.y, -f.y, 0.0),
            DVec4::new(r.z, u.z, -f.z, 0.0),
            DVec4::new(-r.dot(eye), -u.dot(eye), f.dot(eye), 1.0),
        )
    }

    pub fn projection_matrix(&self, enlarged: bool) -> DMat4 {
        let (l, r, t, b) = self.intrinsics.plane_extents(enlarged);
        let (n, f) = (self.intrinsics.near, self.intrinsics.far);
        DMat4::from_cols(
            DVec4::new(2.0 / (r - l), 0.0, 0.0, 0.0),
            DVec4::new(0.0, 2.0 / (t - b), 0.0, 0.0),
            DVec4::new(
                (r + l) / (r - l),
                (t + b) / (t - b),
                -(f + n) / (f - n),
                -1.0,
            ),
            DVec4::new(0.0, 0.0, -2.0 * f * n / (f - n), 0.0),
        )
    }

    pub fn view_projection(&self, enlarged: bool) -> ViewProjection {
        ViewProjection(self.projection_matrix(enlarged) * self.view_matrix())
    }

    /// Ray through continuous pixel `(px, py)` of the display or enlarged buffer.
    pub fn primary_ray(&self, px: f64, py: f64, enlarged: bool) -> Ray {
        let (u, v) = if enlarged {
            let (ox, oy) = self.intrinsics.guard_offset();
            (px - ox as f64, py - oy as f64)
        } else {
            (px, py)
        };
        let tx = (u - 0.5 * self.intrinsics.display_width as f64) * self.pitch;
        let ty = (0.5 * self.intrinsics.display_height as f64 - v) * self.pitch;
        let direction = (self.forward + tx * self.right + ty * self.up).normalize();
        Ray {
            origin: self.pose.position,
            direction,
        }
    }
}

pub fn view_projection(
    pose: &CameraPose,
    intrinsics: &Intrinsics,
    enlarged: bool,
) -> Result<ViewProjection, CameraError> {
    Ok(Camera::new(*pose, *intrinsics)?.view_projection(enlarged))
}

pub fn primary_ray(
    pose: &CameraPose,
    intrinsics: &Intrinsics,
    px: f64,
    py: f64,
    enlarged: bool,
) -> Result<Ray, CameraError> {
    Ok(Camera::new(*pose, *intrinsics)?.primary_ray(px, py, enlarged))
}

/// Projects a world point to continuous pixel coordinates of a
/// `buffer_w x buffer_h` buffer. `None` for points behind the camera.
pub fn project_to_pixel(
    vp: &ViewProjection,
    world: DVec3,
    buffer_w: u32,
    buffer_h: u32,
) -> Option<PixelSample> {
    let clip = vp.0 * world.extend(1.0);
    if !(clip.w > 0.0) {
        return None;
    }
    let inv_w = 1.0 / clip.w;
    let ndc_x = clip.x * inv_w;
    let ndc_y = clip.y * inv_w;
    Some(PixelSample {
        x: 0.5 * (ndc_x + 1.0) * buffer_w as f64,
        y: 0.5 * (1.0 - ndc_y) * buffer_h as f64,
        depth: clip.z * inv_w,
    })
}
