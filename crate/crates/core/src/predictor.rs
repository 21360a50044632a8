//! Client-side frame selection and visibility reprojection.
//!
//! With `n` the client's current frame and `m` the newest complete bitmap,
//! the client is `p = n - m` frames behind. It bridges `x = min(x_max, p)` of
//! them by reprojecting bitmap `m` onto the G-Buffer of frame `r = m + x`, and
//! displays that frame with a lag of `p - x` frames.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{project_to_pixel, view_projection, CameraError, CameraPose, Intrinsics, ViewProjection};
use crate::gbuffer::GBuffer;
use crate::visibility::{all_lights_mask, VisibilityBitmap};

pub const DEFAULT_HISTORY_CAPACITY: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error("frame {frame} recorded after frame {last}")]
    NonMonotonic { frame: u32, last: u32 },
    #[error("frame {0} has been evicted from the pose history")]
    Evicted(u32),
    #[error("frame {0} was never recorded")]
    NotRecorded(u32),
    #[error("bitmap frame {m} is ahead of the client frame {n}")]
    FutureFrame { n: u32, m: u32 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Camera(#[from] CameraError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub frame: u32,
    pub pose: CameraPose,
    /// Projection onto the enlarged visibility buffer.
    pub view_projection: ViewProjection,
}

/// Ring buffer of the most recent camera poses and their enlarged view
/// projections.
#[derive(Debug, Clone)]
pub struct PoseHistory {
    capacity: usize,
    intrinsics: Intrinsics,
    entries: VecDeque<HistoryEntry>,
}

impl PoseHistory {
    pub fn new(capacity: usize, intrinsics: Intrinsics) -> Self {
        Self {
            capacity: capacity.max(1),
            intrinsics,
            entries: VecDeque::with_capacity(capacity.max(1)),
        }
    }

    pub fn record_pose(&mut self, frame: u32, pose: CameraPose) -> Result<(), PredictError> {
        if let Some(last) = self.entries.back() {
            if frame <= last.frame {
                return Err(PredictError::NonMonotonic {
                    frame,
                    last: last.frame,
                });
            }
        }
        let view_projection = view_projection(&pose, &self.intrinsics, true)?;
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(HistoryEntry {
            frame,
            pose,
            view_projection,
        });
        Ok(())
    }

    pub fn lookup(&self, frame: u32) -> Result<&HistoryEntry, PredictError> {
        match self.entries.binary_search_by_key(&frame, |e| e.frame) {
            Ok(i) => Ok(&self.entries[i]),
            Err(0) if self.entries.front().is_some_and(|e| frame < e.frame) => {
                Err(PredictError::Evicted(frame))
            }
            Err(_) => Err(PredictError::NotRecorded(frame)),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Shading input before any bitmap has arrived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnMissing {
    /// Shade with every light occluded.
    #[default]
    EmptyBitmap,
    /// Shade with every light visible.
    AllVisible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionPolicy {
    pub x_max: u32,
    pub on_missing: OnMissing,
}

/// `r = m + x` with `x = min(x_max, p)` and `p = n - m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderChoice {
    pub r: u32,
    pub x: u32,
    pub p: u32,
}

impl RenderChoice {
    /// Frames between the client's input and what it displays.
    pub fn lag(&self) -> u32 {
        self.p - self.x
    }
}

pub fn choose_render_frame(n: u32, m: u32, x_max: u32) -> Result<RenderChoice, PredictError> {
    if m > n {
        return Err(PredictError::FutureFrame { n, m });
    }
    let p = n - m;
    let x = x_max.min(p);
    Ok(RenderChoice { r: m + x, x, p })
}

/// Display-resolution visibility predicted for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub visibility: VisibilityBitmap,
    /// Pixels whose sample fell outside the received buffer and were set to
    /// fully illuminated.
    pub fallback: Vec<bool>,
    /// Pixels whose sample fell outside the old frame's display region,
    /// whether or not the guard band caught it.
    pub outside_display: Vec<bool>,
}

impl Prediction {
    pub fn fallback_count(&self) -> usize {
        self.fallback.iter().filter(|&&f| f).count()
    }
}

/// Visibility to shade with when no usable bitmap exists.
pub fn missing_visibility(
    on_missing: OnMissing,
    width: u32,
    height: u32,
    num_lights: u32,
    frame: u32,
) -> VisibilityBitmap {
    match on_missing {
        OnMissing::EmptyBitmap => VisibilityBitmap::new(width, height, num_lights, frame),
        OnMissing::AllVisible => VisibilityBitmap::all_visible(width, height, num_lights, frame),
    }
}

/// Gathers visibility for each G-Buffer pixel from the received (older,
/// enlarged) bitmap: the pixel's world position is projected into the old
/// camera and the nearest received pixel is copied. Samples outside the
/// received buffer become fully illuminated. Pixels without a surface are
/// filled with all bits set and never read.
pub fn reproject_visibility(
    received: &VisibilityBitmap,
    old_view_projection: &ViewProjection,
    gbuffer: &GBuffer,
    intrinsics: &Intrinsics,
) -> Result<Prediction, PredictError> {
    let (bw, bh) = (intrinsics.buffer_width(true), intrinsics.buffer_height(true));
    if received.width != bw || received.height != bh {
        return Err(PredictError::DimensionMismatch(format!(
            "received {}x{}, enlarged buffer is {bw}x{bh}",
            received.width, received.height
        )));
    }
    if gbuffer.width != intrinsics.display_width || gbuffer.height != intrinsics.display_height {
        return Err(PredictError::DimensionMismatch(format!(
            "G-Buffer {}x{}, display is {}x{}",
            gbuffer.width, gbuffer.height, intrinsics.display_width, intrinsics.display_height
        )));
    }
    let (ox, oy) = intrinsics.guard_offset();
    let display = ox..ox + intrinsics.display_width;
    let display_rows = oy..oy + intrinsics.display_height;
    let full = all_lights_mask(received.num_lights);
    let mut visibility = VisibilityBitmap::all_visible(
        gbuffer.width,
        gbuffer.height,
        received.num_lights,
        gbuffer.frame_index,
    );
    let count = (gbuffer.width * gbuffer.height) as usize;
    let mut fallback = vec![false; count];
    let mut outside_display = vec![false; count];

    for y in 0..gbuffer.height {
        for x in 0..gbuffer.width {
            let Some(surface) = gbuffer.get(x, y) else {
                continue;
            };
            let i = (y * gbuffer.width + x) as usize;
            let source = project_to_pixel(old_view_projection, surface.position, bw, bh)
                .and_then(|s| s.nearest_pixel(bw, bh));
            match source {
                Some((sx, sy)) => {
                    outside_display[i] = !(display.contains(&sx) && display_rows.contains(&sy));
                    visibility.pixel_mut(x, y).copy_from_slice(received.pixel(sx, sy));
                }
                None => {
                    outside_display[i] = true;
                    fallback[i] = true;
                    visibility.pixel_mut(x, y).copy_from_slice(&full);
                }
            }
        }
    }
    Ok(Prediction {
        visibility,
        fallback,
        outside_display,
    })
}
