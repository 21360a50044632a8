//! Keyframed camera trajectories with linear interpolation.

use std::path::Path;

use glam::DVec3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::CameraPose;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("cannot read trajectory {path}: {message}")]
    Load { path: String, message: String },
    #[error("invalid trajectory: {0}")]
    Invalid(String),
    #[error("frame {frame} precedes the first keyframe {first}")]
    BeforeStart { frame: u32, first: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub frame: u32,
    pub position: DVec3,
    pub target: DVec3,
    pub up: DVec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub keyframes: Vec<Keyframe>,
}

impl Trajectory {
    pub fn new(keyframes: Vec<Keyframe>) -> Result<Self, TrajectoryError> {
        let t = Self { keyframes };
        t.validate()?;
        Ok(t)
    }

    /// A trajectory that holds one pose forever.
    pub fn fixed(position: DVec3, target: DVec3, up: DVec3) -> Self {
        Self {
            keyframes: vec![Keyframe {
                frame: 0,
                position,
                target,
                up,
            }],
        }
    }

    pub fn load(path: &Path) -> Result<Self, TrajectoryError> {
        let text = std::fs::read_to_string(path).map_err(|e| TrajectoryError::Load {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let t: Trajectory = toml::from_str(&text).map_err(|e| TrajectoryError::Load {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if self.keyframes.is_empty() {
            return Err(TrajectoryError::Invalid("no keyframes".into()));
        }
        for pair in self.keyframes.windows(2) {
            if pair[1].frame <= pair[0].frame {
                return Err(TrajectoryError::Invalid(format!(
                    "keyframe frames must increase strictly ({} then {})",
                    pair[0].frame, pair[1].frame
                )));
            }
        }
        for k in &self.keyframes {
            let view = (k.target - k.position).try_normalize();
            let up = k.up.try_normalize();
            match (view, up) {
                (Some(v), Some(u)) if v.cross(u).length() > 1e-6 => {}
                _ => {
                    return Err(TrajectoryError::Invalid(format!(
                        "keyframe {} has a degenerate view or up vector",
                        k.frame
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn first_frame(&self) -> u32 {
        self.keyframes[0].frame
    }

    /// Camera pose at `frame`: linear between bracketing keyframes, held at
    /// the last keyframe past the end.
    pub fn sample(&self, frame: u32) -> Result<CameraPose, TrajectoryError> {
        let first = self.first_frame();
        if frame < first {
            return Err(TrajectoryError::BeforeStart { frame, first });
        }
        let next = self.keyframes.partition_point(|k| k.frame <= frame);
        let a = &self.keyframes[next - 1];
        if a.frame == frame || next == self.keyframes.len() {
            return Ok(CameraPose::new(a.position, a.target, a.up, frame));
        }
        let b = &self.keyframes[next];
        let s = (frame - a.frame) as f64 / (b.frame - a.frame) as f64;
        let position = a.position.lerp(b.position, s);
        let target = a.target.lerp(b.target, s);
        let up = a.up.lerp(b.up, s);
        let forward = (target - position).normalize_or_zero();
        let up = (up - up.dot(forward) * forward)
            .try_normalize()
            .unwrap_or(a.up.normalize());
        Ok(CameraPose::new(position, target, up, frame))
    }
}

pub fn sample_trajectory(trajectory: &Trajectory, frame: u32) -> Result<CameraPose, TrajectoryError> {
    trajectory.sample(frame)
}
