//! Experiment configuration, loaded from TOML and overridable from the CLI.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::camera::Intrinsics;
use crate::predictor::{OnMissing, PredictionPolicy, DEFAULT_HISTORY_CAPACITY};
use crate::shading::ShadingOptions;
use crate::transport::NetworkConditions;

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Reference,
    #[default]
    Inproc,
    Client,
    Server,
}

fn default_width() -> u32 {
    320
}
fn default_height() -> u32 {
    180
}
fn default_guard_x() -> u32 {
    16
}
fn default_guard_y() -> u32 {
    9
}
fn default_fov() -> f64 {
    60.0
}
fn default_near() -> f64 {
    0.05
}
fn default_far() -> f64 {
    1000.0
}
fn default_frame_time() -> f64 {
    11.1
}
fn default_frames() -> u32 {
    240
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_true() -> bool {
    true
}
fn default_history() -> usize {
    DEFAULT_HISTORY_CAPACITY
}
fn default_server_addr() -> String {
    "127.0.0.1:7878".into()
}
fn default_server_bind() -> String {
    "0.0.0.0:7878".into()
}
fn default_client_bind() -> String {
    "0.0.0.0:0".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// OBJ geometry.
    pub scene: PathBuf,
    /// TOML with lights, materials and background.
    pub lights: PathBuf,
    /// TOML camera keyframes.
    pub trajectory: PathBuf,
    #[serde(default = "default_width")]
    pub width: u32,
    #[serde(default = "default_height")]
    pub height: u32,
    #[serde(default = "default_guard_x")]
    pub guard_x: u32,
    #[serde(default = "default_guard_y")]
    pub guard_y: u32,
    #[serde(default = "default_fov")]
    pub vertical_fov_deg: f64,
    #[serde(default = "default_near")]
    pub near: f64,
    #[serde(default = "default_far")]
    pub far: f64,
    #[serde(default)]
    pub x_max: u32,
    #[serde(default = "default_frame_time")]
    pub frame_time_ms: f64,
    #[serde(default = "default_frames")]
    pub frames: u32,
    #[serde(default)]
    pub server_delay_ms: f64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Compute per-frame error, PSNR and SSIM against the oracle.
    #[serde(default = "default_true")]
    pub metrics: bool,
    #[serde(default = "default_true")]
    pub write_frames: bool,
    #[serde(default)]
    pub on_missing: OnMissing,
    #[serde(default = "default_history")]
    pub history_capacity: usize,
    #[serde(default)]
    pub inverse_square: bool,
    #[serde(default = "default_server_addr")]
    pub server_addr: String,
    #[serde(default = "default_server_bind")]
    pub server_bind: String,
    #[serde(default = "default_client_bind")]
    pub client_bind: String,
    #[serde(default)]
    pub network: NetworkConditions,
}

impl ExperimentConfig {
    /// A config with defaults for everything but the asset paths.
    pub fn new(scene: impl Into<PathBuf>, lights: impl Into<PathBuf>, trajectory: impl Into<PathBuf>) -> Self {
        Self {
            scene: scene.into(),
            lights: lights.into(),
            trajectory: trajectory.into(),
            width: default_width(),
            height: default_height(),
            guard_x: default_guard_x(),
            guard_y: default_guard_y(),
            vertical_fov_deg: default_fov(),
            near: default_near(),
            far: default_far(),
            x_max: 0,
            frame_time_ms: default_frame_time(),
            frames: default_frames(),
            server_delay_ms: 0.0,
            mode: Mode::default(),
            output_dir: default_output(),
            metrics: true,
            write_frames: true,
            on_missing: OnMissing::default(),
            history_capacity: default_history(),
            inverse_square: false,
            server_addr: default_server_addr(),
            server_bind: default_server_bind(),
            client_bind: default_client_bind(),
            network: NetworkConditions::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Reads a config file; relative asset paths are taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut config = Self::from_toml(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.scene, &mut config.lights, &mut config.trajectory] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            vertical_fov: self.vertical_fov_deg.to_radians(),
            near: self.near,
            far: self.far,
            display_width: self.width,
            display_height: self.height,
            guard_x: self.guard_x,
            guard_y: self.guard_y,
        }
    }

    pub fn policy(&self) -> PredictionPolicy {
        PredictionPolicy {
            x_max: self.x_max,
            on_missing: self.on_missing,
        }
    }

    pub fn shading(&self) -> ShadingOptions {
        ShadingOptions {
            inverse_square: self.inverse_square,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        self.intrinsics()
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if !(self.frame_time_ms > 0.0 && self.frame_time_ms.is_finite()) {
            return bad(format!("frame_time_ms {} must be positive", self.frame_time_ms));
        }
        if !(self.server_delay_ms >= 0.0 && self.server_delay_ms.is_finite()) {
            return bad(format!("server_delay_ms {} must be >= 0", self.server_delay_ms));
        }
        if self.history_capacity == 0 {
            return bad("history_capacity must be at least 1".into());
        }
        self.network.validate().map_err(HarnessError::Config)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_takes_defaults() {
        let c = ExperimentConfig::from_toml("scene = 'a.obj'\nlights = 'a.toml'\ntrajectory = 't.toml'\n").unwrap();
        assert_eq!((c.width, c.height, c.guard_x, c.guard_y), (320, 180, 16, 9));
        assert_eq!(c.frame_time_ms, 11.1);
        assert_eq!(c.on_missing, OnMissing::EmptyBitmap);
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let mut c = ExperimentConfig::new("s.obj", "l.toml", "t.toml");
        c.network.base_delay_ms = 27.5;
        c.on_missing = OnMissing::AllVisible;
        c.mode = Mode::Reference;
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(ExperimentConfig::from_toml("scene='a'\nlights='b'\ntrajectory='c'\nbogus=1\n").is_err());
        let mut c = ExperimentConfig::new("s", "l", "t");
        c.network.loss_prob = 1.5;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::new("s", "l", "t");
        c.frame_time_ms = 0.0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::new("s", "l", "t");
        c.width = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn load_resolves_assets_next_to_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(&path, "scene='a.obj'\nlights='/abs/l.toml'\ntrajectory='sub/t.toml'\n").unwrap();
        let c = ExperimentConfig::load(&path).unwrap();
        assert_eq!(c.scene, dir.path().join("a.obj"));
        assert_eq!(c.lights, PathBuf::from("/abs/l.toml"));
        assert_eq!(c.trajectory, dir.path().join("sub/t.toml"));
    }
}
