//! Experiment orchestration: reference renders, lockstep in-process runs,
//! real UDP client/server processes and parameter sweeps.

mod client;
mod config;
mod inproc;
mod real;
mod reference;
mod sweep;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::RgbImage;
use thiserror::Error;

pub use client::{ClientPipeline, DisplayedFrame, ReceiveStats};
pub use config::{ExperimentConfig, Mode};
pub use inproc::{run_inproc, InprocSession};
pub use real::{run_client, run_server};
pub use reference::{reference_frame, render_reference, ReferenceFrame};
pub use sweep::{run_sweep, SweepAxis, SweepPoint, AGGREGATE_COLUMNS};

use crate::camera::CameraError;
use crate::metrics::{write_frame_log, FrameLog, MetricsError};
use crate::predictor::PredictError;
use crate::scene::{load_scene, Scene, SceneError, Trajectory, TrajectoryError};
use crate::shading::ShadeError;
use crate::transport::TransportError;
use crate::visibility::BitmapError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Shade(#[from] ShadeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Bitmap(#[from] BitmapError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("writing {path}: {source}")]
    Image {
        path: String,
        #[source]
        source: image::ImageError,
    },
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Scene and camera path for a run.
#[derive(Clone)]
pub struct Assets {
    pub scene: Arc<Scene>,
    pub trajectory: Trajectory,
}

impl Assets {
    pub fn load(config: &ExperimentConfig) -> Result<Self, HarnessError> {
        let scene = load_scene(&config.scene, &config.lights)?;
        let trajectory = Trajectory::load(&config.trajectory)?;
        Ok(Self {
            scene: Arc::new(scene),
            trajectory,
        })
    }
}

/// Output directory layout: `config.toml`, `frames/frame_NNNNNN.png`,
/// `frame_log.csv`.
pub struct RunOutput {
    dir: PathBuf,
    write_frames: bool,
}

impl RunOutput {
    pub fn create(config: &ExperimentConfig) -> Result<Self, HarnessError> {
        let dir = config.output_dir.clone();
        let frames = dir.join("frames");
        std::fs::create_dir_all(&frames).map_err(io_error(&frames))?;
        let snapshot = dir.join("config.toml");
        std::fs::write(&snapshot, config.to_toml()?).map_err(io_error(&snapshot))?;
        Ok(Self {
            dir,
            write_frames: config.write_frames,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn frame_path(dir: &Path, n: u32) -> PathBuf {
        dir.join("frames").join(format!("frame_{n:06}.png"))
    }

    pub fn write_frame(&self, n: u32, image: &RgbImage) -> Result<(), HarnessError> {
        if !self.write_frames {
            return Ok(());
        }
        let path = Self::frame_path(&self.dir, n);
        image.save(&path).map_err(|source| HarnessError::Image {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn write_log(&self, logs: &[FrameLog]) -> Result<(), HarnessError> {
        Ok(write_frame_log(&self.dir.join("frame_log.csv"), logs)?)
    }
}

/// Per-frame logs of a finished run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub logs: Vec<FrameLog>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

impl RunSummary {
    /// Logs of frames that displayed a received bitmap.
    pub fn predicted(&self) -> impl Iterator<Item = &FrameLog> {
        self.logs.iter().filter(|l| l.m.is_some())
    }

    /// Mean of `f` over frames that displayed a received bitmap.
    pub fn mean_predicted(&self, f: impl Fn(&FrameLog) -> Option<f64>) -> Option<f64> {
        mean(self.predicted().filter_map(f))
    }

    /// Mean of `f` over every frame.
    pub fn mean_all(&self, f: impl Fn(&FrameLog) -> Option<f64>) -> Option<f64> {
        mean(self.logs.iter().filter_map(f))
    }
}
