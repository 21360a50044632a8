//! Ground truth: every frame shaded with visibility traced at its own pose.

use image::RgbImage;

use crate::camera::{CameraPose, Intrinsics};
use crate::gbuffer::{render_gbuffer, GBuffer};
use crate::metrics::FrameLog;
use crate::scene::Scene;
use crate::shading::{shade_frame, ShadingOptions};
use crate::visibility::{trace_visibility, VisibilityBitmap};

use super::{Assets, ExperimentConfig, HarnessError, RunOutput, RunSummary};

pub struct ReferenceFrame {
    pub gbuffer: GBuffer,
    /// Display-resolution visibility traced at the frame's own pose.
    pub visibility: VisibilityBitmap,
    pub image: RgbImage,
}

pub fn reference_frame(
    scene: &Scene,
    pose: &CameraPose,
    intrinsics: &Intrinsics,
    shading: ShadingOptions,
) -> Result<ReferenceFrame, HarnessError> {
    let gbuffer = render_gbuffer(scene, pose, intrinsics)?;
    let visibility = trace_visibility(scene, pose, &intrinsics.without_guard())?;
    let image = shade_frame(&gbuffer, &visibility, scene.lights(), scene.background(), shading)?.encode();
    Ok(ReferenceFrame {
        gbuffer,
        visibility,
        image,
    })
}

pub fn render_reference(config: &ExperimentConfig) -> Result<RunSummary, HarnessError> {
    config.validate()?;
    let assets = Assets::load(config)?;
    let output = RunOutput::create(config)?;
    let intr = config.intrinsics();
    let mut logs = Vec::with_capacity(config.frames as usize);
    for n in 0..config.frames {
        let pose = assets.trajectory.sample(n)?.quantized();
        let frame = reference_frame(&assets.scene, &pose, &intr, config.shading())?;
        output.write_frame(n, &frame.image)?;
        logs.push(FrameLog {
            n,
            r: n,
            ..Default::default()
        });
    }
    output.write_log(&logs)?;
    Ok(RunSummary { logs })
}
