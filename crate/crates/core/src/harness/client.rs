//! The per-frame client pipeline shared by the simulated and UDP runs:
//! receive visibility, choose the frame to render, reproject, shade, measure.

use std::collections::BTreeMap;
use std::sync::Arc;

use image::RgbImage;

use crate::camera::{CameraPose, Intrinsics};
use crate::codec::{decode_packet, decompress_bitmap, CameraUpdatePacket, Packet, Reassembler};
use crate::gbuffer::{render_gbuffer, GBuffer};
use crate::metrics::{bitwise_error, psnr, ssim, FrameLog};
use crate::predictor::{
    choose_render_frame, missing_visibility, reproject_visibility, PoseHistory, Prediction, PredictionPolicy,
};
use crate::scene::Scene;
use crate::shading::{shade_frame, ShadingOptions};
use crate::transport::Delivery;
use crate::visibility::{trace_visibility, VisibilityBitmap};

use super::HarnessError;

/// Newest decoded bitmap.
#[derive(Debug, Clone)]
struct Received {
    frame: u32,
    bitmap: VisibilityBitmap,
}

/// What arrived during one poll.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ReceiveStats {
    pub bytes: u64,
    /// Set when a newer bitmap became current during this poll.
    pub response_time_ms: Option<f64>,
    pub compression_ratio: Option<f64>,
}

/// Everything produced for one displayed frame.
#[derive(Debug, Clone)]
pub struct DisplayedFrame {
    pub log: FrameLog,
    pub image: RgbImage,
    /// G-Buffer of the rendered frame `r`.
    pub gbuffer: GBuffer,
    /// The display-resolution visibility that was shaded.
    pub visibility: VisibilityBitmap,
    /// Present whenever a received bitmap was reprojected.
    pub prediction: Option<Prediction>,
    /// Oracle visibility traced at frame `r` when metrics are enabled.
    pub actual_visibility: Option<VisibilityBitmap>,
    /// Oracle image at frame `r` when metrics are enabled.
    pub reference_image: Option<RgbImage>,
}

pub struct ClientPipeline {
    scene: Arc<Scene>,
    intrinsics: Intrinsics,
    policy: PredictionPolicy,
    shading: ShadingOptions,
    frame_time_ms: f64,
    metrics: bool,
    history: PoseHistory,
    reassembler: Reassembler,
    sent_us: BTreeMap<u32, u64>,
    latest: Option<Received>,
}

impl ClientPipeline {
    pub fn new(
        scene: Arc<Scene>,
        intrinsics: Intrinsics,
        policy: PredictionPolicy,
        shading: ShadingOptions,
        frame_time_ms: f64,
        history_capacity: usize,
        metrics: bool,
    ) -> Self {
        Self {
            scene,
            intrinsics,
            policy,
            shading,
            frame_time_ms,
            metrics,
            history: PoseHistory::new(history_capacity, intrinsics),
            reassembler: Reassembler::new(),
            sent_us: BTreeMap::new(),
            latest: None,
        }
    }

    /// Frame of the bitmap currently used for prediction.
    pub fn latest_frame(&self) -> Option<u32> {
        self.latest.as_ref().map(|r| r.frame)
    }

    /// Records the pose of frame `n` and returns the camera update to send.
    pub fn begin_frame(&mut self, pose: CameraPose, now_us: u64) -> Result<Vec<u8>, HarnessError> {
        let n = pose.frame_index;
        self.history.record_pose(n, pose)?;
        self.sent_us.insert(n, now_us);
        Ok(CameraUpdatePacket::from_pose(&pose).encode().to_vec())
    }

    /// Feeds received datagrams into reassembly. A completed bitmap becomes
    /// current only if it is newer than the current one and not ahead of `n`.
    pub fn receive(&mut self, deliveries: Vec<Delivery>, n: u32, now_us: u64) -> ReceiveStats {
        let mut stats = ReceiveStats::default();
        for delivery in deliveries {
            stats.bytes += delivery.bytes.len() as u64;
            let chunk = match decode_packet(&delivery.bytes) {
                Ok(Packet::Chunk(c)) => c,
                Ok(Packet::Camera(_)) => {
                    log::warn!("client ignoring a camera update");
                    continue;
                }
                Err(e) => {
                    log::warn!("client dropping malformed datagram: {e}");
                    continue;
                }
            };
            let complete = match self.reassembler.accept(chunk, delivery.at_us) {
                Ok(Some(c)) => c,
                Ok(None) => continue,
                Err(e) => {
                    log::warn!("client reassembly error: {e}");
                    continue;
                }
            };
            if complete.frame > n {
                log::warn!("discarding bitmap {} from the future (client at {n})", complete.frame);
                continue;
            }
            if self.latest_frame().is_some_and(|m| complete.frame <= m) {
                continue;
            }
            let (w, h) = (self.intrinsics.buffer_width(true), self.intrinsics.buffer_height(true));
            let lights = self.scene.num_lights() as u32;
            match decompress_bitmap(&complete.compressed, w, h, lights, complete.frame) {
                Ok(bitmap) => {
                    stats.response_time_ms = self
                        .sent_us
                        .get(&complete.frame)
                        .map(|&sent| delivery.at_us.saturating_sub(sent) as f64 / 1000.0);
                    stats.compression_ratio = (!complete.compressed.is_empty())
                        .then(|| complete.uncompressed_len as f64 / complete.compressed.len() as f64);
                    self.latest = Some(Received {
                        frame: complete.frame,
                        bitmap,
                    });
                    self.sent_us = self.sent_us.split_off(&complete.frame);
                }
                Err(e) => log::warn!("client cannot decode bitmap {}: {e}", complete.frame),
            }
        }
        self.reassembler.expire(now_us);
        stats
    }

    /// Renders and measures the frame displayed at client frame `n`.
    pub fn render(&mut self, n: u32, stats: ReceiveStats) -> Result<DisplayedFrame, HarnessError> {
        let usable = self
            .latest
            .as_ref()
            .and_then(|rec| self.history.lookup(rec.frame).ok().map(|e| (rec, e.view_projection)));
        let intr = self.intrinsics;
        let lights = self.scene.num_lights() as u32;
        let (log_base, gbuffer, visibility, prediction) = match usable {
            Some((rec, old_vp)) => {
                let choice = choose_render_frame(n, rec.frame, self.policy.x_max)?;
                let pose = self.history.lookup(choice.r)?.pose;
                let gbuffer = render_gbuffer(&self.scene, &pose, &intr)?;
                let prediction = reproject_visibility(&rec.bitmap, &old_vp, &gbuffer, &intr)?;
                let log = FrameLog {
                    n,
                    r: choice.r,
                    m: Some(rec.frame),
                    p: Some(choice.p),
                    x: choice.x,
                    fallback_pixels: prediction.fallback_count(),
                    ..Default::default()
                };
                (log, gbuffer, prediction.visibility.clone(), Some(prediction))
            }
            None => {
                if let Some(rec) = &self.latest {
                    log::warn!("bitmap {} no longer has a recorded pose; using the missing-bitmap policy", rec.frame);
                }
                let pose = self.history.lookup(n)?.pose;
                let gbuffer = render_gbuffer(&self.scene, &pose, &intr)?;
                let vis = missing_visibility(self.policy.on_missing, intr.display_width, intr.display_height, lights, n);
                let log = FrameLog {
                    n,
                    r: n,
                    ..Default::default()
                };
                (log, gbuffer, vis, None)
            }
        };
        let frame = shade_frame(&gbuffer, &visibility, self.scene.lights(), self.scene.background(), self.shading)?;
        let image = frame.encode();
        let mut log = FrameLog {
            displayed_lag_ms: (n - log_base.r) as f64 * self.frame_time_ms,
            bytes_received: stats.bytes,
            response_time_ms: stats.response_time_ms,
            compression_ratio: stats.compression_ratio,
            ..log_base
        };

        let (mut actual_visibility, mut reference_image) = (None, None);
        if self.metrics {
            let actual = trace_visibility(&self.scene, &gbuffer.pose, &intr.without_guard())?;
            let valid = gbuffer.valid_mask();
            let err = bitwise_error(&actual, &visibility, Some(&valid))?;
            log.bitwise_error_mean = Some(err.mean);
            log.bitwise_error_per_light = Some(err.per_light);
            if let Some(pred) = &prediction {
                let edge: Vec<bool> = valid.iter().zip(&pred.outside_display).map(|(v, o)| *v && *o).collect();
                let edge_err = bitwise_error(&actual, &visibility, Some(&edge))?;
                log.edge_bitwise_error = (edge_err.compared_pixels > 0).then_some(edge_err.mean);
            }
            let reference = shade_frame(&gbuffer, &actual, self.scene.lights(), self.scene.background(), self.shading)?
                .encode();
            log.psnr_db = Some(psnr(&reference, &image)?);
            log.ssim = ssim(&reference, &image).ok();
            actual_visibility = Some(actual);
            reference_image = Some(reference);
        }
        Ok(DisplayedFrame {
            log,
            image,
            gbuffer,
            visibility,
            prediction,
            actual_visibility,
            reference_image,
        })
    }
}
