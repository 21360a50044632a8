//! Client and server processes over real UDP with wall-clock frame pacing.

use std::sync::atomic::AtomicBool;
use std::time::{Duration, Instant};

use crate::transport::{ms_to_us, server_loop, Transport, UdpTransport, VisibilityServer};

use super::{Assets, ClientPipeline, ExperimentConfig, HarnessError, RunOutput, RunSummary};

/// Serves visibility on `config.server_bind` until `stop` is raised.
pub fn run_server(config: &ExperimentConfig, stop: &AtomicBool) -> Result<(), HarnessError> {
    config.validate()?;
    let assets = Assets::load(config)?;
    let mut port = UdpTransport::listen(config.server_bind.as_str())?;
    log::info!("serving visibility on {}", port.local_addr()?);
    let mut server = VisibilityServer::new(assets.scene, config.intrinsics(), ms_to_us(config.server_delay_ms));
    server_loop(&mut server, &mut port, stop);
    Ok(())
}

/// Displays `config.frames` frames at `frame_time_ms` intervals, never
/// waiting on the network.
pub fn run_client(config: &ExperimentConfig) -> Result<RunSummary, HarnessError> {
    config.validate()?;
    let assets = Assets::load(config)?;
    let mut port = UdpTransport::connect(config.client_bind.as_str(), config.server_addr.as_str())?;
    let output = RunOutput::create(config)?;
    let mut client = ClientPipeline::new(
        assets.scene,
        config.intrinsics(),
        config.policy(),
        config.shading(),
        config.frame_time_ms,
        config.history_capacity,
        config.metrics,
    );
    let frame_time = Duration::from_secs_f64(config.frame_time_ms / 1000.0);
    let start = Instant::now();
    let mut logs = Vec::with_capacity(config.frames as usize);
    for n in 0..config.frames {
        let due = start + frame_time * n;
        if let Some(wait) = due.checked_duration_since(Instant::now()) {
            std::thread::sleep(wait);
        }
        let now = start.elapsed().as_micros() as u64;
        let pose = assets.trajectory.sample(n)?.quantized();
        let update = client.begin_frame(pose, now)?;
        if let Err(e) = port.send(&update, now) {
            log::warn!("camera update {n} not sent: {e}");
        }
        let now = start.elapsed().as_micros() as u64;
        let stats = client.receive(port.poll(now), n, now);
        let shown = client.render(n, stats)?;
        output.write_frame(n, &shown.image)?;
        logs.push(shown.log);
    }
    output.write_log(&logs)?;
    Ok(RunSummary { logs })
}
