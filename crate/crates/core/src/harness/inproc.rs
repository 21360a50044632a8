//! Lockstep simulation: client, simulated link and server advance together on
//! one virtual frame clock, so a run is a pure function of its config.

use crate::scene::Trajectory;
use crate::transport::{ms_to_us, SimNetwork, SimPort, TraceEvent, Transport, VirtualClock, VisibilityServer};

use super::{Assets, ClientPipeline, DisplayedFrame, ExperimentConfig, HarnessError, RunOutput, RunSummary};

pub struct InprocSession {
    trajectory: Trajectory,
    clock: VirtualClock,
    client_port: SimPort,
    server_port: SimPort,
    server: VisibilityServer,
    client: ClientPipeline,
}

impl InprocSession {
    pub fn new(config: &ExperimentConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        Self::with_assets(config, Assets::load(config)?)
    }

    pub fn with_assets(config: &ExperimentConfig, assets: Assets) -> Result<Self, HarnessError> {
        config.validate()?;
        let intr = config.intrinsics();
        let (client_port, server_port) = SimPort::pair(SimNetwork::new(config.network));
        let server = VisibilityServer::new(assets.scene.clone(), intr, ms_to_us(config.server_delay_ms));
        let client = ClientPipeline::new(
            assets.scene,
            intr,
            config.policy(),
            config.shading(),
            config.frame_time_ms,
            config.history_capacity,
            config.metrics,
        );
        Ok(Self {
            trajectory: assets.trajectory,
            clock: VirtualClock::new(config.frame_time_ms),
            client_port,
            server_port,
            server,
            client,
        })
    }

    /// The client frame the next `step` will display.
    pub fn current_frame(&self) -> u32 {
        self.clock.current_frame
    }

    pub fn frame_time_us(&self) -> u64 {
        self.clock.frame_time_us
    }

    /// Every datagram the simulated link has carried so far.
    pub fn network_trace(&self) -> Vec<TraceEvent> {
        self.client_port.network().trace().to_vec()
    }

    /// One tick: send the camera update for frame `n`, let the server answer
    /// whatever has arrived, collect what has reached the client, display.
    pub fn step(&mut self) -> Result<DisplayedFrame, HarnessError> {
        let n = self.clock.current_frame;
        let now = self.clock.now_us();
        let pose = self.trajectory.sample(n)?.quantized();
        let update = self.client.begin_frame(pose, now)?;
        self.client_port.send(&update, now)?;
        self.server.service(&mut self.server_port, now);
        let deliveries = self.client_port.poll(now);
        let stats = self.client.receive(deliveries, n, now);
        let shown = self.client.render(n, stats)?;
        self.clock.advance();
        Ok(shown)
    }
}

/// Runs `config.frames` lockstep ticks and writes frames, log and config.
pub fn run_inproc(config: &ExperimentConfig) -> Result<RunSummary, HarnessError> {
    let mut session = InprocSession::new(config)?;
    let output = RunOutput::create(config)?;
    let mut logs = Vec::with_capacity(config.frames as usize);
    for _ in 0..config.frames {
        let shown = session.step()?;
        output.write_frame(shown.log.n, &shown.image)?;
        logs.push(shown.log);
    }
    output.write_log(&logs)?;
    Ok(RunSummary { logs })
}
