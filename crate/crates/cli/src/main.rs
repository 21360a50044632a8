use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dhr_core::harness::{
    render_reference, run_client, run_inproc, run_server, run_sweep, ExperimentConfig, Mode, RunSummary, SweepAxis,
};
use dhr_core::predictor::OnMissing;

/// Streamed shadow-visibility renderer: reference, simulated and UDP runs.
#[derive(Parser, Debug)]
#[command(name = "dhr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Zero-latency ground truth: visibility traced at every frame's own pose.
    Reference(Overrides),
    /// Client, simulated network and server in lockstep on a virtual clock.
    Inproc(Overrides),
    /// Client over real UDP, paced by the wall clock.
    Client(Overrides),
    /// Visibility server over real UDP.
    Server {
        #[command(flatten)]
        overrides: Overrides,
        /// Stop after this many seconds (runs until killed otherwise).
        #[arg(long)]
        duration_s: Option<f64>,
    },
    /// One inproc run per value of an axis, plus aggregate.csv.
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        /// `x_max=0,1,2`, `guard=0x0,16x9,32x18` or `ping=0,55,110`.
        #[arg(long)]
        axis: SweepAxis,
    },
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// Experiment TOML; flags below override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    lights: Option<PathBuf>,
    #[arg(long)]
    trajectory: Option<PathBuf>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
    #[arg(long)]
    guard_x: Option<u32>,
    #[arg(long)]
    guard_y: Option<u32>,
    #[arg(long)]
    vertical_fov_deg: Option<f64>,
    #[arg(long)]
    near: Option<f64>,
    #[arg(long)]
    far: Option<f64>,
    #[arg(long)]
    x_max: Option<u32>,
    #[arg(long)]
    frame_time_ms: Option<f64>,
    #[arg(long)]
    frames: Option<u32>,
    #[arg(long)]
    server_delay_ms: Option<f64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    metrics: Option<bool>,
    #[arg(long)]
    write_frames: Option<bool>,
    #[arg(long, value_parser = parse_on_missing)]
    on_missing: Option<OnMissing>,
    #[arg(long)]
    history_capacity: Option<usize>,
    #[arg(long)]
    inverse_square: Option<bool>,
    /// One-way delay per direction.
    #[arg(long)]
    base_delay_ms: Option<f64>,
    /// Round-trip ping; sets the one-way delay to half of it.
    #[arg(long, conflicts_with = "base_delay_ms")]
    ping_ms: Option<f64>,
    #[arg(long)]
    jitter_ms: Option<f64>,
    #[arg(long)]
    loss_prob: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    server_addr: Option<String>,
    #[arg(long)]
    server_bind: Option<String>,
    #[arg(long)]
    client_bind: Option<String>,
}

fn parse_on_missing(s: &str) -> Result<OnMissing, String> {
    match s {
        "empty_bitmap" => Ok(OnMissing::EmptyBitmap),
        "all_visible" => Ok(OnMissing::AllVisible),
        other => Err(format!("{other:?} is not empty_bitmap or all_visible")),
    }
}

macro_rules! apply {
    ($src:expr, $dst:expr, $($field:ident),*) => {
        $(if let Some(v) = $src.$field.clone() { $dst.$field = v; })*
    };
}

impl Overrides {
    fn resolve(&self, mode: Mode) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            None => match (&self.scene, &self.lights, &self.trajectory) {
                (Some(s), Some(l), Some(t)) => ExperimentConfig::new(s, l, t),
                _ => bail!("pass --config, or all of --scene, --lights and --trajectory"),
            },
        };
        apply!(
            self,
            config,
            scene,
            lights,
            trajectory,
            width,
            height,
            guard_x,
            guard_y,
            vertical_fov_deg,
            near,
            far,
            x_max,
            frame_time_ms,
            frames,
            server_delay_ms,
            output_dir,
            metrics,
            write_frames,
            on_missing,
            history_capacity,
            inverse_square,
            server_addr,
            server_bind,
            client_bind
        );
        apply!(self, config.network, base_delay_ms, jitter_ms, loss_prob, seed);
        if let Some(ping) = self.ping_ms {
            config.network.base_delay_ms = ping / 2.0;
        }
        config.mode = mode;
        config.validate()?;
        Ok(config)
    }
}

fn report(label: &str, summary: &RunSummary) {
    let mean = |f: &dyn Fn(&dhr_core::metrics::FrameLog) -> Option<f64>| summary.mean_predicted(f);
    println!("{label}: {} frames", summary.logs.len());
    if let Some(p) = mean(&|l| l.p.map(f64::from)) {
        println!("  mean p {p:.2}, mean x {:.2}", mean(&|l| Some(l.x as f64)).unwrap_or(0.0));
    }
    if let Some(e) = mean(&|l| l.bitwise_error_mean) {
        println!("  mean bitwise error {e:.6}");
    }
    if let (Some(p), Some(s)) = (mean(&|l| l.psnr_db), mean(&|l| l.ssim)) {
        println!("  mean PSNR {p:.2} dB, mean SSIM {s:.4}");
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Reference(o) => {
            let config = o.resolve(Mode::Reference)?;
            let summary = render_reference(&config)?;
            report("reference", &summary);
            println!("output: {}", config.output_dir.display());
        }
        Command::Inproc(o) => {
            let config = o.resolve(Mode::Inproc)?;
            let summary = run_inproc(&config)?;
            report("inproc", &summary);
            println!("output: {}", config.output_dir.display());
        }
        Command::Client(o) => {
            let config = o.resolve(Mode::Client)?;
            let summary = run_client(&config)?;
            report("client", &summary);
            println!("output: {}", config.output_dir.display());
        }
        Command::Server { overrides, duration_s } => {
            let config = overrides.resolve(Mode::Server)?;
            let stop = Arc::new(AtomicBool::new(false));
            if let Some(secs) = duration_s {
                let stop = stop.clone();
                std::thread::spawn(move || {
                    std::thread::sleep(Duration::from_secs_f64(secs));
                    stop.store(true, Ordering::Relaxed);
                });
            }
            run_server(&config, &stop)?;
        }
        Command::Sweep { overrides, axis } => {
            let config = overrides.resolve(Mode::Inproc)?;
            let points = run_sweep(&config, &axis)?;
            for point in &points {
                report(&format!("{}={}", axis.name(), point.value), &point.summary);
            }
            println!("aggregate: {}", config.output_dir.join("aggregate.csv").display());
        }
    }
    Ok(())
}
