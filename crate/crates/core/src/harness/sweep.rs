//! One in-process run per grid point along a single axis, summarized in
//! `aggregate.csv`.

use std::str::FromStr;

use crate::metrics::format_g6;

use super::{io_error, run_inproc, ExperimentConfig, HarnessError, RunOutput, RunSummary};

#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    XMax(Vec<u32>),
    /// `(guard_x, guard_y)` pairs.
    Guard(Vec<(u32, u32)>),
    /// Round-trip ping in milliseconds, split evenly between directions.
    Ping(Vec<f64>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::XMax(_) => "x_max",
            SweepAxis::Guard(_) => "guard",
            SweepAxis::Ping(_) => "ping",
        }
    }

    /// `(value label, config for that point)` for every grid point.
    fn points(&self, base: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
        let with = |label: String, edit: &dyn Fn(&mut ExperimentConfig)| {
            let mut c = base.clone();
            edit(&mut c);
            c.output_dir = base.output_dir.join(format!("{}_{label}", self.name()));
            (label, c)
        };
        match self {
            SweepAxis::XMax(v) => v.iter().map(|&x| with(x.to_string(), &|c| c.x_max = x)).collect(),
            SweepAxis::Guard(v) => v
                .iter()
                .map(|&(gx, gy)| {
                    with(format!("{gx}x{gy}"), &|c| {
                        c.guard_x = gx;
                        c.guard_y = gy;
                    })
                })
                .collect(),
            SweepAxis::Ping(v) => v
                .iter()
                .map(|&ping| with(format_g6(ping), &|c| c.network.base_delay_ms = ping / 2.0))
                .collect(),
        }
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    /// `x_max=0,1,2`, `guard=0x0,16x9,32x18` or `ping=0,55,110`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (axis, values) = s
            .split_once('=')
            .ok_or_else(|| format!("expected AXIS=V1,V2,... but got {s:?}"))?;
        let items: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
        if items.is_empty() {
            return Err(format!("sweep {axis:?} has no values"));
        }
        let num = |v: &str| v.parse::<u32>().map_err(|e| format!("{v:?}: {e}"));
        match axis.trim() {
            "x_max" => Ok(SweepAxis::XMax(items.into_iter().map(num).collect::<Result<_, _>>()?)),
            "guard" => Ok(SweepAxis::Guard(
                items
                    .into_iter()
                    .map(|v| {
                        let (gx, gy) = v.split_once('x').ok_or_else(|| format!("guard {v:?} is not GXxGY"))?;
                        Ok((num(gx)?, num(gy)?))
                    })
                    .collect::<Result<_, String>>()?,
            )),
            "ping" => Ok(SweepAxis::Ping(
                items
                    .into_iter()
                    .map(|v| v.parse::<f64>().map_err(|e| format!("{v:?}: {e}")))
                    .collect::<Result<_, _>>()?,
            )),
            other => Err(format!("unknown sweep axis {other:?} (x_max, guard, ping)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: String,
    pub summary: RunSummary,
}

pub const AGGREGATE_COLUMNS: [&str; 13] = [
    "axis",
    "value",
    "frames",
    "predicted_frames",
    "mean_p",
    "mean_x",
    "mean_displayed_lag_ms",
    "mean_bitwise_error",
    "mean_edge_bitwise_error",
    "mean_fallback_pixels",
    "mean_psnr_db",
    "mean_ssim",
    "mean_response_time_ms",
];

fn aggregate_record(axis: &str, point: &SweepPoint) -> Vec<String> {
    let s = &point.summary;
    let g = |v: Option<f64>| v.map(format_g6).unwrap_or_default();
    vec![
        axis.to_string(),
        point.value.clone(),
        s.logs.len().to_string(),
        s.predicted().count().to_string(),
        g(s.mean_predicted(|l| l.p.map(f64::from))),
        g(s.mean_predicted(|l| Some(l.x as f64))),
        g(s.mean_all(|l| Some(l.displayed_lag_ms))),
        g(s.mean_predicted(|l| l.bitwise_error_mean)),
        g(s.mean_predicted(|l| l.edge_bitwise_error)),
        g(s.mean_predicted(|l| Some(l.fallback_pixels as f64))),
        g(s.mean_predicted(|l| l.psnr_db)),
        g(s.mean_predicted(|l| l.ssim)),
        g(s.mean_all(|l| l.response_time_ms)),
    ]
}

/// Runs every grid point with the same network seed. Point outputs go to
/// `<output_dir>/<axis>_<value>/`; means over frames that displayed a
/// received bitmap go to `<output_dir>/aggregate.csv`.
pub fn run_sweep(config: &ExperimentConfig, axis: &SweepAxis) -> Result<Vec<SweepPoint>, HarnessError> {
    config.validate()?;
    RunOutput::create(config)?;
    let mut points = Vec::new();
    for (value, point_config) in axis.points(config) {
        log::info!("sweep {}={value}", axis.name());
        let summary = run_inproc(&point_config)?;
        points.push(SweepPoint { value, summary });
    }
    let path = config.output_dir.join("aggregate.csv");
    let file = std::fs::File::create(&path).map_err(io_error(&path))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let write = |w: &mut csv::Writer<_>| -> Result<(), csv::Error> {
        w.write_record(AGGREGATE_COLUMNS)?;
        for p in &points {
            w.write_record(aggregate_record(axis.name(), p))?;
        }
        w.flush()?;
        Ok(())
    };
    write(&mut w).map_err(|e| HarnessError::Metrics(e.into()))?;
    Ok(points)
}
