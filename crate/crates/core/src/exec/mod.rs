//! Embedded stream-processing engine: expands a plan into instances, places
//! them on a cluster and executes it either as a deterministic discrete-event
//! simulation or with one thread per instance.

mod cluster;
mod cost;
mod engine;
mod feed;
mod logic;
mod placement;
mod sim;
mod threads;
mod udo;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cluster::{ClusterProfile, NodeProfile};
pub use cost::{default_udo_costs, CostModelParams};
pub use engine::{wire_bytes, END_OF_STREAM};
pub use logic::Tuple;
pub use placement::{assign_nodes, place, Placement, PlacementPolicy};
pub use sim::run_sim;
pub use threads::run_threads;
pub use udo::{bfprt_select, median as lower_median};

use crate::error::{Error, Result};
use crate::metrics;
use crate::model::{encode_tuple, expand_to_physical, mix64, QueryPlan, NANOS_PER_MILLI};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    #[default]
    Sim,
    Threads,
}

impl fmt::Display for ExecMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExecMode::Sim => "sim",
            ExecMode::Threads => "threads",
        })
    }
}

impl FromStr for ExecMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sim" => Ok(ExecMode::Sim),
            "threads" | "thread" => Ok(ExecMode::Threads),
            _ => Err(Error::InvalidArgument(format!("unknown execution mode `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecConfig {
    pub mode: ExecMode,
    /// Event-time length of every source stream.
    pub duration_s: f64,
    pub watermark_interval_ms: f64,
    pub cost: CostModelParams,
    pub placement: PlacementPolicy,
    pub slots_per_core: u32,
    /// Thread mode: wall seconds per simulated second.
    pub time_scale: f64,
    pub queue_capacity: usize,
    pub record_breakdown: bool,
    pub collect_outputs: bool,
    pub trace: bool,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            mode: ExecMode::Sim,
            duration_s: 1.0,
            watermark_interval_ms: 10.0,
            cost: CostModelParams::default(),
            placement: PlacementPolicy::RoundRobin,
            slots_per_core: 1,
            time_scale: 0.01,
            queue_capacity: 1024,
            record_breakdown: false,
            collect_outputs: false,
            trace: false,
        }
    }
}

impl ExecConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad("duration must be positive");
        }
        if !(self.watermark_interval_ms > 0.0 && self.watermark_interval_ms.is_finite()) {
            return bad("watermark interval must be positive");
        }
        if !(self.time_scale > 0.0 && self.time_scale.is_finite()) {
            return bad("time scale must be positive");
        }
        if self.queue_capacity == 0 || self.slots_per_core == 0 {
            return bad("queue capacity and slots per core must be positive");
        }
        self.cost.check()
    }

    pub fn duration_ns(&self) -> u64 {
        (self.duration_s * 1e9).round() as u64
    }

    pub fn watermark_interval_ns(&self) -> u64 {
        ((self.watermark_interval_ms * NANOS_PER_MILLI as f64).round() as u64).max(1)
    }
}

/// Where a sample's latency was spent, in microseconds. The parts sum to the latency.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub service: f64,
    pub overhead: f64,
    pub queue_wait: f64,
    pub network: f64,
    /// Time a contributing record spent buffered in operator state.
    pub window_wait: f64,
}

impl LatencyBreakdown {
    pub fn total(&self) -> f64 {
        self.service + self.overhead + self.queue_wait + self.network + self.window_wait
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t_us: f64,
    pub instance: String,
    pub tuple: u64,
    pub event: TraceKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceKind {
    Source,
    Arrive,
    Start,
    Finish,
    Deliver,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub plan_id: String,
    pub cluster: String,
    pub mode: ExecMode,
    pub run: usize,
    pub seed: u64,
    pub duration_s: f64,
    /// Source production to sink delivery, one per sink delivery.
    pub latencies_us: Vec<f64>,
    /// Record id of each delivery, parallel to `latencies_us`.
    pub sample_ids: Vec<u64>,
    /// Parallel to `latencies_us` when breakdowns are recorded (sim mode).
    pub breakdowns: Vec<LatencyBreakdown>,
    /// Sink tuples when collected.
    pub outputs: Vec<Tuple>,
    pub output_digest: String,
    pub throughput_tps: f64,
    pub trace: Vec<TraceEvent>,
    pub placement: Placement,
}

impl RunResult {
    pub fn deliveries(&self) -> usize {
        self.latencies_us.len()
    }

    pub fn median_latency_us(&self) -> f64 {
        metrics::median(&self.latencies_us).unwrap_or(f64::NAN)
    }
}

/// Order-independent digest of an output multiset.
#[derive(Default)]
pub struct OutputDigest {
    encoded: Vec<Vec<u8>>,
}

impl OutputDigest {
    pub fn add(&mut self, values: &[crate::model::Value]) {
        self.encoded.push(encode_tuple(values));
    }

    pub fn finish(mut self) -> String {
        self.encoded.sort_unstable();
        let mut h = Sha256::new();
        for e in &self.encoded {
            h.update(e);
        }
        hex::encode(h.finalize())
    }
}

pub fn output_digest<'a>(tuples: impl IntoIterator<Item = &'a [crate::model::Value]>) -> String {
    let mut d = OutputDigest::default();
    for t in tuples {
        d.add(t);
    }
    d.finish()
}

/// Expands, places and executes one run of a plan.
pub fn run_plan(plan: &QueryPlan, cluster: &ClusterProfile, cfg: &ExecConfig, seed: u64, run: usize) -> Result<RunResult> {
    cfg.check()?;
    cluster.check()?;
    let phys = expand_to_physical(plan)?;
    let placement = place(&phys, cluster, cfg.placement, cfg.slots_per_core)?;
    let mut result = match cfg.mode {
        ExecMode::Sim => run_sim(plan, &phys, cluster, &placement, cfg, seed)?,
        ExecMode::Threads => run_threads(plan, &phys, cluster, &placement, cfg, seed)?,
    };
    result.run = run;
    if result.latencies_us.is_empty() {
        return Err(Error::NoOutput);
    }
    Ok(result)
}

/// Results of repeated runs of one plan.
#[derive(Clone, Debug)]
pub struct ProtocolResult {
    pub runs: Vec<RunResult>,
    pub run_medians_us: Vec<f64>,
    pub mean_median_us: f64,
    pub mean_throughput_tps: f64,
}

impl ProtocolResult {
    pub fn summary(&self) -> Result<metrics::LatencySummary> {
        let runs: Vec<&[f64]> = self.runs.iter().map(|r| r.latencies_us.as_slice()).collect();
        metrics::summarize_runs(&runs)
    }
}

/// Seed of run `run` under protocol seed `seed`.
pub fn run_seed(seed: u64, run: usize) -> u64 {
    mix64(seed, run as u64)
}

/// Executes `runs` repetitions with derived seeds and reports per-run medians and their mean.
pub fn run_protocol(plan: &QueryPlan, cluster: &ClusterProfile, cfg: &ExecConfig, runs: usize, seed: u64) -> Result<ProtocolResult> {
    if runs == 0 {
        return Err(Error::InvalidArgument("at least one run is required".into()));
    }
    let results: Vec<RunResult> = (0..runs)
        .map(|i| run_plan(plan, cluster, cfg, run_seed(seed, i), i).map_err(|e| Error::AtRun { index: i, source: Box::new(e) }))
        .collect::<Result<_>>()?;
    let run_medians_us: Vec<f64> = results.iter().map(RunResult::median_latency_us).collect();
    let mean_median_us = metrics::mean(&run_medians_us);
    let mean_throughput_tps = metrics::mean(&results.iter().map(|r| r.throughput_tps).collect::<Vec<_>>());
    Ok(ProtocolResult { runs: results, run_medians_us, mean_median_us, mean_throughput_tps })
}

/// Writes trace events as JSON lines.
pub fn write_trace(path: &std::path::Path, events: &[TraceEvent]) -> Result<()> {
    use std::io::Write;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
