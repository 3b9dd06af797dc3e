//! Latency summaries, throughput and prediction q-error.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to predictions before forming ratios.
pub const PREDICTION_FLOOR: f64 = 1e-6;

/// Nearest-rank percentile of sorted samples: the value at rank `ceil(p * n)`.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn percentile(samples: &[f64], p: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("latency samples"));
    }
    Ok(percentile_sorted(&sorted(samples), p))
}

pub fn median(samples: &[f64]) -> Result<f64> {
    percentile(samples, 0.5)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub sample_count: usize,
    /// Median of each run, when samples are grouped by run.
    pub run_medians: Vec<f64>,
    pub mean_of_medians: Option<f64>,
}

pub fn summarize_latency(samples: &[f64]) -> Result<LatencySummary> {
    if samples.is_empty() {
        return Err(Error::Empty("latency samples"));
    }
    let s = sorted(samples);
    Ok(LatencySummary {
        p50: percentile_sorted(&s, 0.5),
        p95: percentile_sorted(&s, 0.95),
        p99: percentile_sorted(&s, 0.99),
        mean: mean(&s),
        min: s[0],
        max: s[s.len() - 1],
        sample_count: s.len(),
        run_medians: Vec::new(),
        mean_of_medians: None,
    })
}

/// Pooled summary over several runs plus per-run medians and their mean.
pub fn summarize_runs(runs: &[&[f64]]) -> Result<LatencySummary> {
    let pooled: Vec<f64> = runs.iter().flat_map(|r| r.iter().copied()).collect();
    let mut summary = summarize_latency(&pooled)?;
    summary.run_medians = runs.iter().map(|r| median(r)).collect::<Result<_>>()?;
    summary.mean_of_medians = Some(mean(&summary.run_medians));
    Ok(summary)
}

pub fn q_error(truth: f64, prediction: f64) -> Result<f64> {
    if !(truth > 0.0 && truth.is_finite()) {
        return Err(Error::InvalidArgument(format!("q-error truth must be positive, got {truth}")));
    }
    if prediction.is_nan() {
        return Err(Error::InvalidArgument("q-error prediction is NaN".into()));
    }
    let p = prediction.max(PREDICTION_FLOOR);
    Ok((truth / p).max(p / truth))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QErrorReport {
    pub median: f64,
    pub p95: f64,
    pub max: f64,
    pub n: usize,
}

pub fn q_error_report(pairs: &[(f64, f64)]) -> Result<QErrorReport> {
    if pairs.is_empty() {
        return Err(Error::Empty("prediction pairs"));
    }
    let q: Vec<f64> = pairs.iter().map(|&(c, p)| q_error(c, p)).collect::<Result<_>>()?;
    let s = sorted(&q);
    Ok(QErrorReport {
        median: percentile_sorted(&s, 0.5),
        p95: percentile_sorted(&s, 0.95),
        max: s[s.len() - 1],
        n: s.len(),
    })
}

pub fn throughput(deliveries: usize, duration_s: f64) -> Result<f64> {
    if !(duration_s > 0.0) {
        return Err(Error::InvalidArgument(format!("duration must be positive, got {duration_s}")));
    }
    Ok(deliveries as f64 / duration_s)
}

pub const SUMMARY_HEADER: &str = "plan_id,cluster,mode,runs,p50_us,p95_us,p99_us,mean_us,throughput_tps";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub plan_id: String,
    pub cluster: String,
    pub mode: String,
    pub runs: usize,
    pub p50_us: f64,
    pub p95_us: f64,
    pub p99_us: f64,
    pub mean_us: f64,
    pub throughput_tps: f64,
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidArgument(format!("{other:?}")),
    })?;
    if rows.is_empty() {
        w.write_record(SUMMARY_HEADER.split(','))?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a header line and pre-formatted rows.
pub fn write_csv<W: Write>(out: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}
