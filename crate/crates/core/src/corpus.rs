//! Labeled run records in a line-delimited JSON file, and train/validation/test splits.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{ExecMode, PlacementPolicy};
use crate::model::{validate_plan, QueryPlan, StructureTag};

pub const HARNESS_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Labels {
    /// Mean of the per-run median latencies.
    pub median_latency_us: f64,
    pub throughput_tps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub id: u64,
    pub plan: QueryPlan,
    pub cluster: String,
    pub cluster_digest: String,
    /// Per-node (cores, speed factor), in node order.
    pub nodes: Vec<(u32, f64)>,
    pub placement: PlacementPolicy,
    pub slots_per_core: u32,
    /// Enumeration strategy that produced the parallelism assignment.
    pub strategy: String,
    pub duration_s: f64,
    pub labels: Labels,
    pub run_medians_us: Vec<f64>,
    pub mode: ExecMode,
    pub seed: u64,
    pub harness_version: String,
}

impl RunRecord {
    pub fn check(&self) -> Result<()> {
        let l = &self.labels;
        if !(l.median_latency_us > 0.0 && l.median_latency_us.is_finite() && l.throughput_tps > 0.0 && l.throughput_tps.is_finite()) {
            return Err(Error::InvalidArgument(format!("record {} has non-positive labels", self.id)));
        }
        if self.nodes.is_empty() {
            return Err(Error::InvalidArgument(format!("record {} has no cluster nodes", self.id)));
        }
        let report = validate_plan(&self.plan);
        if !report.is_ok() {
            return Err(Error::InvalidPlan { plan: self.plan.id.clone(), violations: report.messages() });
        }
        Ok(())
    }

    pub fn structure(&self) -> StructureTag {
        self.plan.structure_tag
    }
}

/// Reads every complete record. A partial final line (no trailing newline
/// and not parseable) is skipped with a warning.
pub fn load_records(path: &Path) -> Result<Vec<RunRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_records(BufReader::new(file), path)
}

pub fn parse_records<R: BufRead>(mut reader: R, path: &Path) -> Result<Vec<RunRecord>> {
    let mut records = Vec::new();
    let mut line = String::new();
    let mut number = 0;
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        number += 1;
        let complete = line.ends_with('\n');
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        match serde_json::from_str::<RunRecord>(text) {
            Ok(r) => {
                r.check().map_err(|e| Error::Parse { path: path.into(), line: number, message: e.to_string() })?;
                records.push(r);
            }
            Err(_) if !complete => {
                log::warn!("{}:{number}: ignoring partial trailing record", path.display());
            }
            Err(e) => return Err(Error::Parse { path: path.into(), line: number, message: e.to_string() }),
        }
    }
    Ok(records)
}

/// Appends records to a corpus file, assigning monotone ids.
pub struct CorpusWriter {
    path: PathBuf,
    file: File,
    next_id: u64,
}

impl CorpusWriter {
    /// Opens (creating if needed) a corpus. A partial trailing line left by
    /// an interrupted append is cut off before writing.
    pub fn open(path: &Path) -> Result<Self> {
        let io = |e| Error::io(path, e);
        let mut file = OpenOptions::new().create(true).truncate(false).read(true).write(true).open(path).map_err(io)?;
        let mut content = Vec::new();
        file.read_to_end(&mut content).map_err(io)?;
        let keep = match content.iter().rposition(|&b| b == b'\n') {
            Some(i) => i + 1,
            None => 0,
        };
        if keep < content.len() {
            log::warn!("{}: dropping {} bytes of partial trailing record", path.display(), content.len() - keep);
            file.set_len(keep as u64).map_err(io)?;
        }
        let records = parse_records(&content[..keep], path)?;
        let next_id = records.iter().map(|r| r.id + 1).max().unwrap_or(0);
        file.seek(SeekFrom::End(0)).map_err(io)?;
        Ok(CorpusWriter { path: path.to_path_buf(), file, next_id })
    }

    /// Creates an empty corpus, replacing any existing file.
    pub fn create(path: &Path) -> Result<Self> {
        File::create(path).map_err(|e| Error::io(path, e))?;
        Self::open(path)
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    /// Writes the record with the next id as one line and syncs it.
    pub fn append(&mut self, mut record: RunRecord) -> Result<u64> {
        record.id = self.next_id;
        record.check()?;
        let mut line = serde_json::to_vec(&record)?;
        line.push(b'\n');
        let io = |e| Error::io(&self.path, e);
        self.file.write_all(&line).map_err(io)?;
        self.file.sync_data().map_err(io)?;
        self.next_id += 1;
        Ok(record.id)
    }
}

pub fn append(path: &Path, record: RunRecord) -> Result<u64> {
    CorpusWriter::open(path)?.append(record)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "by", rename_all = "snake_case")]
pub enum SplitKey {
    ByRecord,
    /// Records of the held-out structures form the test set; the rest are
    /// split between training and validation.
    ByPlanStructure { held_out: Vec<StructureTag> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub key: SplitKey,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train: 0.8, val: 0.1, test: 0.1, key: SplitKey::ByRecord, seed: 0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<u64>,
    pub val: Vec<u64>,
    pub test: Vec<u64>,
}

impl SplitSpec {
    pub fn check(&self) -> Result<()> {
        let f = [self.train, self.val, self.test];
        if f.iter().any(|x| !(*x > 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("split fractions {f:?} must be positive and sum to 1")));
        }
        Ok(())
    }
}

fn shuffled(mut ids: Vec<u64>, seed: u64) -> Vec<u64> {
    ids.sort_unstable();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    ids
}

fn cut(ids: &[u64], fractions: &[f64]) -> Result<Vec<Vec<u64>>> {
    let n = ids.len();
    let total: f64 = fractions.iter().sum();
    let mut parts = Vec::new();
    let mut start = 0;
    for (i, f) in fractions.iter().enumerate() {
        let end = if i + 1 == fractions.len() { n } else { start + (f / total * n as f64).round() as usize };
        let end = end.min(n);
        if end <= start {
            return Err(Error::InvalidArgument(format!("split fractions {fractions:?} leave a part empty for {n} records")));
        }
        let mut part = ids[start..end].to_vec();
        part.sort_unstable();
        parts.push(part);
        start = end;
    }
    Ok(parts)
}

pub fn split(records: &[RunRecord], spec: &SplitSpec) -> Result<Split> {
    spec.check()?;
    if records.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    match &spec.key {
        SplitKey::ByRecord => {
            let ids = shuffled(records.iter().map(|r| r.id).collect(), spec.seed);
            let mut parts = cut(&ids, &[spec.train, spec.val, spec.test])?.into_iter();
            Ok(Split { train: parts.next().unwrap(), val: parts.next().unwrap(), test: parts.next().unwrap() })
        }
        SplitKey::ByPlanStructure { held_out } => {
            let (test, seen): (Vec<&RunRecord>, Vec<&RunRecord>) =
                records.iter().partition(|r| held_out.contains(&r.structure()));
            if test.is_empty() {
                return Err(Error::InvalidArgument("no records of the held-out structures".into()));
            }
            let ids = shuffled(seen.iter().map(|r| r.id).collect(), spec.seed);
            let mut parts = cut(&ids, &[spec.train, spec.val])?.into_iter();
            let mut test: Vec<u64> = test.iter().map(|r| r.id).collect();
            test.sort_unstable();
            Ok(Split { train: parts.next().unwrap(), val: parts.next().unwrap(), test })
        }
    }
}

/// Records with the given ids, in id order.
pub fn select<'a>(records: &'a [RunRecord], ids: &[u64]) -> Vec<&'a RunRecord> {
    let wanted: std::collections::HashSet<u64> = ids.iter().copied().collect();
    let mut out: Vec<&RunRecord> = records.iter().filter(|r| wanted.contains(&r.id)).collect();
    out.sort_by_key(|r| r.id);
    out
}
