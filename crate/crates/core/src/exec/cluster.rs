use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DEFAULT_LINK_LATENCY_US: f64 = 50.0;
pub const DEFAULT_BANDWIDTH_GBPS: f64 = 10.0;

/// One simulated machine. `speed_factor` is relative per-core speed with a
/// 2.0 GHz core as 1.0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeProfile {
    pub name: String,
    pub cores: u32,
    pub speed_factor: f64,
    #[serde(default)]
    pub ram_gb: f64,
    #[serde(default)]
    pub disk_gb: f64,
    /// One-way latency of a hop leaving this node, microseconds.
    #[serde(default = "default_latency")]
    pub link_latency_us: f64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_gbps: f64,
}

fn default_latency() -> f64 {
    DEFAULT_LINK_LATENCY_US
}

fn default_bandwidth() -> f64 {
    DEFAULT_BANDWIDTH_GBPS
}

impl NodeProfile {
    fn builtin(name: &str, cores: u32, ghz: f64, ram_gb: f64, disk_gb: f64) -> Self {
        NodeProfile {
            name: name.into(),
            cores,
            speed_factor: ghz / 2.0,
            ram_gb,
            disk_gb,
            link_latency_us: DEFAULT_LINK_LATENCY_US,
            bandwidth_gbps: DEFAULT_BANDWIDTH_GBPS,
        }
    }

    pub fn m510() -> Self {
        Self::builtin("m510", 8, 2.0, 64.0, 256.0)
    }

    pub fn c6525_25g() -> Self {
        Self::builtin("c6525_25g", 16, 2.2, 128.0, 480.0)
    }

    pub fn c6320() -> Self {
        Self::builtin("c6320", 28, 2.0, 256.0, 1024.0)
    }

    pub fn named(name: &str) -> Result<Self> {
        match name {
            "m510" => Ok(Self::m510()),
            "c6525_25g" | "c6525-25g" => Ok(Self::c6525_25g()),
            "c6320" => Ok(Self::c6320()),
            _ => Err(Error::UnknownProfile(name.to_string())),
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.cores == 0 || !(self.speed_factor > 0.0) || !self.speed_factor.is_finite() {
            return Err(Error::InvalidArgument(format!("node {}: cores and speed_factor must be positive", self.name)));
        }
        if !(self.link_latency_us >= 0.0) || !(self.bandwidth_gbps > 0.0) {
            return Err(Error::InvalidArgument(format!("node {}: invalid network link", self.name)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterProfile {
    pub name: String,
    pub nodes: Vec<NodeProfile>,
}

impl ClusterProfile {
    pub fn new(name: impl Into<String>, nodes: Vec<NodeProfile>) -> Result<Self> {
        let c = ClusterProfile { name: name.into(), nodes };
        c.check()?;
        Ok(c)
    }

    pub fn homogeneous(name: &str, count: usize) -> Result<Self> {
        let node = NodeProfile::named(name)?;
        Self::new(format!("{name}x{count}"), vec![node; count])
    }

    /// Parses `m510x10`, `m510x5+c6320x5` or a bare profile name (one node).
    pub fn parse(spec: &str) -> Result<Self> {
        let mut nodes = Vec::new();
        for part in spec.split('+').map(str::trim) {
            let (name, count) = match part.rsplit_once('x') {
                Some((n, c)) if !c.is_empty() && c.chars().all(|ch| ch.is_ascii_digit()) => {
                    (n, c.parse::<usize>().map_err(|_| Error::UnknownProfile(spec.to_string()))?)
                }
                _ => (part, 1),
            };
            let node = NodeProfile::named(name).map_err(|_| Error::UnknownProfile(spec.to_string()))?;
            nodes.extend(std::iter::repeat_n(node, count));
        }
        Self::new(spec.to_string(), nodes)
    }

    /// A profile spec, or a path to a TOML cluster file.
    pub fn resolve(spec: &str) -> Result<Self> {
        let path = Path::new(spec);
        if spec.ends_with(".toml") || path.is_file() {
            Self::load(path)
        } else {
            Self::parse(spec)
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: ClusterProfile = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        c.check()?;
        Ok(c)
    }

    pub fn check(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidArgument(format!("cluster {} has no nodes", self.name)));
        }
        self.nodes.iter().try_for_each(NodeProfile::check)
    }

    pub fn is_homogeneous(&self) -> bool {
        self.nodes.windows(2).all(|w| w[0] == w[1])
    }

    pub fn total_cores(&self) -> u32 {
        self.nodes.iter().map(|n| n.cores).sum()
    }

    pub fn mean_speed(&self) -> f64 {
        self.nodes.iter().map(|n| n.speed_factor).sum::<f64>() / self.nodes.len() as f64
    }

    /// SHA-256 over the node profiles, independent of the cluster's name.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(&self.nodes).expect("profiles serialize");
        hex::encode(Sha256::digest(json))
    }

    /// Every node's speed multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut c = self.clone();
        for n in &mut c.nodes {
            n.speed_factor *= factor;
        }
        c
    }
}
