use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AggFn, Arrival, DataType, FilterFn, StructureTag, WindowKind, WindowPolicy};

pub const EVENT_RATES: [f64; 12] = [
    10.0, 100.0, 1e3, 5e3, 1e4, 5e4, 1e5, 2e5, 5e5, 1e6, 2e6, 4e6,
];
pub const WINDOW_DURATIONS_MS: [u64; 19] = [
    50, 100, 150, 200, 250, 325, 750, 1000, 1500, 2000, 2500, 3000, 4000, 5000, 6000, 7000, 8000, 9000, 10000,
];
pub const WINDOW_LENGTHS: [u64; 20] = [
    2, 3, 4, 5, 7, 10, 17, 25, 37, 50, 62, 75, 82, 100, 150, 200, 250, 300, 350, 400,
];
pub const SLIDE_RATIOS: [f64; 5] = [0.3, 0.4, 0.5, 0.6, 0.7];
pub const KEY_DOMAINS: [u32; 5] = [10, 50, 100, 500, 1000];

/// Parameter grid and selection for workload generation. Every list is a
/// set of values drawn from uniformly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub count: usize,
    pub structures: Vec<StructureTag>,
    /// Inclusive range of source tuple widths.
    pub tuple_width: [usize; 2],
    pub data_types: Vec<DataType>,
    pub event_rates: Vec<f64>,
    pub arrivals: Vec<Arrival>,
    /// Distinct values of the key field (field 0) of generated streams.
    pub key_domains: Vec<u32>,
    pub window_kinds: Vec<WindowKind>,
    pub window_policies: Vec<WindowPolicy>,
    pub window_durations_ms: Vec<u64>,
    pub window_lengths: Vec<u64>,
    pub slide_ratios: Vec<f64>,
    pub filter_functions: Vec<FilterFn>,
    pub agg_functions: Vec<AggFn>,
    /// Smallest acceptable estimated filter selectivity.
    pub selectivity_floor: f64,
    pub selectivity_sample: usize,
    /// Literal draws per filter before generation fails.
    pub literal_budget: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            count: 9,
            structures: StructureTag::all_synthetic().collect(),
            tuple_width: [1, 15],
            data_types: DataType::ALL.to_vec(),
            event_rates: EVENT_RATES.to_vec(),
            arrivals: vec![Arrival::Poisson],
            key_domains: KEY_DOMAINS.to_vec(),
            window_kinds: vec![WindowKind::Sliding, WindowKind::Tumbling],
            window_policies: vec![WindowPolicy::Count, WindowPolicy::Time],
            window_durations_ms: WINDOW_DURATIONS_MS.to_vec(),
            window_lengths: WINDOW_LENGTHS.to_vec(),
            slide_ratios: SLIDE_RATIOS.to_vec(),
            filter_functions: FilterFn::ALL.to_vec(),
            agg_functions: AggFn::ALL.to_vec(),
            selectivity_floor: 0.01,
            selectivity_sample: 10_000,
            literal_budget: 100,
        }
    }
}

impl GeneratorConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: GeneratorConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("generator config: {m}")));
        let [lo, hi] = self.tuple_width;
        if lo < 1 || lo > hi || hi > crate::model::TupleSchema::MAX_GENERATED_WIDTH {
            return bad("tuple_width must satisfy 1 <= min <= max <= 15");
        }
        if self.structures.is_empty() {
            return bad("structures is empty");
        }
        if self.data_types.is_empty() || self.arrivals.is_empty() || self.key_domains.is_empty() {
            return bad("data_types, arrivals and key_domains must be non-empty");
        }
        if self.event_rates.is_empty() || self.event_rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return bad("event_rates must be non-empty and positive");
        }
        if self.key_domains.contains(&0) {
            return bad("key_domains must be positive");
        }
        if self.window_kinds.is_empty() || self.window_policies.is_empty() {
            return bad("window kinds and policies must be non-empty");
        }
        if self.window_durations_ms.is_empty() || self.window_durations_ms.contains(&0) {
            return bad("window_durations_ms must be non-empty and positive");
        }
        if self.window_lengths.is_empty() || self.window_lengths.contains(&0) {
            return bad("window_lengths must be non-empty and positive");
        }
        if self.slide_ratios.is_empty() || self.slide_ratios.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            return bad("slide_ratios must lie in (0, 1]");
        }
        if self.filter_functions.is_empty() || self.agg_functions.is_empty() {
            return bad("filter and aggregate functions must be non-empty");
        }
        if !(self.selectivity_floor > 0.0 && self.selectivity_floor <= 1.0) {
            return bad("selectivity_floor must lie in (0, 1]");
        }
        if self.selectivity_sample == 0 || self.literal_budget == 0 {
            return bad("selectivity_sample and literal_budget must be positive");
        }
        Ok(())
    }
}
