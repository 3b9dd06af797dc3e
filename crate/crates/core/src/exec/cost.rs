use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{OperatorKind, UdoBehavior};

/// Execution cost of operators in microseconds of 1.0-speed core time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModelParams {
    pub source: f64,
    pub filter: f64,
    pub map: f64,
    pub flat_map: f64,
    pub aggregate_per_tuple: f64,
    pub aggregate_per_fire: f64,
    pub join_per_tuple: f64,
    pub join_per_match: f64,
    pub sink: f64,
    /// Per-tuple cost of each user-defined behavior, by behavior tag.
    pub udo: BTreeMap<String, f64>,
    /// Per tuple, per unit of log2(parallelism).
    pub coordination_overhead: f64,
    /// Per hop on a rebalance or hash edge.
    pub shuffle_cost: f64,
    /// Multiplies every processing cost (not network terms).
    pub scale: f64,
}

pub fn default_udo_costs() -> BTreeMap<String, f64> {
    [
        ("bfprt_outlier", 8.0),
        ("vwap", 3.0),
        ("bargain_index", 2.0),
        ("text_normalize", 4.0),
        ("sentiment_score", 6.0),
        ("repeat_visit", 2.0),
        ("geo_bucket", 3.0),
        ("topic_extract", 5.0),
        ("topic_threshold", 1.0),
        ("road_match", 6.0),
        ("ad_parse", 2.0),
        ("rolling_ctr", 3.0),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

impl Default for CostModelParams {
    fn default() -> Self {
        CostModelParams {
            source: 0.0,
            filter: 1.0,
            map: 1.0,
            flat_map: 1.0,
            aggregate_per_tuple: 2.0,
            aggregate_per_fire: 5.0,
            join_per_tuple: 3.0,
            join_per_match: 0.5,
            sink: 0.0,
            udo: default_udo_costs(),
            coordination_overhead: 0.25,
            shuffle_cost: 0.0,
            scale: 1.0,
        }
    }
}

impl CostModelParams {
    /// All processing and coordination costs zero.
    pub fn zero() -> Self {
        CostModelParams {
            filter: 0.0,
            map: 0.0,
            flat_map: 0.0,
            aggregate_per_tuple: 0.0,
            aggregate_per_fire: 0.0,
            join_per_tuple: 0.0,
            join_per_match: 0.0,
            udo: BTreeMap::new(),
            coordination_overhead: 0.0,
            ..Default::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        let all = [
            self.source,
            self.filter,
            self.map,
            self.flat_map,
            self.aggregate_per_tuple,
            self.aggregate_per_fire,
            self.join_per_tuple,
            self.join_per_match,
            self.sink,
            self.coordination_overhead,
            self.shuffle_cost,
            self.scale,
        ];
        if all.iter().chain(self.udo.values()).any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidArgument("execution costs must be finite and non-negative".into()));
        }
        Ok(())
    }

    fn udo_cost(&self, behavior: &UdoBehavior) -> f64 {
        self.udo.get(behavior.tag()).copied().unwrap_or(0.0)
    }

    /// Per-tuple processing cost of an operator kind, scaled.
    pub fn per_tuple(&self, kind: &OperatorKind) -> f64 {
        self.scale
            * match kind {
                OperatorKind::Source => self.source,
                OperatorKind::Filter { .. } => self.filter,
                OperatorKind::Map { .. } => self.map,
                OperatorKind::FlatMap { .. } => self.flat_map,
                OperatorKind::WindowAggregate { .. } => self.aggregate_per_tuple,
                OperatorKind::WindowJoin { .. } => self.join_per_tuple,
                OperatorKind::Udo { behavior, .. } => self.udo_cost(behavior),
                OperatorKind::Sink => self.sink,
            }
    }

    /// Cost of window fires and join matches, scaled.
    pub fn triggered(&self, fires: u64, matches: u64) -> f64 {
        self.scale * (fires as f64 * self.aggregate_per_fire + matches as f64 * self.join_per_match)
    }

    /// Coordination cost per tuple at an operator of parallelism `p`.
    pub fn overhead(&self, p: u32) -> f64 {
        if p > 1 {
            self.scale * self.coordination_overhead * (p as f64).log2()
        } else {
            0.0
        }
    }
}
