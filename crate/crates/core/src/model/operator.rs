use std::fmt;

use serde::{Deserialize, Serialize};

use super::filter::FilterSpec;
use super::value::{DataType, TupleSchema};
use super::window::{WindowPolicy, WindowSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OpId(pub u32);

impl fmt::Display for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "op{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggFn {
    Min,
    Max,
    Avg,
    Mean,
    Sum,
}

impl AggFn {
    pub const ALL: [AggFn; 5] = [AggFn::Min, AggFn::Max, AggFn::Avg, AggFn::Mean, AggFn::Sum];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapFn {
    Identity,
    /// Appends an integer `1` column, the usual precursor of a windowed count.
    AppendOne,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum FlatMapFn {
    /// Splits a string field into `chunk`-character tokens, emitting `(token, 1)`.
    Tokenize { field: usize, chunk: usize },
}

/// Deterministic stand-ins for application-specific operators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "behavior", rename_all = "snake_case", deny_unknown_fields)]
pub enum UdoBehavior {
    /// Keyed: flags values exceeding `factor` times the median of the key's
    /// last `buffer` values; the median is found with BFPRT selection.
    BfprtOutlier { value_field: usize, buffer: usize, factor: f64 },
    /// Keyed: running volume-weighted average price.
    Vwap { price_field: usize, volume_field: usize },
    /// Emits quotes whose `vwap / price - 1` exceeds `threshold`.
    BargainIndex { threshold: f64 },
    /// Normalizes a text field.
    TextNormalize { text_field: usize },
    /// Keyword-table sentiment scoring.
    SentimentScore { text_field: usize },
    /// Keyed: running visit count per key.
    RepeatVisit,
    /// Maps an integer address to a region by modulo bucketing.
    GeoBucket { ip_field: usize, buckets: i64 },
    /// Splits text into fixed-size topic tokens, emitting `(topic, 1)`.
    TopicExtract { text_field: usize, chunk: usize },
    /// Passes aggregated topic counts at or above `min_count`.
    TopicThreshold { count_field: usize, min_count: f64 },
    /// Matches coordinates to the nearest road segment on a rounded grid.
    RoadMatch { lat_field: usize, lon_field: usize, speed_field: usize, grid: f64 },
    /// Parses an ad event into `(ad_id, 1)`.
    AdParse { ad_field: usize },
    /// Keyed: click-through rate of a joined (clicks, impressions) pair and
    /// its rolling mean over the last `window` values.
    RollingCtr { clicks_field: usize, impressions_field: usize, window: usize },
}

impl UdoBehavior {
    /// Whether the operator keeps per-key state (and therefore needs ordered input).
    pub fn is_keyed(&self) -> bool {
        matches!(
            self,
            UdoBehavior::BfprtOutlier { .. }
                | UdoBehavior::Vwap { .. }
                | UdoBehavior::RepeatVisit
                | UdoBehavior::RollingCtr { .. }
        )
    }

    pub fn tag(&self) -> &'static str {
        match self {
            UdoBehavior::BfprtOutlier { .. } => "bfprt_outlier",
            UdoBehavior::Vwap { .. } => "vwap",
            UdoBehavior::BargainIndex { .. } => "bargain_index",
            UdoBehavior::TextNormalize { .. } => "text_normalize",
            UdoBehavior::SentimentScore { .. } => "sentiment_score",
            UdoBehavior::RepeatVisit => "repeat_visit",
            UdoBehavior::GeoBucket { .. } => "geo_bucket",
            UdoBehavior::TopicExtract { .. } => "topic_extract",
            UdoBehavior::TopicThreshold { .. } => "topic_threshold",
            UdoBehavior::RoadMatch { .. } => "road_match",
            UdoBehavior::AdParse { .. } => "ad_parse",
            UdoBehavior::RollingCtr { .. } => "rolling_ctr",
        }
    }

    /// Expected output fan-out per input tuple, used for rate propagation.
    pub fn expected_selectivity(&self) -> f64 {
        match self {
            UdoBehavior::BfprtOutlier { .. } => 0.3,
            UdoBehavior::BargainIndex { .. } => 0.3,
            UdoBehavior::TopicExtract { .. } => 2.0,
            UdoBehavior::TopicThreshold { .. } => 0.5,
            _ => 1.0,
        }
    }

    pub fn output_schema(&self, input: &TupleSchema, key: Option<usize>) -> Result<TupleSchema, String> {
        use DataType::*;
        let need = |idx: usize, ok: &dyn Fn(DataType) -> bool, what: &str| -> Result<DataType, std::string::String> {
            match input.get(idx) {
                Some(t) if ok(t) => Ok(t),
                Some(t) => Err(format!("{} field {idx} is {t}, expected {what}", self.tag())),
                None => Err(format!("{} field {idx} out of range", self.tag())),
            }
        };
        let numeric = |t: DataType| t.is_numeric();
        let string = |t: DataType| t == String;
        let any = |_: DataType| true;
        let key_type = || -> Result<DataType, std::string::String> {
            let k = key.ok_or_else(|| format!("{} requires a key field", self.tag()))?;
            need(k, &any, "any")
        };
        Ok(TupleSchema::new(match self {
            UdoBehavior::BfprtOutlier { value_field, buffer, factor } => {
                if *buffer == 0 || !(factor.is_finite() && *factor > 0.0) {
                    return Err("bfprt_outlier needs a positive buffer and factor".into());
                }
                need(*value_field, &numeric, "numeric")?;
                vec![key_type()?, Double, Double]
            }
            UdoBehavior::Vwap { price_field, volume_field } => {
                need(*price_field, &numeric, "numeric")?;
                need(*volume_field, &numeric, "numeric")?;
                vec![key_type()?, Double, Double]
            }
            UdoBehavior::BargainIndex { .. } => {
                need(0, &any, "any")?;
                need(1, &|t| t == Double, "double")?;
                need(2, &|t| t == Double, "double")?;
                vec![input.fields[0], Double, Double]
            }
            UdoBehavior::TextNormalize { text_field } => {
                need(*text_field, &string, "string")?;
                vec![String]
            }
            UdoBehavior::SentimentScore { text_field } => {
                need(*text_field, &string, "string")?;
                vec![String, Double, String]
            }
            UdoBehavior::RepeatVisit => vec![key_type()?, Integer],
            UdoBehavior::GeoBucket { ip_field, buckets } => {
                if *buckets <= 0 {
                    return Err("geo_bucket needs positive buckets".into());
                }
                need(*ip_field, &|t| t == Integer, "integer")?;
                vec![String, Integer]
            }
            UdoBehavior::TopicExtract { text_field, chunk } => {
                if *chunk == 0 {
                    return Err("topic_extract chunk must be positive".into());
                }
                need(*text_field, &string, "string")?;
                vec![String, Integer]
            }
            UdoBehavior::TopicThreshold { count_field, .. } => {
                need(*count_field, &numeric, "numeric")?;
                input.fields.clone()
            }
            UdoBehavior::RoadMatch { lat_field, lon_field, speed_field, grid } => {
                if !(grid.is_finite() && *grid > 0.0) {
                    return Err("road_match grid must be positive".into());
                }
                need(*lat_field, &numeric, "numeric")?;
                need(*lon_field, &numeric, "numeric")?;
                need(*speed_field, &numeric, "numeric")?;
                vec![String, Double]
            }
            UdoBehavior::AdParse { ad_field } => {
                need(*ad_field, &any, "any")?;
                vec![input.fields[*ad_field], Integer]
            }
            UdoBehavior::RollingCtr { clicks_field, impressions_field, window } => {
                if *window == 0 {
                    return Err("rolling_ctr window must be positive".into());
                }
                need(*clicks_field, &numeric, "numeric")?;
                need(*impressions_field, &numeric, "numeric")?;
                vec![key_type()?, Double, Double]
            }
        }))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorKind {
    Source,
    Filter {
        filter: FilterSpec,
    },
    Map {
        function: MapFn,
    },
    FlatMap {
        function: FlatMapFn,
    },
    WindowAggregate {
        function: AggFn,
        /// Aggregated (numeric) field.
        field: usize,
        window: WindowSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        key: Option<usize>,
    },
    WindowJoin {
        window: WindowSpec,
        left_key: usize,
        right_key: usize,
    },
    Udo {
        name: String,
        behavior: UdoBehavior,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        key: Option<usize>,
    },
    Sink,
}

/// Operator kinds in a fixed order, used for one-hot encodings and counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KindTag {
    Source,
    Filter,
    Map,
    FlatMap,
    WindowAggregate,
    WindowJoin,
    Udo,
    Sink,
}

impl KindTag {
    pub const ALL: [KindTag; 8] = [
        KindTag::Source,
        KindTag::Filter,
        KindTag::Map,
        KindTag::FlatMap,
        KindTag::WindowAggregate,
        KindTag::WindowJoin,
        KindTag::Udo,
        KindTag::Sink,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KindTag::Source => "source",
            KindTag::Filter => "filter",
            KindTag::Map => "map",
            KindTag::FlatMap => "flat_map",
            KindTag::WindowAggregate => "window_aggregate",
            KindTag::WindowJoin => "window_join",
            KindTag::Udo => "udo",
            KindTag::Sink => "sink",
        }
    }
}

impl OperatorKind {
    pub fn tag(&self) -> KindTag {
        match self {
            OperatorKind::Source => KindTag::Source,
            OperatorKind::Filter { .. } => KindTag::Filter,
            OperatorKind::Map { .. } => KindTag::Map,
            OperatorKind::FlatMap { .. } => KindTag::FlatMap,
            OperatorKind::WindowAggregate { .. } => KindTag::WindowAggregate,
            OperatorKind::WindowJoin { .. } => KindTag::WindowJoin,
            OperatorKind::Udo { .. } => KindTag::Udo,
            OperatorKind::Sink => KindTag::Sink,
        }
    }

    /// Operators whose output depends on the order of their input and which
    /// therefore process records in event-time order.
    pub fn is_stateful(&self) -> bool {
        match self {
            OperatorKind::WindowAggregate { .. } | OperatorKind::WindowJoin { .. } => true,
            OperatorKind::Udo { behavior, .. } => behavior.is_keyed(),
            _ => false,
        }
    }

    pub fn window(&self) -> Option<&WindowSpec> {
        match self {
            OperatorKind::WindowAggregate { window, .. } | OperatorKind::WindowJoin { window, .. } => Some(window),
            _ => None,
        }
    }

    pub fn input_arity(&self) -> usize {
        match self {
            OperatorKind::Source => 0,
            OperatorKind::WindowJoin { .. } => 2,
            _ => 1,
        }
    }

    /// Output schema given the input schemas (left, right for joins).
    pub fn output_schema(&self, inputs: &[&TupleSchema]) -> Result<TupleSchema, String> {
        let input = || inputs.first().copied().ok_or_else(|| "missing input schema".to_string());
        match self {
            OperatorKind::Source => Err("source schema comes from its stream".into()),
            OperatorKind::Filter { filter } => {
                let s = input()?;
                filter.check_against(s.get(filter.field))?;
                if !(filter.estimated_selectivity > 0.0 && filter.estimated_selectivity <= 1.0) {
                    return Err(format!("filter selectivity {} outside (0, 1]", filter.estimated_selectivity));
                }
                Ok(s.clone())
            }
            OperatorKind::Map { function } => {
                let s = input()?;
                Ok(match function {
                    MapFn::Identity => s.clone(),
                    MapFn::AppendOne => {
                        let mut fields = s.fields.clone();
                        fields.push(DataType::Integer);
                        TupleSchema::new(fields)
                    }
                })
            }
            OperatorKind::FlatMap { function: FlatMapFn::Tokenize { field, chunk } } => {
                let s = input()?;
                if *chunk == 0 {
                    return Err("tokenize chunk must be positive".into());
                }
                match s.get(*field) {
                    Some(DataType::String) => Ok(TupleSchema::new(vec![DataType::String, DataType::Integer])),
                    _ => Err(format!("tokenize field {field} must be a string")),
                }
            }
            OperatorKind::WindowAggregate { field, window, key, .. } => {
                let s = input()?;
                window.check()?;
                match s.get(*field) {
                    Some(t) if t.is_numeric() => {}
                    Some(t) => return Err(format!("aggregate field {field} is {t}, expected numeric")),
                    None => return Err(format!("aggregate field {field} out of range")),
                }
                let mut fields = Vec::with_capacity(3);
                if let Some(k) = key {
                    fields.push(s.get(*k).ok_or_else(|| format!("aggregate key {k} out of range"))?);
                }
                fields.push(DataType::Double);
                fields.push(DataType::Integer);
                Ok(TupleSchema::new(fields))
            }
            OperatorKind::WindowJoin { window, left_key, right_key } => {
                window.check()?;
                if window.policy != WindowPolicy::Time {
                    return Err("join windows must be time based".into());
                }
                let (Some(l), Some(r)) = (inputs.first(), inputs.get(1)) else {
                    return Err("join needs two inputs".into());
                };
                let lt = l.get(*left_key).ok_or_else(|| format!("left join key {left_key} out of range"))?;
                let rt = r.get(*right_key).ok_or_else(|| format!("right join key {right_key} out of range"))?;
                if lt != rt {
                    return Err(format!("join key types differ: {lt} vs {rt}"));
                }
                Ok(l.concat(r))
            }
            OperatorKind::Udo { behavior, key, .. } => behavior.output_schema(input()?, *key),
            OperatorKind::Sink => Ok(input()?.clone()),
        }
    }
}

/// Routing of records from upstream instances to the instances of the
/// downstream operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "lowercase", deny_unknown_fields)]
pub enum Partitioning {
    Forward,
    Rebalance,
    Hash { field: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    pub id: OpId,
    pub kind: OperatorKind,
    pub parallelism: u32,
}

impl OperatorSpec {
    pub fn new(id: u32, kind: OperatorKind) -> Self {
        OperatorSpec { id: OpId(id), kind, parallelism: 1 }
    }
}

/// A logical edge. `port` distinguishes the left (0) and right (1) input of a join.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub from: OpId,
    pub to: OpId,
    pub partitioning: Partitioning,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub port: u8,
}

fn is_zero(p: &u8) -> bool {
    *p == 0
}

impl Edge {
    pub fn new(from: OpId, to: OpId, partitioning: Partitioning) -> Self {
        Edge { from, to, partitioning, port: 0 }
    }

    pub fn port(mut self, port: u8) -> Self {
        self.port = port;
        self
    }
}
