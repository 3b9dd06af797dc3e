use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::operator::{Edge, OpId, OperatorKind, OperatorSpec};
use super::stream::StreamSpec;
use super::value::TupleSchema;
use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SyntheticStructure {
    Linear,
    ChainedFilter(u8),
    WayJoin(u8),
}

impl SyntheticStructure {
    pub const ALL: [SyntheticStructure; 9] = [
        SyntheticStructure::Linear,
        SyntheticStructure::ChainedFilter(2),
        SyntheticStructure::ChainedFilter(3),
        SyntheticStructure::ChainedFilter(4),
        SyntheticStructure::WayJoin(2),
        SyntheticStructure::WayJoin(3),
        SyntheticStructure::WayJoin(4),
        SyntheticStructure::WayJoin(5),
        SyntheticStructure::WayJoin(6),
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AppCode {
    WC,
    MO,
    LR,
    LP,
    GCM,
    TPCH,
    BI,
    SA,
    SG,
    CA,
    SD,
    TT,
    TM,
    AD,
}

impl AppCode {
    pub const ALL: [AppCode; 14] = [
        AppCode::WC,
        AppCode::MO,
        AppCode::LR,
        AppCode::LP,
        AppCode::GCM,
        AppCode::TPCH,
        AppCode::BI,
        AppCode::SA,
        AppCode::SG,
        AppCode::CA,
        AppCode::SD,
        AppCode::TT,
        AppCode::TM,
        AppCode::AD,
    ];

    pub fn code(self) -> &'static str {
        match self {
            AppCode::WC => "WC",
            AppCode::MO => "MO",
            AppCode::LR => "LR",
            AppCode::LP => "LP",
            AppCode::GCM => "GCM",
            AppCode::TPCH => "TPCH",
            AppCode::BI => "BI",
            AppCode::SA => "SA",
            AppCode::SG => "SG",
            AppCode::CA => "CA",
            AppCode::SD => "SD",
            AppCode::TT => "TT",
            AppCode::TM => "TM",
            AppCode::AD => "AD",
        }
    }

    /// Number of independent queries the application defines.
    pub fn sub_queries(self) -> usize {
        match self {
            AppCode::LR => 4,
            AppCode::LP | AppCode::GCM | AppCode::SG | AppCode::CA => 2,
            _ => 1,
        }
    }
}

/// Structural family of a plan: one of the synthetic shapes or an application.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum StructureTag {
    Synthetic(SyntheticStructure),
    App(AppCode),
}

impl StructureTag {
    pub fn all_synthetic() -> impl Iterator<Item = StructureTag> {
        SyntheticStructure::ALL.into_iter().map(StructureTag::Synthetic)
    }
}

impl fmt::Display for StructureTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StructureTag::Synthetic(SyntheticStructure::Linear) => f.write_str("linear"),
            StructureTag::Synthetic(SyntheticStructure::ChainedFilter(k)) => write!(f, "{k}-chained-filter"),
            StructureTag::Synthetic(SyntheticStructure::WayJoin(k)) => write!(f, "{k}-way-join"),
            StructureTag::App(code) => f.write_str(code.code()),
        }
    }
}

impl FromStr for StructureTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(code) = AppCode::ALL.iter().find(|c| c.code().eq_ignore_ascii_case(s.trim())) {
            return Ok(StructureTag::App(*code));
        }
        let norm: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .map(|c| if c == ' ' || c == '_' { '-' } else { c })
            .collect();
        let unknown = || Error::UnknownStructure(s.to_string());
        if norm == "linear" {
            return Ok(StructureTag::Synthetic(SyntheticStructure::Linear));
        }
        let (k, rest) = norm.split_once('-').ok_or_else(unknown)?;
        let k: u8 = k.parse().map_err(|_| unknown())?;
        let tag = match rest {
            "chained-filter" | "chained-filters" if (2..=4).contains(&k) => SyntheticStructure::ChainedFilter(k),
            "way-join" if (2..=6).contains(&k) => SyntheticStructure::WayJoin(k),
            _ => return Err(unknown()),
        };
        Ok(StructureTag::Synthetic(tag))
    }
}

impl TryFrom<String> for StructureTag {
    type Error = Error;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<StructureTag> for String {
    fn from(t: StructureTag) -> String {
        t.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceStream {
    pub source: OpId,
    pub spec: StreamSpec,
}

/// A streaming query plan: a DAG of logical operators annotated with
/// parallelism degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryPlan {
    pub id: String,
    pub structure_tag: StructureTag,
    pub operators: Vec<OperatorSpec>,
    pub edges: Vec<Edge>,
    pub streams: Vec<SourceStream>,
    /// Forward edges turned into rebalance edges by parallelism assignment.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coerced_edges: Vec<(OpId, OpId)>,
}

impl QueryPlan {
    pub fn operator(&self, id: OpId) -> Option<&OperatorSpec> {
        self.operators.iter().find(|o| o.id == id)
    }

    pub fn operator_mut(&mut self, id: OpId) -> Option<&mut OperatorSpec> {
        self.operators.iter_mut().find(|o| o.id == id)
    }

    pub fn stream(&self, source: OpId) -> Option<&StreamSpec> {
        self.streams.iter().find(|s| s.source == source).map(|s| &s.spec)
    }

    /// Inbound edges of `id`, ordered by port.
    pub fn inputs(&self, id: OpId) -> Vec<&Edge> {
        let mut v: Vec<&Edge> = self.edges.iter().filter(|e| e.to == id).collect();
        v.sort_by_key(|e| e.port);
        v
    }

    pub fn outputs(&self, id: OpId) -> Vec<&Edge> {
        self.edges.iter().filter(|e| e.from == id).collect()
    }

    pub fn sources(&self) -> impl Iterator<Item = &OperatorSpec> {
        self.operators.iter().filter(|o| matches!(o.kind, OperatorKind::Source))
    }

    pub fn sink(&self) -> Option<&OperatorSpec> {
        self.operators.iter().find(|o| matches!(o.kind, OperatorKind::Sink))
    }

    pub fn max_parallelism(&self) -> u32 {
        self.operators.iter().map(|o| o.parallelism).max().unwrap_or(1)
    }

    pub fn total_instances(&self) -> usize {
        self.operators.iter().map(|o| o.parallelism as usize).sum()
    }

    /// Kahn topological order with ties broken by operator position; `None`
    /// if the graph has a cycle or dangling edge.
    pub fn topological_order(&self) -> Option<Vec<OpId>> {
        let index: BTreeMap<OpId, usize> = self.operators.iter().enumerate().map(|(i, o)| (o.id, i)).collect();
        let mut indegree = vec![0usize; self.operators.len()];
        for e in &self.edges {
            index.get(&e.from)?;
            indegree[*index.get(&e.to)?] += 1;
        }
        let mut ready: VecDeque<usize> = (0..self.operators.len()).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(self.operators.len());
        while let Some(i) = ready.pop_front() {
            let id = self.operators[i].id;
            order.push(id);
            for e in self.edges.iter().filter(|e| e.from == id) {
                let j = index[&e.to];
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    ready.push_back(j);
                }
            }
        }
        (order.len() == self.operators.len()).then_some(order)
    }

    /// Output schema of every operator, keyed by id. Errors name the first
    /// operator whose input cannot be consumed.
    pub fn derive_schemas(&self) -> Result<BTreeMap<OpId, TupleSchema>, (OpId, String)> {
        let order = self
            .topological_order()
            .ok_or_else(|| (self.operators.first().map(|o| o.id).unwrap_or(OpId(0)), "not a DAG".to_string()))?;
        let mut schemas = BTreeMap::new();
        for id in order {
            let op = self.operator(id).expect("id from order");
            let schema = if matches!(op.kind, OperatorKind::Source) {
                self.stream(id).map(|s| s.schema.clone()).ok_or_else(|| (id, "source has no stream".to_string()))?
            } else {
                let inputs: Vec<&TupleSchema> = self.inputs(id).iter().filter_map(|e| schemas.get(&e.from)).collect();
                op.kind.output_schema(&inputs).map_err(|m| (id, m))?
            };
            schemas.insert(id, schema);
        }
        Ok(schemas)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("plans always serialize")
    }
}
