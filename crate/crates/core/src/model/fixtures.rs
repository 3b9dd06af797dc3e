//! Small hand-built plans shared by tests, examples and benchmarks.

use super::filter::{FilterFn, FilterSpec};
use super::operator::{AggFn, Edge, OpId, OperatorKind, OperatorSpec, Partitioning};
use super::plan::{QueryPlan, SourceStream, StructureTag, SyntheticStructure};
use super::stream::{Arrival, StreamSpec};
use super::value::{DataType, TupleSchema, Value};
use super::window::{WindowPolicy, WindowSpec};

fn stream() -> StreamSpec {
    StreamSpec::new(TupleSchema::new(vec![DataType::Integer, DataType::Double]), 1000.0, Arrival::Uniform)
        .with_key_domain(10)
}

/// `source -> filter(field1 >= 0) -> sink`, all forward, parallelism 1.
pub fn filter_plan() -> QueryPlan {
    QueryPlan {
        id: "filter".into(),
        structure_tag: StructureTag::Synthetic(SyntheticStructure::Linear),
        operators: vec![
            OperatorSpec::new(0, OperatorKind::Source),
            OperatorSpec::new(
                1,
                OperatorKind::Filter { filter: FilterSpec::new(1, FilterFn::Ge, Value::Double(0.0)) },
            ),
            OperatorSpec::new(2, OperatorKind::Sink),
        ],
        edges: vec![
            Edge::new(OpId(0), OpId(1), Partitioning::Forward),
            Edge::new(OpId(1), OpId(2), Partitioning::Forward),
        ],
        streams: vec![SourceStream { source: OpId(0), spec: stream() }],
        coerced_edges: vec![],
    }
}

/// `source -> filter -> keyed tumbling count sum(3) -> sink`.
pub fn linear_plan() -> QueryPlan {
    QueryPlan {
        id: "linear".into(),
        structure_tag: StructureTag::Synthetic(SyntheticStructure::Linear),
        operators: vec![
            OperatorSpec::new(0, OperatorKind::Source),
            OperatorSpec::new(
                1,
                OperatorKind::Filter { filter: FilterSpec::new(1, FilterFn::Ge, Value::Double(0.0)) },
            ),
            OperatorSpec::new(
                2,
                OperatorKind::WindowAggregate {
                    function: AggFn::Sum,
                    field: 1,
                    window: WindowSpec::tumbling(WindowPolicy::Count, 3),
                    key: Some(0),
                },
            ),
            OperatorSpec::new(3, OperatorKind::Sink),
        ],
        edges: vec![
            Edge::new(OpId(0), OpId(1), Partitioning::Forward),
            Edge::new(OpId(1), OpId(2), Partitioning::Hash { field: 0 }),
            Edge::new(OpId(2), OpId(3), Partitioning::Forward),
        ],
        streams: vec![SourceStream { source: OpId(0), spec: stream() }],
        coerced_edges: vec![],
    }
}

/// Two sources, one filter each, a keyed tumbling time join and a sink.
pub fn two_way_join_plan(window_ms: u64) -> QueryPlan {
    let filter = |id| {
        OperatorSpec::new(id, OperatorKind::Filter { filter: FilterSpec::new(1, FilterFn::Ge, Value::Double(0.0)) })
    };
    QueryPlan {
        id: "join".into(),
        structure_tag: StructureTag::Synthetic(SyntheticStructure::WayJoin(2)),
        operators: vec![
            OperatorSpec::new(0, OperatorKind::Source),
            OperatorSpec::new(1, OperatorKind::Source),
            filter(2),
            filter(3),
            OperatorSpec::new(
                4,
                OperatorKind::WindowJoin {
                    window: WindowSpec::tumbling(WindowPolicy::Time, window_ms),
                    left_key: 0,
                    right_key: 0,
                },
            ),
            OperatorSpec::new(5, OperatorKind::Sink),
        ],
        edges: vec![
            Edge::new(OpId(0), OpId(2), Partitioning::Forward),
            Edge::new(OpId(1), OpId(3), Partitioning::Forward),
            Edge::new(OpId(2), OpId(4), Partitioning::Hash { field: 0 }),
            Edge::new(OpId(3), OpId(4), Partitioning::Hash { field: 0 }).port(1),
            Edge::new(OpId(4), OpId(5), Partitioning::Forward),
        ],
        streams: vec![
            SourceStream { source: OpId(0), spec: stream() },
            SourceStream { source: OpId(1), spec: stream() },
        ],
        coerced_edges: vec![],
    }
}
