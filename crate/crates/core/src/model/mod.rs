//! Core vocabulary: values, schemas, windows, filters, operators and plans.

mod category;
mod filter;
pub mod fixtures;
mod io;
mod operator;
mod physical;
mod plan;
mod stream;
mod validate;
mod value;
mod window;

pub use category::{categorize_parallelism, plan_category, ParallelismCategory};
pub use filter::{FilterFn, FilterSpec};
pub use io::{parse_plans, read_plans, write_plans};
pub use operator::{
    AggFn, Edge, FlatMapFn, KindTag, MapFn, OpId, OperatorKind, OperatorSpec, Partitioning, UdoBehavior,
};
pub use physical::{expand_to_physical, Channel, InstanceId, OutboundEdge, PhysicalPlan};
pub use plan::{AppCode, QueryPlan, SourceStream, StructureTag, SyntheticStructure};
pub use stream::{Arrival, StreamSpec, DEFAULT_STRING_CARDINALITY};
pub use validate::{validate_plan, ValidationReport, Violation};
pub use value::{encode_tuple, fnv1a, mix64, DataType, KeyVal, TupleSchema, Value};
pub use window::{WindowKind, WindowPolicy, WindowSpec, NANOS_PER_MILLI};

