//! Benchmark harness for parallel and distributed stream processing.
//!
//! The crate generates parallel query plans and data streams, assigns
//! operator parallelism, executes plans on an embedded engine over simulated
//! heterogeneous clusters, stores the results as a labeled corpus and trains
//! learned latency models on it.

pub mod error;
pub mod model;
pub mod enumerate;
pub mod workload;
pub mod metrics;
pub mod exec;
pub mod corpus;
pub mod learn;
pub mod pipeline;

pub use error::{Error, Result};
pub use corpus::{CorpusWriter, Labels, RunRecord, SplitSpec};
pub use enumerate::{EnumerationConfig, EnumerationStrategy};
pub use exec::{ClusterProfile, ExecConfig, ExecMode, NodeProfile, PlacementPolicy, RunResult};
pub use learn::{ModelKind, TrainConfig, TrainedModel};
pub use metrics::{LatencySummary, QErrorReport, SummaryRow};
pub use model::{ParallelismCategory, QueryPlan, StructureTag, WindowSpec};
pub use pipeline::{run_pipeline, HarnessConfig};
pub use workload::GeneratorConfig;
