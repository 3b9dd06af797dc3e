use crate::model::{
    Edge, OpId, OperatorKind, OperatorSpec, Partitioning, QueryPlan, SourceStream, StreamSpec, StructureTag,
};

/// Incremental construction of a plan with sequential operator ids.
#[derive(Default)]
pub(crate) struct PlanBuilder {
    operators: Vec<OperatorSpec>,
    edges: Vec<Edge>,
    streams: Vec<SourceStream>,
}

impl PlanBuilder {
    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn add(&mut self, kind: OperatorKind) -> OpId {
        let id = self.operators.len() as u32;
        self.operators.push(OperatorSpec::new(id, kind));
        OpId(id)
    }

    pub fn source(&mut self, spec: StreamSpec) -> OpId {
        let id = self.add(OperatorKind::Source);
        self.streams.push(SourceStream { source: id, spec });
        id
    }

    pub fn connect(&mut self, from: OpId, to: OpId, partitioning: Partitioning, port: u8) {
        self.edges.push(Edge::new(from, to, partitioning).port(port));
    }

    /// Adds `kind` downstream of `from`.
    pub fn then(&mut self, from: OpId, kind: OperatorKind, partitioning: Partitioning) -> OpId {
        let id = self.add(kind);
        self.connect(from, id, partitioning, 0);
        id
    }

    pub fn sink(&mut self, from: OpId) -> OpId {
        self.then(from, OperatorKind::Sink, Partitioning::Forward)
    }

    pub fn finish(self, id: String, structure_tag: StructureTag) -> QueryPlan {
        QueryPlan {
            id,
            structure_tag,
            operators: self.operators,
            edges: self.edges,
            streams: self.streams,
            coerced_edges: vec![],
        }
    }
}
