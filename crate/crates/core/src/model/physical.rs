use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::operator::{OpId, Partitioning};
use super::plan::QueryPlan;
use super::validate::validate_plan;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InstanceId {
    pub op: OpId,
    pub index: u32,
}

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.op, self.index)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Channel {
    /// Index into the logical plan's edge list.
    pub edge: usize,
    pub from: usize,
    pub to: usize,
    pub port: u8,
}

/// Outbound routing of one instance along one logical edge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutboundEdge {
    pub edge: usize,
    pub partitioning: Partitioning,
    /// Channel ids indexed by downstream instance index; a forward edge has
    /// a single entry.
    pub channels: Vec<usize>,
}

/// A plan expanded into operator instances and the channels between them.
#[derive(Clone, Debug)]
pub struct PhysicalPlan {
    /// Instances in topological-then-index order.
    pub instances: Vec<InstanceId>,
    pub channels: Vec<Channel>,
    /// Inbound channel ids per instance.
    pub inputs: Vec<Vec<usize>>,
    pub outputs: Vec<Vec<OutboundEdge>>,
    offsets: BTreeMap<OpId, usize>,
}

impl PhysicalPlan {
    pub fn instance_index(&self, id: InstanceId) -> Option<usize> {
        self.offsets.get(&id.op).map(|o| o + id.index as usize).filter(|&i| self.instances.get(i) == Some(&id))
    }

    pub fn instances_of(&self, op: OpId) -> impl Iterator<Item = usize> + '_ {
        let start = self.offsets.get(&op).copied().unwrap_or(usize::MAX);
        (start..self.instances.len()).take_while(move |&i| self.instances[i].op == op)
    }
}

pub fn expand_to_physical(plan: &QueryPlan) -> Result<PhysicalPlan> {
    let report = validate_plan(plan);
    if !report.is_ok() {
        return Err(Error::InvalidPlan { plan: plan.id.clone(), violations: report.messages() });
    }
    let order = plan.topological_order().expect("validated plans are acyclic");
    let mut instances = Vec::with_capacity(plan.total_instances());
    let mut offsets = BTreeMap::new();
    for id in &order {
        offsets.insert(*id, instances.len());
        let op = plan.operator(*id).expect("ordered id");
        instances.extend((0..op.parallelism).map(|index| InstanceId { op: *id, index }));
    }

    let mut channels = Vec::new();
    let mut inputs = vec![Vec::new(); instances.len()];
    let mut outputs = vec![Vec::new(); instances.len()];
    for (edge_idx, e) in plan.edges.iter().enumerate() {
        let up = plan.operator(e.from).unwrap().parallelism as usize;
        let down = plan.operator(e.to).unwrap().parallelism as usize;
        let (up0, down0) = (offsets[&e.from], offsets[&e.to]);
        for u in 0..up {
            let targets: Vec<usize> = match e.partitioning {
                Partitioning::Forward => vec![u],
                Partitioning::Rebalance | Partitioning::Hash { .. } => (0..down).collect(),
            };
            let mut ids = Vec::with_capacity(targets.len());
            for d in targets {
                let ch = channels.len();
                channels.push(Channel { edge: edge_idx, from: up0 + u, to: down0 + d, port: e.port });
                inputs[down0 + d].push(ch);
                ids.push(ch);
            }
            outputs[up0 + u].push(OutboundEdge { edge: edge_idx, partitioning: e.partitioning, channels: ids });
        }
    }
    Ok(PhysicalPlan { instances, channels, inputs, outputs, offsets })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{filter_plan, linear_plan};

    #[test]
    fn rebalance_expansion_counts() {
        let mut plan = filter_plan();
        plan.operators[1].parallelism = 3;
        plan.edges[0].partitioning = Partitioning::Rebalance;
        plan.edges[1].partitioning = Partitioning::Rebalance;
        let phys = expand_to_physical(&plan).unwrap();
        assert_eq!(phys.instances.len(), 5);
        assert_eq!(phys.channels.len(), 6);
    }

    #[test]
    fn parallelism_one_is_identity() {
        let plan = linear_plan();
        let phys = expand_to_physical(&plan).unwrap();
        assert_eq!(phys.instances.len(), plan.operators.len());
        assert_eq!(phys.channels.len(), plan.edges.len());
        for (c, e) in phys.channels.iter().zip(&plan.edges) {
            assert_eq!(phys.instances[c.from].op, e.from);
            assert_eq!(phys.instances[c.to].op, e.to);
        }
    }

    #[test]
    fn forward_pairs_instances() {
        let mut plan = filter_plan();
        plan.operators[0].parallelism = 2;
        plan.operators[1].parallelism = 2;
        plan.edges[1].partitioning = Partitioning::Rebalance;
        let phys = expand_to_physical(&plan).unwrap();
        let fwd: Vec<_> = phys.channels.iter().filter(|c| c.edge == 0).collect();
        assert_eq!(fwd.len(), 2);
        for c in fwd {
            assert_eq!(phys.instances[c.from].index, phys.instances[c.to].index);
        }
    }

    #[test]
    fn invalid_plan_is_rejected() {
        let mut plan = filter_plan();
        plan.operators[1].parallelism = 2;
        assert!(matches!(expand_to_physical(&plan), Err(Error::InvalidPlan { .. })));
    }
}
