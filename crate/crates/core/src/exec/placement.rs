use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::cluster::ClusterProfile;
use crate::error::{Error, Result};
use crate::model::PhysicalPlan;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementPolicy {
    RoundRobin,
    CapacityWeighted,
}

impl fmt::Display for PlacementPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlacementPolicy::RoundRobin => "round_robin",
            PlacementPolicy::CapacityWeighted => "capacity_weighted",
        })
    }
}

impl FromStr for PlacementPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "round_robin" => Ok(PlacementPolicy::RoundRobin),
            "capacity_weighted" => Ok(PlacementPolicy::CapacityWeighted),
            _ => Err(Error::InvalidArgument(format!("unknown placement policy `{s}`"))),
        }
    }
}

/// Node index per physical instance (same order as `PhysicalPlan::instances`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Placement {
    pub nodes: Vec<usize>,
}

impl Placement {
    pub fn node_of(&self, instance: usize) -> usize {
        self.nodes[instance]
    }

    pub fn load(&self, node_count: usize) -> Vec<usize> {
        let mut load = vec![0; node_count];
        for &n in &self.nodes {
            load[n] += 1;
        }
        load
    }

    /// Whether a channel between two instances stays on one node.
    pub fn is_local(&self, a: usize, b: usize) -> bool {
        self.nodes[a] == self.nodes[b]
    }
}

pub fn place(
    physical: &PhysicalPlan,
    cluster: &ClusterProfile,
    policy: PlacementPolicy,
    slots_per_core: u32,
) -> Result<Placement> {
    assign_nodes(physical.instances.len(), cluster, policy, slots_per_core)
}

/// Places `n` instances given in topological-then-index order.
pub fn assign_nodes(n: usize, cluster: &ClusterProfile, policy: PlacementPolicy, slots_per_core: u32) -> Result<Placement> {
    let slots: Vec<usize> = cluster.nodes.iter().map(|node| (node.cores * slots_per_core.max(1)) as usize).collect();
    let available: usize = slots.iter().sum();
    if n > available {
        return Err(Error::Placement { cluster: cluster.name.clone(), needed: n, available });
    }
    let nodes = match policy {
        PlacementPolicy::RoundRobin => {
            let mut used = vec![0usize; slots.len()];
            let mut cursor = 0;
            (0..n)
                .map(|_| {
                    while used[cursor] >= slots[cursor] {
                        cursor = (cursor + 1) % slots.len();
                    }
                    let node = cursor;
                    used[node] += 1;
                    cursor = (cursor + 1) % slots.len();
                    node
                })
                .collect()
        }
        PlacementPolicy::CapacityWeighted => {
            let quotas = weighted_quotas(cluster, &slots, n);
            smooth_weighted(&quotas, n)
        }
    };
    Ok(Placement { nodes })
}

/// Instance counts per node proportional to `cores * speed_factor`, by
/// cumulative ceiling so earlier nodes win rounding ties, then capped at
/// each node's slots with overflow moved to the next node with room.
fn weighted_quotas(cluster: &ClusterProfile, slots: &[usize], n: usize) -> Vec<usize> {
    let weights: Vec<f64> = cluster.nodes.iter().map(|x| x.cores as f64 * x.speed_factor).collect();
    let total: f64 = weights.iter().sum();
    let mut quotas = Vec::with_capacity(weights.len());
    let mut cum = 0.0;
    let mut assigned = 0usize;
    for w in &weights {
        cum += w;
        // guard against float drift pushing the last boundary past n
        let upto = (((n as f64) * cum / total) - 1e-9).ceil().clamp(0.0, n as f64) as usize;
        quotas.push(upto.saturating_sub(assigned));
        assigned = assigned.max(upto);
    }
    if let Some(last) = quotas.last_mut() {
        *last += n - assigned;
    }
    let mut overflow = 0;
    for (q, s) in quotas.iter_mut().zip(slots) {
        if *q > *s {
            overflow += *q - *s;
            *q = *s;
        }
    }
    let mut i = 0;
    while overflow > 0 {
        if quotas[i] < slots[i] {
            quotas[i] += 1;
            overflow -= 1;
        } else {
            i = (i + 1) % quotas.len();
        }
    }
    quotas
}

/// Interleaves nodes so each receives exactly its quota.
fn smooth_weighted(quotas: &[usize], n: usize) -> Vec<usize> {
    let mut credit = vec![0i64; quotas.len()];
    (0..n)
        .map(|_| {
            for (c, q) in credit.iter_mut().zip(quotas) {
                *c += *q as i64;
            }
            let best = (0..quotas.len()).max_by_key(|&i| (credit[i], std::cmp::Reverse(i))).expect("non-empty");
            credit[best] -= n as i64;
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::cluster::NodeProfile;
    use crate::model::fixtures::filter_plan;
    use crate::model::{expand_to_physical, Partitioning};

    fn physical_with(count: u32) -> PhysicalPlan {
        let mut plan = filter_plan();
        plan.operators[1].parallelism = count - 2;
        for e in &mut plan.edges {
            e.partitioning = Partitioning::Rebalance;
        }
        expand_to_physical(&plan).unwrap()
    }

    #[test]
    fn round_robin_is_cyclic() {
        let c = ClusterProfile::parse("m510x10").unwrap();
        let p = place(&physical_with(5), &c, PlacementPolicy::RoundRobin, 1).unwrap();
        assert_eq!(p.nodes, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn singleton_goes_to_node_zero() {
        let c = ClusterProfile::new("x", vec![NodeProfile::m510(), NodeProfile::c6525_25g()]).unwrap();
        for policy in [PlacementPolicy::RoundRobin, PlacementPolicy::CapacityWeighted] {
            assert_eq!(assign_nodes(1, &c, policy, 1).unwrap().nodes, vec![0]);
        }
    }

    #[test]
    fn capacity_weighted_splits_by_cores() {
        let mut slow = NodeProfile::m510();
        slow.cores = 8;
        let mut fast = NodeProfile::m510();
        fast.cores = 16;
        let c = ClusterProfile::new("two", vec![slow, fast]).unwrap();
        let p = place(&physical_with(24), &c, PlacementPolicy::CapacityWeighted, 1).unwrap();
        assert_eq!(p.load(2), vec![8, 16]);
    }

    #[test]
    fn shortfall_is_reported() {
        let c = ClusterProfile::parse("m510x1").unwrap();
        match place(&physical_with(9), &c, PlacementPolicy::RoundRobin, 1) {
            Err(Error::Placement { needed: 9, available: 8, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(place(&physical_with(9), &c, PlacementPolicy::RoundRobin, 2).is_ok());
    }

    #[test]
    fn round_robin_skips_full_nodes() {
        let mut small = NodeProfile::m510();
        small.cores = 1;
        let c = ClusterProfile::new("s", vec![small, NodeProfile::m510()]).unwrap();
        let p = place(&physical_with(6), &c, PlacementPolicy::RoundRobin, 1).unwrap();
        assert_eq!(p.nodes, vec![0, 1, 1, 1, 1, 1]);
    }
}
