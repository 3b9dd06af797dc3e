//! Flat feature vectors and plan graphs for the learned models.

use serde::{Deserialize, Serialize};

use crate::corpus::RunRecord;
use crate::enumerate::RuleContext;
use crate::exec::{assign_nodes, ClusterProfile, CostModelParams, NodeProfile};
use crate::model::{expand_to_physical, KindTag, OperatorKind, QueryPlan, WindowPolicy};

/// Changes whenever the meaning or order of any feature changes.
pub const FEATURE_VERSION: &str = "flat-2/graph-2";

pub const FLAT_FEATURES: [&str; 21] = [
    "count_source",
    "count_filter",
    "count_map",
    "count_flat_map",
    "count_window_aggregate",
    "count_window_join",
    "count_udo",
    "count_sink",
    "parallelism_sum",
    "parallelism_mean",
    "parallelism_max",
    "log_max_source_rate",
    "tuple_width",
    "mean_time_window_ms",
    "mean_count_window",
    "mean_slide_fraction",
    "mean_filter_selectivity",
    "cluster_cores",
    "cluster_mean_speed",
    "log_max_load",
    "log_total_source_rate",
];

pub const NODE_FEATURES: [&str; 17] = [
    "kind_source",
    "kind_filter",
    "kind_map",
    "kind_flat_map",
    "kind_window_aggregate",
    "kind_window_join",
    "kind_udo",
    "kind_sink",
    "log2_parallelism",
    "selectivity",
    "log_time_window_ms",
    "log_count_window",
    "slide_fraction",
    "log_source_rate",
    "node_cores",
    "node_speed",
    "log_load",
];

/// Tuples/s one 1.0-speed core sustains for a 1 us per-tuple cost.
const CORE_RATE: f64 = 1e6;

fn cluster_of(record: &RunRecord) -> ClusterProfile {
    let nodes = record
        .nodes
        .iter()
        .map(|&(cores, speed_factor)| NodeProfile { cores, speed_factor, ..NodeProfile::m510() })
        .collect();
    ClusterProfile { name: record.cluster.clone(), nodes }
}

/// Estimated input rate and per-instance load of each operator under default
/// costs, in plan order.
fn load_estimates(plan: &QueryPlan, cores: u32) -> Vec<(f64, f64)> {
    let ctx = RuleContext::from_plan(plan, CORE_RATE, cores.max(1));
    let rates = ctx.propagate(plan).unwrap_or_default();
    let cost = CostModelParams::default();
    plan.operators
        .iter()
        .map(|op| {
            let input = rates.get(&op.id).map(|r| r.0).unwrap_or(0.0);
            let per_tuple = cost.per_tuple(&op.kind) + cost.overhead(op.parallelism);
            (input, input * per_tuple / CORE_RATE / f64::from(op.parallelism.max(1)))
        })
        .collect()
}

/// Estimated busy fraction on a log scale. Absolute cost parameters are not
/// part of a record, so only ratios between loads carry meaning.
fn log_load(load: f64) -> f64 {
    load.max(1e-6).ln()
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub fn featurize_flat(record: &RunRecord) -> Vec<f64> {
    let plan = &record.plan;
    let mut counts = [0.0; 8];
    let (mut time_windows, mut count_windows, mut slides, mut selectivities) = (vec![], vec![], vec![], vec![]);
    for op in &plan.operators {
        counts[KindTag::ALL.iter().position(|k| *k == op.kind.tag()).expect("known kind")] += 1.0;
        if let Some(w) = op.kind.window() {
            match w.policy {
                WindowPolicy::Time => time_windows.push(w.length as f64),
                WindowPolicy::Count => count_windows.push(w.length as f64),
            }
            slides.push(w.slide_fraction());
        }
        if let OperatorKind::Filter { filter } = &op.kind {
            selectivities.push(filter.estimated_selectivity);
        }
    }
    let par: Vec<f64> = plan.operators.iter().map(|o| f64::from(o.parallelism)).collect();
    let rates: Vec<f64> = plan.streams.iter().map(|s| s.spec.event_rate).collect();
    let cores: u32 = record.nodes.iter().map(|n| n.0).sum();
    let speeds: Vec<f64> = record.nodes.iter().map(|n| n.1).collect();
    let peak = load_estimates(plan, cores).iter().map(|l| l.1).fold(0.0, f64::max);
    let mut v = counts.to_vec();
    v.extend([
        par.iter().sum(),
        mean(&par),
        par.iter().copied().fold(0.0, f64::max),
        rates.iter().copied().fold(0.0, f64::max).ln_1p(),
        plan.streams.iter().map(|s| s.spec.schema.width()).max().unwrap_or(0) as f64,
        mean(&time_windows),
        mean(&count_windows),
        if slides.is_empty() { 1.0 } else { mean(&slides) },
        if selectivities.is_empty() { 1.0 } else { mean(&selectivities) },
        f64::from(cores),
        mean(&speeds),
        log_load(peak),
        rates.iter().sum::<f64>().ln_1p(),
    ]);
    debug_assert_eq!(v.len(), FLAT_FEATURES.len());
    v
}

/// A plan as a DAG with one feature vector per operator.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanGraph {
    pub features: Vec<Vec<f64>>,
    /// (from, to) node indices, in dataflow direction.
    pub edges: Vec<(usize, usize)>,
    /// Predecessors of each node.
    pub preds: Vec<Vec<usize>>,
    pub order: Vec<usize>,
    pub sink: usize,
}

pub fn featurize_graph(record: &RunRecord) -> PlanGraph {
    let plan = &record.plan;
    let index = |id| plan.operators.iter().position(|o| o.id == id).expect("edge endpoint exists");
    let cluster = cluster_of(record);
    let cores: u32 = cluster.total_cores();
    let loads = load_estimates(plan, cores);

    // mean (cores, effective speed) of the nodes hosting each operator's instances
    let mut hosts = vec![(0.0, 0.0, 0usize); plan.operators.len()];
    if let Ok(phys) = expand_to_physical(plan) {
        if let Ok(placement) = assign_nodes(phys.instances.len(), &cluster, record.placement, record.slots_per_core) {
            let load = placement.load(cluster.nodes.len());
            for (i, inst) in phys.instances.iter().enumerate() {
                let n = placement.node_of(i);
                let node = &cluster.nodes[n];
                let eff = node.speed_factor * (f64::from(node.cores) / load[n] as f64).min(1.0);
                let h = &mut hosts[index(inst.op)];
                h.0 += f64::from(node.cores);
                h.1 += eff;
                h.2 += 1;
            }
        }
    }

    let features = plan
        .operators
        .iter()
        .enumerate()
        .map(|(i, op)| {
            let mut f = vec![0.0; NODE_FEATURES.len()];
            f[KindTag::ALL.iter().position(|k| *k == op.kind.tag()).expect("known kind")] = 1.0;
            f[8] = f64::from(op.parallelism).log2();
            f[9] = match &op.kind {
                OperatorKind::Filter { filter } => filter.estimated_selectivity,
                OperatorKind::Udo { behavior, .. } => behavior.expected_selectivity(),
                _ => 1.0,
            };
            if let Some(w) = op.kind.window() {
                match w.policy {
                    WindowPolicy::Time => f[10] = (w.length as f64).ln_1p(),
                    WindowPolicy::Count => f[11] = (w.length as f64).ln_1p(),
                }
                f[12] = w.slide_fraction();
            }
            f[13] = plan.stream(op.id).map(|s| s.event_rate.ln_1p()).unwrap_or(0.0);
            let (c, s, n) = hosts[i];
            if n > 0 {
                f[14] = c / n as f64;
                f[15] = s / n as f64;
            }
            f[16] = log_load(loads[i].1);
            f
        })
        .collect();

    let edges: Vec<(usize, usize)> = plan.edges.iter().map(|e| (index(e.from), index(e.to))).collect();
    let mut preds = vec![Vec::new(); plan.operators.len()];
    for &(a, b) in &edges {
        preds[b].push(a);
    }
    let order = plan.topological_order().expect("records hold valid plans").into_iter().map(index).collect();
    let sink = plan.operators.iter().position(|o| matches!(o.kind, OperatorKind::Sink)).expect("plan has a sink");
    PlanGraph { features, edges, preds, order, sink }
}

/// Per-dimension z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        let n = rows.len().max(1) as f64;
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..d)
            .map(|j| {
                let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 1e-24 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Normalizer { mean, std }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.mean).zip(&self.std).map(|((x, m), s)| (x - m) / s).collect()
    }
}
