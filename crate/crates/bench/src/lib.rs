//! Shared inputs for the criterion benches.

use pdsp_core::corpus::{Labels, RunRecord, HARNESS_VERSION};
use pdsp_core::enumerate::apply_degrees;
use pdsp_core::exec::{ClusterProfile, ExecConfig, PlacementPolicy};
use pdsp_core::model::fixtures::two_way_join_plan;
use pdsp_core::model::{OpId, OperatorKind, QueryPlan};
use pdsp_core::pipeline::execute_plan;
use pdsp_core::workload::{generate_corpus, GeneratorConfig};

/// Every non-endpoint operator at degree `p`.
pub fn with_parallelism(plan: &QueryPlan, p: u32) -> QueryPlan {
    let ops: Vec<OpId> = plan
        .operators
        .iter()
        .filter(|o| !matches!(o.kind, OperatorKind::Source | OperatorKind::Sink))
        .map(|o| o.id)
        .collect();
    apply_degrees(plan, &ops, &vec![p; ops.len()])
}

/// A two-way join at `rate` tuples per second per source.
pub fn join_at(rate: f64, p: u32) -> QueryPlan {
    let mut plan = two_way_join_plan(5);
    for s in &mut plan.streams {
        s.spec.event_rate = rate;
        s.spec.key_domain = Some(10_000);
    }
    with_parallelism(&plan, p)
}

pub fn cluster() -> ClusterProfile {
    ClusterProfile::homogeneous("m510", 10).expect("builtin profile")
}

/// `n` labeled records from short simulated runs of generated plans.
pub fn corpus(n: usize) -> Vec<RunRecord> {
    let cfg = GeneratorConfig {
        count: n * 2,
        structures: vec!["linear".parse().unwrap(), "2-way-join".parse().unwrap()],
        event_rates: vec![1000.0, 5000.0],
        key_domains: vec![100, 1000],
        window_durations_ms: vec![50, 100],
        window_lengths: vec![2, 5],
        ..GeneratorConfig::default()
    };
    let exec = ExecConfig { duration_s: 0.5, ..ExecConfig::default() };
    let cluster = cluster();
    let mut out = Vec::new();
    for (i, plan) in generate_corpus(&cfg).expect("generator config is valid").iter().enumerate() {
        let plan = with_parallelism(plan, 1 + (i % 4) as u32);
        if let Ok((mut record, _)) = execute_plan(&plan, &cluster, &exec, 1, 1, "bench") {
            record.id = out.len() as u64;
            out.push(record);
        }
        if out.len() == n {
            break;
        }
    }
    out
}

/// A record wrapping `plan` with a placeholder label, for featurization.
pub fn unlabeled(plan: QueryPlan) -> RunRecord {
    let c = cluster();
    RunRecord {
        id: 0,
        plan,
        cluster: c.name.clone(),
        cluster_digest: c.digest(),
        nodes: c.nodes.iter().map(|n| (n.cores, n.speed_factor)).collect(),
        placement: PlacementPolicy::RoundRobin,
        slots_per_core: 1,
        strategy: "bench".into(),
        duration_s: 1.0,
        labels: Labels { median_latency_us: 1.0, throughput_tps: 1.0 },
        run_medians_us: vec![1.0],
        mode: Default::default(),
        seed: 0,
        harness_version: HARNESS_VERSION.into(),
    }
}
