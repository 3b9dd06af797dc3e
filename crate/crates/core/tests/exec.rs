mod common;

use common::reference::{evaluate, multiset};
use pdsp_core::exec::{
    output_digest, run_plan, run_protocol, run_seed, ClusterProfile, CostModelParams, ExecConfig, ExecMode,
    NodeProfile, TraceKind,
};
use pdsp_core::model::fixtures::{filter_plan, linear_plan, two_way_join_plan};
use pdsp_core::model::{
    AggFn, FilterFn, FilterSpec, OperatorKind, Partitioning, QueryPlan, Value, WindowPolicy, WindowSpec,
};
use pdsp_core::workload::estimate_selectivity;
use pdsp_core::Error;
use proptest::prelude::*;

fn cfg(duration_s: f64) -> ExecConfig {
    ExecConfig { duration_s, collect_outputs: true, ..ExecConfig::default() }
}

fn only_filter_cost() -> CostModelParams {
    CostModelParams { filter: 1.0, ..CostModelParams::zero() }
}

fn m510(n: usize) -> ClusterProfile {
    ClusterProfile::homogeneous("m510", n).unwrap()
}

fn set_parallelism(plan: &QueryPlan, p: u32) -> QueryPlan {
    let mut plan = plan.clone();
    for op in &mut plan.operators {
        if !matches!(op.kind, OperatorKind::Source | OperatorKind::Sink) {
            op.parallelism = p;
        }
    }
    for e in &mut plan.edges {
        if e.partitioning == Partitioning::Forward {
            e.partitioning = Partitioning::Rebalance;
        }
    }
    plan
}

#[test]
fn single_tuple_single_node_latency_is_service_time() {
    let c = ExecConfig { cost: only_filter_cost(), ..cfg(0.0005) };
    let r = run_plan(&filter_plan(), &m510(1), &c, 1, 0).unwrap();
    assert_eq!(r.latencies_us, vec![1.0]);
}

#[test]
fn cross_node_hops_add_link_latency() {
    // round robin over three nodes puts source, filter and sink on separate nodes
    let c = ExecConfig { cost: only_filter_cost(), ..cfg(0.0005) };
    let cluster = m510(3);
    let r = run_plan(&filter_plan(), &cluster, &c, 1, 0).unwrap();
    let node = &cluster.nodes[0];
    let bytes = 16.0; // integer + double
    let hop = node.link_latency_us + bytes * 8.0 / (node.bandwidth_gbps * 1e3);
    let expected = 1.0 + 2.0 * hop;
    assert!((r.latencies_us[0] - expected).abs() < 1e-9, "{} vs {expected}", r.latencies_us[0]);
    assert!((r.latencies_us[0] - 101.0).abs() < 0.1);
}

#[test]
fn count_window_emits_complete_windows_only() {
    let mut plan = linear_plan();
    plan.streams[0].spec.key_domain = Some(1);
    let r = run_plan(&plan, &m510(1), &cfg(0.007), 3, 0).unwrap();
    assert_eq!(r.deliveries(), 2);
    let expected = evaluate(&plan, 3, 0.007);
    assert_eq!(expected.len(), 2);
    assert_eq!(multiset(r.outputs.iter().map(|t| t.to_vec())), multiset(expected));
}

#[test]
fn sim_is_deterministic() {
    let plan = set_parallelism(&two_way_join_plan(5), 3);
    let a = run_plan(&plan, &m510(4), &cfg(0.2), 11, 0).unwrap();
    let b = run_plan(&plan, &m510(4), &cfg(0.2), 11, 0).unwrap();
    assert_eq!(a.latencies_us, b.latencies_us);
    assert_eq!(a.output_digest, b.output_digest);
}

#[test]
fn join_and_aggregate_match_reference_across_parallelism() {
    for plan in [linear_plan(), two_way_join_plan(7)] {
        let expected = multiset(evaluate(&plan, 5, 0.3));
        assert!(!expected.is_empty());
        for p in [1, 4, 8] {
            let r = run_plan(&set_parallelism(&plan, p), &m510(10), &cfg(0.3), 5, 0).unwrap();
            assert_eq!(multiset(r.outputs.iter().map(|t| t.to_vec())), expected, "{} at p={p}", plan.id);
        }
    }
}

#[test]
fn sliding_time_windows_match_reference() {
    let mut plan = linear_plan();
    plan.operators[2].kind = OperatorKind::WindowAggregate {
        function: AggFn::Avg,
        field: 1,
        window: WindowSpec::sliding(WindowPolicy::Time, 20, 5),
        key: Some(0),
    };
    let expected = multiset(evaluate(&plan, 9, 0.2));
    let r = run_plan(&set_parallelism(&plan, 3), &m510(2), &cfg(0.2), 9, 0).unwrap();
    assert_eq!(multiset(r.outputs.iter().map(|t| t.to_vec())), expected);
}

#[test]
fn thread_mode_matches_sim_digest() {
    for plan in [linear_plan(), two_way_join_plan(5)] {
        let plan = set_parallelism(&plan, 2);
        let sim = run_plan(&plan, &m510(2), &cfg(0.3), 21, 0).unwrap();
        let threads = ExecConfig { mode: ExecMode::Threads, ..cfg(0.3) };
        let thr = run_plan(&plan, &m510(2), &threads, 21, 0).unwrap();
        assert_eq!(sim.output_digest, thr.output_digest);
        assert_eq!(thr.mode, ExecMode::Threads);
        assert!(thr.latencies_us.iter().all(|l| *l >= 0.0));
    }
}

#[test]
fn thread_worker_panic_names_instance() {
    let plan = linear_plan();
    let phys = pdsp_core::model::expand_to_physical(&plan).unwrap();
    let cluster = m510(1);
    let placement = pdsp_core::exec::place(&phys, &cluster, pdsp_core::exec::PlacementPolicy::RoundRobin, 1).unwrap();
    // bypass validation: the aggregate now reads a field that does not exist
    let mut broken = plan.clone();
    if let OperatorKind::WindowAggregate { field, .. } = &mut broken.operators[2].kind {
        *field = 99;
    }
    let err = pdsp_core::exec::run_threads(&broken, &phys, &cluster, &placement, &cfg(0.05), 1).unwrap_err();
    match err {
        Error::Worker { instance, .. } => assert_eq!(instance, "op2[0]"),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn thread_mode_throughput_tracks_filtered_rate() {
    let mut plan = filter_plan();
    let filter = FilterSpec::new(1, FilterFn::Ge, Value::Double(500_000.0));
    let sel = estimate_selectivity(&filter, plan.stream(plan.operators[0].id).unwrap(), 77, 10_000).unwrap().value;
    plan.operators[1].kind = OperatorKind::Filter { filter };
    let c = ExecConfig { mode: ExecMode::Threads, ..cfg(3.0) };
    let r = run_plan(&plan, &m510(1), &c, 4, 0).unwrap();
    let expected = 1000.0 * sel;
    assert!((r.throughput_tps - expected).abs() <= 0.1 * expected, "{} vs {expected}", r.throughput_tps);
}

#[test]
fn no_output_is_an_error() {
    let mut plan = filter_plan();
    plan.operators[1].kind =
        OperatorKind::Filter { filter: FilterSpec::new(1, FilterFn::Lt, Value::Double(-1.0)) };
    assert!(matches!(run_plan(&plan, &m510(1), &cfg(0.01), 1, 0), Err(Error::NoOutput)));
}

#[test]
fn protocol_reports_run_medians() {
    let plan = linear_plan();
    let c = cfg(0.2);
    let one = run_protocol(&plan, &m510(1), &c, 1, 8).unwrap();
    let single = run_plan(&plan, &m510(1), &c, run_seed(8, 0), 0).unwrap();
    assert_eq!(one.mean_median_us, single.median_latency_us());
    assert_eq!(one.runs[0].output_digest, single.output_digest);

    let threads = ExecConfig { mode: ExecMode::Threads, ..c };
    let three = run_protocol(&plan, &m510(1), &threads, 3, 8).unwrap();
    assert_eq!(three.run_medians_us.len(), 3);
    let recomputed: Vec<f64> =
        three.runs.iter().map(|r| pdsp_core::metrics::median(&r.latencies_us).unwrap()).collect();
    assert_eq!(three.run_medians_us, recomputed);
    assert_eq!(three.mean_median_us, recomputed.iter().sum::<f64>() / 3.0);
}

#[test]
fn identical_uniform_runs_share_medians() {
    // uniform arrivals and a pass-all filter make runs differ only in values
    let c = ExecConfig { cost: only_filter_cost(), ..cfg(0.1) };
    let r = run_protocol(&filter_plan(), &m510(2), &c, 3, 1).unwrap();
    for m in &r.run_medians_us {
        assert_eq!(*m, r.mean_median_us);
    }
}

#[test]
fn trace_follows_each_tuple() {
    let c = ExecConfig { trace: true, cost: only_filter_cost(), ..cfg(0.0005) };
    let r = run_plan(&filter_plan(), &m510(3), &c, 1, 0).unwrap();
    let kinds: Vec<TraceKind> = r.trace.iter().map(|e| e.event).collect();
    assert_eq!(kinds.first(), Some(&TraceKind::Source));
    assert_eq!(kinds.last(), Some(&TraceKind::Deliver));
    // the filter starts one hop after the source finished
    let start = r.trace.iter().find(|e| e.event == TraceKind::Start && e.instance == "op1[0]").unwrap();
    assert!(start.t_us > 50.0);
}

#[test]
fn digest_ignores_order() {
    let a = [Value::Int(1)];
    let b = [Value::Int(2)];
    assert_eq!(output_digest([&a[..], &b[..]]), output_digest([&b[..], &a[..]]));
}

fn heterogeneous(speed: f64) -> ClusterProfile {
    let mut fast = NodeProfile::m510();
    fast.speed_factor = speed;
    ClusterProfile::new("mixed", vec![NodeProfile::m510(), fast, NodeProfile::c6320()]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn breakdown_sums_to_latency(seed in 0u64..1000, p in 1u32..4) {
        let plan = set_parallelism(&two_way_join_plan(3), p);
        let c = ExecConfig { record_breakdown: true, ..cfg(0.05) };
        let r = run_plan(&plan, &heterogeneous(1.3), &c, seed, 0).unwrap();
        prop_assert_eq!(r.breakdowns.len(), r.latencies_us.len());
        for (l, b) in r.latencies_us.iter().zip(&r.breakdowns) {
            prop_assert!((l - b.total()).abs() <= 1e-6 * l.max(1.0), "{} vs {:?}", l, b);
            prop_assert!(b.queue_wait >= 0.0 && b.window_wait >= -1e-9 && b.network >= 0.0);
        }
    }

    #[test]
    fn faster_nodes_never_raise_latency(seed in 0u64..1000, speed in 1.0f64..3.0, boost in 1.0f64..2.0) {
        // parallelism 1 keeps per-channel order independent of speeds
        let plan = linear_plan();
        let c = cfg(0.1);
        let slow = run_plan(&plan, &heterogeneous(speed), &c, seed, 0).unwrap();
        let fast = run_plan(&plan, &heterogeneous(speed).scaled(boost), &c, seed, 0).unwrap();
        prop_assert_eq!(&slow.sample_ids, &fast.sample_ids);
        for (s, f) in slow.latencies_us.iter().zip(&fast.latencies_us) {
            prop_assert!(f <= s, "{} > {}", f, s);
        }
    }
}
