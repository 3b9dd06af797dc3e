//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use common::reference::{evaluate, multiset};
use pdsp_core::enumerate::{apply_degrees, enumerate, EnumerationConfig, EnumerationStrategy};
use pdsp_core::exec::{run_plan, run_protocol, ClusterProfile, ExecConfig, ExecMode};
use pdsp_core::learn::ModelKind;
use pdsp_core::metrics::{percentile, q_error};
use pdsp_core::model::fixtures::{filter_plan, two_way_join_plan};
use pdsp_core::model::{
    categorize_parallelism, validate_plan, Arrival, DataType, OpId, OperatorKind, ParallelismCategory, QueryPlan,
    StreamSpec, StructureTag, SyntheticStructure, TupleSchema,
};
use pdsp_core::pipeline::{run_pipeline, HarnessConfig, PipelineSummary};
use pdsp_core::workload::{estimate_selectivity, generate_stream, generate_synthetic_plan, Extent, GeneratorConfig};
use pdsp_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: Error) -> String {
    e.to_string()
}

fn c1() -> Outcome {
    use ParallelismCategory::*;
    let inputs = [1, 7, 8, 15, 16, 31, 32, 63, 64, 127, 128, 500];
    let expected = [XS, XS, S, S, M, M, L, L, XL, XL, XXL, XXL];
    for (d, want) in inputs.iter().zip(expected) {
        let got = categorize_parallelism(*d).map_err(err)?;
        ensure(got == want, || format!("degree {d} -> {got}, expected {want}"))?;
    }
    ensure(categorize_parallelism(0).is_err(), || "degree 0 accepted".into())?;
    Ok(format!("{} degrees mapped", inputs.len()))
}

/// The source stream a filter reads, walking up through filters.
fn stream_of(plan: &QueryPlan, mut op: OpId) -> &StreamSpec {
    loop {
        match plan.stream(op) {
            Some(s) => return s,
            None => op = plan.inputs(op)[0].from,
        }
    }
}

fn c2() -> Outcome {
    let cfg = GeneratorConfig::default();
    let structures: Vec<StructureTag> = StructureTag::all_synthetic().collect();
    let mut filters = 0;
    let mut seen = BTreeMap::new();
    for i in 0..1000u64 {
        let tag = structures[i as usize % structures.len()];
        let plan = generate_synthetic_plan(tag, &cfg, 1000 + i).map_err(err)?;
        *seen.entry(tag.to_string()).or_insert(0) += 1;
        let report = validate_plan(&plan);
        ensure(report.is_ok(), || format!("{}: {:?}", plan.id, report.messages()))?;
        for op in &plan.operators {
            if let OperatorKind::Filter { filter } = &op.kind {
                let stream = stream_of(&plan, op.id);
                let fresh = estimate_selectivity(filter, stream, 0xfeed_0000 + i, 10_000).map_err(err)?;
                ensure(fresh.value > 0.0, || format!("{} filter {}: zero selectivity on a fresh sample", plan.id, op.id))?;
                filters += 1;
            }
        }
    }
    ensure(seen.len() == 9, || format!("only {} structures", seen.len()))?;
    Ok(format!("1000 plans valid over 9 structures, {filters} filters with selectivity > 0"))
}

fn c3() -> Outcome {
    let base = filter_plan();
    let config = |strategy| {
        let mut c = EnumerationConfig::new(strategy, 1, 1);
        c.include_endpoints = true;
        c.ranges = [(OpId(0), (1, 3)), (OpId(1), (1, 2)), (OpId(2), (4, 5))].into_iter().collect();
        c
    };
    let degrees = |plans: Vec<QueryPlan>| -> Vec<Vec<u32>> {
        plans.iter().map(|p| p.operators.iter().map(|o| o.parallelism).collect()).collect()
    };
    let run = |s| enumerate(&base, &config(s), None, 0).map(|e| degrees(e.collect())).map_err(err);

    let exhaustive = run(EnumerationStrategy::Exhaustive)?;
    let distinct: std::collections::BTreeSet<_> = exhaustive.iter().cloned().collect();
    ensure(exhaustive.len() == 12 && distinct.len() == 12, || format!("exhaustive: {} plans, {} distinct", exhaustive.len(), distinct.len()))?;

    let mam = run(EnumerationStrategy::MinAvgMax)?;
    // midpoints 2, 1.5 and 4.5 round half to even: 2, 2, 4
    let want = vec![vec![1, 1, 4], vec![2, 2, 4], vec![3, 2, 5]];
    ensure(mam == want, || format!("min/avg/max: {mam:?}"))?;

    let inc = run(EnumerationStrategy::Increasing)?;
    ensure(inc.len() == 3 + 2 + 2, || format!("increasing: {} plans", inc.len()))?;
    Ok(format!("exhaustive 12, min/avg/max {mam:?}, increasing {}", inc.len()))
}

fn with_parallelism(plan: &QueryPlan, p: u32) -> QueryPlan {
    let ops: Vec<OpId> = plan
        .operators
        .iter()
        .filter(|o| !matches!(o.kind, OperatorKind::Source | OperatorKind::Sink))
        .map(|o| o.id)
        .collect();
    apply_degrees(plan, &ops, &vec![p; ops.len()])
}

fn c4() -> Outcome {
    let cfg = GeneratorConfig {
        tuple_width: [2, 4],
        event_rates: vec![1000.0],
        key_domains: vec![5, 10, 20],
        window_durations_ms: vec![10, 20, 50],
        window_lengths: vec![2, 3, 5],
        selectivity_floor: 0.3,
        ..GeneratorConfig::default()
    };
    let structures = [
        SyntheticStructure::Linear,
        SyntheticStructure::ChainedFilter(2),
        SyntheticStructure::WayJoin(2),
        SyntheticStructure::WayJoin(3),
    ];
    let duration = 0.25;
    let cluster = ClusterProfile::homogeneous("m510", 10).map_err(err)?;
    let sim = ExecConfig { duration_s: duration, collect_outputs: true, ..ExecConfig::default() };
    let threads = ExecConfig { mode: ExecMode::Threads, ..sim.clone() };
    let mut outputs = 0;
    let mut max_tuples = 0;
    for i in 0..20u64 {
        let tag = StructureTag::Synthetic(structures[i as usize % structures.len()]);
        let plan = generate_synthetic_plan(tag, &cfg, 500 + i).map_err(err)?;
        let seed = 77 + i;
        let tuples: usize = plan.streams.len() * (duration * 1000.0) as usize;
        max_tuples = max_tuples.max(tuples);
        let expected = multiset(evaluate(&plan, seed, duration));
        ensure(!expected.is_empty(), || format!("{}: reference produced no output", plan.id))?;
        outputs += expected.len();
        for p in [1, 4, 8] {
            let variant = with_parallelism(&plan, p);
            for c in [&sim, &threads] {
                let r = run_plan(&variant, &cluster, c, seed, 0).map_err(err)?;
                let got = multiset(r.outputs.iter().map(|t| t.to_vec()));
                ensure(got == expected, || {
                    format!("{} at p={p} in {:?} mode: {} outputs, reference {}", plan.id, c.mode, got.len(), expected.len())
                })?;
            }
        }
    }
    ensure(max_tuples <= 1000, || format!("{max_tuples} expected source tuples"))?;
    Ok(format!("20 plans x p{{1,4,8}} x {{sim,threads}} match the reference ({outputs} sink tuples)"))
}

/// A two-way join whose combined source rate is 8x one join instance's
/// capacity (3 us per tuple at speed 1.0).
fn saturated_join() -> QueryPlan {
    let mut plan = two_way_join_plan(1);
    for s in &mut plan.streams {
        s.spec.event_rate = 8.0 * 1e6 / 3.0 / 2.0;
        s.spec.key_domain = Some(100_000);
    }
    plan
}

fn probe_config() -> ExecConfig {
    ExecConfig { duration_s: 0.05, watermark_interval_ms: 1.0, slots_per_core: 4, ..ExecConfig::default() }
}

fn mean_median(plan: &QueryPlan, cluster: &ClusterProfile) -> Result<f64, String> {
    Ok(run_protocol(plan, cluster, &probe_config(), 3, 5).map_err(err)?.mean_median_us)
}

fn c5() -> Outcome {
    let cluster = ClusterProfile::homogeneous("m510", 10).map_err(err)?;
    let base = saturated_join();
    let mut lat = BTreeMap::new();
    for p in [1u32, 2, 4, 8, 16, 32, 64] {
        lat.insert(p, mean_median(&with_parallelism(&base, p), &cluster)?);
    }
    let (best, best_lat) = lat.iter().min_by(|a, b| a.1.total_cmp(b.1)).map(|(p, l)| (*p, *l)).unwrap();
    let curve: Vec<String> = lat.iter().map(|(p, l)| format!("p{p}={l:.0}us")).collect();
    ensure(lat[&8] <= 0.5 * lat[&1], || format!("p8 not 2x faster: {}", curve.join(" ")))?;
    ensure(best < 64 && lat[&64] >= best_lat, || format!("no knee below 64: {}", curve.join(" ")))?;
    Ok(format!("best p{best}; {}", curve.join(" ")))
}

fn c6() -> Outcome {
    let plan = with_parallelism(&saturated_join(), 8);
    let m510 = mean_median(&plan, &ClusterProfile::homogeneous("m510", 10).map_err(err)?)?;
    let c6525 = mean_median(&plan, &ClusterProfile::homogeneous("c6525_25g", 10).map_err(err)?)?;
    ensure(c6525 <= m510, || format!("c6525_25g {c6525:.0}us > m510 {m510:.0}us"))?;
    Ok(format!("p8: 10xc6525_25g {c6525:.0}us <= 10xm510 {m510:.0}us"))
}

fn c7() -> Outcome {
    let q = |a, b| q_error(a, b).map_err(err);
    ensure(q(10.0, 10.0)? == 1.0, || "q(10,10) != 1".into())?;
    ensure(q(2.0, 8.0)? == 4.0 && q(8.0, 2.0)? == 4.0, || "q(2,8) or q(8,2) != 4".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let c: f64 = rng.random_range(1e-3..1e6);
        let c2: f64 = rng.random_range(1e-3..1e6);
        let a: f64 = rng.random_range(1e-3..1e3);
        let (base, scaled) = (q(c, c2)?, q(a * c, a * c2)?);
        ensure((base - scaled).abs() <= 1e-12 * base, || format!("q({c},{c2})={base} but scaled by {a} gives {scaled}"))?;
    }
    for _ in 0..1000 {
        let n = rng.random_range(1..200);
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-1e3..1e3)).collect();
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=100 {
            let p = k as f64 / 100.0;
            let v = percentile(&xs, p).map_err(err)?;
            // nearest rank: smallest value with at least p*n samples at or below it
            let oracle = sorted.iter().copied().find(|x| sorted.iter().filter(|y| *y <= x).count() as f64 >= p * n as f64).unwrap();
            ensure(v == oracle, || format!("percentile {p} of {n} samples: {v} vs {oracle}"))?;
            ensure(v >= prev, || format!("percentile not monotone at {p}"))?;
            prev = v;
        }
    }
    Ok("q-error identities, scale invariance and nearest-rank percentiles hold".into())
}

fn desk_config(out: &Path) -> Result<HarnessConfig, String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    let mut cfg = HarnessConfig::load(&path).map_err(err)?;
    cfg.out_dir = out.to_path_buf();
    Ok(cfg)
}

struct DeskRun {
    summary: PipelineSummary,
    elapsed: Duration,
    dir: tempfile::TempDir,
}

fn desk_run() -> Result<DeskRun, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = desk_config(dir.path())?;
    let t = Instant::now();
    let summary = run_pipeline(&cfg).map_err(err)?;
    Ok(DeskRun { summary, elapsed: t.elapsed(), dir })
}

fn c8(run: &DeskRun) -> Outcome {
    let s = &run.summary;
    let rule = s.records.get("rule").copied().unwrap_or(0);
    ensure(rule >= 500, || format!("rule corpus has {rule} records"))?;
    let median = |kind: ModelKind| {
        s.evaluations.iter().find(|e| e.model == kind.to_string()).map(|e| e.overall.median).ok_or(format!("no {kind} evaluation"))
    };
    let baseline = median(ModelKind::Mean)?;
    let mut parts = vec![format!("{rule} records"), format!("mean {baseline:.3}")];
    for kind in ModelKind::LEARNED {
        let q = median(kind)?;
        ensure(q < baseline, || format!("{kind} median q {q:.3} not below mean baseline {baseline:.3}"))?;
        parts.push(format!("{kind} {q:.3}"));
    }
    let gnn = median(ModelKind::Gnn)?;
    ensure(gnn <= 2.0, || format!("gnn median q {gnn:.3} > 2"))?;
    for m in &s.models {
        if let (Some(best), Some(stopped)) = (m.best_epoch, m.stopped_epoch) {
            ensure(stopped <= best + 101, || format!("{} stopped at {stopped}, best {best}", m.kind))?;
            parts.push(format!("{} best/stopped {best}/{stopped}", m.kind));
        }
    }
    Ok(parts.join(", "))
}

fn c9() -> Outcome {
    let mlp = common::gradcheck::mlp(150, 3);
    let gnn = common::gradcheck::gnn(150, 4);
    for (name, o) in [("mlp", &mlp), ("gnn", &gnn)] {
        ensure(o.nonzero >= 100, || format!("{name}: only {} nonzero coordinates", o.nonzero))?;
        ensure(o.worst < 1e-4, || format!("{name}: worst relative error {:.2e}", o.worst))?;
    }
    Ok(format!(
        "mlp {} coords worst {:.1e}; gnn {} coords worst {:.1e}",
        mlp.checked, mlp.worst, gnn.checked, gnn.worst
    ))
}

fn c10(run: &DeskRun) -> Outcome {
    let text = std::fs::read_to_string(run.dir.path().join("comparison.csv")).map_err(|e| e.to_string())?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers().map_err(|e| e.to_string())?.iter().map(String::from).collect();
    ensure(header == ["strategy", "records", "train_seconds", "q50", "q95", "qmax"], || format!("header {header:?}"))?;
    let rows: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    ensure(rows.len() == 2, || format!("{} rows", rows.len()))?;
    let strategies: Vec<&str> = rows.iter().map(|r| &r[0]).collect();
    ensure(strategies == ["rule", "random"], || format!("strategies {strategies:?}"))?;
    ensure(rows[0][1] == rows[1][1], || "corpora differ in size".into())?;
    let mut q50 = Vec::new();
    for r in &rows {
        for col in 2..6 {
            let v: f64 = r[col].parse().map_err(|_| format!("unparseable {}", &r[col]))?;
            ensure(v.is_finite() && v >= 0.0, || format!("{} column {col} = {v}", &r[0]))?;
        }
        q50.push(r[3].parse::<f64>().unwrap());
    }
    let direction = if q50[0] <= q50[1] { "rule <= random" } else { "rule > random" };
    Ok(format!("{} records each; median q rule {:.3}, random {:.3} ({direction}, reported only)", &rows[0][1], q50[0], q50[1]))
}

fn c11(first: &DeskRun, second: &DeskRun) -> Outcome {
    let mut checked = Vec::new();
    for file in ["corpus-rule.jsonl", "corpus-random.jsonl", "predictions.csv"] {
        let a = std::fs::read(first.dir.path().join(file)).map_err(|e| e.to_string())?;
        let b = std::fs::read(second.dir.path().join(file)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{file} differs"))?;
        checked.push(format!("{file} ({} bytes)", a.len()));
    }
    Ok(format!("identical {}", checked.join(", ")))
}

fn c12() -> Outcome {
    let spec = StreamSpec::new(TupleSchema::new(vec![DataType::Integer, DataType::Double]), 1000.0, Arrival::Poisson);
    let tuples = generate_stream(&spec, 2024, Extent::Count(100_000)).map_err(err)?;
    ensure(tuples.len() == 100_000, || format!("{} events", tuples.len()))?;
    let span_s = tuples.last().unwrap().ts as f64 / 1e9;
    let rate = tuples.len() as f64 / span_s;
    ensure((rate - 1000.0).abs() <= 50.0, || format!("mean rate {rate:.1}/s"))?;
    // counts in complete 10 ms bins
    let bin = 10_000_000u64;
    let bins = (tuples.last().unwrap().ts / bin) as usize;
    let mut counts = vec![0f64; bins];
    for t in &tuples {
        if let Some(c) = counts.get_mut((t.ts / bin) as usize) {
            *c += 1.0;
        }
    }
    let mean = counts.iter().sum::<f64>() / bins as f64;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (bins - 1) as f64;
    let dispersion = var / mean;
    ensure((0.9..=1.1).contains(&dispersion), || format!("dispersion index {dispersion:.3}"))?;
    Ok(format!("rate {rate:.1}/s, dispersion {dispersion:.3} over {bins} bins"))
}

/// Runs one check; `spent` is time already taken by shared work it depends on.
fn report(id: &str, title: &str, limit: Duration, spent: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let outcome = f();
    let elapsed = spent + t.elapsed();
    let outcome = outcome.and_then(|m| {
        if elapsed <= limit {
            Ok(m)
        } else {
            Err(format!("{m}; exceeded {:.0}s limit", limit.as_secs_f64()))
        }
    });
    let (tag, msg, ok) = match outcome {
        Ok(m) => ("PASS", m, true),
        Err(m) => ("FAIL", m, false),
    };
    println!("{tag} {id} {title} [{:.1}s]: {msg}", elapsed.as_secs_f64());
    ok
}

fn main() {
    // `cargo test` passes harness flags; `--list` must not run anything.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let secs = Duration::from_secs;
    let mut ok = true;
    ok &= report("C1", "parallelism categories", secs(1), Duration::ZERO, c1);
    ok &= report("C2", "workload validity", secs(120), Duration::ZERO, c2);
    ok &= report("C3", "enumeration counts", secs(10), Duration::ZERO, c3);
    ok &= report("C4", "semantic determinism", secs(300), Duration::ZERO, c4);
    ok &= report("C5", "parallelism speedup and knee", secs(120), Duration::ZERO, c5);
    ok &= report("C6", "heterogeneous hardware", secs(120), Duration::ZERO, c6);
    ok &= report("C7", "metric contracts", secs(10), Duration::ZERO, c7);
    ok &= report("C9", "gradient correctness", secs(60), Duration::ZERO, c9);
    ok &= report("C12", "arrival statistics", secs(30), Duration::ZERO, c12);

    let first = desk_run();
    let second = desk_run();
    let failed = |r: &Result<DeskRun, String>| -> Outcome { Err(r.as_ref().err().cloned().unwrap_or_default()) };
    match (&first, &second) {
        (Ok(a), Ok(b)) => {
            ok &= report("C8", "desk learned-model pipeline", secs(15 * 60), a.elapsed, || c8(a));
            ok &= report("C10", "enumeration comparison", secs(20 * 60), a.elapsed, || c10(a));
            ok &= report("C11", "end-to-end determinism", secs(30 * 60), a.elapsed + b.elapsed, || c11(a, b));
        }
        _ => {
            let bad = if first.is_err() { &first } else { &second };
            ok &= report("C8", "desk learned-model pipeline", secs(15 * 60), Duration::ZERO, || failed(bad));
            ok &= report("C10", "enumeration comparison", secs(20 * 60), Duration::ZERO, || failed(bad));
            ok &= report("C11", "end-to-end determinism", secs(30 * 60), Duration::ZERO, || failed(bad));
        }
    }
    if !ok {
        std::process::exit(1);
    }
}
