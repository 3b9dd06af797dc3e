use std::path::Path;

use pdsp_core::corpus::{load_records, CorpusWriter, RunRecord};
use pdsp_core::enumerate::EnumerationStrategy;
use pdsp_core::exec::ClusterProfile;
use pdsp_core::learn::ModelKind;
use pdsp_core::model::fixtures::linear_plan;
use pdsp_core::pipeline::*;
use pdsp_core::Error;

fn small(out: &Path) -> HarnessConfig {
    let mut cfg = HarnessConfig::from_toml(&std::fs::read_to_string("../../configs/desk.toml").unwrap()).unwrap();
    cfg.out_dir = out.to_path_buf();
    cfg.generator.count = 40;
    cfg.runs = 1;
    cfg.exec.duration_s = 0.5;
    cfg.train.max_epochs = 20;
    cfg.train.trees = 10;
    cfg.compare_model = ModelKind::Rf;
    cfg
}

#[test]
fn config_round_trips_through_toml() {
    let desk = HarnessConfig::load(Path::new("../../configs/desk.toml")).unwrap();
    desk.check().unwrap();
    assert_eq!(HarnessConfig::from_toml(&desk.to_toml()).unwrap(), desk);
    let default = HarnessConfig::default();
    assert_eq!(HarnessConfig::from_toml(&default.to_toml()).unwrap(), default);
    assert_eq!(default.runs, 3);
    assert_eq!(default.exec.duration_s, 180.0);
    assert!(HarnessConfig::from_toml("bogus_key = 1").is_err());
}

#[test]
fn pipeline_is_reproducible() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let summaries: Vec<PipelineSummary> = dirs.iter().map(|d| run_pipeline(&small(d.path())).unwrap()).collect();
    assert_eq!(summaries[0].corpus_digest, summaries[1].corpus_digest);
    for file in ["corpus-rule.jsonl", "corpus-random.jsonl", "predictions.csv", "report.csv", "plans.jsonl"] {
        let a = std::fs::read(dirs[0].path().join(file)).unwrap();
        let b = std::fs::read(dirs[1].path().join(file)).unwrap();
        assert!(a == b, "{file} differs between runs");
    }
    let s = &summaries[0];
    assert_eq!(s.models.len(), 5);
    assert_eq!(s.comparison.len(), 2);
    assert!(s.records["rule"] > 10);
    let eval = std::fs::read_to_string(dirs[0].path().join("evaluation.csv")).unwrap();
    assert!(eval.starts_with("model,structure,n,q50,q95,qmax,train_seconds\n"));
    let report = std::fs::read_to_string(dirs[0].path().join("report.csv")).unwrap();
    assert!(report.starts_with("structure,category,cluster,n,p50_us\n"));
    for kind in ["lr", "mlp", "rf", "gnn", "mean"] {
        assert!(dirs[0].path().join("models").join(format!("{kind}.json")).is_file());
    }

    // rerunning in place overwrites with identical content
    let again = run_pipeline(&small(dirs[0].path())).unwrap();
    assert_eq!(again.corpus_digest, s.corpus_digest);
}

#[test]
fn missing_cluster_fails_at_run_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.clusters = vec!["nonexistent-profile".into()];
    match run_pipeline(&cfg) {
        Err(Error::Stage { stage, source }) => {
            assert_eq!(stage, "run");
            assert!(matches!(*source, Error::UnknownProfile(_)));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn min_avg_max_yields_three_records() {
    let dir = tempfile::tempdir().unwrap();
    let cluster = ClusterProfile::resolve("m510x10").unwrap();
    let settings = EnumerationSettings { per_plan: 10, degree_max: 4, ..Default::default() };
    let plans = enumerate_plans(&[linear_plan()], &EnumerationStrategy::MinAvgMax, &settings, 80, 1).unwrap();
    assert_eq!(plans.len(), 3);
    let mut exec = pdsp_core::exec::ExecConfig { duration_s: 0.2, ..Default::default() };
    exec.slots_per_core = 1;
    let path = dir.path().join("c.jsonl");
    let mut writer = CorpusWriter::create(&path).unwrap();
    let done = execute_all(&plans, &cluster, &exec, 3, 1, "minavgmax", &mut writer).unwrap();
    assert!(done.failures.is_empty());
    let records = done.records;
    assert_eq!(records.len(), 3);
    assert_eq!(done.summaries.len(), 3);
    assert!(done.summaries.iter().all(|s| s.runs == 3 && s.p50_us <= s.p95_us && s.p95_us <= s.p99_us));
    let stored = load_records(&path).unwrap();
    assert_eq!(stored, records);
    assert!(stored.iter().all(|r| r.run_medians_us.len() == 3 && r.cluster_digest == cluster.digest()));
}

fn labeled(plan_parallelism: u32, cluster: &str, latency: f64) -> RunRecord {
    let mut plan = linear_plan();
    plan.operators[1].parallelism = plan_parallelism;
    plan.operators[2].parallelism = plan_parallelism;
    let profile = ClusterProfile::resolve(cluster).unwrap();
    RunRecord {
        id: 0,
        plan,
        cluster: cluster.into(),
        cluster_digest: profile.digest(),
        nodes: profile.nodes.iter().map(|n| (n.cores, n.speed_factor)).collect(),
        placement: pdsp_core::exec::PlacementPolicy::RoundRobin,
        slots_per_core: 1,
        strategy: "rule".into(),
        duration_s: 1.0,
        labels: pdsp_core::corpus::Labels { median_latency_us: latency, throughput_tps: 1.0 },
        run_medians_us: vec![latency],
        mode: pdsp_core::exec::ExecMode::Sim,
        seed: 0,
        harness_version: pdsp_core::corpus::HARNESS_VERSION.into(),
    }
}

#[test]
fn report_groups_and_orders_rows() {
    let records = vec![labeled(1, "m510x2", 10.0), labeled(2, "m510x2", 30.0), labeled(8, "m510x2", 5.0), labeled(1, "m510x2", 20.0)];
    let rows = report(&records, GroupBy::default()).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0].category.as_str(), rows[0].n, rows[0].p50_us), ("XS", 3, 20.0));
    assert_eq!((rows[1].category.as_str(), rows[1].n), ("S", 1));

    let mixed = vec![labeled(1, "m510x2", 10.0), labeled(1, "c6320x2", 7.0), labeled(4, "m510x2", 12.0)];
    let by_cluster = report(&mixed, GroupBy::parse("cluster").unwrap()).unwrap();
    let clusters: Vec<&str> = by_cluster.iter().map(|r| r.cluster.as_str()).collect();
    assert_eq!(clusters, vec!["c6320x2", "m510x2"]);
    assert!(by_cluster.iter().all(|r| r.structure == "all" && r.category == "all"));

    let mut csv = Vec::new();
    write_report(&mut csv, &by_cluster).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().next().unwrap(), "structure,category,cluster,n,p50_us");
    assert!(report(&[], GroupBy::default()).is_err());
    assert!(GroupBy::parse("colour").is_err());
}
