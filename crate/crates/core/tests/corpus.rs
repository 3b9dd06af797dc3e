use std::io::Write;

use pdsp_core::corpus::{
    append, load_records, select, split, CorpusWriter, Labels, RunRecord, SplitKey, SplitSpec, HARNESS_VERSION,
};
use pdsp_core::exec::{ExecMode, PlacementPolicy};
use pdsp_core::model::fixtures::{linear_plan, two_way_join_plan};
use pdsp_core::model::{StructureTag, SyntheticStructure};

fn record(i: u64, join: bool) -> RunRecord {
    let mut plan = if join { two_way_join_plan(5) } else { linear_plan() };
    plan.id = format!("plan-{i}");
    RunRecord {
        id: 0,
        plan,
        cluster: "m510x2".into(),
        cluster_digest: "abc".into(),
        nodes: vec![(8, 1.0), (8, 1.0)],
        placement: PlacementPolicy::RoundRobin,
        slots_per_core: 1,
        strategy: "random".into(),
        duration_s: 1.0,
        labels: Labels { median_latency_us: 100.0 + i as f64, throughput_tps: 50.0 },
        run_medians_us: vec![100.0 + i as f64],
        mode: ExecMode::Sim,
        seed: i,
        harness_version: HARNESS_VERSION.into(),
    }
}

#[test]
fn append_round_trips_with_monotone_ids() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    assert_eq!(append(&path, record(0, false)).unwrap(), 0);
    assert_eq!(append(&path, record(1, true)).unwrap(), 1);
    let loaded = load_records(&path).unwrap();
    let mut expected = record(1, true);
    expected.id = 1;
    assert_eq!(loaded[1], expected);
    assert_eq!(loaded.len(), 2);
}

#[test]
fn truncated_trailing_line_is_tolerated() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    append(&path, record(0, false)).unwrap();
    append(&path, record(1, false)).unwrap();
    // simulate a crash halfway through writing a third record
    let line = serde_json::to_string(&record(2, false)).unwrap();
    let mut f = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
    f.write_all(&line.as_bytes()[..line.len() / 2]).unwrap();
    drop(f);
    assert_eq!(load_records(&path).unwrap().len(), 2);

    let id = append(&path, record(3, false)).unwrap();
    assert_eq!(id, 2);
    let loaded = load_records(&path).unwrap();
    assert_eq!(loaded.iter().map(|r| r.id).collect::<Vec<_>>(), vec![0, 1, 2]);
    assert_eq!(loaded[1].seed, 1);
}

#[test]
fn corrupt_middle_line_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    append(&path, record(0, false)).unwrap();
    std::fs::OpenOptions::new().append(true).open(&path).unwrap().write_all(b"{not json}\n").unwrap();
    assert!(load_records(&path).is_err());
}

#[test]
fn invalid_labels_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = record(0, false);
    r.labels.median_latency_us = 0.0;
    assert!(CorpusWriter::create(&dir.path().join("c.jsonl")).unwrap().append(r).is_err());
}

fn store(n: u64) -> Vec<RunRecord> {
    (0..n)
        .map(|i| {
            let mut r = record(i, i % 3 == 0);
            r.id = i;
            r
        })
        .collect()
}

#[test]
fn by_record_split_sizes() {
    let s = split(&store(10), &SplitSpec::default()).unwrap();
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (8, 1, 1));
    let mut all: Vec<u64> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
    all.sort();
    assert_eq!(all, (0..10).collect::<Vec<_>>());
    assert_eq!(s, split(&store(10), &SplitSpec::default()).unwrap());
    assert!(split(&store(2), &SplitSpec::default()).is_err());
}

#[test]
fn by_structure_holds_out_structures() {
    let records = store(30);
    let join = StructureTag::Synthetic(SyntheticStructure::WayJoin(2));
    let spec = SplitSpec { key: SplitKey::ByPlanStructure { held_out: vec![join] }, ..SplitSpec::default() };
    let s = split(&records, &spec).unwrap();
    for r in select(&records, &s.train).into_iter().chain(select(&records, &s.val)) {
        assert_ne!(r.structure(), join);
    }
    assert_eq!(s.test.len(), 10);
    assert!(select(&records, &s.test).iter().all(|r| r.structure() == join));
}

#[test]
fn fractions_must_sum_to_one() {
    let spec = SplitSpec { train: 0.5, ..SplitSpec::default() };
    assert!(split(&store(10), &spec).is_err());
}
