use std::path::Path;
use std::process::{Command, Output};

use pdsp_core::corpus::load_records;
use pdsp_core::exec::ClusterProfile;
use pdsp_core::learn::ModelKind;
use pdsp_core::pipeline::HarnessConfig;

fn pdsp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdsp")).current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[track_caller]
fn ok(o: Output) -> Output {
    assert!(o.status.success(), "exit {:?}\nstdout: {}\nstderr: {}", o.status.code(), stdout(&o), stderr(&o));
    o
}

#[test]
fn generate_echoes_counts() {
    let dir = tempfile::tempdir().unwrap();
    let o = ok(pdsp(dir.path(), &["generate", "--structures", "linear", "--count", "5", "--seed", "1"]));
    assert_eq!(stdout(&o), "linear: 5\n");
    let text = std::fs::read_to_string(dir.path().join("plans.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 5);

    // same seed, same plans
    ok(pdsp(dir.path(), &["generate", "--structures", "linear", "--count", "5", "--seed", "1", "--out", "again.jsonl"]));
    assert_eq!(std::fs::read(dir.path().join("again.jsonl")).unwrap(), text.as_bytes());
}

#[test]
fn generate_application_template() {
    let dir = tempfile::tempdir().unwrap();
    let o = ok(pdsp(dir.path(), &["generate", "--app", "AD"]));
    assert_eq!(stdout(&o), "AD: 1\n");
}

#[test]
fn bad_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = pdsp(dir.path(), &["generate", "--structures", "linear,5-way-spiral"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("5-way-spiral"), "{}", stderr(&o));

    let o = pdsp(dir.path(), &["generate", "--colour", "red"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--colour"));

    std::fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    let o = pdsp(dir.path(), &["run", "--plans", "empty.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no plans"));

    let o = pdsp(dir.path(), &["run", "--plans", "missing.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_lists_every_flag() {
    let dir = tempfile::tempdir().unwrap();
    let o = ok(pdsp(dir.path(), &["run", "--help"]));
    for flag in [
        "--plans", "--cluster", "--strategy", "--degree-min", "--degree-max", "--assign", "--per-plan", "--mode", "--runs",
        "--duration", "--time-scale", "--slots-per-core", "--placement", "--corpus", "--metrics", "--config", "--seed",
    ] {
        assert!(stdout(&o).contains(flag), "run --help lacks {flag}");
    }
    let o = ok(pdsp(dir.path(), &["--help"]));
    for cmd in ["generate", "enumerate", "run", "report", "corpus", "train", "evaluate", "compare-strategies", "pipeline"] {
        assert!(stdout(&o).contains(cmd), "--help lacks {cmd}");
    }
}

#[test]
fn run_min_avg_max_appends_three_records_per_plan() {
    let dir = tempfile::tempdir().unwrap();
    ok(pdsp(dir.path(), &["generate", "--structures", "2-way-join", "--count", "1", "--seed", "4"]));
    let o = ok(pdsp(
        dir.path(),
        &[
            "run", "--plans", "plans.jsonl", "--strategy", "minavgmax", "--degree-max", "4", "--cluster", "m510x10",
            "--mode", "sim", "--duration", "0.5", "--metrics", "metrics.csv",
        ],
    ));
    assert!(stdout(&o).contains("3 records"));
    let records = load_records(&dir.path().join("corpus.jsonl")).unwrap();
    assert_eq!(records.len(), 3);
    let digest = ClusterProfile::resolve("m510x10").unwrap().digest();
    assert!(records.iter().all(|r| r.cluster_digest == digest && r.strategy == "minavgmax" && r.run_medians_us.len() == 3));
    let degrees: Vec<u32> = records.iter().map(|r| r.plan.max_parallelism()).collect();
    assert_eq!(degrees, vec![1, 2, 4]);
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 4);
    assert!(metrics.starts_with("plan_id,cluster,mode,runs,p50_us,p95_us,p99_us,mean_us,throughput_tps\n"));

    let o = ok(pdsp(dir.path(), &["enumerate", "--plans", "plans.jsonl", "--strategy", "exhaustive", "--degree-max", "2"]));
    // two filters and the join, each in {1, 2}
    let n = std::fs::read_to_string(dir.path().join("enumerated.jsonl")).unwrap().lines().count();
    assert_eq!(n, 1 << 3, "{}", stdout(&o));
}

#[test]
fn parameter_strategy_takes_assignments() {
    let dir = tempfile::tempdir().unwrap();
    ok(pdsp(dir.path(), &["generate", "--structures", "linear", "--count", "1"]));
    ok(pdsp(dir.path(), &["enumerate", "--plans", "plans.jsonl", "--strategy", "parameter", "--assign", "op1=3,op2=5"]));
    let text = std::fs::read_to_string(dir.path().join("enumerated.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.contains("/1-3-5-1"));
    let o = pdsp(dir.path(), &["enumerate", "--plans", "plans.jsonl", "--strategy", "random", "--assign", "op1=3"]);
    assert_eq!(o.status.code(), Some(1));
}

fn small_config(dir: &Path) -> HarnessConfig {
    let mut cfg = HarnessConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml")).unwrap();
    cfg.generator.count = 40;
    cfg.runs = 1;
    cfg.exec.duration_s = 0.5;
    cfg.train.max_epochs = 20;
    cfg.train.trees = 10;
    cfg.compare_model = ModelKind::Rf;
    cfg.out_dir = dir.join("out");
    cfg
}

#[test]
fn corpus_tools_train_evaluate_compare_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    std::fs::write(dir.path().join("small.toml"), cfg.to_toml()).unwrap();
    let p = dir.path();
    ok(pdsp(p, &["--config", "small.toml", "generate"]));
    for strategy in ["rule", "random"] {
        let corpus = format!("{strategy}.jsonl");
        let o = pdsp(p, &["--config", "small.toml", "run", "--plans", "plans.jsonl", "--strategy", strategy, "--corpus", &corpus]);
        // plans whose windows never fire are reported but the rest are stored
        assert!(o.status.code() == Some(0) || o.status.code() == Some(1), "{}", stderr(&o));
        assert!(load_records(&p.join(&corpus)).unwrap().len() >= 20);
    }

    let o = ok(pdsp(p, &["corpus", "export", "--corpus", "rule.jsonl"]));
    let header = stdout(&o).lines().next().unwrap().to_string();
    assert!(header.starts_with("id,plan_id,structure,cluster,strategy,count_source,"), "{header}");
    assert!(header.ends_with(",median_latency_us,throughput_tps"));

    let o = ok(pdsp(p, &["--config", "small.toml", "train", "--corpus", "rule.jsonl", "--model", "rf", "--out", "rf.json"]));
    assert!(stdout(&o).starts_with("rf trained on"));
    ok(pdsp(p, &["--config", "small.toml", "train", "--corpus", "rule.jsonl", "--model", "mean", "--out", "mean.json"]));
    let o = ok(pdsp(
        p,
        &["--config", "small.toml", "evaluate", "--model", "rf.json", "--model", "mean.json", "--corpus", "rule.jsonl", "--predictions", "pred.csv"],
    ));
    let eval = stdout(&o);
    assert!(eval.starts_with("model,structure,n,q50,q95,qmax,train_seconds\n"));
    assert!(eval.contains("\nrf,all,") && eval.contains("\nmean,all,"));
    assert!(std::fs::read_to_string(p.join("pred.csv")).unwrap().starts_with("record,structure,model,label_us,predicted_us\n"));

    let o = ok(pdsp(p, &["--config", "small.toml", "compare-strategies", "--corpus", "rule.jsonl", "--corpus", "random.jsonl"]));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "strategy,records,train_seconds,q50,q95,qmax");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("rule,") && lines[2].starts_with("random,"));
    let sizes: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(sizes[0], sizes[1]);

    let o = ok(pdsp(p, &["report", "--corpus", "rule.jsonl", "--corpus", "random.jsonl", "--group-by", "structure"]));
    let report = stdout(&o);
    assert_eq!(report.lines().next().unwrap(), "structure,category,cluster,n,p50_us");
    assert_eq!(report.lines().count(), 3);
    let o = pdsp(p, &["report", "--corpus", "rule.jsonl", "--group-by", "planet"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn pipeline_reruns_identically_and_names_failing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    std::fs::write(dir.path().join("small.toml"), cfg.to_toml()).unwrap();
    let p = dir.path();
    let first = ok(pdsp(p, &["--config", "small.toml", "pipeline", "--out-dir", "a"]));
    let second = ok(pdsp(p, &["--config", "small.toml", "pipeline", "--out-dir", "b"]));
    let digest = |o: &Output| stdout(o).lines().find(|l| l.starts_with("corpus:")).unwrap().split("sha256 ").nth(1).unwrap().to_string();
    assert_eq!(digest(&first), digest(&second));
    for file in ["evaluation.csv", "comparison.csv", "report.csv", "predictions.csv", "config.toml"] {
        assert!(p.join("a").join(file).is_file(), "{file} missing");
    }
    assert_eq!(std::fs::read(p.join("a/predictions.csv")).unwrap(), std::fs::read(p.join("b/predictions.csv")).unwrap());

    let mut broken = cfg.clone();
    broken.clusters = vec!["m999x3".into()];
    std::fs::write(p.join("broken.toml"), broken.to_toml()).unwrap();
    let o = pdsp(p, &["--config", "broken.toml", "pipeline"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("stage `run`"), "{}", stderr(&o));

    std::fs::write(p.join("typo.toml"), "sed = 3\n").unwrap();
    let o = pdsp(p, &["--config", "typo.toml", "pipeline"]);
    assert_eq!(o.status.code(), Some(1));
}
