//! End-to-end harness: generate, enumerate, run, store, train, evaluate, compare, report.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{self, CorpusWriter, Labels, RunRecord, SplitSpec, HARNESS_VERSION};
use crate::enumerate::{enumerate, EnumerationConfig, EnumerationStrategy, RuleContext};
use crate::error::{Error, Result};
use crate::exec::{run_protocol, ClusterProfile, ExecConfig};
use crate::learn::{self, ModelKind, TrainConfig, TrainedModel};
use crate::metrics::{self, SummaryRow};
use crate::model::{fnv1a, mix64, plan_category, write_plans, QueryPlan};
use crate::workload::{generate_corpus, GeneratorConfig};


#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnumerationSettings {
    /// Strategy tags; the first one's corpus trains the models, and every
    /// strategy's corpus enters the training-efficiency comparison.
    pub strategies: Vec<String>,
    pub degree_min: u32,
    pub degree_max: u32,
    /// Upper bound on assignments taken per base plan.
    pub per_plan: usize,
    /// Tuples per second one core sustains, for the rule-based strategy.
    pub per_core_capacity: f64,
}

impl Default for EnumerationSettings {
    fn default() -> Self {
        EnumerationSettings {
            strategies: vec!["rule".into(), "random".into()],
            degree_min: 1,
            degree_max: 64,
            per_plan: 1,
            per_core_capacity: 5e5,
        }
    }
}

impl EnumerationSettings {
    pub fn parsed(&self) -> Result<Vec<EnumerationStrategy>> {
        if self.strategies.is_empty() {
            return Err(Error::InvalidArgument("no enumeration strategy configured".into()));
        }
        let out: Vec<EnumerationStrategy> = self.strategies.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        if out.iter().any(|s| matches!(s, EnumerationStrategy::ParameterBased(_))) {
            return Err(Error::InvalidArgument("the pipeline cannot use parameter-based enumeration".into()));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Cluster profile specs (`m510x10`) or TOML profile paths.
    pub clusters: Vec<String>,
    pub runs: usize,
    pub generator: GeneratorConfig,
    pub enumeration: EnumerationSettings,
    pub exec: ExecConfig,
    pub split: SplitSpec,
    pub train: TrainConfig,
    pub models: Vec<ModelKind>,
    /// Model trained on each strategy's corpus in the comparison.
    pub compare_model: ModelKind,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            seed: 0,
            out_dir: PathBuf::from("pdsp-out"),
            clusters: vec!["m510x10".into()],
            runs: 3,
            generator: GeneratorConfig::default(),
            enumeration: EnumerationSettings::default(),
            exec: ExecConfig { duration_s: 180.0, ..Default::default() },
            split: SplitSpec::default(),
            train: TrainConfig::default(),
            models: ModelKind::LEARNED.to_vec(),
            compare_model: ModelKind::Gnn,
        }
    }
}

impl HarnessConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), line: 0, message: e.to_string() })
    }

    /// Checks everything that can be checked without running; cluster
    /// profiles are resolved by the run stage.
    pub fn check(&self) -> Result<()> {
        self.generator.check()?;
        self.exec.check()?;
        self.split.check()?;
        self.train.check()?;
        self.enumeration.parsed()?;
        EnumerationConfig::new(EnumerationStrategy::Random, self.enumeration.degree_min, self.enumeration.degree_max).check()?;
        if self.runs == 0 || self.enumeration.per_plan == 0 {
            return Err(Error::InvalidArgument("runs and per_plan must be positive".into()));
        }
        if self.clusters.is_empty() {
            return Err(Error::InvalidArgument("no cluster configured".into()));
        }
        Ok(())
    }
}

/// Parallelism variants of every base plan under one strategy.
pub fn enumerate_plans(
    plans: &[QueryPlan],
    strategy: &EnumerationStrategy,
    settings: &EnumerationSettings,
    total_cores: u32,
    seed: u64,
) -> Result<Vec<QueryPlan>> {
    let cfg = EnumerationConfig::new(strategy.clone(), settings.degree_min, settings.degree_max);
    let mut out = Vec::new();
    for (i, base) in plans.iter().enumerate() {
        let ctx = RuleContext::from_plan(base, settings.per_core_capacity, total_cores);
        let variants = enumerate(base, &cfg, Some(&ctx), mix64(seed, fnv1a(base.id.as_bytes())))
            .map_err(|e| Error::at_plan(i, e))?;
        out.extend(variants.take(settings.per_plan));
    }
    Ok(out)
}

/// Seed of a plan's run protocol; depends only on the plan id.
pub fn plan_seed(seed: u64, plan: &QueryPlan) -> u64 {
    mix64(seed, fnv1a(plan.id.as_bytes()))
}

/// Runs the protocol for one plan and packages the labeled record (id 0)
/// with a summary of the pooled latency samples.
pub fn execute_plan(
    plan: &QueryPlan,
    cluster: &ClusterProfile,
    exec: &ExecConfig,
    runs: usize,
    seed: u64,
    strategy: &str,
) -> Result<(RunRecord, SummaryRow)> {
    let seed = plan_seed(seed, plan);
    let result = run_protocol(plan, cluster, exec, runs, seed)?;
    let s = result.summary()?;
    let summary = SummaryRow {
        plan_id: plan.id.clone(),
        cluster: cluster.name.clone(),
        mode: exec.mode.to_string(),
        runs,
        p50_us: s.p50,
        p95_us: s.p95,
        p99_us: s.p99,
        mean_us: s.mean,
        throughput_tps: result.mean_throughput_tps,
    };
    let record = RunRecord {
        id: 0,
        plan: plan.clone(),
        cluster: cluster.name.clone(),
        cluster_digest: cluster.digest(),
        nodes: cluster.nodes.iter().map(|n| (n.cores, n.speed_factor)).collect(),
        placement: exec.placement,
        slots_per_core: exec.slots_per_core,
        strategy: strategy.to_string(),
        duration_s: exec.duration_s,
        labels: Labels { median_latency_us: result.mean_median_us, throughput_tps: result.mean_throughput_tps },
        run_medians_us: result.run_medians_us,
        mode: exec.mode,
        seed,
        harness_version: HARNESS_VERSION.into(),
    };
    Ok((record, summary))
}

#[derive(Debug, Default)]
pub struct Executed {
    pub records: Vec<RunRecord>,
    pub summaries: Vec<SummaryRow>,
    /// Plans that failed to run, with their errors.
    pub failures: Vec<(String, Error)>,
}

/// Executes every plan and appends a record per success to `writer`.
/// Failed plans are collected and the rest still run.
pub fn execute_all(
    plans: &[QueryPlan],
    cluster: &ClusterProfile,
    exec: &ExecConfig,
    runs: usize,
    seed: u64,
    strategy: &str,
    writer: &mut CorpusWriter,
) -> Result<Executed> {
    let mut out = Executed::default();
    for (i, plan) in plans.iter().enumerate() {
        match execute_plan(plan, cluster, exec, runs, seed, strategy) {
            Ok((mut record, summary)) => {
                record.id = writer.append(record.clone())?;
                out.records.push(record);
                out.summaries.push(summary);
            }
            Err(e) => {
                log::warn!("plan {}: {e}", plan.id);
                out.failures.push((plan.id.clone(), e));
            }
        }
        if (i + 1) % 50 == 0 {
            log::info!("{strategy} on {}: {}/{} plans run", cluster.name, i + 1, plans.len());
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GroupBy {
    pub structure: bool,
    pub category: bool,
    pub cluster: bool,
}

impl Default for GroupBy {
    fn default() -> Self {
        GroupBy { structure: true, category: true, cluster: true }
    }
}

impl GroupBy {
    /// Parses a comma-separated subset of `structure,category,cluster`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut g = GroupBy { structure: false, category: false, cluster: false };
        for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match part {
                "structure" => g.structure = true,
                "category" => g.category = true,
                "cluster" => g.cluster = true,
                _ => return Err(Error::InvalidArgument(format!("cannot group by `{part}`"))),
            }
        }
        if !(g.structure || g.category || g.cluster) {
            return Err(Error::InvalidArgument("group-by needs at least one column".into()));
        }
        Ok(g)
    }
}

pub const REPORT_HEADER: [&str; 5] = ["structure", "category", "cluster", "n", "p50_us"];

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub structure: String,
    pub category: String,
    pub cluster: String,
    pub n: usize,
    /// Median of the records' latency labels.
    pub p50_us: f64,
}

/// Latency labels grouped by the selected columns; other columns read `all`.
pub fn report(records: &[RunRecord], group_by: GroupBy) -> Result<Vec<ReportRow>> {
    if records.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let mut groups: BTreeMap<(String, usize, String), Vec<f64>> = BTreeMap::new();
    for r in records {
        let category = plan_category(&r.plan);
        let key = (
            if group_by.structure { r.structure().to_string() } else { "all".into() },
            if group_by.category { category as usize } else { usize::MAX },
            if group_by.cluster { r.cluster.clone() } else { "all".into() },
        );
        groups.entry(key).or_default().push(r.labels.median_latency_us);
    }
    groups
        .into_iter()
        .map(|((structure, cat, cluster), labels)| {
            let category = crate::model::ParallelismCategory::ALL
                .get(cat)
                .map(|c| c.name().to_string())
                .unwrap_or_else(|| "all".into());
            Ok(ReportRow { structure, category, cluster, n: labels.len(), p50_us: metrics::median(&labels)? })
        })
        .collect()
}

pub fn write_report<W: Write>(out: W, rows: &[ReportRow]) -> Result<()> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.structure.clone(), r.category.clone(), r.cluster.clone(), r.n.to_string(), r.p50_us.to_string()])
        .collect();
    metrics::write_csv(out, &REPORT_HEADER, &rows)
}

/// SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Clone, Debug)]
pub struct PipelineSummary {
    pub plans: usize,
    /// Records per strategy corpus.
    pub records: BTreeMap<String, usize>,
    pub failed_runs: usize,
    pub corpus: PathBuf,
    pub corpus_digest: String,
    pub models: Vec<TrainedModel>,
    pub evaluations: Vec<learn::Evaluation>,
    pub comparison: Vec<learn::ComparisonRow>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

pub fn corpus_path(out_dir: &Path, strategy: &EnumerationStrategy) -> PathBuf {
    out_dir.join(format!("corpus-{}.jsonl", strategy.tag()))
}

/// Runs every stage in order; the first failing stage is named in the error.
/// Outputs are overwritten, so reruns with the same config reproduce them.
pub fn run_pipeline(cfg: &HarnessConfig) -> Result<PipelineSummary> {
    cfg.check().map_err(|e| Error::stage("config", e))?;
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out.join("models")).map_err(|e| Error::stage("config", Error::io(out, e)))?;
    std::fs::write(out.join("config.toml"), cfg.to_toml()).map_err(|e| Error::stage("config", Error::io(out, e)))?;

    let plans = generate_corpus(&cfg.generator)
        .map_err(|e| Error::stage("generate", e))?;
    write_plans(&out.join("plans.jsonl"), &plans).map_err(|e| Error::stage("generate", e))?;
    log::info!("generated {} plans", plans.len());

    let clusters: Vec<ClusterProfile> = cfg
        .clusters
        .iter()
        .map(|c| ClusterProfile::resolve(c))
        .collect::<Result<_>>()
        .map_err(|e| Error::stage("run", e))?;
    let strategies = cfg.enumeration.parsed().map_err(|e| Error::stage("enumerate", e))?;

    let mut corpora: Vec<(String, Vec<RunRecord>)> = Vec::new();
    let mut failed_runs = 0;
    for strategy in &strategies {
        let path = corpus_path(out, strategy);
        let mut writer = CorpusWriter::create(&path).map_err(|e| Error::stage("run", e))?;
        let mut records = Vec::new();
        for cluster in &clusters {
            let variants = enumerate_plans(&plans, strategy, &cfg.enumeration, cluster.total_cores(), cfg.seed)
                .map_err(|e| Error::stage("enumerate", e))?;
            let done = execute_all(&variants, cluster, &cfg.exec, cfg.runs, cfg.seed, strategy.tag(), &mut writer)
                .map_err(|e| Error::stage("run", e))?;
            failed_runs += done.failures.len();
            records.extend(done.records);
        }
        if records.is_empty() {
            return Err(Error::stage("run", Error::Empty("every plan failed to run")));
        }
        log::info!("{} corpus: {} records", strategy.tag(), records.len());
        corpora.push((strategy.tag().to_string(), records));
    }
    let primary_path = corpus_path(out, &strategies[0]);
    let corpus_digest = file_digest(&primary_path).map_err(|e| Error::stage("run", e))?;

    let records = &corpora[0].1;
    let split = corpus::split(records, &cfg.split).map_err(|e| Error::stage("split", e))?;
    let test = corpus::select(records, &split.test);

    let mut kinds = cfg.models.clone();
    if !kinds.contains(&ModelKind::Mean) {
        kinds.push(ModelKind::Mean);
    }
    let mut models = Vec::new();
    for kind in kinds {
        let config = TrainConfig { kind, ..cfg.train.clone() };
        let model = learn::train(records, &split, &config).map_err(|e| Error::stage("train", e))?;
        model.save(&out.join("models").join(format!("{kind}.json"))).map_err(|e| Error::stage("train", e))?;
        models.push(model);
    }

    let evaluations: Vec<learn::Evaluation> =
        models.iter().map(|m| learn::evaluate(m, &test)).collect::<Result<_>>().map_err(|e| Error::stage("evaluate", e))?;
    let eval_path = out.join("evaluation.csv");
    create(&eval_path)
        .and_then(|w| learn::write_evaluations(w, &evaluations))
        .map_err(|e| Error::stage("evaluate", e))?;
    write_predictions(&out.join("predictions.csv"), &models, &test).map_err(|e| Error::stage("evaluate", e))?;

    let mut comparison = Vec::new();
    if corpora.len() >= 2 {
        let equal = equalize(&corpora);
        let config = TrainConfig { kind: cfg.compare_model, ..cfg.train.clone() };
        comparison =
            learn::compare_enumeration_training(&equal, &cfg.split, &config).map_err(|e| Error::stage("compare", e))?;
        create(&out.join("comparison.csv"))
            .and_then(|w| learn::write_comparison(w, &comparison))
            .map_err(|e| Error::stage("compare", e))?;
    }

    let all: Vec<RunRecord> = corpora.iter().flat_map(|c| c.1.iter().cloned()).collect();
    let rows = report(&all, GroupBy::default()).map_err(|e| Error::stage("report", e))?;
    create(&out.join("report.csv")).and_then(|w| write_report(w, &rows)).map_err(|e| Error::stage("report", e))?;

    Ok(PipelineSummary {
        plans: plans.len(),
        records: corpora.iter().map(|(s, r)| (s.clone(), r.len())).collect(),
        failed_runs,
        corpus: primary_path,
        corpus_digest,
        models,
        evaluations,
        comparison,
    })
}

/// Truncates every corpus to the smallest one's size, so the comparison
/// isolates the effect of the strategy.
pub fn equalize(corpora: &[(String, Vec<RunRecord>)]) -> Vec<(String, Vec<RunRecord>)> {
    let n = corpora.iter().map(|c| c.1.len()).min().unwrap_or(0);
    corpora.iter().map(|(s, r)| (s.clone(), r[..n].to_vec())).collect()
}

pub const PREDICTIONS_HEADER: [&str; 5] = ["record", "structure", "model", "label_us", "predicted_us"];

/// Per-record test predictions of every model.
pub fn write_predictions(path: &Path, models: &[TrainedModel], records: &[&RunRecord]) -> Result<()> {
    let mut rows = Vec::new();
    for m in models {
        for r in records {
            rows.push(vec![
                r.id.to_string(),
                r.structure().to_string(),
                m.kind.to_string(),
                r.labels.median_latency_us.to_string(),
                m.predict(r)?.to_string(),
            ]);
        }
    }
    metrics::write_csv(create(path)?, &PREDICTIONS_HEADER, &rows)
}
