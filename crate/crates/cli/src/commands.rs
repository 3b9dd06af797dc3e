use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use pdsp_core::corpus::{self, load_records, CorpusWriter, RunRecord};
use pdsp_core::enumerate::{parse_assignments, EnumerationStrategy};
use pdsp_core::exec::ClusterProfile;
use pdsp_core::learn::{self, TrainConfig, TrainedModel};
use pdsp_core::metrics::write_summary_csv;
use pdsp_core::model::{read_plans, write_plans, QueryPlan, StructureTag};
use pdsp_core::pipeline::{
    enumerate_plans, equalize, execute_all, report, run_pipeline, write_predictions, write_report, EnumerationSettings,
    GroupBy, HarnessConfig, ReportRow, REPORT_HEADER,
};
use pdsp_core::workload::generate_corpus;
use pdsp_core::{Error, Result};

use crate::{
    Cli, Command, CompareArgs, CorpusCommand, EnumerateArgs, EnumerationArgs, EvaluateArgs, ExportArgs, Format,
    GenerateArgs, PipelineArgs, ReportArgs, RunArgs, TrainArgs,
};

pub fn dispatch(cli: &Cli) -> Result<u8> {
    let mut cfg = match &cli.config {
        Some(path) => HarnessConfig::load(path)?,
        None => HarnessConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.generator.seed = seed;
        cfg.split.seed = seed;
        cfg.train.seed = seed;
    }
    match &cli.command {
        Command::Generate(a) => generate(cfg, a),
        Command::Enumerate(a) => enumerate(cfg, a),
        Command::Run(a) => run(cfg, a),
        Command::Report(a) => cmd_report(a),
        Command::Corpus(CorpusCommand::Export(a)) => export(a),
        Command::Train(a) => train(cfg, a),
        Command::Evaluate(a) => evaluate(cfg, a),
        Command::CompareStrategies(a) => compare(cfg, a),
        Command::Pipeline(a) => pipeline(cfg, a),
    }
}

/// A buffered writer to `path`, or standard output.
fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_plans(path: &Path) -> Result<Vec<QueryPlan>> {
    let plans = read_plans(path)?;
    if plans.is_empty() {
        return Err(Error::InvalidArgument(format!("no plans in {}", path.display())));
    }
    Ok(plans)
}

fn load_corpus(path: &Path) -> Result<Vec<RunRecord>> {
    let records = load_records(path)?;
    if records.is_empty() {
        return Err(Error::InvalidArgument(format!("corpus {} is empty", path.display())));
    }
    Ok(records)
}

fn generate(mut cfg: HarnessConfig, a: &GenerateArgs) -> Result<u8> {
    let tags: Vec<StructureTag> = a.structures.iter().chain(&a.apps).map(|s| s.parse()).collect::<Result<_>>()?;
    if !tags.is_empty() {
        cfg.generator.count = tags.len();
        cfg.generator.structures = tags;
    }
    if let Some(n) = a.count {
        cfg.generator.count = n;
    }
    let plans = generate_corpus(&cfg.generator)?;
    write_plans(&a.out, &plans)?;
    let mut counts: Vec<(String, usize)> = Vec::new();
    for p in &plans {
        let tag = p.structure_tag.to_string();
        match counts.iter_mut().find(|(t, _)| *t == tag) {
            Some((_, n)) => *n += 1,
            None => counts.push((tag, 1)),
        }
    }
    for (tag, n) in counts {
        println!("{tag}: {n}");
    }
    eprintln!("wrote {} plans to {}", plans.len(), a.out.display());
    Ok(0)
}

/// The strategy and settings from the flags, or `None` without `--strategy`.
fn enumeration(cfg: &HarnessConfig, a: &EnumerationArgs) -> Result<Option<(EnumerationStrategy, EnumerationSettings)>> {
    let Some(strategy) = a.strategy.clone() else {
        if !a.assign.is_empty() {
            return Err(Error::InvalidArgument("--assign needs --strategy parameter".into()));
        }
        return Ok(None);
    };
    let strategy = match strategy {
        EnumerationStrategy::ParameterBased(_) => EnumerationStrategy::ParameterBased(parse_assignments(&a.assign)?),
        _ if !a.assign.is_empty() => {
            return Err(Error::InvalidArgument("--assign needs --strategy parameter".into()));
        }
        s => s,
    };
    let mut settings = cfg.enumeration.clone();
    settings.degree_min = a.degree_min.unwrap_or(settings.degree_min);
    settings.degree_max = a.degree_max.unwrap_or(settings.degree_max);
    settings.per_core_capacity = a.per_core_capacity.unwrap_or(settings.per_core_capacity);
    settings.per_plan = match (a.per_plan, &strategy) {
        (Some(n), _) => n,
        (None, EnumerationStrategy::Random) => settings.per_plan,
        (None, _) => usize::MAX,
    };
    if settings.per_plan == 0 {
        return Err(Error::InvalidArgument("--per-plan must be positive".into()));
    }
    Ok(Some((strategy, settings)))
}

fn cluster(cfg: &HarnessConfig, flag: Option<&String>) -> Result<ClusterProfile> {
    let spec = flag.or(cfg.clusters.first()).ok_or_else(|| Error::InvalidArgument("no cluster given".into()))?;
    ClusterProfile::resolve(spec)
}

fn enumerate(cfg: HarnessConfig, a: &EnumerateArgs) -> Result<u8> {
    let plans = load_plans(&a.plans)?;
    let (strategy, settings) = enumeration(&cfg, &a.enumeration)?
        .ok_or_else(|| Error::InvalidArgument("--strategy is required".into()))?;
    let cluster = cluster(&cfg, a.cluster.as_ref())?;
    let out = enumerate_plans(&plans, &strategy, &settings, cluster.total_cores(), cfg.seed)?;
    write_plans(&a.out, &out)?;
    println!("{strategy}: {} plans from {} base plans", out.len(), plans.len());
    Ok(0)
}

fn run(mut cfg: HarnessConfig, a: &RunArgs) -> Result<u8> {
    let plans = load_plans(&a.plans)?;
    let cluster = cluster(&cfg, a.cluster.as_ref())?;
    let e = &a.exec;
    let exec = &mut cfg.exec;
    exec.mode = e.mode.unwrap_or(exec.mode);
    exec.duration_s = e.duration.unwrap_or(exec.duration_s);
    exec.time_scale = e.time_scale.unwrap_or(exec.time_scale);
    exec.slots_per_core = e.slots_per_core.unwrap_or(exec.slots_per_core);
    exec.placement = e.placement.unwrap_or(exec.placement);
    exec.check()?;
    let runs = e.runs.unwrap_or(cfg.runs);
    if runs == 0 {
        return Err(Error::InvalidArgument("--runs must be positive".into()));
    }

    let (plans, tag) = match enumeration(&cfg, &a.enumeration)? {
        Some((strategy, settings)) => {
            (enumerate_plans(&plans, &strategy, &settings, cluster.total_cores(), cfg.seed)?, strategy.tag().to_string())
        }
        None => (plans, "given".to_string()),
    };
    let mut writer = CorpusWriter::open(&a.corpus)?;
    let done = execute_all(&plans, &cluster, &cfg.exec, runs, cfg.seed, &tag, &mut writer)?;
    if let Some(path) = &a.metrics {
        write_summary_csv(path, &done.summaries)?;
    }
    println!("{}: {} records appended to {}", cluster.name, done.records.len(), a.corpus.display());
    if done.failures.is_empty() {
        return Ok(0);
    }
    for (plan, err) in &done.failures {
        eprintln!("plan {plan} failed: {err}");
    }
    eprintln!("{} of {} plans failed", done.failures.len(), plans.len());
    Ok(if done.failures.iter().all(|(_, e)| e.is_user_error()) { 1 } else { 2 })
}

fn format_table(rows: &[ReportRow]) -> String {
    let cells: Vec<[String; 5]> = std::iter::once(REPORT_HEADER.map(String::from))
        .chain(rows.iter().map(|r| {
            [r.structure.clone(), r.category.clone(), r.cluster.clone(), r.n.to_string(), format!("{:.1}", r.p50_us)]
        }))
        .collect();
    let widths: Vec<usize> = (0..5).map(|i| cells.iter().map(|c| c[i].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in &cells {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i >= 3 { format!("{c:>w$}") } else { format!("{c:<w$}") })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn cmd_report(a: &ReportArgs) -> Result<u8> {
    let group_by = GroupBy::parse(&a.group_by)?;
    let mut records = Vec::new();
    for path in &a.corpus {
        records.extend(load_records(path)?);
    }
    let rows = report(&records, group_by)?;
    let mut out = output(a.out.as_deref())?;
    match a.format {
        Format::Csv => write_report(&mut out, &rows)?,
        Format::Table => out.write_all(format_table(&rows).as_bytes()).map_err(|e| Error::io("<report>", e))?,
    }
    out.flush().map_err(|e| Error::io("<report>", e))?;
    Ok(0)
}

fn export(a: &ExportArgs) -> Result<u8> {
    let records = load_corpus(&a.corpus)?;
    let mut out = output(a.out.as_deref())?;
    learn::export_features(&mut out, &records)?;
    Ok(0)
}

fn train(cfg: HarnessConfig, a: &TrainArgs) -> Result<u8> {
    let records = load_corpus(&a.corpus)?;
    let mut config = TrainConfig { kind: a.model.unwrap_or(cfg.train.kind), ..cfg.train.clone() };
    config.max_epochs = a.max_epochs.unwrap_or(config.max_epochs);
    config.learning_rate = a.learning_rate.unwrap_or(config.learning_rate);
    config.patience = a.patience.unwrap_or(config.patience);
    let split = corpus::split(&records, &cfg.split)?;
    let model = learn::train(&records, &split, &config)?;
    model.save(&a.out)?;
    let eval = learn::evaluate(&model, &corpus::select(&records, &split.test))?;
    let epochs = match (model.best_epoch, model.stopped_epoch) {
        (Some(b), Some(s)) => format!(", best epoch {b}, stopped at {s}{}", if model.early_stopped { " (early)" } else { "" }),
        _ => String::new(),
    };
    println!(
        "{} trained on {} records in {:.1}s{epochs}; test q50 {:.3} q95 {:.3} over {} records -> {}",
        model.kind,
        model.train_records,
        model.train_seconds,
        eval.overall.median,
        eval.overall.p95,
        eval.overall.n,
        a.out.display()
    );
    Ok(0)
}

fn evaluate(cfg: HarnessConfig, a: &EvaluateArgs) -> Result<u8> {
    let records = load_corpus(&a.corpus)?;
    let subset: Vec<&RunRecord> = if a.all {
        records.iter().collect()
    } else {
        corpus::select(&records, &corpus::split(&records, &cfg.split)?.test)
    };
    let models: Vec<TrainedModel> = a.model.iter().map(|p| TrainedModel::load(p)).collect::<Result<_>>()?;
    let evaluations: Vec<learn::Evaluation> = models.iter().map(|m| learn::evaluate(m, &subset)).collect::<Result<_>>()?;
    let mut out = output(a.out.as_deref())?;
    learn::write_evaluations(&mut out, &evaluations)?;
    out.flush().map_err(|e| Error::io("<evaluation>", e))?;
    if let Some(path) = &a.predictions {
        write_predictions(path, &models, &subset)?;
    }
    Ok(0)
}

fn compare(cfg: HarnessConfig, a: &CompareArgs) -> Result<u8> {
    let mut corpora = Vec::new();
    for item in &a.corpus {
        let (name, path) = match item.split_once('=') {
            Some((n, p)) => (Some(n.to_string()), p),
            None => (None, item.as_str()),
        };
        let records = load_corpus(Path::new(path))?;
        let name = name.unwrap_or_else(|| records[0].strategy.clone());
        corpora.push((name, records));
    }
    let equal = equalize(&corpora);
    if corpora.iter().any(|c| c.1.len() != equal[0].1.len()) {
        eprintln!("corpora truncated to {} records each", equal[0].1.len());
    }
    let config = TrainConfig { kind: a.model.unwrap_or(cfg.compare_model), ..cfg.train.clone() };
    let rows = learn::compare_enumeration_training(&equal, &cfg.split, &config)?;
    let mut out = output(a.out.as_deref())?;
    learn::write_comparison(&mut out, &rows)?;
    out.flush().map_err(|e| Error::io("<comparison>", e))?;
    Ok(0)
}

fn pipeline(mut cfg: HarnessConfig, a: &PipelineArgs) -> Result<u8> {
    if let Some(dir) = &a.out_dir {
        cfg.out_dir = dir.clone();
    }
    let s = run_pipeline(&cfg)?;
    println!("plans: {}", s.plans);
    for (strategy, n) in &s.records {
        println!("{strategy} records: {n}");
    }
    println!("failed runs: {}", s.failed_runs);
    println!("corpus: {} (sha256 {})", s.corpus.display(), s.corpus_digest);
    for e in &s.evaluations {
        println!("{}: test q50 {:.3} q95 {:.3} qmax {:.3}", e.model, e.overall.median, e.overall.p95, e.overall.max);
    }
    for c in &s.comparison {
        println!("compare {}: {} records, q50 {:.3}, {:.1}s", c.strategy, c.records, c.test.median, c.train_seconds);
    }
    println!("outputs in {}", cfg.out_dir.display());
    Ok(0)
}
