//! Learned latency models: ridge regression, MLP, random forest and a DAG
//! message-passing network, plus a mean-label baseline.

mod features;
mod gnn;
mod linalg;
mod lr;
mod mlp;
mod rf;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use features::{
    featurize_flat, featurize_graph, Normalizer, PlanGraph, FEATURE_VERSION, FLAT_FEATURES, NODE_FEATURES,
};
pub use gnn::Gnn;
pub use linalg::cholesky_solve;
pub use lr::Linear;
pub use mlp::Mlp;
pub use rf::{Forest, Node as TreeNode, Tree};

use crate::corpus::{self, RunRecord, Split, SplitSpec};
use crate::error::{Error, Result};
use crate::metrics::{self, q_error_report, QErrorReport, PREDICTION_FLOOR};
use crate::model::mix64;

pub const MODEL_FORMAT: &str = "pdsp-model/1";
pub const MIN_TRAIN_RECORDS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lr,
    Mlp,
    Rf,
    Gnn,
    /// Predicts the mean training label.
    Mean,
}

impl ModelKind {
    pub const LEARNED: [ModelKind; 4] = [ModelKind::Lr, ModelKind::Mlp, ModelKind::Rf, ModelKind::Gnn];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lr => "lr",
            ModelKind::Mlp => "mlp",
            ModelKind::Rf => "rf",
            ModelKind::Gnn => "gnn",
            ModelKind::Mean => "mean",
        }
    }

    fn iterative(self) -> bool {
        matches!(self, ModelKind::Mlp | ModelKind::Gnn)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [ModelKind::Lr, ModelKind::Mlp, ModelKind::Rf, ModelKind::Gnn, ModelKind::Mean]
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model `{s}` (expected lr, mlp, rf, gnn or mean)")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetTransform {
    #[default]
    Log,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub mlp_hidden: Vec<usize>,
    pub gnn_hidden: usize,
    pub rounds: usize,
    pub trees: usize,
    /// Zero grows trees until leaves are pure.
    pub max_depth: usize,
    pub bootstrap: bool,
    pub ridge: f64,
    pub target: TargetTransform,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            kind: ModelKind::Mlp,
            learning_rate: 1e-3,
            max_epochs: 1000,
            patience: 100,
            batch_size: 32,
            mlp_hidden: vec![64, 64],
            gnn_hidden: 32,
            rounds: 3,
            trees: 100,
            max_depth: 12,
            bootstrap: true,
            ridge: 1e-3,
            target: TargetTransform::Log,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn for_kind(kind: ModelKind) -> Self {
        TrainConfig { kind, ..Default::default() }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("train config: {what} must be positive")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate");
        }
        if !(self.ridge > 0.0 && self.ridge.is_finite()) {
            return bad("ridge");
        }
        for (name, v) in [
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("batch_size", self.batch_size),
            ("gnn_hidden", self.gnn_hidden),
            ("rounds", self.rounds),
            ("trees", self.trees),
        ] {
            if v == 0 {
                return bad(name);
            }
        }
        if self.mlp_hidden.is_empty() || self.mlp_hidden.contains(&0) {
            return bad("every mlp_hidden width");
        }
        Ok(())
    }
}

/// Maps labels to the regression target and back.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetScale {
    pub transform: TargetTransform,
    pub mean: f64,
    /// Standard deviation of the transformed training labels; zero for
    /// constant labels, which makes every prediction the constant.
    pub std: f64,
}

impl TargetScale {
    fn fit(transform: TargetTransform, labels: &[f64]) -> Self {
        let t: Vec<f64> = labels.iter().map(|&y| Self::forward(transform, y)).collect();
        let mean = metrics::mean(&t);
        let std = (t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t.len() as f64).sqrt();
        TargetScale { transform, mean, std: if std > 1e-12 { std } else { 0.0 } }
    }

    fn forward(transform: TargetTransform, y: f64) -> f64 {
        match transform {
            TargetTransform::Log => y.ln(),
            TargetTransform::Identity => y,
        }
    }

    fn normalize(&self, y: f64) -> f64 {
        let div = if self.std > 0.0 { self.std } else { 1.0 };
        (Self::forward(self.transform, y) - self.mean) / div
    }

    fn denormalize(&self, z: f64) -> f64 {
        let t = self.mean + self.std * z;
        match self.transform {
            TargetTransform::Log => t.min(700.0).exp().max(PREDICTION_FLOOR),
            TargetTransform::Identity => t.max(PREDICTION_FLOOR),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ModelParams {
    Mean { value: f64 },
    Lr(Linear),
    Mlp(Mlp),
    Rf(Forest),
    Gnn(Gnn),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

impl TrainingCurve {
    /// Epoch of the lowest validation loss (first on ties).
    pub fn best_epoch(&self) -> Option<usize> {
        self.val_loss.iter().enumerate().fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
            Some((_, b)) if v >= b => best,
            _ => Some((i, v)),
        })
        .map(|b| b.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format: String,
    pub kind: ModelKind,
    pub feature_version: String,
    pub feature_names: Vec<String>,
    pub config: TrainConfig,
    pub normalizer: Normalizer,
    pub target: TargetScale,
    pub params: ModelParams,
    pub curve: TrainingCurve,
    pub best_epoch: Option<usize>,
    pub stopped_epoch: Option<usize>,
    pub early_stopped: bool,
    pub train_records: usize,
    pub train_seconds: f64,
}

struct Fit {
    params: Vec<f64>,
    curve: TrainingCurve,
    best_epoch: usize,
    stopped_epoch: usize,
    early_stopped: bool,
}

/// Mini-batch Adam with early stopping on validation loss. Any strict
/// decrease counts as improvement; the best parameters are restored.
fn fit_adam(
    mut params: Vec<f64>,
    n: usize,
    cfg: &TrainConfig,
    mut loss_grad: impl FnMut(&[f64], &[usize], &mut [f64]) -> f64,
    val_loss: impl Fn(&[f64]) -> f64,
) -> Result<Fit> {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(cfg.seed, 0x5eed));
    let mut grad = vec![0.0; params.len()];
    let (mut m, mut v) = (vec![0.0; params.len()], vec![0.0; params.len()]);
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..n).collect();
    let mut curve = TrainingCurve::default();
    let mut best = (f64::INFINITY, 0usize, params.clone());
    let mut stopped = (cfg.max_epochs - 1, false);
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut train = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let loss = loss_grad(&params, batch, &mut grad);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training(format!("non-finite training loss {loss} at epoch {epoch}")));
            }
            train += loss * batch.len() as f64 / n as f64;
            step += 1;
            let (c1, c2) = (1.0 - B1.powi(step), 1.0 - B2.powi(step));
            for i in 0..params.len() {
                m[i] = B1 * m[i] + (1.0 - B1) * grad[i];
                v[i] = B2 * v[i] + (1.0 - B2) * grad[i] * grad[i];
                params[i] -= cfg.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
            }
        }
        let val = val_loss(&params);
        if !val.is_finite() {
            return Err(Error::Training(format!("non-finite validation loss {val} at epoch {epoch}")));
        }
        curve.train_loss.push(train);
        curve.val_loss.push(val);
        if val < best.0 {
            best = (val, epoch, params.clone());
        } else if epoch - best.1 >= cfg.patience {
            stopped = (epoch, true);
            break;
        }
    }
    log::debug!("stopped at epoch {} (best {} val {:.5})", stopped.0, best.1, best.0);
    Ok(Fit { params: best.2, curve, best_epoch: best.1, stopped_epoch: stopped.0, early_stopped: stopped.1 })
}

fn graph_inputs(graphs: &[PlanGraph], norm: &Normalizer) -> Vec<(PlanGraph, Vec<Vec<f64>>)> {
    graphs
        .iter()
        .map(|g| (g.clone(), g.features.iter().map(|f| norm.apply(f)).collect()))
        .collect()
}

fn check_labels(records: &[&RunRecord]) -> Result<Vec<f64>> {
    records
        .iter()
        .map(|r| {
            let y = r.labels.median_latency_us;
            if y > 0.0 && y.is_finite() {
                Ok(y)
            } else {
                Err(Error::InvalidArgument(format!("record {} has non-positive latency label {y}", r.id)))
            }
        })
        .collect()
}

/// Trains on the split's training records, monitoring its validation records.
pub fn train(records: &[RunRecord], split: &Split, config: &TrainConfig) -> Result<TrainedModel> {
    let train = corpus::select(records, &split.train);
    let val = corpus::select(records, &split.val);
    train_on(&train, &val, config)
}

pub fn train_on(train: &[&RunRecord], val: &[&RunRecord], config: &TrainConfig) -> Result<TrainedModel> {
    config.check()?;
    if train.len() < MIN_TRAIN_RECORDS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_TRAIN_RECORDS} training records, got {}",
            train.len()
        )));
    }
    if config.kind.iterative() && val.is_empty() {
        return Err(Error::InvalidArgument(format!("{} training needs validation records", config.kind)));
    }
    let started = Instant::now();
    let labels = check_labels(train)?;
    let val_labels = check_labels(val)?;
    let target = TargetScale::fit(config.target, &labels);
    let ys: Vec<f64> = labels.iter().map(|&y| target.normalize(y)).collect();
    let val_ys: Vec<f64> = val_labels.iter().map(|&y| target.normalize(y)).collect();

    let mut model = TrainedModel {
        format: MODEL_FORMAT.into(),
        kind: config.kind,
        feature_version: FEATURE_VERSION.into(),
        feature_names: Vec::new(),
        config: config.clone(),
        normalizer: Normalizer { mean: vec![], std: vec![] },
        target,
        params: ModelParams::Mean { value: metrics::mean(&labels) },
        curve: TrainingCurve::default(),
        best_epoch: None,
        stopped_epoch: None,
        early_stopped: false,
        train_records: train.len(),
        train_seconds: 0.0,
    };

    let flat = |rs: &[&RunRecord]| rs.iter().map(|r| featurize_flat(r)).collect::<Vec<_>>();
    match config.kind {
        ModelKind::Mean => {}
        ModelKind::Lr | ModelKind::Mlp | ModelKind::Rf => {
            let raw = flat(train);
            let norm = Normalizer::fit(raw.iter().map(|v| v.as_slice()));
            let xs: Vec<Vec<f64>> = raw.iter().map(|x| norm.apply(x)).collect();
            model.feature_names = FLAT_FEATURES.iter().map(|s| s.to_string()).collect();
            model.params = match config.kind {
                ModelKind::Lr => ModelParams::Lr(
                    Linear::fit(&xs, &ys, config.ridge)
                        .ok_or_else(|| Error::Training("ridge normal equations are not positive definite".into()))?,
                ),
                ModelKind::Rf => {
                    ModelParams::Rf(Forest::fit(&xs, &ys, config.trees, (config.max_depth > 0).then_some(config.max_depth), config.bootstrap, config.seed))
                }
                _ => {
                    let val_xs: Vec<Vec<f64>> = flat(val).iter().map(|x| norm.apply(x)).collect();
                    let mut net = Mlp::new(xs[0].len(), &config.mlp_hidden, config.seed);
                    let shape = net.clone();
                    let fit = fit_adam(
                        std::mem::take(&mut net.params),
                        xs.len(),
                        config,
                        |p, batch, g| shape.loss_grad(p, &xs, &ys, batch, g),
                        |p| shape.loss(p, &val_xs, &val_ys),
                    )?;
                    net.params = fit.params;
                    model.curve = fit.curve;
                    model.best_epoch = Some(fit.best_epoch);
                    model.stopped_epoch = Some(fit.stopped_epoch);
                    model.early_stopped = fit.early_stopped;
                    ModelParams::Mlp(net)
                }
            };
            model.normalizer = norm;
        }
        ModelKind::Gnn => {
            let graphs: Vec<PlanGraph> = train.iter().map(|r| featurize_graph(r)).collect();
            let norm = Normalizer::fit(graphs.iter().flat_map(|g| g.features.iter().map(|f| f.as_slice())));
            let inputs = graph_inputs(&graphs, &norm);
            let val_graphs: Vec<PlanGraph> = val.iter().map(|r| featurize_graph(r)).collect();
            let val_inputs = graph_inputs(&val_graphs, &norm);
            let mut net = Gnn::new(NODE_FEATURES.len(), config.gnn_hidden, config.rounds, config.seed);
            let shape = net.clone();
            let fit = fit_adam(
                std::mem::take(&mut net.params),
                inputs.len(),
                config,
                |p, batch, g| shape.loss_grad(p, &inputs, &ys, batch, g),
                |p| shape.loss(p, &val_inputs, &val_ys),
            )?;
            net.params = fit.params;
            model.curve = fit.curve;
            model.best_epoch = Some(fit.best_epoch);
            model.stopped_epoch = Some(fit.stopped_epoch);
            model.early_stopped = fit.early_stopped;
            model.feature_names = NODE_FEATURES.iter().map(|s| s.to_string()).collect();
            model.normalizer = norm;
            model.params = ModelParams::Gnn(net);
        }
    }
    model.train_seconds = started.elapsed().as_secs_f64();
    log::info!("trained {} on {} records in {:.2}s", model.kind, train.len(), model.train_seconds);
    Ok(model)
}

impl TrainedModel {
    fn check_version(&self) -> Result<()> {
        if self.format != MODEL_FORMAT {
            return Err(Error::InvalidArgument(format!("unsupported model format `{}`", self.format)));
        }
        if self.feature_version != FEATURE_VERSION {
            return Err(Error::FeatureVersion { expected: self.feature_version.clone(), found: FEATURE_VERSION.into() });
        }
        Ok(())
    }

    /// Predicted median latency in microseconds.
    pub fn predict(&self, record: &RunRecord) -> Result<f64> {
        self.check_version()?;
        let z = match &self.params {
            ModelParams::Mean { value } => return Ok(value.max(PREDICTION_FLOOR)),
            ModelParams::Lr(m) => m.predict(&self.normalizer.apply(&featurize_flat(record))),
            ModelParams::Mlp(m) => m.predict(&self.normalizer.apply(&featurize_flat(record))),
            ModelParams::Rf(m) => m.predict(&self.normalizer.apply(&featurize_flat(record))),
            ModelParams::Gnn(_) => return self.predict_graph(&featurize_graph(record)),
        };
        Ok(self.target.denormalize(z))
    }

    /// GNN prediction for an already featurized plan graph.
    pub fn predict_graph(&self, graph: &PlanGraph) -> Result<f64> {
        self.check_version()?;
        let ModelParams::Gnn(net) = &self.params else {
            return Err(Error::InvalidArgument(format!("{} models take flat features, not graphs", self.kind)));
        };
        let x = graph.features.iter().map(|f| self.normalizer.apply(f)).collect();
        Ok(self.target.denormalize(net.predict_with(&net.params, graph, x)))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: TrainedModel = serde_json::from_str(&text)?;
        model.check_version()?;
        Ok(model)
    }
}

pub const EVALUATION_HEADER: [&str; 7] = ["model", "structure", "n", "q50", "q95", "qmax", "train_seconds"];

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub model: String,
    pub train_seconds: f64,
    pub overall: QErrorReport,
    /// One entry per structure present, in structure-name order.
    pub by_structure: Vec<(String, QErrorReport)>,
}

impl Evaluation {
    pub fn rows(&self) -> Vec<Vec<String>> {
        let row = |structure: &str, r: &QErrorReport| {
            vec![
                self.model.clone(),
                structure.to_string(),
                r.n.to_string(),
                r.median.to_string(),
                r.p95.to_string(),
                r.max.to_string(),
                format!("{:.3}", self.train_seconds),
            ]
        };
        std::iter::once(row("all", &self.overall)).chain(self.by_structure.iter().map(|(s, r)| row(s, r))).collect()
    }
}

/// Q-error report for given predictions, overall and per structure.
pub fn evaluate_predictions(model: &str, records: &[&RunRecord], predictions: &[f64], train_seconds: f64) -> Result<Evaluation> {
    if records.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let pairs: Vec<(f64, f64)> = records.iter().map(|r| r.labels.median_latency_us).zip(predictions.iter().copied()).collect();
    let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for (r, pair) in records.iter().zip(&pairs) {
        groups.entry(r.structure().to_string()).or_default().push(*pair);
    }
    Ok(Evaluation {
        model: model.to_string(),
        train_seconds,
        overall: q_error_report(&pairs)?,
        by_structure: groups.into_iter().map(|(s, p)| Ok((s, q_error_report(&p)?))).collect::<Result<_>>()?,
    })
}

pub fn evaluate(model: &TrainedModel, records: &[&RunRecord]) -> Result<Evaluation> {
    let predictions: Vec<f64> = records.iter().map(|r| model.predict(r)).collect::<Result<_>>()?;
    evaluate_predictions(model.kind.name(), records, &predictions, model.train_seconds)
}

pub fn write_evaluations<W: Write>(out: W, evaluations: &[Evaluation]) -> Result<()> {
    let rows: Vec<Vec<String>> = evaluations.iter().flat_map(|e| e.rows()).collect();
    metrics::write_csv(out, &EVALUATION_HEADER, &rows)
}

pub const COMPARISON_HEADER: [&str; 6] = ["strategy", "records", "train_seconds", "q50", "q95", "qmax"];

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub strategy: String,
    pub records: usize,
    pub train_seconds: f64,
    pub test: QErrorReport,
}

/// Trains the same model configuration on each strategy's corpus and
/// reports test q-error against corpus size and training time.
pub fn compare_enumeration_training(
    corpora: &[(String, Vec<RunRecord>)],
    split_spec: &SplitSpec,
    config: &TrainConfig,
) -> Result<Vec<ComparisonRow>> {
    if corpora.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 strategy corpora, got {}", corpora.len())));
    }
    corpora
        .iter()
        .map(|(strategy, records)| {
            let run = || -> Result<ComparisonRow> {
                let split = corpus::split(records, split_spec)?;
                let model = train(records, &split, config)?;
                let test = corpus::select(records, &split.test);
                let eval = evaluate(&model, &test)?;
                Ok(ComparisonRow {
                    strategy: strategy.clone(),
                    records: records.len(),
                    train_seconds: model.train_seconds,
                    test: eval.overall,
                })
            };
            run().map_err(|e| Error::AtStrategy { strategy: strategy.clone(), source: Box::new(e) })
        })
        .collect()
}

pub fn write_comparison<W: Write>(out: W, rows: &[ComparisonRow]) -> Result<()> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.strategy.clone(),
                r.records.to_string(),
                format!("{:.3}", r.train_seconds),
                r.test.median.to_string(),
                r.test.p95.to_string(),
                r.test.max.to_string(),
            ]
        })
        .collect();
    metrics::write_csv(out, &COMPARISON_HEADER, &rows)
}

/// Flat features and labels of every record, one CSV row per record.
pub fn export_features<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut header = vec!["id", "plan_id", "structure", "cluster", "strategy"];
    header.extend(FLAT_FEATURES);
    header.extend(["median_latency_us", "throughput_tps"]);
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let mut row = vec![r.id.to_string(), r.plan.id.clone(), r.structure().to_string(), r.cluster.clone(), r.strategy.clone()];
            row.extend(featurize_flat(r).iter().map(|v| v.to_string()));
            row.push(r.labels.median_latency_us.to_string());
            row.push(r.labels.throughput_tps.to_string());
            row
        })
        .collect();
    metrics::write_csv(out, &header, &rows)
}
