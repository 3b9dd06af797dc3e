//! Parallelism degree assignment strategies.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    validate_plan, FlatMapFn, KindTag, OpId, OperatorKind, Partitioning, QueryPlan, WindowKind, WindowPolicy,
};

/// Default selectivity of a key-equality join per co-resident tuple pair.
pub const DEFAULT_JOIN_SELECTIVITY: f64 = 0.01;
/// Expected tokens a tokenizing flatMap emits per input tuple.
pub const TOKENIZE_FANOUT: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnumerationStrategy {
    Random,
    RuleBased,
    Exhaustive,
    MinAvgMax,
    Increasing,
    ParameterBased(BTreeMap<OpId, u32>),
}

impl EnumerationStrategy {
    pub fn tag(&self) -> &'static str {
        match self {
            EnumerationStrategy::Random => "random",
            EnumerationStrategy::RuleBased => "rule",
            EnumerationStrategy::Exhaustive => "exhaustive",
            EnumerationStrategy::MinAvgMax => "minavgmax",
            EnumerationStrategy::Increasing => "increasing",
            EnumerationStrategy::ParameterBased(_) => "parameter",
        }
    }
}

impl fmt::Display for EnumerationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for EnumerationStrategy {
    type Err = Error;

    /// Parses the strategy tag; `parameter` starts with an empty assignment.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "random" => EnumerationStrategy::Random,
            "rule" | "rule_based" | "rulebased" => EnumerationStrategy::RuleBased,
            "exhaustive" => EnumerationStrategy::Exhaustive,
            "minavgmax" | "min_avg_max" => EnumerationStrategy::MinAvgMax,
            "increasing" => EnumerationStrategy::Increasing,
            "parameter" | "parameter_based" => EnumerationStrategy::ParameterBased(BTreeMap::new()),
            _ => return Err(Error::InvalidArgument(format!("unknown enumeration strategy `{s}`"))),
        })
    }
}

/// Parses `op=k` assignments; operators may be written `3` or `op3`.
pub fn parse_assignments(items: &[String]) -> Result<BTreeMap<OpId, u32>> {
    let mut out = BTreeMap::new();
    for item in items.iter().flat_map(|s| s.split(',')).map(str::trim).filter(|s| !s.is_empty()) {
        let bad = || Error::InvalidArgument(format!("bad assignment `{item}`, expected op=k"));
        let (op, k) = item.split_once('=').ok_or_else(bad)?;
        let op = op.trim();
        let op: u32 = op.strip_prefix("op").unwrap_or(op).parse().map_err(|_| bad())?;
        let k: u32 = k.trim().parse().map_err(|_| bad())?;
        out.insert(OpId(op), k);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnumerationConfig {
    pub strategy: EnumerationStrategy,
    pub degree_min: u32,
    pub degree_max: u32,
    /// Per-operator range overrides.
    #[serde(default)]
    pub ranges: BTreeMap<OpId, (u32, u32)>,
    /// Whether sources and sinks are enumerated too; otherwise they stay at 1.
    #[serde(default)]
    pub include_endpoints: bool,
}

impl EnumerationConfig {
    pub fn new(strategy: EnumerationStrategy, degree_min: u32, degree_max: u32) -> Self {
        EnumerationConfig { strategy, degree_min, degree_max, ranges: BTreeMap::new(), include_endpoints: false }
    }

    fn range(&self, op: OpId) -> (u32, u32) {
        self.ranges.get(&op).copied().unwrap_or((self.degree_min, self.degree_max))
    }

    pub fn check(&self) -> Result<()> {
        let ranges = std::iter::once((self.degree_min, self.degree_max)).chain(self.ranges.values().copied());
        for (lo, hi) in ranges {
            if lo < 1 || lo > hi {
                return Err(Error::Enumeration(format!("degree range [{lo}, {hi}] must satisfy 1 <= min <= max")));
            }
        }
        Ok(())
    }
}

/// Workload and resource facts the rule-based strategy sizes operators by.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleContext {
    pub source_rates: BTreeMap<OpId, f64>,
    pub selectivities: BTreeMap<OpId, f64>,
    /// Tuples per second one core sustains.
    pub per_core_capacity: f64,
    pub total_cores: u32,
    pub join_selectivity: f64,
}

impl RuleContext {
    /// Rates from the plan's stream specs and selectivities from its filter
    /// estimates and operator defaults.
    pub fn from_plan(plan: &QueryPlan, per_core_capacity: f64, total_cores: u32) -> Self {
        let source_rates = plan.streams.iter().map(|s| (s.source, s.spec.event_rate)).collect();
        let selectivities = plan
            .operators
            .iter()
            .filter_map(|o| {
                let sel = match &o.kind {
                    OperatorKind::Filter { filter } => filter.estimated_selectivity,
                    OperatorKind::FlatMap { function: FlatMapFn::Tokenize { .. } } => TOKENIZE_FANOUT,
                    OperatorKind::Udo { behavior, .. } => behavior.expected_selectivity(),
                    _ => return None,
                };
                Some((o.id, sel))
            })
            .collect();
        RuleContext {
            source_rates,
            selectivities,
            per_core_capacity,
            total_cores,
            join_selectivity: DEFAULT_JOIN_SELECTIVITY,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.per_core_capacity > 0.0) {
            return Err(Error::Enumeration("per-core capacity must be positive".into()));
        }
        if self.source_rates.values().any(|r| !(*r >= 0.0)) {
            return Err(Error::Enumeration("source rates must be non-negative".into()));
        }
        Ok(())
    }

    /// Input and output rate (tuples/s) of every operator.
    pub fn propagate(&self, plan: &QueryPlan) -> Result<BTreeMap<OpId, (f64, f64)>> {
        self.check()?;
        let order = plan.topological_order().ok_or_else(|| Error::Enumeration("plan is not a DAG".into()))?;
        let mut rates: BTreeMap<OpId, (f64, f64)> = BTreeMap::new();
        let sel = |op: OpId| {
            self.selectivities
                .get(&op)
                .copied()
                .ok_or_else(|| Error::Enumeration(format!("rule context has no selectivity for {op}")))
        };
        for id in order {
            let op = plan.operator(id).expect("ordered ids exist");
            let inputs: Vec<f64> = plan.inputs(id).iter().map(|e| rates[&e.from].1).collect();
            let input: f64 = inputs.iter().sum();
            let output = match &op.kind {
                OperatorKind::Source => {
                    let r = *self
                        .source_rates
                        .get(&id)
                        .ok_or_else(|| Error::Enumeration(format!("rule context has no rate for source {id}")))?;
                    rates.insert(id, (r, r));
                    continue;
                }
                OperatorKind::Filter { .. } | OperatorKind::FlatMap { .. } | OperatorKind::Udo { .. } => input * sel(id)?,
                OperatorKind::Map { .. } | OperatorKind::Sink => input,
                OperatorKind::WindowAggregate { window, .. } => match (window.kind, window.policy) {
                    (WindowKind::Sliding, _) => input * window.slide_fraction(),
                    (WindowKind::Tumbling, WindowPolicy::Count) => input / window.length as f64,
                    (WindowKind::Tumbling, WindowPolicy::Time) => input.min(1000.0 / window.length as f64),
                },
                OperatorKind::WindowJoin { window, .. } => {
                    let (l, r) = (inputs[0], inputs.get(1).copied().unwrap_or(0.0));
                    let secs = window.length as f64 / 1000.0;
                    let hi = l.max(r);
                    if hi > 0.0 {
                        (self.join_selectivity * l * r * secs / hi).min(l * r)
                    } else {
                        0.0
                    }
                }
            };
            rates.insert(id, (input, output));
        }
        Ok(rates)
    }
}

fn round_half_even(x: f64) -> u32 {
    let f = x.floor();
    let diff = x - f;
    let r = if diff > 0.5 || (diff == 0.5 && f as u64 % 2 == 1) { f + 1.0 } else { f };
    r as u32
}

enum State {
    Random(ChaCha8Rng),
    Odometer(Option<Vec<u32>>),
    List(std::vec::IntoIter<Vec<u32>>),
}

/// Lazily emits the plans of one enumeration.
pub struct Enumeration {
    base: QueryPlan,
    ops: Vec<OpId>,
    ranges: Vec<(u32, u32)>,
    state: State,
}

impl Enumeration {
    /// Operators whose degree is enumerated, in topological order.
    pub fn operators(&self) -> &[OpId] {
        &self.ops
    }

    fn next_assignment(&mut self) -> Option<Vec<u32>> {
        match &mut self.state {
            State::Random(rng) => Some(self.ranges.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect()),
            State::List(it) => it.next(),
            State::Odometer(cur) => {
                let out = cur.clone()?;
                let mut next = out.clone();
                let mut i = next.len();
                let mut done = true;
                while i > 0 {
                    i -= 1;
                    if next[i] < self.ranges[i].1 {
                        next[i] += 1;
                        done = false;
                        break;
                    }
                    next[i] = self.ranges[i].0;
                }
                *cur = (!done).then_some(next);
                Some(out)
            }
        }
    }
}

impl Iterator for Enumeration {
    type Item = QueryPlan;

    fn next(&mut self) -> Option<QueryPlan> {
        let degrees = self.next_assignment()?;
        Some(apply_degrees(&self.base, &self.ops, &degrees))
    }
}

/// Sets degrees and coerces forward edges whose endpoints now differ.
pub fn apply_degrees(base: &QueryPlan, ops: &[OpId], degrees: &[u32]) -> QueryPlan {
    let mut plan = base.clone();
    for (op, d) in ops.iter().zip(degrees) {
        plan.operator_mut(*op).expect("enumerated operator exists").parallelism = *d;
    }
    let par: BTreeMap<OpId, u32> = plan.operators.iter().map(|o| (o.id, o.parallelism)).collect();
    for e in &mut plan.edges {
        if e.partitioning == Partitioning::Forward && par[&e.from] != par[&e.to] {
            e.partitioning = Partitioning::Rebalance;
            plan.coerced_edges.push((e.from, e.to));
        }
    }
    let suffix: Vec<String> = plan.operators.iter().map(|o| o.parallelism.to_string()).collect();
    plan.id = format!("{}/{}", base.id, suffix.join("-"));
    plan
}

fn enumerable_ops(base: &QueryPlan, cfg: &EnumerationConfig) -> Result<Vec<OpId>> {
    let order = base.topological_order().ok_or_else(|| Error::Enumeration("plan is not a DAG".into()))?;
    Ok(order
        .into_iter()
        .filter(|id| {
            let tag = base.operator(*id).map(|o| o.kind.tag());
            cfg.include_endpoints || !matches!(tag, Some(KindTag::Source | KindTag::Sink))
        })
        .collect())
}

pub fn enumerate(base: &QueryPlan, cfg: &EnumerationConfig, ctx: Option<&RuleContext>, seed: u64) -> Result<Enumeration> {
    cfg.check()?;
    let report = validate_plan(base);
    if !report.is_ok() {
        return Err(Error::InvalidPlan { plan: base.id.clone(), violations: report.messages() });
    }
    if let Some(op) = base.operators.iter().find(|o| o.parallelism != 1) {
        return Err(Error::Enumeration(format!("base plan {} must have parallelism 1, {} has {}", base.id, op.id, op.parallelism)));
    }
    let ops = enumerable_ops(base, cfg)?;
    let ranges: Vec<(u32, u32)> = ops.iter().map(|&op| cfg.range(op)).collect();
    let state = match &cfg.strategy {
        EnumerationStrategy::Random => State::Random(ChaCha8Rng::seed_from_u64(seed)),
        EnumerationStrategy::Exhaustive => State::Odometer(Some(ranges.iter().map(|r| r.0).collect())),
        EnumerationStrategy::MinAvgMax => {
            let pick = |f: &dyn Fn((u32, u32)) -> u32| ranges.iter().map(|&r| f(r)).collect::<Vec<_>>();
            let plans = vec![
                pick(&|(lo, _)| lo),
                pick(&|(lo, hi)| round_half_even((lo as f64 + hi as f64) / 2.0)),
                pick(&|(_, hi)| hi),
            ];
            State::List(plans.into_iter())
        }
        EnumerationStrategy::Increasing => {
            let mut plans = Vec::new();
            for j in 0..ops.len() {
                for d in ranges[j].0..=ranges[j].1 {
                    let a = (0..ops.len())
                        .map(|i| match i.cmp(&j) {
                            std::cmp::Ordering::Less => ranges[i].1,
                            std::cmp::Ordering::Equal => d,
                            std::cmp::Ordering::Greater => ranges[i].0,
                        })
                        .collect();
                    plans.push(a);
                }
            }
            State::List(plans.into_iter())
        }
        EnumerationStrategy::RuleBased => {
            let ctx = ctx.ok_or_else(|| Error::Enumeration("rule-based strategy needs a rule context".into()))?;
            let rates = ctx.propagate(base)?;
            let a = ops
                .iter()
                .zip(&ranges)
                .map(|(op, &(lo, hi))| {
                    let need = (rates[op].0 / ctx.per_core_capacity).ceil();
                    (need.min(u32::MAX as f64) as u32).clamp(lo, hi)
                })
                .collect();
            State::List(vec![a].into_iter())
        }
        EnumerationStrategy::ParameterBased(map) => {
            let mut a = Vec::with_capacity(ops.len());
            for (op, &(lo, hi)) in ops.iter().zip(&ranges) {
                let d = *map.get(op).ok_or_else(|| Error::Enumeration(format!("no degree assigned to {op}")))?;
                if d < lo || d > hi {
                    return Err(Error::Enumeration(format!("degree {d} for {op} outside [{lo}, {hi}]")));
                }
                a.push(d);
            }
            if let Some(op) = map.keys().find(|op| !ops.contains(op)) {
                return Err(Error::Enumeration(format!("assignment names {op}, which is not enumerable")));
            }
            State::List(vec![a].into_iter())
        }
    };
    Ok(Enumeration { base: base.clone(), ops, ranges, state })
}

/// Number of plans `enumerate` will emit; `None` when unbounded.
pub fn count_enumeration(base: &QueryPlan, cfg: &EnumerationConfig) -> Result<Option<u64>> {
    cfg.check()?;
    let ops = enumerable_ops(base, cfg)?;
    let sizes = ops.iter().map(|&op| {
        let (lo, hi) = cfg.range(op);
        (hi - lo + 1) as u64
    });
    Ok(match cfg.strategy {
        EnumerationStrategy::Random => None,
        EnumerationStrategy::Exhaustive => Some(sizes.fold(1u64, |a, s| a.saturating_mul(s))),
        EnumerationStrategy::MinAvgMax => Some(3),
        EnumerationStrategy::Increasing => Some(sizes.sum()),
        EnumerationStrategy::RuleBased | EnumerationStrategy::ParameterBased(_) => Some(1),
    })
}
