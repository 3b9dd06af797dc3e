use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::operator::{OpId, OperatorKind, Partitioning};
use super::plan::QueryPlan;
use super::value::TupleSchema;

/// One violated plan invariant and the operator or edge it concerns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub subject: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(|v| v.to_string()).collect()
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.message.contains(needle))
    }

    fn push(&mut self, subject: impl fmt::Display, message: impl Into<String>) {
        self.violations.push(Violation { subject: subject.to_string(), message: message.into() });
    }
}

fn edge_name(from: OpId, to: OpId) -> String {
    format!("edge {from}->{to}")
}

/// Checks every structural, partitioning and schema invariant of a plan.
/// Violations are returned as data; this never fails.
pub fn validate_plan(plan: &QueryPlan) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut ids = BTreeSet::new();
    for op in &plan.operators {
        if !ids.insert(op.id) {
            report.push(op.id, "duplicate operator id");
        }
        if op.parallelism < 1 {
            report.push(op.id, "parallelism must be at least 1");
        }
    }
    if plan.operators.is_empty() {
        report.push(&plan.id, "plan has no operators");
        return report;
    }

    let mut dangling = false;
    for e in &plan.edges {
        if !ids.contains(&e.from) || !ids.contains(&e.to) {
            report.push(edge_name(e.from, e.to), "edge references unknown operator");
            dangling = true;
        }
    }
    if dangling {
        return report;
    }

    let sinks: Vec<OpId> =
        plan.operators.iter().filter(|o| matches!(o.kind, OperatorKind::Sink)).map(|o| o.id).collect();
    if sinks.len() != 1 {
        report.push(&plan.id, format!("expected exactly one sink, found {}", sinks.len()));
    }
    for &s in &sinks {
        if !plan.outputs(s).is_empty() {
            report.push(s, "sink must not have outbound edges");
        }
    }

    for op in &plan.operators {
        let inputs = plan.inputs(op.id);
        match op.kind {
            OperatorKind::Source => {
                if !inputs.is_empty() {
                    report.push(op.id, "source must not have inbound edges");
                }
                match plan.stream(op.id) {
                    None => report.push(op.id, "source has no stream spec"),
                    Some(spec) => {
                        if let Err(m) = spec.check() {
                            report.push(op.id, m);
                        }
                    }
                }
            }
            ref kind => {
                let arity = kind.input_arity();
                let ports: Vec<u8> = inputs.iter().map(|e| e.port).collect();
                let expected: Vec<u8> = (0..arity as u8).collect();
                if ports != expected {
                    let what = if arity == 2 { "join needs exactly 2 inbound streams (ports 0 and 1)" } else { "operator needs exactly one inbound stream" };
                    report.push(op.id, format!("{what}, found {} inbound", inputs.len()));
                }
            }
        }
    }
    for s in &plan.streams {
        match plan.operator(s.source) {
            Some(op) if matches!(op.kind, OperatorKind::Source) => {}
            _ => report.push(s.source, "stream attached to a non-source operator"),
        }
    }

    let Some(order) = plan.topological_order() else {
        report.push(&plan.id, "not a DAG");
        return report;
    };

    // Reachability from sources.
    let mut reached: BTreeSet<OpId> = plan.sources().map(|o| o.id).collect();
    for id in &order {
        if reached.contains(id) {
            for e in plan.outputs(*id) {
                reached.insert(e.to);
            }
        }
    }
    for op in &plan.operators {
        if !reached.contains(&op.id) {
            report.push(op.id, "not reachable from any source");
        }
    }

    // Schema derivation, continuing past failures so every violation is listed.
    let mut schemas: BTreeMap<OpId, TupleSchema> = BTreeMap::new();
    for id in &order {
        let op = plan.operator(*id).expect("ordered ids exist");
        let schema = if matches!(op.kind, OperatorKind::Source) {
            plan.stream(*id).map(|s| s.schema.clone())
        } else {
            let edges = plan.inputs(*id);
            let inputs: Vec<&TupleSchema> = edges.iter().filter_map(|e| schemas.get(&e.from)).collect();
            if inputs.len() != edges.len() || inputs.is_empty() {
                None
            } else {
                match op.kind.output_schema(&inputs) {
                    Ok(s) => Some(s),
                    Err(m) => {
                        report.push(op.id, format!("schema mismatch: {m}"));
                        None
                    }
                }
            }
        };
        if let Some(s) = schema {
            schemas.insert(*id, s);
        }
    }

    for e in &plan.edges {
        let (up, down) = (plan.operator(e.from).unwrap(), plan.operator(e.to).unwrap());
        match e.partitioning {
            Partitioning::Forward => {
                if up.parallelism != down.parallelism {
                    report.push(
                        edge_name(e.from, e.to),
                        format!("forward requires equal parallelism ({} vs {})", up.parallelism, down.parallelism),
                    );
                }
            }
            Partitioning::Rebalance => {}
            Partitioning::Hash { field } => {
                if let Some(schema) = schemas.get(&e.from) {
                    if schema.get(field).is_none() {
                        report.push(edge_name(e.from, e.to), format!("hash key field {field} not in upstream schema"));
                    }
                }
                if let OperatorKind::WindowJoin { left_key, right_key, .. } = down.kind {
                    let key = if e.port == 0 { left_key } else { right_key };
                    if key != field {
                        report.push(edge_name(e.from, e.to), format!("join input hashed on {field}, join key is {key}"));
                    }
                }
            }
        }
    }

    report
}
