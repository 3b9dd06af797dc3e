//! Brute-force single-pass evaluation of a plan over fully materialized
//! streams, for comparing engine output multisets.

use std::collections::BTreeMap;

use pdsp_core::model::{
    encode_tuple, mix64, AggFn, KeyVal, MapFn, OpId, OperatorKind, QueryPlan, Value, WindowKind, WindowPolicy,
    NANOS_PER_MILLI,
};
use pdsp_core::workload::{generate_stream, Extent};

#[derive(Clone, Debug)]
struct Row {
    ts: u64,
    values: Vec<Value>,
}

fn window_bounds(kind: WindowKind, length: u64, slide: Option<u64>, unit: u64) -> (u64, u64) {
    let len = length * unit;
    let step = match kind {
        WindowKind::Tumbling => len,
        WindowKind::Sliding => slide.unwrap() * unit,
    };
    (len, step)
}

fn aggregate(f: AggFn, xs: &[f64]) -> f64 {
    match f {
        AggFn::Sum => xs.iter().sum(),
        AggFn::Min => xs.iter().copied().fold(f64::INFINITY, f64::min),
        AggFn::Max => xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        AggFn::Avg | AggFn::Mean => xs.iter().sum::<f64>() / xs.len() as f64,
    }
}

/// Sink tuples of `plan` for the streams a run with `seed` would produce.
pub fn evaluate(plan: &QueryPlan, seed: u64, duration_s: f64) -> Vec<Vec<Value>> {
    let mut results: BTreeMap<OpId, Vec<Row>> = BTreeMap::new();
    for id in plan.topological_order().unwrap() {
        let op = plan.operator(id).unwrap();
        let inputs: Vec<Vec<Row>> = plan.inputs(id).iter().map(|e| results[&e.from].clone()).collect();
        let rows = match &op.kind {
            OperatorKind::Source => {
                let spec = plan.stream(id).unwrap();
                generate_stream(spec, mix64(seed, u64::from(id.0)), Extent::seconds(duration_s))
                    .unwrap()
                    .into_iter()
                    .map(|t| Row { ts: t.ts, values: t.values })
                    .collect()
            }
            OperatorKind::Sink => inputs[0].clone(),
            OperatorKind::Filter { filter } => {
                inputs[0].iter().filter(|r| filter.matches(&r.values)).cloned().collect()
            }
            OperatorKind::Map { function } => inputs[0]
                .iter()
                .map(|r| {
                    let mut values = r.values.clone();
                    if *function == MapFn::AppendOne {
                        values.push(Value::Int(1));
                    }
                    Row { ts: r.ts, values }
                })
                .collect(),
            OperatorKind::WindowAggregate { function, field, window, key } => {
                let mut input = inputs[0].clone();
                input.sort_by_key(|r| r.ts);
                let mut groups: BTreeMap<Option<KeyVal>, Vec<Row>> = BTreeMap::new();
                for r in input {
                    groups.entry(key.map(|k| r.values[k].key())).or_default().push(r);
                }
                let mut out = Vec::new();
                for (k, rows) in groups {
                    let head = |agg: f64, end: u64, ts: u64| {
                        let mut values: Vec<Value> = k.iter().map(|k| k.to_value()).collect();
                        values.push(Value::Double(agg));
                        values.push(Value::Int(end as i64));
                        Row { ts, values }
                    };
                    let xs: Vec<f64> = rows.iter().map(|r| r.values[*field].as_f64().unwrap()).collect();
                    match window.policy {
                        WindowPolicy::Count => {
                            let (len, step) = window_bounds(window.kind, window.length, window.slide, 1);
                            let mut start = 0u64;
                            while start + len <= xs.len() as u64 {
                                let (a, b) = (start as usize, (start + len) as usize);
                                out.push(head(aggregate(*function, &xs[a..b]), start + len, rows[b - 1].ts));
                                start += step;
                            }
                        }
                        WindowPolicy::Time => {
                            let (len, step) = window_bounds(window.kind, window.length, window.slide, NANOS_PER_MILLI);
                            let last = rows.last().unwrap().ts;
                            let mut start = 0u64;
                            while start <= last {
                                let inside: Vec<f64> = rows
                                    .iter()
                                    .zip(&xs)
                                    .filter(|(r, _)| r.ts >= start && r.ts < start + len)
                                    .map(|(_, x)| *x)
                                    .collect();
                                if !inside.is_empty() {
                                    out.push(head(aggregate(*function, &inside), start + len, start + len - 1));
                                }
                                start += step;
                            }
                        }
                    }
                }
                out
            }
            OperatorKind::WindowJoin { window, left_key, right_key } => {
                let (len, step) = window_bounds(window.kind, window.length, window.slide, NANOS_PER_MILLI);
                let last = inputs.iter().flatten().map(|r| r.ts).max().unwrap_or(0);
                let mut out = Vec::new();
                let mut start = 0u64;
                while start <= last {
                    let inside = |rows: &Vec<Row>| -> Vec<Row> {
                        rows.iter().filter(|r| r.ts >= start && r.ts < start + len).cloned().collect()
                    };
                    let (l, r) = (inside(&inputs[0]), inside(&inputs[1]));
                    for a in &l {
                        for b in &r {
                            if a.values[*left_key] == b.values[*right_key] {
                                let values = a.values.iter().chain(&b.values).cloned().collect();
                                out.push(Row { ts: start + len - 1, values });
                            }
                        }
                    }
                    start += step;
                }
                out
            }
            other => panic!("reference evaluator does not support {:?}", other.tag()),
        };
        results.insert(id, rows);
    }
    let sink = plan.sink().unwrap().id;
    results.remove(&sink).unwrap().into_iter().map(|r| r.values).collect()
}

/// Sorted encodings: equal iff the multisets are equal.
pub fn multiset(tuples: impl IntoIterator<Item = Vec<Value>>) -> Vec<Vec<u8>> {
    let mut v: Vec<Vec<u8>> = tuples.into_iter().map(|t| encode_tuple(&t)).collect();
    v.sort();
    v
}
