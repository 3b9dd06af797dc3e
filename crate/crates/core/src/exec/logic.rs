//! Per-instance operator semantics, shared by both execution modes.
//!
//! Stateless operators process records on arrival. Stateful operators
//! buffer records until the aligned input watermark passes them and then
//! process them in `(ts, id, port)` order, so their output does not depend
//! on arrival interleaving.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::udo::{tokenize, UdoState};
use crate::model::{
    mix64, AggFn, FilterSpec, FlatMapFn, KeyVal, MapFn, OperatorKind, UdoBehavior, Value, WindowPolicy, WindowSpec,
};

pub type Tuple = Arc<[Value]>;

/// A data record. `origin` is the latest source timestamp among the source
/// tuples it derives from; `meta` is executor bookkeeping.
#[derive(Clone, Debug)]
pub struct Record<M> {
    pub id: u64,
    pub ts: u64,
    pub origin: u64,
    pub values: Tuple,
    pub meta: M,
}

/// Which input an output is charged to: the message being processed, or a
/// buffered record (the one with the latest origin).
#[derive(Clone, Debug)]
pub enum Contributor<M> {
    Current,
    Stored(M),
}

#[derive(Clone, Debug)]
pub struct Emit<M> {
    pub id: u64,
    pub ts: u64,
    pub origin: u64,
    pub values: Tuple,
    pub from: Contributor<M>,
}

/// Triggered work performed while handling one message.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Work {
    pub fires: u64,
    pub matches: u64,
}

#[derive(Clone, Debug)]
struct Best<M> {
    origin: u64,
    id: u64,
    meta: M,
}

impl<M: Clone> Best<M> {
    fn of(rec: &Record<M>) -> Self {
        Best { origin: rec.origin, id: rec.id, meta: rec.meta.clone() }
    }

    fn offer(&mut self, rec: &Record<M>) {
        if (rec.origin, rec.id) > (self.origin, self.id) {
            *self = Best::of(rec);
        }
    }
}

#[derive(Clone, Debug)]
struct Acc<M> {
    count: u64,
    sum: f64,
    min: f64,
    max: f64,
    best: Best<M>,
}

impl<M: Clone> Acc<M> {
    fn new(rec: &Record<M>) -> Self {
        Acc { count: 0, sum: 0.0, min: f64::INFINITY, max: f64::NEG_INFINITY, best: Best::of(rec) }
    }

    fn add(&mut self, v: f64, rec: &Record<M>) {
        self.count += 1;
        self.sum += v;
        self.min = self.min.min(v);
        self.max = self.max.max(v);
        self.best.offer(rec);
    }

    fn result(&self, f: AggFn) -> f64 {
        match f {
            AggFn::Min => self.min,
            AggFn::Max => self.max,
            AggFn::Sum => self.sum,
            AggFn::Avg | AggFn::Mean => self.sum / self.count as f64,
        }
    }
}

struct Aggregate<M> {
    function: AggFn,
    field: usize,
    key: Option<usize>,
    window: WindowSpec,
    /// Count windows: tuples seen per key.
    seen: BTreeMap<Option<KeyVal>, u64>,
    /// Open windows by (start, key).
    open: BTreeMap<(u64, Option<KeyVal>), Acc<M>>,
}

struct Join<M> {
    window: WindowSpec,
    keys: [usize; 2],
    /// Buffered inputs by window start, then key, then port.
    open: BTreeMap<u64, BTreeMap<KeyVal, [Vec<Record<M>>; 2]>>,
}

enum Kind<M> {
    Source,
    Sink,
    Filter(FilterSpec),
    Map(MapFn),
    FlatMap(FlatMapFn),
    Udo { behavior: UdoBehavior, key: Option<usize>, state: UdoState },
    Aggregate(Aggregate<M>),
    Join(Join<M>),
}

/// Operator state of one instance.
pub struct OperatorLogic<M> {
    op: u64,
    index: u32,
    kind: Kind<M>,
    stateful: bool,
    pending: Vec<(u8, Record<M>)>,
}

impl<M: Clone> OperatorLogic<M> {
    pub fn new(op: u32, index: u32, kind: &OperatorKind) -> Self {
        let k = match kind {
            OperatorKind::Source => Kind::Source,
            OperatorKind::Sink => Kind::Sink,
            OperatorKind::Filter { filter } => Kind::Filter(filter.clone()),
            OperatorKind::Map { function } => Kind::Map(*function),
            OperatorKind::FlatMap { function } => Kind::FlatMap(*function),
            OperatorKind::Udo { behavior, key, .. } => {
                Kind::Udo { behavior: behavior.clone(), key: *key, state: UdoState::default() }
            }
            OperatorKind::WindowAggregate { function, field, window, key } => Kind::Aggregate(Aggregate {
                function: *function,
                field: *field,
                key: *key,
                window: *window,
                seen: BTreeMap::new(),
                open: BTreeMap::new(),
            }),
            OperatorKind::WindowJoin { window, left_key, right_key } => {
                Kind::Join(Join { window: *window, keys: [*left_key, *right_key], open: BTreeMap::new() })
            }
        };
        OperatorLogic { op: u64::from(op), index, kind: k, stateful: kind.is_stateful(), pending: Vec::new() }
    }

    /// Records buffered or held in open windows.
    #[cfg(test)]
    fn buffered(&self) -> usize {
        let held = match &self.kind {
            Kind::Aggregate(a) => a.open.len(),
            Kind::Join(j) => j.open.values().flat_map(|m| m.values()).map(|s| s.len()).sum(),
            _ => 0,
        };
        self.pending.len() + held
    }

    pub fn on_record(&mut self, port: u8, rec: Record<M>, out: &mut Vec<Emit<M>>, work: &mut Work) {
        if self.stateful {
            self.pending.push((port, rec));
        } else {
            self.process(port, rec, Contributor::Current, out, work);
        }
    }

    /// Advances event time to `wm`: releases buffered records older than
    /// `wm` in order, then fires every time window ending at or before it.
    pub fn on_watermark(&mut self, wm: u64, out: &mut Vec<Emit<M>>, work: &mut Work) {
        if !self.stateful {
            return;
        }
        let mut ready: Vec<(u8, Record<M>)> = Vec::new();
        let mut i = 0;
        while i < self.pending.len() {
            if self.pending[i].1.ts < wm {
                ready.push(self.pending.swap_remove(i));
            } else {
                i += 1;
            }
        }
        ready.sort_by_key(|(port, r)| (r.ts, r.id, *port));
        for (port, rec) in ready {
            let meta = rec.meta.clone();
            self.process(port, rec, Contributor::Stored(meta), out, work);
        }
        let (op, index) = (self.op, self.index);
        match &mut self.kind {
            Kind::Aggregate(a) if a.window.policy == WindowPolicy::Time => a.fire_until(op, index, wm, out, work),
            Kind::Join(j) => j.fire_until(op, wm, out, work),
            _ => {}
        }
    }

    fn process(&mut self, port: u8, rec: Record<M>, from: Contributor<M>, out: &mut Vec<Emit<M>>, work: &mut Work) {
        let (op, index) = (self.op, self.index);
        let (ts, origin) = (rec.ts, rec.origin);
        let emit = move |out: &mut Vec<Emit<M>>, id: u64, values: Tuple, from: Contributor<M>| {
            out.push(Emit { id, ts, origin, values, from })
        };
        match &mut self.kind {
            Kind::Source | Kind::Sink => emit(out, rec.id, rec.values.clone(), from),
            Kind::Filter(f) => {
                if f.matches(&rec.values) {
                    emit(out, rec.id, rec.values.clone(), from);
                }
            }
            Kind::Map(MapFn::Identity) => emit(out, rec.id, rec.values.clone(), from),
            Kind::Map(MapFn::AppendOne) => {
                let values: Tuple = rec.values.iter().cloned().chain([Value::Int(1)]).collect();
                emit(out, rec.id, values, from);
            }
            Kind::FlatMap(FlatMapFn::Tokenize { field, chunk }) => {
                let text = rec.values[*field].as_str().unwrap_or_default();
                for (k, token) in tokenize(text, *chunk).into_iter().enumerate() {
                    let values: Tuple = Arc::from(vec![Value::Str(token), Value::Int(1)]);
                    emit(out, derived_id(rec.id, op, k), values, from.clone());
                }
            }
            Kind::Udo { behavior, key, state } => {
                for (k, values) in state.apply(behavior, *key, &rec.values).into_iter().enumerate() {
                    emit(out, derived_id(rec.id, op, k), Arc::from(values), from.clone());
                }
            }
            Kind::Aggregate(a) => a.absorb(op, index, &rec, out, work),
            Kind::Join(j) => j.absorb(port, rec),
        }
    }
}

fn derived_id(id: u64, op: u64, k: usize) -> u64 {
    mix64(mix64(id, op), k as u64)
}

impl<M: Clone> Aggregate<M> {
    fn absorb(&mut self, op: u64, index: u32, rec: &Record<M>, out: &mut Vec<Emit<M>>, work: &mut Work) {
        let key = self.key.map(|k| rec.values[k].key());
        let v = rec.values[self.field].as_f64().unwrap_or(0.0);
        match self.window.policy {
            WindowPolicy::Time => {
                for start in self.window.windows_containing(rec.ts) {
                    self.open.entry((start, key.clone())).or_insert_with(|| Acc::new(rec)).add(v, rec);
                }
            }
            WindowPolicy::Count => {
                let seen = self.seen.entry(key.clone()).or_default();
                let pos = *seen;
                *seen += 1;
                let (len, _) = self.window.extent();
                for start in self.window.windows_containing(pos) {
                    let slot = (start, key.clone());
                    self.open.entry(slot.clone()).or_insert_with(|| Acc::new(rec)).add(v, rec);
                    if start + len == pos + 1 {
                        let acc = self.open.remove(&slot).expect("window just updated");
                        work.fires += 1;
                        out.push(self.output(op, index, key.clone(), start, rec.ts, &acc));
                    }
                }
            }
        }
    }

    fn fire_until(&mut self, op: u64, index: u32, wm: u64, out: &mut Vec<Emit<M>>, work: &mut Work) {
        let (len, _) = self.window.extent();
        while let Some(entry) = self.open.first_entry() {
            let start = entry.key().0;
            if start.saturating_add(len) > wm {
                break;
            }
            let ((start, key), acc) = entry.remove_entry();
            work.fires += 1;
            out.push(self.output(op, index, key, start, start + len - 1, &acc));
        }
    }

    fn output(&self, op: u64, index: u32, key: Option<KeyVal>, start: u64, ts: u64, acc: &Acc<M>) -> Emit<M> {
        let (len, _) = self.window.extent();
        let end = start + len;
        let key_hash = match &key {
            Some(k) => k.stable_hash(),
            // unkeyed windows aggregate per instance
            None => mix64(u64::MAX, u64::from(index)),
        };
        let mut values = Vec::with_capacity(3);
        values.extend(key.map(|k| k.to_value()));
        values.push(Value::Double(acc.result(self.function)));
        values.push(Value::Int(end as i64));
        Emit {
            id: mix64(mix64(op, key_hash), start),
            ts,
            origin: acc.best.origin,
            values: Arc::from(values),
            from: Contributor::Stored(acc.best.meta.clone()),
        }
    }
}

impl<M: Clone> Join<M> {
    fn absorb(&mut self, port: u8, rec: Record<M>) {
        let side = usize::from(port.min(1));
        let key = rec.values[self.keys[side]].key();
        for start in self.window.windows_containing(rec.ts) {
            self.open.entry(start).or_default().entry(key.clone()).or_default()[side].push(rec.clone());
        }
    }

    fn fire_until(&mut self, op: u64, wm: u64, out: &mut Vec<Emit<M>>, work: &mut Work) {
        let (len, _) = self.window.extent();
        while let Some(entry) = self.open.first_entry() {
            let start = *entry.key();
            if start.saturating_add(len) > wm {
                break;
            }
            let groups = entry.remove();
            work.fires += 1;
            let ts = start + len - 1;
            for [left, right] in groups.into_values() {
                for l in &left {
                    for r in &right {
                        work.matches += 1;
                        let best = if (l.origin, l.id) >= (r.origin, r.id) { l } else { r };
                        let values: Tuple = l.values.iter().chain(r.values.iter()).cloned().collect();
                        out.push(Emit {
                            id: mix64(mix64(mix64(op, start), l.id), r.id),
                            ts,
                            origin: l.origin.max(r.origin),
                            values,
                            from: Contributor::Stored(best.meta.clone()),
                        });
                    }
                }
            }
        }
    }
}
