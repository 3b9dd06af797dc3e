//! Deterministic discrete-event execution under a virtual clock (microseconds).
//!
//! Every instance is a FIFO single server. A message's logic runs when it
//! arrives; its service starts once the instance is free, and its outputs
//! leave when service finishes. Watermarks travel through the same queues
//! at zero cost unless they trigger window work.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::cluster::ClusterProfile;
use super::engine::{wire_bytes, Instance, Message, SOURCE_CHANNEL};
use super::feed::{FeedItem, SourceFeed};
use super::logic::{Contributor, Emit, Record};
use super::placement::Placement;
use super::{ExecConfig, ExecMode, LatencyBreakdown, OutputDigest, RunResult, TraceEvent, TraceKind};
use crate::error::Result;
use crate::metrics;
use crate::model::{Partitioning, PhysicalPlan, QueryPlan};

/// Accounting carried by each record: the breakdown so far and the virtual
/// time it covers up to (origin + breakdown total).
#[derive(Clone, Copy, Debug, Default)]
struct Meta {
    bd: LatencyBreakdown,
    at: f64,
}

enum Event {
    Feed(usize),
    Arrive { instance: usize, channel: usize, msg: Message<Meta> },
}

struct Scheduled {
    t: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // min-heap on (time, insertion order)
    fn cmp(&self, other: &Self) -> Ordering {
        other.t.total_cmp(&self.t).then(other.seq.cmp(&self.seq))
    }
}

struct Sim<'a> {
    cfg: &'a ExecConfig,
    cluster: &'a ClusterProfile,
    phys: &'a PhysicalPlan,
    placement: &'a Placement,
    instances: Vec<Instance<Meta>>,
    /// Effective speed of each instance's node.
    speed: Vec<f64>,
    busy_until: Vec<f64>,
    last_arrival: Vec<f64>,
    edge_partitioning: Vec<Partitioning>,
    heap: BinaryHeap<Scheduled>,
    seq: u64,
    feeds: Vec<SourceFeed>,
    pending_feed: Vec<Option<(u64, FeedItem)>>,
    feed_offsets: Vec<usize>,
    latencies: Vec<f64>,
    ids: Vec<u64>,
    breakdowns: Vec<LatencyBreakdown>,
    outputs: Vec<super::Tuple>,
    digest: OutputDigest,
    trace: Vec<TraceEvent>,
}

fn ns_to_us(ns: u64) -> f64 {
    ns as f64 / 1e3
}

impl Sim<'_> {
    fn schedule(&mut self, t: f64, event: Event) {
        self.seq += 1;
        self.heap.push(Scheduled { t, seq: self.seq, event });
    }

    fn trace(&mut self, t_us: f64, instance: usize, tuple: u64, event: TraceKind) {
        if self.cfg.trace {
            self.trace.push(TraceEvent { t_us, instance: self.instances[instance].id.to_string(), tuple, event });
        }
    }

    fn schedule_feed(&mut self, k: usize) {
        // items are pulled lazily so the heap holds one pending item per source
        if let Some(item) = self.feeds[k].next() {
            let t = ns_to_us(item.0);
            self.pending_feed[k] = Some(item);
            self.schedule(t, Event::Feed(k));
        }
    }

    fn on_feed(&mut self, t: f64, k: usize) {
        let (_, item) = self.pending_feed[k].take().expect("scheduled feed item");
        let base = self.feed_offsets[k];
        match item {
            FeedItem::Watermark(wm) => {
                for i in 0..self.feeds[k].parallelism as usize {
                    self.arrive(t, base + i, SOURCE_CHANNEL, Message::Watermark(wm));
                }
            }
            tuple => {
                let meta = Meta { bd: LatencyBreakdown::default(), at: t };
                let (index, rec) = tuple.into_record(meta).expect("tuple item");
                self.trace(t, base + index as usize, rec.id, TraceKind::Source);
                self.arrive(t, base + index as usize, SOURCE_CHANNEL, Message::Data(rec));
            }
        }
        self.schedule_feed(k);
    }

    fn hop(&self, from: usize, channel: usize, bytes: usize) -> f64 {
        let ch = &self.phys.channels[channel];
        let shuffle = match self.edge_partitioning[ch.edge] {
            Partitioning::Forward => 0.0,
            _ => self.cfg.cost.shuffle_cost,
        };
        if self.placement.is_local(from, ch.to) {
            return shuffle;
        }
        let node = &self.cluster.nodes[self.placement.node_of(from)];
        shuffle + node.link_latency_us + bytes as f64 * 8.0 / (node.bandwidth_gbps * 1e3)
    }

    fn send(&mut self, from: usize, channel: usize, depart: f64, msg: Message<Meta>) {
        let bytes = match &msg {
            Message::Data(r) => wire_bytes(&r.values),
            Message::Watermark(_) => 0,
        };
        let arrival = (depart + self.hop(from, channel, bytes)).max(self.last_arrival[channel]);
        self.last_arrival[channel] = arrival;
        let msg = match msg {
            Message::Data(mut r) => {
                r.meta.bd.network += arrival - depart;
                r.meta.at = arrival;
                Message::Data(r)
            }
            wm => wm,
        };
        let to = self.phys.channels[channel].to;
        self.schedule(arrival, Event::Arrive { instance: to, channel, msg });
    }

    fn arrive(&mut self, t: f64, i: usize, channel: usize, msg: Message<Meta>) {
        let start = t.max(self.busy_until[i]);
        let speed = self.speed[i];
        let (kind_cost, coordination) = {
            let inst = &self.instances[i];
            (self.cfg.cost.per_tuple(&inst.kind), self.cfg.cost.overhead(inst.parallelism))
        };
        let mut out: Vec<Emit<Meta>> = Vec::new();
        let (current, handled, service, overhead) = match msg {
            Message::Data(mut rec) => {
                self.trace(t, i, rec.id, TraceKind::Arrive);
                self.trace(start, i, rec.id, TraceKind::Start);
                let (service, overhead) = (kind_cost / speed, coordination / speed);
                rec.meta.bd.queue_wait += start - t;
                rec.meta.bd.service += service;
                rec.meta.bd.overhead += overhead;
                rec.meta.at = start + service + overhead;
                let current = (rec.id, rec.meta);
                let handled = self.instances[i].handle(channel, Message::Data(rec), &mut out);
                (Some(current), handled, service, overhead)
            }
            Message::Watermark(wm) => {
                let handled = self.instances[i].handle(channel, Message::Watermark(wm), &mut out);
                (None, handled, 0.0, 0.0)
            }
        };
        let triggered = self.cfg.cost.triggered(handled.work.fires, handled.work.matches) / speed;
        let finish = start + service + overhead + triggered;
        self.busy_until[i] = finish;
        if let Some((id, _)) = current {
            self.trace(finish, i, id, TraceKind::Finish);
        }

        let is_sink = self.instances[i].is_sink();
        let mut targets = Vec::new();
        for e in out {
            let meta = match e.from {
                Contributor::Current => {
                    let mut m = current.expect("current output of a data message").1;
                    m.bd.service += triggered;
                    m.at = finish;
                    m
                }
                Contributor::Stored(stored) => {
                    let mut bd = stored.bd;
                    bd.window_wait += start - stored.at;
                    bd.service += service + triggered;
                    bd.overhead += overhead;
                    Meta { bd, at: finish }
                }
            };
            if is_sink {
                self.trace(finish, i, e.id, TraceKind::Deliver);
                self.latencies.push(finish - ns_to_us(e.origin));
                self.ids.push(e.id);
                if self.cfg.record_breakdown {
                    self.breakdowns.push(meta.bd);
                }
                self.digest.add(&e.values);
                if self.cfg.collect_outputs {
                    self.outputs.push(e.values);
                }
                continue;
            }
            self.instances[i].route(&e.values, &mut targets);
            let rec = Record { id: e.id, ts: e.ts, origin: e.origin, values: e.values, meta };
            for &ch in &targets {
                self.send(i, ch, finish, Message::Data(rec.clone()));
            }
        }
        if let Some(wm) = handled.watermark {
            let channels: Vec<usize> = self.instances[i].all_channels().collect();
            for ch in channels {
                self.send(i, ch, finish, Message::Watermark(wm));
            }
        }
    }
}

/// Effective per-instance speed: the node's speed factor, shared out when
/// more instances than cores are placed on it.
pub(super) fn effective_speeds(cluster: &ClusterProfile, placement: &Placement) -> Vec<f64> {
    let load = placement.load(cluster.nodes.len());
    placement
        .nodes
        .iter()
        .map(|&n| {
            let node = &cluster.nodes[n];
            node.speed_factor * (f64::from(node.cores) / load[n] as f64).min(1.0)
        })
        .collect()
}

pub fn run_sim(
    plan: &QueryPlan,
    phys: &PhysicalPlan,
    cluster: &ClusterProfile,
    placement: &Placement,
    cfg: &ExecConfig,
    seed: u64,
) -> Result<RunResult> {
    cfg.check()?;
    let feeds = SourceFeed::for_plan(plan, seed, cfg.duration_ns(), cfg.watermark_interval_ns())?;
    let feed_offsets =
        feeds.iter().map(|f| phys.instances_of(f.op).next().expect("source has instances")).collect();
    let n = phys.instances.len();
    let mut sim = Sim {
        cfg,
        cluster,
        phys,
        placement,
        instances: Instance::build_all(plan, phys),
        speed: effective_speeds(cluster, placement),
        busy_until: vec![0.0; n],
        last_arrival: vec![0.0; phys.channels.len()],
        edge_partitioning: plan.edges.iter().map(|e| e.partitioning).collect(),
        heap: BinaryHeap::new(),
        seq: 0,
        pending_feed: vec![None; feeds.len()],
        feeds,
        feed_offsets,
        latencies: Vec::new(),
        ids: Vec::new(),
        breakdowns: Vec::new(),
        outputs: Vec::new(),
        digest: OutputDigest::default(),
        trace: Vec::new(),
    };
    for k in 0..sim.feeds.len() {
        sim.schedule_feed(k);
    }
    while let Some(Scheduled { t, event, .. }) = sim.heap.pop() {
        match event {
            Event::Feed(k) => sim.on_feed(t, k),
            Event::Arrive { instance, channel, msg } => sim.arrive(t, instance, channel, msg),
        }
    }
    debug_assert!(sim.instances.iter().all(|i| i.is_done()));
    let deliveries = sim.latencies.len();
    Ok(RunResult {
        plan_id: plan.id.clone(),
        cluster: cluster.name.clone(),
        mode: ExecMode::Sim,
        run: 0,
        seed,
        duration_s: cfg.duration_s,
        latencies_us: sim.latencies,
        sample_ids: sim.ids,
        breakdowns: sim.breakdowns,
        outputs: sim.outputs,
        output_digest: sim.digest.finish(),
        throughput_tps: metrics::throughput(deliveries, cfg.duration_s)?,
        trace: sim.trace,
        placement: placement.clone(),
    })
}
