//! Real concurrent execution: one worker thread per instance plus one driver
//! per source, connected by bounded queues.
//!
//! Event time is mapped to wall time by `time_scale` (wall seconds per
//! simulated second). Drivers release tuples on that schedule, workers sleep
//! off the modeled service cost and hop latency scaled the same way, and
//! measured latencies are divided by the scale, so they read in simulated
//! microseconds.

use std::panic::AssertUnwindSafe;
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, Receiver, Sender};

use super::cluster::ClusterProfile;
use super::engine::{wire_bytes, Instance, Message, SOURCE_CHANNEL};
use super::feed::{FeedItem, SourceFeed};
use super::logic::{Emit, Record};
use super::placement::Placement;
use super::sim::effective_speeds;
use super::{ExecConfig, ExecMode, OutputDigest, RunResult, Tuple};
use crate::error::{Error, Result};
use crate::metrics;
use crate::model::{Partitioning, PhysicalPlan, QueryPlan};

struct Envelope {
    channel: usize,
    not_before: Instant,
    msg: Message<()>,
}

#[derive(Default)]
struct Delivered {
    latencies: Vec<f64>,
    ids: Vec<u64>,
    outputs: Vec<Tuple>,
    digest: Vec<Tuple>,
}

/// Sleeps off accumulated emulated work once it is large enough to be timed.
struct Pacer {
    debt: Duration,
}

const MIN_SLEEP: Duration = Duration::from_micros(200);

impl Pacer {
    fn charge(&mut self, d: Duration) {
        self.debt += d;
        if self.debt >= MIN_SLEEP {
            let t = Instant::now();
            thread::sleep(self.debt);
            self.debt = self.debt.saturating_sub(t.elapsed());
        }
    }
}

fn sleep_until(t: Instant) {
    let now = Instant::now();
    if t > now {
        thread::sleep(t - now);
    }
}

struct Worker {
    index: usize,
    instance: Instance<()>,
    inbox: Receiver<Envelope>,
    outboxes: Vec<(usize, Sender<Envelope>)>,
    /// Per outbound channel: hop latency in simulated microseconds (without size term) and seconds per byte.
    hops: Vec<(f64, f64)>,
    speed: f64,
    scale: f64,
    epoch: Instant,
    cost: super::CostModelParams,
    collect: bool,
}

impl Worker {
    fn wall(&self, us: f64) -> Duration {
        Duration::from_secs_f64((us * self.scale / 1e6).max(0.0))
    }

    fn send(&self, channel: usize, depart: Instant, msg: Message<()>) -> bool {
        let slot = self.outboxes.iter().position(|(c, _)| *c == channel).expect("outbound channel");
        let (latency, per_byte) = self.hops[slot];
        let bytes = match &msg {
            Message::Data(r) => wire_bytes(&r.values),
            Message::Watermark(_) => 0,
        };
        let hop = self.wall(latency + per_byte * bytes as f64);
        self.outboxes[slot].1.send(Envelope { channel, not_before: depart + hop, msg }).is_ok()
    }

    fn run(mut self) -> Delivered {
        let mut out: Vec<Emit<()>> = Vec::new();
        let mut delivered = Delivered::default();
        let mut pacer = Pacer { debt: Duration::ZERO };
        let mut targets = Vec::new();
        let per_tuple = self.cost.per_tuple(&self.instance.kind);
        let coordination = self.cost.overhead(self.instance.parallelism);
        while let Ok(env) = self.inbox.recv() {
            sleep_until(env.not_before);
            out.clear();
            let data = matches!(env.msg, Message::Data(_));
            let handled = self.instance.handle(env.channel, env.msg, &mut out);
            let mut cost_us = self.cost.triggered(handled.work.fires, handled.work.matches);
            if data {
                cost_us += per_tuple + coordination;
            }
            pacer.charge(self.wall(cost_us / self.speed));
            let now = Instant::now();
            for e in out.drain(..) {
                if self.instance.is_sink() {
                    let at_us = now.duration_since(self.epoch).as_secs_f64() * 1e6 / self.scale;
                    delivered.latencies.push((at_us - e.origin as f64 / 1e3).max(0.0));
                    delivered.ids.push(e.id);
                    if self.collect {
                        delivered.outputs.push(e.values.clone());
                    }
                    delivered.digest.push(e.values);
                    continue;
                }
                self.instance.route(&e.values, &mut targets);
                let rec = Record { id: e.id, ts: e.ts, origin: e.origin, values: e.values, meta: () };
                for &ch in &targets {
                    if !self.send(ch, now, Message::Data(rec.clone())) {
                        return delivered;
                    }
                }
            }
            if let Some(wm) = handled.watermark {
                let channels: Vec<usize> = self.instance.all_channels().collect();
                for ch in channels {
                    if !self.send(ch, now, Message::Watermark(wm)) {
                        return delivered;
                    }
                }
            }
            if self.instance.is_done() {
                break;
            }
        }
        delivered
    }
}

fn drive(mut feed: SourceFeed, targets: Vec<Sender<Envelope>>, epoch: Instant, scale: f64) {
    let at = |ns: u64| epoch + Duration::from_secs_f64(ns as f64 * scale / 1e9);
    while let Some((t, item)) = feed.next() {
        sleep_until(at(t));
        let now = Instant::now();
        let ok = match item {
            FeedItem::Watermark(wm) => targets.iter().all(|s| {
                s.send(Envelope { channel: SOURCE_CHANNEL, not_before: now, msg: Message::Watermark(wm) }).is_ok()
            }),
            tuple => {
                let (i, rec) = tuple.into_record(()).expect("tuple item");
                let msg = Message::Data(rec);
                targets[i as usize].send(Envelope { channel: SOURCE_CHANNEL, not_before: now, msg }).is_ok()
            }
        };
        if !ok {
            return;
        }
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "worker panicked".into())
}

pub fn run_threads(
    plan: &QueryPlan,
    phys: &PhysicalPlan,
    cluster: &ClusterProfile,
    placement: &Placement,
    cfg: &ExecConfig,
    seed: u64,
) -> Result<RunResult> {
    cfg.check()?;
    let feeds = SourceFeed::for_plan(plan, seed, cfg.duration_ns(), cfg.watermark_interval_ns())?;
    let n = phys.instances.len();
    let (senders, receivers): (Vec<_>, Vec<_>) = (0..n).map(|_| bounded::<Envelope>(cfg.queue_capacity)).unzip();
    let speeds = effective_speeds(cluster, placement);
    let epoch = Instant::now() + Duration::from_millis(5);

    let mut workers = Vec::with_capacity(n);
    for ((i, instance), inbox) in Instance::<()>::build_all(plan, phys).into_iter().enumerate().zip(receivers) {
        let mut outboxes = Vec::new();
        let mut hops = Vec::new();
        for edge in &instance.outputs {
            for &ch in &edge.channels {
                let to = phys.channels[ch].to;
                let shuffle = if edge.partitioning == Partitioning::Forward { 0.0 } else { cfg.cost.shuffle_cost };
                let node = &cluster.nodes[placement.node_of(i)];
                let hop = if placement.is_local(i, to) {
                    (shuffle, 0.0)
                } else {
                    (shuffle + node.link_latency_us, 8.0 / (node.bandwidth_gbps * 1e3))
                };
                outboxes.push((ch, senders[to].clone()));
                hops.push(hop);
            }
        }
        workers.push(Worker {
            index: i,
            instance,
            inbox,
            outboxes,
            hops,
            speed: speeds[i],
            scale: cfg.time_scale,
            epoch,
            cost: cfg.cost.clone(),
            collect: cfg.collect_outputs,
        });
    }

    let mut drivers = Vec::new();
    for feed in feeds {
        let targets: Vec<Sender<Envelope>> = phys.instances_of(feed.op).map(|i| senders[i].clone()).collect();
        drivers.push((feed, targets));
    }
    drop(senders);

    let ids: Vec<String> = phys.instances.iter().map(|i| i.to_string()).collect();
    let scale = cfg.time_scale;
    let results: Vec<(usize, thread::Result<Delivered>)> = thread::scope(|s| {
        let handles: Vec<_> = workers
            .into_iter()
            .map(|w| {
                let i = w.index;
                let h = thread::Builder::new()
                    .name(ids[i].clone())
                    .spawn_scoped(s, move || std::panic::catch_unwind(AssertUnwindSafe(|| w.run())))
                    .expect("spawn worker");
                (i, h)
            })
            .collect();
        for (feed, targets) in drivers {
            thread::Builder::new().spawn_scoped(s, move || drive(feed, targets, epoch, scale)).expect("spawn driver");
        }
        handles.into_iter().map(|(i, h)| (i, h.join().unwrap_or_else(Err))).collect()
    });

    let mut delivered = Delivered::default();
    let mut digest = OutputDigest::default();
    for (i, r) in results {
        let d = r.map_err(|p| Error::Worker { instance: ids[i].clone(), message: panic_message(p) })?;
        delivered.latencies.extend(d.latencies);
        delivered.ids.extend(d.ids);
        delivered.outputs.extend(d.outputs);
        for t in &d.digest {
            digest.add(t);
        }
    }
    let deliveries = delivered.latencies.len();
    Ok(RunResult {
        plan_id: plan.id.clone(),
        cluster: cluster.name.clone(),
        mode: ExecMode::Threads,
        run: 0,
        seed,
        duration_s: cfg.duration_s,
        latencies_us: delivered.latencies,
        sample_ids: delivered.ids,
        breakdowns: Vec::new(),
        outputs: delivered.outputs,
        output_digest: digest.finish(),
        throughput_tps: metrics::throughput(deliveries, cfg.duration_s)?,
        trace: Vec::new(),
        placement: placement.clone(),
    })
}
