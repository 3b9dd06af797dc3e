//! Instances, channels and routing shared by both execution modes.

use std::collections::HashMap;

use super::logic::{Emit, OperatorLogic, Record, Work};
use crate::model::{InstanceId, OperatorKind, OutboundEdge, Partitioning, PhysicalPlan, QueryPlan, Value};

/// Channel id of the feed from a source driver into a source instance.
pub const SOURCE_CHANNEL: usize = usize::MAX;

/// Event-time watermark that closes a stream.
pub const END_OF_STREAM: u64 = u64::MAX;

#[derive(Clone, Debug)]
pub enum Message<M> {
    Data(Record<M>),
    Watermark(u64),
}

/// Bytes a tuple occupies on the wire: 8 per numeric field plus string lengths.
pub fn wire_bytes(values: &[Value]) -> usize {
    values.iter().map(Value::wire_bytes).sum()
}

pub struct Instance<M> {
    pub id: InstanceId,
    pub parallelism: u32,
    pub kind: OperatorKind,
    pub logic: OperatorLogic<M>,
    /// Inbound channel -> (position in `watermarks`, join port).
    inputs: HashMap<usize, (usize, u8)>,
    watermarks: Vec<u64>,
    pub aligned: u64,
    pub outputs: Vec<OutboundEdge>,
    cursors: Vec<usize>,
}

/// Outcome of handling one message.
#[derive(Debug, Default)]
pub struct Handled {
    pub work: Work,
    /// Aligned watermark, if it advanced.
    pub watermark: Option<u64>,
}

impl<M: Clone> Instance<M> {
    pub fn build_all(plan: &QueryPlan, phys: &PhysicalPlan) -> Vec<Instance<M>> {
        phys.instances
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let op = plan.operator(id.op).expect("physical instance of a plan operator");
                let mut inputs: HashMap<usize, (usize, u8)> =
                    phys.inputs[i].iter().enumerate().map(|(pos, &ch)| (ch, (pos, phys.channels[ch].port))).collect();
                if matches!(op.kind, OperatorKind::Source) {
                    inputs.insert(SOURCE_CHANNEL, (0, 0));
                }
                let outputs = phys.outputs[i].clone();
                Instance {
                    id: *id,
                    parallelism: op.parallelism,
                    kind: op.kind.clone(),
                    logic: OperatorLogic::new(id.op.0, id.index, &op.kind),
                    watermarks: vec![0; inputs.len()],
                    inputs,
                    aligned: 0,
                    cursors: vec![id.index as usize; outputs.len()],
                    outputs,
                }
            })
            .collect()
    }

    pub fn is_sink(&self) -> bool {
        matches!(self.kind, OperatorKind::Sink)
    }

    pub fn is_done(&self) -> bool {
        self.aligned == END_OF_STREAM
    }

    pub fn handle(&mut self, channel: usize, msg: Message<M>, out: &mut Vec<Emit<M>>) -> Handled {
        let (pos, port) = *self.inputs.get(&channel).expect("message on a channel of this instance");
        let mut h = Handled::default();
        match msg {
            Message::Data(rec) => self.logic.on_record(port, rec, out, &mut h.work),
            Message::Watermark(wm) => {
                self.watermarks[pos] = self.watermarks[pos].max(wm);
                let aligned = *self.watermarks.iter().min().expect("instance has inputs");
                if aligned > self.aligned {
                    self.aligned = aligned;
                    self.logic.on_watermark(aligned, out, &mut h.work);
                    h.watermark = Some(aligned);
                }
            }
        }
        h
    }

    /// Channels an output tuple is sent on, one per outbound edge.
    pub fn route(&mut self, values: &[Value], targets: &mut Vec<usize>) {
        targets.clear();
        for (edge, cursor) in self.outputs.iter().zip(self.cursors.iter_mut()) {
            let n = edge.channels.len();
            let slot = match edge.partitioning {
                Partitioning::Forward => 0,
                Partitioning::Rebalance => {
                    let s = *cursor % n;
                    *cursor = cursor.wrapping_add(1);
                    s
                }
                Partitioning::Hash { field } => (values[field].key().stable_hash() % n as u64) as usize,
            };
            targets.push(edge.channels[slot]);
        }
    }

    /// Every outbound channel, for watermark broadcast.
    pub fn all_channels(&self) -> impl Iterator<Item = usize> + '_ {
        self.outputs.iter().flat_map(|e| e.channels.iter().copied())
    }
}
