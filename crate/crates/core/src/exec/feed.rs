use std::iter::Peekable;
use std::sync::Arc;

use super::engine::END_OF_STREAM;
use super::logic::Record;
use crate::error::{Error, Result};
use crate::model::{mix64, OpId, QueryPlan};
use crate::workload::{Extent, StreamGenerator};

/// One step of a source driver.
#[derive(Clone, Debug)]
pub enum FeedItem {
    /// A tuple for the source instance with the given index.
    Tuple { instance: u32, id: u64, ts: u64, values: Arc<[crate::model::Value]> },
    /// A watermark for every instance of the source.
    Watermark(u64),
}

/// Produces the tuples and periodic watermarks of one source operator in
/// event-time order. Tuple `seq` goes to instance `seq mod p`.
pub struct SourceFeed {
    pub op: OpId,
    pub parallelism: u32,
    source_index: u64,
    generator: Peekable<StreamGenerator>,
    interval: u64,
    next_watermark: u64,
    end: u64,
    seq: u64,
    done: bool,
}

/// Bits of a source record id reserved for the tuple sequence number.
const SEQ_BITS: u32 = 40;

impl SourceFeed {
    pub fn for_plan(plan: &QueryPlan, seed: u64, duration_ns: u64, watermark_interval_ns: u64) -> Result<Vec<SourceFeed>> {
        if watermark_interval_ns == 0 {
            return Err(Error::InvalidArgument("watermark interval must be positive".into()));
        }
        plan.sources()
            .enumerate()
            .map(|(i, op)| {
                let spec = plan.stream(op.id).ok_or_else(|| Error::InvalidArgument(format!("{} has no stream", op.id)))?;
                let generator = StreamGenerator::new(spec, mix64(seed, u64::from(op.id.0)), Extent::Duration(duration_ns))?;
                Ok(SourceFeed {
                    op: op.id,
                    parallelism: op.parallelism,
                    source_index: i as u64,
                    generator: generator.peekable(),
                    interval: watermark_interval_ns,
                    next_watermark: watermark_interval_ns,
                    end: duration_ns,
                    seq: 0,
                    done: false,
                })
            })
            .collect()
    }
}

impl Iterator for SourceFeed {
    /// Event time at which the item is produced, and the item.
    type Item = (u64, FeedItem);

    fn next(&mut self) -> Option<(u64, FeedItem)> {
        if self.done {
            return None;
        }
        let due = self.next_watermark.min(self.end);
        match self.generator.peek() {
            Some(t) if t.ts < due => {
                let t = self.generator.next().expect("peeked");
                let seq = self.seq;
                self.seq += 1;
                let instance = (seq % u64::from(self.parallelism)) as u32;
                let id = (self.source_index << SEQ_BITS) | seq;
                Some((t.ts, FeedItem::Tuple { instance, id, ts: t.ts, values: Arc::from(t.values) }))
            }
            _ if self.next_watermark < self.end => {
                let wm = self.next_watermark;
                self.next_watermark += self.interval;
                Some((wm, FeedItem::Watermark(wm)))
            }
            _ => {
                self.done = true;
                Some((self.end, FeedItem::Watermark(END_OF_STREAM)))
            }
        }
    }
}

impl FeedItem {
    pub fn into_record<M>(self, meta: M) -> Option<(u32, Record<M>)> {
        match self {
            FeedItem::Tuple { instance, id, ts, values } => Some((instance, Record { id, ts, origin: ts, values, meta })),
            FeedItem::Watermark(_) => None,
        }
    }
}
