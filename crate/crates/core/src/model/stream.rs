use serde::{Deserialize, Serialize};

use super::value::TupleSchema;

/// Inter-arrival process of a source.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "process", rename_all = "lowercase", deny_unknown_fields)]
pub enum Arrival {
    /// Exponential inter-arrival times with mean `1 / event_rate`.
    Poisson,
    /// Fixed spacing of `1 / event_rate`.
    Uniform,
    /// Poisson arrivals whose key field (field 0) is Zipf distributed with exponent `s`.
    Zipf { s: f64 },
}

pub const DEFAULT_STRING_CARDINALITY: u32 = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSpec {
    pub schema: TupleSchema,
    /// Events per second.
    pub event_rate: f64,
    pub arrival: Arrival,
    /// Loop finite source data instead of ending the stream.
    #[serde(default)]
    pub replay: bool,
    /// Restricts field 0 to this many distinct values, so keyed operators and
    /// joins see repeated keys.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_domain: Option<u32>,
    #[serde(default = "default_cardinality")]
    pub string_cardinality: u32,
}

fn default_cardinality() -> u32 {
    DEFAULT_STRING_CARDINALITY
}

impl StreamSpec {
    pub fn new(schema: TupleSchema, event_rate: f64, arrival: Arrival) -> Self {
        StreamSpec {
            schema,
            event_rate,
            arrival,
            replay: false,
            key_domain: None,
            string_cardinality: DEFAULT_STRING_CARDINALITY,
        }
    }

    pub fn with_key_domain(mut self, keys: u32) -> Self {
        self.key_domain = Some(keys);
        self
    }

    pub fn check(&self) -> Result<(), String> {
        if !(self.event_rate.is_finite() && self.event_rate > 0.0) {
            return Err(format!("event rate {} must be positive", self.event_rate));
        }
        if self.schema.width() == 0 {
            return Err("stream schema must have at least one field".into());
        }
        if self.string_cardinality == 0 {
            return Err("string cardinality must be positive".into());
        }
        if self.key_domain == Some(0) {
            return Err("key domain must be positive".into());
        }
        if let Arrival::Zipf { s } = self.arrival {
            if !(s.is_finite() && s > 0.0) {
                return Err(format!("zipf exponent {s} must be positive"));
            }
        }
        Ok(())
    }
}
