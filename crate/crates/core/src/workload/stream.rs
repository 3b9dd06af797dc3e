//! Seeded synthetic data streams.

use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Zipf};

use crate::error::{Error, Result};
use crate::model::{mix64, Arrival, DataType, StreamSpec, Value};

/// Integers are drawn uniformly from `[0, INT_DOMAIN)`.
pub const INT_DOMAIN: i64 = 1_000_000;
/// Doubles are drawn uniformly from `[0, DOUBLE_DOMAIN)`.
pub const DOUBLE_DOMAIN: f64 = 1e6;
/// Letters used for pooled strings.
pub const STRING_ALPHABET: &[u8] = b"abcdefghijklmnop";
/// A replayed stream loops over this many distinct tuples.
pub const REPLAY_PERIOD: usize = 10_000;

const POOL_SEED: u64 = 0x9e37_79b9_7f4a_7c15;
const NANOS_PER_SEC: f64 = 1e9;

/// One generated tuple with its production timestamp in nanoseconds.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamTuple {
    pub ts: u64,
    pub values: Vec<Value>,
}

/// How much of a stream to produce.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Extent {
    /// All tuples with timestamp strictly below the bound (nanoseconds).
    Duration(u64),
    Count(u64),
}

impl Extent {
    pub fn seconds(s: f64) -> Self {
        Extent::Duration((s * NANOS_PER_SEC).round() as u64)
    }
}

/// The shared pool of distinct strings for a cardinality. Independent of
/// any stream seed so literals drawn at generation time match at run time.
pub fn string_pool(cardinality: u32) -> Arc<[Arc<str>]> {
    static POOLS: OnceLock<Mutex<HashMap<u32, Arc<[Arc<str>]>>>> = OnceLock::new();
    let pools = POOLS.get_or_init(Default::default);
    let mut guard = pools.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry(cardinality)
        .or_insert_with(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix64(POOL_SEED, cardinality as u64));
            let mut seen = BTreeSet::new();
            let mut pool = Vec::with_capacity(cardinality as usize);
            while pool.len() < cardinality as usize {
                let len = rng.random_range(3..=10);
                let s: String = (0..len)
                    .map(|_| STRING_ALPHABET[rng.random_range(0..STRING_ALPHABET.len())] as char)
                    .collect();
                if seen.insert(s.clone()) {
                    pool.push(Arc::<str>::from(s));
                }
            }
            pool.into()
        })
        .clone()
}

/// Draws field values for one stream specification.
#[derive(Clone, Debug)]
pub struct ValueSampler {
    types: Vec<DataType>,
    key_domain: Option<u32>,
    zipf: Option<Zipf<f64>>,
    pool: Arc<[Arc<str>]>,
}

impl ValueSampler {
    pub fn new(spec: &StreamSpec) -> Result<Self> {
        spec.check().map_err(Error::InvalidArgument)?;
        let zipf = match spec.arrival {
            Arrival::Zipf { s } => {
                let n = spec.key_domain.map(f64::from).unwrap_or_else(|| match spec.schema.get(0) {
                    Some(DataType::String) => f64::from(spec.string_cardinality),
                    _ => INT_DOMAIN as f64,
                });
                Some(Zipf::new(n, s).map_err(|e| Error::InvalidArgument(format!("zipf: {e}")))?)
            }
            _ => None,
        };
        Ok(ValueSampler {
            types: spec.schema.fields.clone(),
            key_domain: spec.key_domain,
            zipf,
            pool: string_pool(spec.string_cardinality),
        })
    }

    pub fn pool(&self) -> &[Arc<str>] {
        &self.pool
    }

    /// Field 0 is the key field: restricted to the key domain and, for
    /// Zipf arrivals, skewed.
    pub fn field<R: Rng>(&self, rng: &mut R, index: usize) -> Value {
        let ty = self.types[index];
        if index == 0 && (self.key_domain.is_some() || self.zipf.is_some()) {
            let k = match (&self.zipf, self.key_domain) {
                (Some(z), _) => z.sample(rng) as u64 - 1,
                (None, Some(d)) => rng.random_range(0..d as u64),
                (None, None) => unreachable!(),
            };
            return match ty {
                DataType::Integer => Value::Int(k as i64),
                DataType::Double => Value::Double(k as f64),
                DataType::String => Value::Str(self.pool[(k % self.pool.len() as u64) as usize].clone()),
            };
        }
        match ty {
            DataType::Integer => Value::Int(rng.random_range(0..INT_DOMAIN)),
            DataType::Double => Value::Double(rng.random_range(0.0..DOUBLE_DOMAIN)),
            DataType::String => Value::Str(self.pool[rng.random_range(0..self.pool.len())].clone()),
        }
    }

    pub fn tuple<R: Rng>(&self, rng: &mut R) -> Vec<Value> {
        (0..self.types.len()).map(|i| self.field(rng, i)).collect()
    }
}

/// Lazily produces the tuples of one stream in timestamp order.
pub struct StreamGenerator {
    sampler: ValueSampler,
    rng: ChaCha8Rng,
    arrival: Arrival,
    rate: f64,
    extent: Extent,
    emitted: u64,
    clock: f64,
    replay: Option<Vec<Vec<Value>>>,
}

impl StreamGenerator {
    pub fn new(spec: &StreamSpec, seed: u64, extent: Extent) -> Result<Self> {
        match extent {
            Extent::Duration(0) | Extent::Count(0) => {
                return Err(Error::InvalidArgument("stream duration must be positive".into()))
            }
            _ => {}
        }
        Ok(StreamGenerator {
            sampler: ValueSampler::new(spec)?,
            rng: ChaCha8Rng::seed_from_u64(seed),
            arrival: spec.arrival,
            rate: spec.event_rate,
            extent,
            emitted: 0,
            clock: 0.0,
            replay: spec.replay.then(Vec::new),
        })
    }

    fn next_ts(&mut self) -> u64 {
        match self.arrival {
            Arrival::Uniform => (self.emitted as f64 * NANOS_PER_SEC / self.rate).round() as u64,
            Arrival::Poisson | Arrival::Zipf { .. } => {
                let gap = Exp::new(self.rate / NANOS_PER_SEC).expect("rate checked positive");
                self.clock += gap.sample(&mut self.rng);
                self.clock.round() as u64
            }
        }
    }
}

impl Iterator for StreamGenerator {
    type Item = StreamTuple;

    fn next(&mut self) -> Option<StreamTuple> {
        if let Extent::Count(n) = self.extent {
            if self.emitted >= n {
                return None;
            }
        }
        let ts = self.next_ts();
        if let Extent::Duration(end) = self.extent {
            if ts >= end {
                self.extent = Extent::Count(self.emitted);
                return None;
            }
        }
        let values = match &mut self.replay {
            Some(buf) if buf.len() == REPLAY_PERIOD => buf[self.emitted as usize % REPLAY_PERIOD].clone(),
            Some(buf) => {
                let v = self.sampler.tuple(&mut self.rng);
                buf.push(v.clone());
                v
            }
            None => self.sampler.tuple(&mut self.rng),
        };
        self.emitted += 1;
        Some(StreamTuple { ts, values })
    }
}

pub fn generate_stream(spec: &StreamSpec, seed: u64, extent: Extent) -> Result<Vec<StreamTuple>> {
    Ok(StreamGenerator::new(spec, seed, extent)?.collect())
}

/// `n` independent draws of a single field.
pub fn sample_column(spec: &StreamSpec, field: usize, seed: u64, n: usize) -> Result<Vec<Value>> {
    if field >= spec.schema.width() {
        return Err(Error::InvalidArgument(format!("field {field} out of range")));
    }
    let sampler = ValueSampler::new(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| sampler.field(&mut rng, field)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TupleSchema;

    fn spec(arrival: Arrival, rate: f64) -> StreamSpec {
        StreamSpec::new(TupleSchema::new(vec![DataType::Integer]), rate, arrival)
    }

    #[test]
    fn uniform_arrivals_are_evenly_spaced() {
        let tuples = generate_stream(&spec(Arrival::Uniform, 10.0), 1, Extent::seconds(1.0)).unwrap();
        let ts: Vec<u64> = tuples.iter().map(|t| t.ts).collect();
        assert_eq!(ts, (0..10).map(|i| i * 100_000_000).collect::<Vec<_>>());
    }

    #[test]
    fn poisson_mean_gap_matches_rate() {
        let tuples = generate_stream(&spec(Arrival::Poisson, 1000.0), 7, Extent::Count(100_000)).unwrap();
        let mean_gap_ms = tuples.last().unwrap().ts as f64 / 1e6 / (tuples.len() as f64);
        assert!((mean_gap_ms - 1.0).abs() < 0.05, "mean gap {mean_gap_ms}");
    }

    #[test]
    fn same_seed_same_stream() {
        let s = StreamSpec::new(
            TupleSchema::new(vec![DataType::String, DataType::Double, DataType::Integer]),
            500.0,
            Arrival::Poisson,
        );
        let a = generate_stream(&s, 3, Extent::Count(1000)).unwrap();
        let b = generate_stream(&s, 3, Extent::Count(1000)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|t| s.schema.conforms(&t.values)));
    }

    #[test]
    fn zero_extent_rejected() {
        assert!(generate_stream(&spec(Arrival::Uniform, 10.0), 1, Extent::Duration(0)).is_err());
        assert!(generate_stream(&spec(Arrival::Uniform, 0.0), 1, Extent::Count(1)).is_err());
    }

    #[test]
    fn replay_loops_values() {
        let mut s = spec(Arrival::Uniform, 1e6);
        s.replay = true;
        let t = generate_stream(&s, 9, Extent::Count(REPLAY_PERIOD as u64 + 5)).unwrap();
        for i in 0..5 {
            assert_eq!(t[i].values, t[REPLAY_PERIOD + i].values);
        }
        assert!(t[REPLAY_PERIOD].ts > t[0].ts);
    }

    #[test]
    fn key_domain_restricts_field_zero() {
        let s = spec(Arrival::Uniform, 100.0).with_key_domain(7);
        let col = sample_column(&s, 0, 1, 1000).unwrap();
        assert!(col.iter().all(|v| matches!(v, Value::Int(k) if (0..7).contains(k))));
    }

    #[test]
    fn pool_is_distinct_and_stable() {
        let a = string_pool(1000);
        let b = string_pool(1000);
        assert!(Arc::ptr_eq(&a, &b));
        let set: BTreeSet<_> = a.iter().collect();
        assert_eq!(set.len(), 1000);
    }
}
