use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    Integer,
    Double,
    String,
}

impl DataType {
    pub const ALL: [DataType; 3] = [DataType::Integer, DataType::Double, DataType::String];

    pub fn is_numeric(self) -> bool {
        matches!(self, DataType::Integer | DataType::Double)
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataType::Integer => "integer",
            DataType::Double => "double",
            DataType::String => "string",
        })
    }
}

/// A single field value. Strings are reference counted so tuples clone cheaply.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Value {
    Int(i64),
    Double(f64),
    Str(Arc<str>),
}

impl Value {
    pub fn data_type(&self) -> DataType {
        match self {
            Value::Int(_) => DataType::Integer,
            Value::Double(_) => DataType::Double,
            Value::Str(_) => DataType::String,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(v) => Some(*v as f64),
            Value::Double(v) => Some(*v),
            Value::Str(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    /// Total order within one data type; `None` across types.
    pub fn compare(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => Some(a.cmp(b)),
            (Value::Double(a), Value::Double(b)) => Some(a.total_cmp(b)),
            (Value::Str(a), Value::Str(b)) => Some(a.cmp(b)),
            _ => None,
        }
    }

    /// Approximate wire size used for bandwidth costing.
    pub fn wire_bytes(&self) -> usize {
        match self {
            Value::Int(_) | Value::Double(_) => 8,
            Value::Str(s) => s.len(),
        }
    }

    pub fn key(&self) -> KeyVal {
        KeyVal::from(self)
    }

    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            Value::Int(v) => {
                out.push(0);
                out.extend_from_slice(&v.to_le_bytes());
            }
            Value::Double(v) => {
                out.push(1);
                out.extend_from_slice(&v.to_bits().to_le_bytes());
            }
            Value::Str(s) => {
                out.push(2);
                out.extend_from_slice(&(s.len() as u32).to_le_bytes());
                out.extend_from_slice(s.as_bytes());
            }
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Double(a), Value::Double(b)) => a.to_bits() == b.to_bits(),
            (Value::Str(a), Value::Str(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Value {}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Double(v) => write!(f, "{v}"),
            Value::Str(s) => write!(f, "{s:?}"),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Double(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(Arc::from(v))
    }
}

/// Byte encoding of a tuple that is injective over value sequences; used
/// for output digests and multiset comparison.
pub fn encode_tuple(values: &[Value]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 9 + 4);
    out.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for v in values {
        v.encode_into(&mut out);
    }
    out
}

/// Totally ordered, hashable form of a value, used for grouping keys.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum KeyVal {
    Int(i64),
    Double(u64),
    Str(Arc<str>),
}

impl From<&Value> for KeyVal {
    fn from(v: &Value) -> Self {
        match v {
            Value::Int(i) => KeyVal::Int(*i),
            Value::Double(d) => KeyVal::Double(d.to_bits()),
            Value::Str(s) => KeyVal::Str(s.clone()),
        }
    }
}

impl KeyVal {
    pub fn to_value(&self) -> Value {
        match self {
            KeyVal::Int(i) => Value::Int(*i),
            KeyVal::Double(b) => Value::Double(f64::from_bits(*b)),
            KeyVal::Str(s) => Value::Str(s.clone()),
        }
    }

    fn rank(&self) -> u8 {
        match self {
            KeyVal::Int(_) => 0,
            KeyVal::Double(_) => 1,
            KeyVal::Str(_) => 2,
        }
    }

    /// Deterministic 64-bit hash, stable across runs and platforms.
    pub fn stable_hash(&self) -> u64 {
        let mut buf = Vec::with_capacity(16);
        self.to_value().encode_into(&mut buf);
        fnv1a(&buf)
    }
}

impl Ord for KeyVal {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (KeyVal::Int(a), KeyVal::Int(b)) => a.cmp(b),
            (KeyVal::Double(a), KeyVal::Double(b)) => f64::from_bits(*a).total_cmp(&f64::from_bits(*b)),
            (KeyVal::Str(a), KeyVal::Str(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl PartialOrd for KeyVal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// SplitMix64 finalizer; combines identifiers into well-spread derived ids and seeds.
pub fn mix64(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(17);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TupleSchema {
    pub fields: Vec<DataType>,
}

impl TupleSchema {
    pub const MAX_GENERATED_WIDTH: usize = 15;

    pub fn new(fields: Vec<DataType>) -> Self {
        TupleSchema { fields }
    }

    pub fn width(&self) -> usize {
        self.fields.len()
    }

    pub fn get(&self, index: usize) -> Option<DataType> {
        self.fields.get(index).copied()
    }

    pub fn concat(&self, other: &TupleSchema) -> TupleSchema {
        let mut fields = self.fields.clone();
        fields.extend_from_slice(&other.fields);
        TupleSchema { fields }
    }

    pub fn conforms(&self, values: &[Value]) -> bool {
        values.len() == self.fields.len() && values.iter().zip(&self.fields).all(|(v, t)| v.data_type() == *t)
    }
}
