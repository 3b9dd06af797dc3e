use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::stream::{sample_column, ValueSampler};
use crate::error::{Error, Result};
use crate::model::{DataType, FilterFn, FilterSpec, StreamSpec, Value};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectivityEstimate {
    pub value: f64,
    pub sample_size: usize,
}

/// Fraction of a seeded sample of `stream` that passes `filter`.
pub fn estimate_selectivity(
    filter: &FilterSpec,
    stream: &StreamSpec,
    seed: u64,
    sample_size: usize,
) -> Result<SelectivityEstimate> {
    if sample_size == 0 {
        return Err(Error::InvalidArgument("sample size must be positive".into()));
    }
    filter.check_against(stream.schema.get(filter.field)).map_err(Error::InvalidArgument)?;
    let column = sample_column(stream, filter.field, seed, sample_size)?;
    let passed = column.iter().filter(|v| filter.matches_value(v)).count();
    Ok(SelectivityEstimate { value: passed as f64 / sample_size as f64, sample_size })
}

/// Draws a literal for `function` on `field` that is plausible for the
/// field's value distribution.
pub fn draw_literal<R: Rng>(rng: &mut R, sampler: &ValueSampler, ty: DataType, field: usize, function: FilterFn) -> Value {
    if ty != DataType::String || !function.is_string_only() {
        return sampler.field(rng, field);
    }
    let s = sampler.pool().choose(rng).expect("pool is non-empty");
    let n = rng.random_range(1..=2.min(s.len()));
    let affix = match function {
        FilterFn::StartsWith | FilterFn::StartsNotWith => &s[..n],
        _ => &s[s.len() - n..],
    };
    Value::from(affix)
}
