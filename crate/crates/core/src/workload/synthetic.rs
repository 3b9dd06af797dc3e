//! Randomized plans over the synthetic query structures.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::builder::PlanBuilder;
use super::config::GeneratorConfig;
use super::selectivity::draw_literal;
use super::stream::{sample_column, ValueSampler};
use crate::error::{Error, Result};
use crate::model::{
    DataType, FilterSpec, OpId, OperatorKind, Partitioning, QueryPlan, StreamSpec, StructureTag,
    SyntheticStructure, TupleSchema, Value, WindowKind, WindowPolicy, WindowSpec,
};

pub(crate) fn pick<'a, T, R: Rng>(rng: &mut R, items: &'a [T]) -> &'a T {
    items.choose(rng).expect("config lists are checked non-empty")
}

pub(crate) fn draw_window<R: Rng>(rng: &mut R, cfg: &GeneratorConfig, policy: Option<WindowPolicy>) -> WindowSpec {
    let kind = *pick(rng, &cfg.window_kinds);
    let policy = policy.unwrap_or_else(|| *pick(rng, &cfg.window_policies));
    let length = match policy {
        WindowPolicy::Time => *pick(rng, &cfg.window_durations_ms),
        WindowPolicy::Count => *pick(rng, &cfg.window_lengths),
    };
    match kind {
        WindowKind::Tumbling => WindowSpec::tumbling(policy, length),
        WindowKind::Sliding => {
            let ratio = *pick(rng, &cfg.slide_ratios);
            let slide = ((ratio * length as f64).round() as u64).clamp(1, length);
            WindowSpec::sliding(policy, length, slide)
        }
    }
}

fn draw_stream<R: Rng>(rng: &mut R, cfg: &GeneratorConfig, key_type: DataType) -> StreamSpec {
    let width = rng.random_range(cfg.tuple_width[0]..=cfg.tuple_width[1]);
    let mut fields: Vec<DataType> = (0..width).map(|_| *pick(rng, &cfg.data_types)).collect();
    fields[0] = key_type;
    if !fields.iter().any(|t| t.is_numeric()) {
        // aggregates need a numeric field
        let numeric: Vec<DataType> = cfg.data_types.iter().copied().filter(|t| t.is_numeric()).collect();
        let ty = numeric.choose(rng).copied().unwrap_or(DataType::Double);
        // field 0 is the key and keeps its type
        if fields.len() == 1 {
            fields.push(ty);
        } else {
            *fields.last_mut().expect("width >= 2") = ty;
        }
    }
    let mut spec = StreamSpec::new(TupleSchema::new(fields), *pick(rng, &cfg.event_rates), *pick(rng, &cfg.arrivals));
    spec.key_domain = Some(*pick(rng, &cfg.key_domains));
    spec
}

/// Column samples of one source used to accept or reject filter literals.
/// Later filters in a chain are judged on the tuples that pass earlier ones.
pub(crate) struct SourceSample<'a> {
    spec: &'a StreamSpec,
    sampler: ValueSampler,
    seed: u64,
    n: usize,
    columns: BTreeMap<usize, Vec<Value>>,
    alive: Vec<bool>,
    alive_count: usize,
}

impl<'a> SourceSample<'a> {
    pub fn new(spec: &'a StreamSpec, seed: u64, n: usize) -> Result<Self> {
        Ok(SourceSample {
            spec,
            sampler: ValueSampler::new(spec)?,
            seed,
            n,
            columns: BTreeMap::new(),
            alive: vec![true; n],
            alive_count: n,
        })
    }

    fn column(&mut self, field: usize) -> Result<&[Value]> {
        if !self.columns.contains_key(&field) {
            let col = sample_column(self.spec, field, crate::model::mix64(self.seed, field as u64), self.n)?;
            self.columns.insert(field, col);
        }
        Ok(&self.columns[&field])
    }

    /// Draws filters until one passes at least `floor` of the whole sample
    /// and keeps at least `floor` of the sample alive after the earlier
    /// filters. The stored selectivity is conditional on the earlier filters.
    pub fn draw_filter<R: Rng>(&mut self, rng: &mut R, cfg: &GeneratorConfig, plan: &str, op: OpId) -> Result<FilterSpec> {
        let width = self.spec.schema.width();
        let min_pass = (cfg.selectivity_floor * self.n as f64).ceil().max(1.0) as usize;
        for _ in 0..cfg.literal_budget {
            let field = rng.random_range(0..width);
            let ty = self.spec.schema.fields[field];
            let functions: Vec<_> = cfg.filter_functions.iter().copied().filter(|f| f.applies_to(ty)).collect();
            let Some(&function) = functions.choose(rng) else { continue };
            let literal = draw_literal(rng, &self.sampler, ty, field, function);
            let mut filter = FilterSpec::new(field, function, literal);
            let hits: Vec<bool> = self.column(field)?.iter().map(|v| filter.matches_value(v)).collect();
            let total = hits.iter().filter(|h| **h).count();
            let joint = hits.iter().zip(&self.alive).filter(|(h, a)| **h && **a).count();
            if total >= min_pass && joint >= min_pass {
                filter.estimated_selectivity = joint as f64 / self.alive_count as f64;
                for (a, h) in self.alive.iter_mut().zip(hits) {
                    *a &= h;
                }
                self.alive_count = joint;
                return Ok(filter);
            }
        }
        Err(Error::SelectivityBudgetExhausted {
            plan: plan.to_string(),
            filter: op,
            floor: cfg.selectivity_floor,
            draws: cfg.literal_budget,
        })
    }
}

pub fn generate_synthetic_plan(tag: StructureTag, cfg: &GeneratorConfig, seed: u64) -> Result<QueryPlan> {
    let StructureTag::Synthetic(structure) = tag else {
        return Err(Error::UnknownStructure(format!("{tag} is not a synthetic structure")));
    };
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = format!("{tag}-{seed:016x}");
    let mut b = PlanBuilder::default();
    let key_type = *pick(&mut rng, &cfg.data_types);
    match structure {
        SyntheticStructure::Linear | SyntheticStructure::ChainedFilter(_) => {
            let filters = match structure {
                SyntheticStructure::ChainedFilter(k) => k as usize,
                _ => 1,
            };
            let spec = draw_stream(&mut rng, cfg, key_type);
            let mut sample = SourceSample::new(&spec, rng.next_u64(), cfg.selectivity_sample)?;
            let numeric: Vec<usize> = (0..spec.schema.width()).filter(|&i| spec.schema.fields[i].is_numeric()).collect();
            let mut tail = b.source(spec.clone());
            for _ in 0..filters {
                let op = OpId(b.len() as u32);
                let filter = sample.draw_filter(&mut rng, cfg, &id, op)?;
                tail = b.then(tail, OperatorKind::Filter { filter }, Partitioning::Forward);
            }
            let agg = OperatorKind::WindowAggregate {
                function: *pick(&mut rng, &cfg.agg_functions),
                field: *pick(&mut rng, &numeric),
                window: draw_window(&mut rng, cfg, None),
                key: Some(0),
            };
            tail = b.then(tail, agg, Partitioning::Hash { field: 0 });
            b.sink(tail);
        }
        SyntheticStructure::WayJoin(k) => {
            let mut branches = Vec::with_capacity(k as usize);
            for _ in 0..k {
                let spec = draw_stream(&mut rng, cfg, key_type);
                let mut sample = SourceSample::new(&spec, rng.next_u64(), cfg.selectivity_sample)?;
                let src = b.source(spec.clone());
                let op = OpId(b.len() as u32);
                let filter = sample.draw_filter(&mut rng, cfg, &id, op)?;
                branches.push(b.then(src, OperatorKind::Filter { filter }, Partitioning::Forward));
            }
            let mut left = branches[0];
            for &right in &branches[1..] {
                let join = b.add(OperatorKind::WindowJoin {
                    window: draw_window(&mut rng, cfg, Some(WindowPolicy::Time)),
                    left_key: 0,
                    right_key: 0,
                });
                b.connect(left, join, Partitioning::Hash { field: 0 }, 0);
                b.connect(right, join, Partitioning::Hash { field: 0 }, 1);
                left = join;
            }
            b.sink(left);
        }
    }
    Ok(b.finish(id, tag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_plan, KindTag};

    fn count(plan: &QueryPlan, tag: KindTag) -> usize {
        plan.operators.iter().filter(|o| o.kind.tag() == tag).count()
    }

    #[test]
    fn linear_shape() {
        let p = generate_synthetic_plan("linear".parse().unwrap(), &GeneratorConfig::default(), 3).unwrap();
        assert!(validate_plan(&p).is_ok(), "{:?}", validate_plan(&p));
        assert_eq!(count(&p, KindTag::Source), 1);
        assert_eq!(count(&p, KindTag::Filter), 1);
        assert_eq!(count(&p, KindTag::WindowAggregate), 1);
        assert_eq!(count(&p, KindTag::Sink), 1);
    }

    #[test]
    fn join_shapes() {
        for k in 2..=6u8 {
            let tag = StructureTag::Synthetic(SyntheticStructure::WayJoin(k));
            let p = generate_synthetic_plan(tag, &GeneratorConfig::default(), k as u64).unwrap();
            assert!(validate_plan(&p).is_ok(), "{:?}", validate_plan(&p));
            assert_eq!(count(&p, KindTag::Source), k as usize);
            assert_eq!(count(&p, KindTag::Filter), k as usize);
            assert_eq!(count(&p, KindTag::WindowJoin), k as usize - 1);
            assert_eq!(count(&p, KindTag::Sink), 1);
        }
    }

    #[test]
    fn narrow_string_keyed_streams_keep_their_key_type() {
        let cfg = GeneratorConfig { tuple_width: [1, 1], data_types: vec![DataType::String, DataType::Integer], ..Default::default() };
        for seed in 0..40 {
            let p = generate_synthetic_plan("2-way-join".parse().unwrap(), &cfg, seed).unwrap();
            assert!(validate_plan(&p).is_ok(), "seed {seed}: {:?}", validate_plan(&p));
        }
    }

    #[test]
    fn app_tag_rejected() {
        assert!(generate_synthetic_plan("AD".parse().unwrap(), &GeneratorConfig::default(), 1).is_err());
    }

    #[test]
    fn exhausted_budget_names_the_filter() {
        // only equality on a huge integer domain: never selective enough
        let cfg = GeneratorConfig {
            data_types: vec![DataType::Integer],
            key_domains: vec![1_000_000],
            filter_functions: vec![crate::model::FilterFn::Eq],
            ..Default::default()
        };
        match generate_synthetic_plan("linear".parse().unwrap(), &cfg, 1) {
            Err(Error::SelectivityBudgetExhausted { filter, draws, .. }) => {
                assert_eq!(filter, OpId(1));
                assert_eq!(draws, 100);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let cfg = GeneratorConfig::default();
        for tag in StructureTag::all_synthetic() {
            assert_eq!(generate_synthetic_plan(tag, &cfg, 11).unwrap(), generate_synthetic_plan(tag, &cfg, 11).unwrap());
        }
    }
}
