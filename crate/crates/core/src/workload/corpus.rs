use super::apps::instantiate_application;
use super::config::GeneratorConfig;
use super::synthetic::generate_synthetic_plan;
use crate::error::{Error, Result};
use crate::model::{mix64, QueryPlan, StructureTag};

/// Generates one plan for a structure tag. Multi-query applications pick
/// their sub-query from `round`.
pub fn generate_plan(tag: StructureTag, cfg: &GeneratorConfig, seed: u64, round: usize) -> Result<QueryPlan> {
    match tag {
        StructureTag::Synthetic(_) => generate_synthetic_plan(tag, cfg, seed),
        StructureTag::App(code) => instantiate_application(code, round % code.sub_queries(), cfg, seed),
    }
}

/// `cfg.count` plans, round-robin over `cfg.structures`, plan `i` seeded by
/// a hash of the config seed and `i`.
pub fn generate_corpus(cfg: &GeneratorConfig) -> Result<Vec<QueryPlan>> {
    cfg.check()?;
    let n = cfg.structures.len();
    (0..cfg.count)
        .map(|i| {
            let tag = cfg.structures[i % n];
            let mut plan = generate_plan(tag, cfg, mix64(cfg.seed, i as u64), i / n).map_err(|e| Error::at_plan(i, e))?;
            plan.id = format!("p{i:05}-{}", plan.id);
            Ok(plan)
        })
        .collect()
}
