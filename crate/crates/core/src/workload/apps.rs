//! Templates for the application workloads. Operator graphs follow each
//! application's published description; user-defined operators carry
//! deterministic stand-in behaviors.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::builder::PlanBuilder;
use super::config::GeneratorConfig;
use super::selectivity::estimate_selectivity;
use super::stream::DOUBLE_DOMAIN;
use super::synthetic::pick;
use crate::error::{Error, Result};
use crate::model::{
    AggFn, AppCode, DataType, FilterFn, FilterSpec, FlatMapFn, MapFn, OpId, OperatorKind, Partitioning,
    QueryPlan, StreamSpec, StructureTag, TupleSchema, UdoBehavior, Value, WindowKind, WindowPolicy, WindowSpec,
};

use DataType::{Double, Integer, String as Text};

struct Ctx<'a> {
    rng: ChaCha8Rng,
    cfg: &'a GeneratorConfig,
    b: PlanBuilder,
}

impl Ctx<'_> {
    fn stream(&mut self, fields: Vec<DataType>, keys: Option<u32>) -> StreamSpec {
        let mut spec = StreamSpec::new(
            TupleSchema::new(fields),
            *pick(&mut self.rng, &self.cfg.event_rates),
            *pick(&mut self.rng, &self.cfg.arrivals),
        );
        spec.key_domain = keys;
        spec.replay = true;
        spec
    }

    fn source(&mut self, fields: Vec<DataType>, keys: Option<u32>) -> OpId {
        let spec = self.stream(fields, keys);
        self.b.source(spec)
    }

    fn time_window(&mut self, kind: WindowKind) -> WindowSpec {
        let length = *pick(&mut self.rng, &self.cfg.window_durations_ms);
        match kind {
            WindowKind::Tumbling => WindowSpec::tumbling(WindowPolicy::Time, length),
            WindowKind::Sliding => {
                let ratio = *pick(&mut self.rng, &self.cfg.slide_ratios);
                let slide = ((ratio * length as f64).round() as u64).clamp(1, length);
                WindowSpec::sliding(WindowPolicy::Time, length, slide)
            }
        }
    }

    fn source_filter(&mut self, spec: &StreamSpec, field: usize, function: FilterFn, literal: Value) -> Result<OperatorKind> {
        let mut filter = FilterSpec::new(field, function, literal);
        let est = estimate_selectivity(&filter, spec, self.rng.next_u64(), self.cfg.selectivity_sample)?;
        filter.estimated_selectivity = est.value.max(self.cfg.selectivity_floor);
        Ok(OperatorKind::Filter { filter })
    }

    fn udo(&mut self, from: OpId, name: &str, behavior: UdoBehavior, key: Option<usize>) -> OpId {
        let partitioning = match key {
            Some(k) => Partitioning::Hash { field: k },
            None => Partitioning::Forward,
        };
        self.b.then(from, OperatorKind::Udo { name: name.into(), behavior, key }, partitioning)
    }

    fn aggregate(&mut self, from: OpId, function: AggFn, field: usize, window: WindowSpec, key: Option<usize>) -> OpId {
        let partitioning = match key {
            Some(k) => Partitioning::Hash { field: k },
            None => Partitioning::Forward,
        };
        self.b.then(from, OperatorKind::WindowAggregate { function, field, window, key }, partitioning)
    }

    fn count_per_key(&mut self, from: OpId, width: usize, window: WindowSpec) -> OpId {
        let ones = self.b.then(from, OperatorKind::Map { function: MapFn::AppendOne }, Partitioning::Forward);
        self.aggregate(ones, AggFn::Sum, width, window, Some(0))
    }
}

/// Builds sub-query `sub_query` of an application with randomized tunables.
pub fn instantiate_application(code: AppCode, sub_query: usize, cfg: &GeneratorConfig, seed: u64) -> Result<QueryPlan> {
    cfg.check()?;
    if sub_query >= code.sub_queries() {
        return Err(Error::InvalidArgument(format!(
            "{} has {} quer{}, sub-query {sub_query} requested",
            code.code(),
            code.sub_queries(),
            if code.sub_queries() == 1 { "y" } else { "ies" }
        )));
    }
    let mut c = Ctx { rng: ChaCha8Rng::seed_from_u64(seed), cfg, b: PlanBuilder::default() };
    let tail = match (code, sub_query) {
        (AppCode::WC, _) => {
            let src = c.source(vec![Text], None);
            let chunk = c.rng.random_range(2..=3);
            let words = c.b.then(
                src,
                OperatorKind::FlatMap { function: FlatMapFn::Tokenize { field: 0, chunk } },
                Partitioning::Forward,
            );
            let w = c.time_window(WindowKind::Tumbling);
            c.aggregate(words, AggFn::Sum, 1, w, Some(0))
        }
        (AppCode::MO, _) => {
            let src = c.source(vec![Integer, Double, Double], Some(100));
            let behavior = UdoBehavior::BfprtOutlier {
                value_field: 1,
                buffer: c.rng.random_range(10..=50),
                factor: *pick(&mut c.rng, &[1.2, 1.4, 1.6]),
            };
            c.udo(src, "outlier_detector", behavior, Some(0))
        }
        (AppCode::LR, 0) => {
            // toll notification: average speed of slow segments
            let spec = c.stream(vec![Integer, Integer, Double, Integer], Some(100));
            let src = c.b.source(spec.clone());
            let limit = Value::Double(c.rng.random_range(0.2..0.8) * DOUBLE_DOMAIN);
            let slow = c.source_filter(&spec, 2, FilterFn::Le, limit)?;
            let f = c.b.then(src, slow, Partitioning::Forward);
            let w = c.time_window(WindowKind::Sliding);
            c.aggregate(f, AggFn::Avg, 2, w, Some(0))
        }
        (AppCode::LR, 1) => {
            // accident notification: positions with several stopped vehicles
            let spec = c.stream(vec![Integer, Integer, Double, Integer], Some(200));
            let src = c.b.source(spec.clone());
            let limit = Value::Double(c.rng.random_range(0.05..0.2) * DOUBLE_DOMAIN);
            let stopped = c.source_filter(&spec, 2, FilterFn::Lt, limit)?;
            let f = c.b.then(src, stopped, Partitioning::Forward);
            let w = c.time_window(WindowKind::Tumbling);
            let counts = c.count_per_key(f, 4, w);
            let mut several = FilterSpec::new(1, FilterFn::Ge, Value::Double(2.0));
            several.estimated_selectivity = 0.5;
            c.b.then(counts, OperatorKind::Filter { filter: several }, Partitioning::Forward)
        }
        (AppCode::LR, 2) => {
            // daily expenditure: tolls per vehicle
            let src = c.source(vec![Integer, Integer, Double, Double], Some(1000));
            let w = c.time_window(WindowKind::Tumbling);
            c.aggregate(src, AggFn::Sum, 3, w, Some(0))
        }
        (AppCode::LR, _) => {
            // total travel time: furthest position per vehicle
            let src = c.source(vec![Integer, Integer, Double, Integer], Some(1000));
            let w = c.time_window(WindowKind::Sliding);
            c.aggregate(src, AggFn::Max, 3, w, Some(0))
        }
        (AppCode::LP, 0) => {
            let src = c.source(vec![Integer, Text, Integer, Integer], Some(50));
            let w = c.time_window(WindowKind::Tumbling);
            c.count_per_key(src, 4, w)
        }
        (AppCode::LP, _) => {
            let src = c.source(vec![Integer, Text, Integer], Some(8));
            let w = c.time_window(WindowKind::Tumbling);
            c.count_per_key(src, 3, w)
        }
        (AppCode::GCM, q) => {
            let keys = if q == 0 { 100 } else { 10 };
            let src = c.source(vec![Integer, Integer, Double], Some(keys));
            let w = c.time_window(WindowKind::Sliding);
            c.aggregate(src, AggFn::Avg, 2, w, Some(0))
        }
        (AppCode::TPCH, _) => {
            let spec = c.stream(vec![Integer, Integer, Double], Some(5));
            let src = c.b.source(spec.clone());
            let urgent = c.source_filter(&spec, 0, FilterFn::Le, Value::Int(1))?;
            let f = c.b.then(src, urgent, Partitioning::Forward);
            let w = c.time_window(WindowKind::Tumbling);
            c.count_per_key(f, 3, w)
        }
        (AppCode::BI, _) => {
            let src = c.source(vec![Integer, Double, Double], Some(100));
            let vwap = c.udo(src, "vwap_calculator", UdoBehavior::Vwap { price_field: 1, volume_field: 2 }, Some(0));
            let threshold = *pick(&mut c.rng, &[0.25, 0.5, 0.75]);
            c.udo(vwap, "bargain_index", UdoBehavior::BargainIndex { threshold }, None)
        }
        (AppCode::SA, _) => {
            let src = c.source(vec![Text, Integer], None);
            let text = c.udo(src, "twitter_analyzer", UdoBehavior::TextNormalize { text_field: 0 }, None);
            c.udo(text, "sentiment_classifier", UdoBehavior::SentimentScore { text_field: 0 }, None)
        }
        (AppCode::SG, q) => {
            let src = c.source(vec![Integer, Integer, Double], Some(40));
            let w = c.time_window(WindowKind::Sliding);
            c.aggregate(src, AggFn::Avg, 2, w, (q == 1).then_some(0))
        }
        (AppCode::CA, 0) => {
            let src = c.source(vec![Integer, Integer, Integer], Some(200));
            c.udo(src, "repeat_visit", UdoBehavior::RepeatVisit, Some(0))
        }
        (AppCode::CA, _) => {
            let src = c.source(vec![Integer, Text], None);
            let buckets = *pick(&mut c.rng, &[32, 64]);
            let regions = c.udo(src, "geo_ip", UdoBehavior::GeoBucket { ip_field: 0, buckets }, None);
            let w = c.time_window(WindowKind::Tumbling);
            c.aggregate(regions, AggFn::Sum, 1, w, Some(0))
        }
        (AppCode::SD, _) => {
            let src = c.source(vec![Integer, Double], Some(50));
            let w = c.time_window(WindowKind::Sliding);
            let avg = c.aggregate(src, AggFn::Avg, 1, w, Some(0));
            // spikes: 3% above the long-run mean temperature
            let mut spike = FilterSpec::new(1, FilterFn::Gt, Value::Double(1.03 * DOUBLE_DOMAIN / 2.0));
            spike.estimated_selectivity = 0.4;
            c.b.then(avg, OperatorKind::Filter { filter: spike }, Partitioning::Forward)
        }
        (AppCode::TT, _) => {
            let src = c.source(vec![Text, Integer], None);
            let topics = c.udo(src, "topic_extractor", UdoBehavior::TopicExtract { text_field: 0, chunk: 2 }, None);
            let w = c.time_window(WindowKind::Tumbling);
            let counts = c.aggregate(topics, AggFn::Sum, 1, w, Some(0));
            let min_count = *pick(&mut c.rng, &[2.0, 3.0, 5.0]);
            c.udo(counts, "popularity_detector", UdoBehavior::TopicThreshold { count_field: 1, min_count }, None)
        }
        (AppCode::TM, _) => {
            let src = c.source(vec![Integer, Double, Double, Double], Some(500));
            let matcher = UdoBehavior::RoadMatch { lat_field: 1, lon_field: 2, speed_field: 3, grid: 1e5 };
            let roads = c.udo(src, "road_matcher", matcher, None);
            let w = c.time_window(WindowKind::Tumbling);
            c.aggregate(roads, AggFn::Avg, 1, w, Some(0))
        }
        (AppCode::AD, _) => {
            let w = c.time_window(WindowKind::Tumbling);
            let mut branches = Vec::new();
            for name in ["click_parser", "impression_parser"] {
                let src = c.source(vec![Integer, Integer], Some(100));
                let parsed = c.udo(src, name, UdoBehavior::AdParse { ad_field: 0 }, None);
                branches.push(c.aggregate(parsed, AggFn::Sum, 1, w, Some(0)));
            }
            let join = c.b.add(OperatorKind::WindowJoin { window: w, left_key: 0, right_key: 0 });
            c.b.connect(branches[0], join, Partitioning::Hash { field: 0 }, 0);
            c.b.connect(branches[1], join, Partitioning::Hash { field: 0 }, 1);
            let window = *pick(&mut c.rng, &[5, 10, 20]);
            let ctr = UdoBehavior::RollingCtr { clicks_field: 1, impressions_field: 4, window };
            c.udo(join, "rolling_ctr", ctr, Some(0))
        }
    };
    c.b.sink(tail);
    let id = if code.sub_queries() > 1 {
        format!("{}-q{sub_query}-{seed:016x}", code.code())
    } else {
        format!("{}-{seed:016x}", code.code())
    };
    Ok(c.b.finish(id, StructureTag::App(code)))
}
