//! Synthetic data streams, synthetic plans and application templates.

mod apps;
mod builder;
mod config;
mod corpus;
mod selectivity;
mod stream;
mod synthetic;

pub use apps::instantiate_application;
pub use config::{GeneratorConfig, EVENT_RATES, KEY_DOMAINS, SLIDE_RATIOS, WINDOW_DURATIONS_MS, WINDOW_LENGTHS};
pub use corpus::{generate_corpus, generate_plan};
pub use selectivity::{draw_literal, estimate_selectivity, SelectivityEstimate};
pub use stream::{
    generate_stream, sample_column, string_pool, Extent, StreamGenerator, StreamTuple, ValueSampler,
    DOUBLE_DOMAIN, INT_DOMAIN, REPLAY_PERIOD, STRING_ALPHABET,
};
pub use synthetic::generate_synthetic_plan;
