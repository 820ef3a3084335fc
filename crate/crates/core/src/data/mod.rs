//! Mixture generation, training-example extraction, normalization statistics,
//! dataset splitting, and on-disk caching.

mod examples;
mod manifest;
mod mixing;
mod normalization;
mod shards;
mod split;
pub mod synth;

pub use examples::{generate_examples, prepare_triple, ExampleStream, TrainingExample};
pub use manifest::{parse_manifest, read_manifest, MixtureSpec};
pub use mixing::{compute_noise_gain, make_mixture, mix_signals, snr_db, Mixture};
pub use normalization::{fit_normalization, FeatureStats, STD_FLOOR};
pub use shards::{read_shard, write_shard, ShardInfo};
pub use split::{split_dataset, split_utterances, Split};
