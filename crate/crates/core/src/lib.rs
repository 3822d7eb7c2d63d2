//! Multiword-expression features for hate speech detection in short texts.

pub mod corpus_stats;
pub mod embed_store;
pub mod error;
pub mod featurize;
pub mod lexicon;
pub mod metrics;
pub mod mwe_tagger;
pub mod pipeline;
pub mod tensornet;
pub mod textprep;

pub use error::{Error, Result};
