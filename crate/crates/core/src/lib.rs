//! Corpus preparation and training-configuration toolkit for multilingual
//! causal-LM pretraining.
//!
//! The crate covers the mechanizable stages of a pretraining data pipeline:
//!
//! - [`corpus`]: document model, JSONL persistence, per-language/category
//!   size reporting
//! - [`normalize`]: Unicode and whitespace canonicalization
//! - [`filter`]: per-document quality heuristics
//! - [`dedup`]: exact (content hash) and fuzzy (MinHash LSH) deduplication
//! - [`tokenizer`]: BPE trainer and encoder/decoder with byte fallback,
//!   digit splitting, and repeated-whitespace tokens
//! - [`packing`]: fixed-length sequence packing with end-of-text delimiters
//!   and a binary on-disk format
//! - [`schedule`]: learning-rate schedules, model presets, FLOP accounting
//! - [`instruct`]: instruction-finetuning conversation formats and
//!   stochastic conversation merging

pub mod corpus;
pub mod dedup;
pub mod error;
pub mod filter;
pub mod hash;
pub mod instruct;
pub mod normalize;
pub mod packing;
pub mod schedule;
pub mod tokenizer;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
