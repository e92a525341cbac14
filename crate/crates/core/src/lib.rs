//! Toolkit for building webly-supervised concept datasets, sampling a
//! diverse-concept evaluation benchmark, applying inference-time scoring
//! mechanisms over model-exported log-probability tables, and computing
//! the associated evaluation metrics.

pub mod dce;
pub mod error;
pub mod ingest;
pub mod jsonl;
pub mod lexicon;
pub mod metrics;
pub mod predictions;
pub mod scoring;
pub mod splits;
pub mod templates;
pub mod text;

pub use error::PipelineError;
