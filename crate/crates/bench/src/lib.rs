//! Corpus acquisition and benchmark harness.

pub mod corpus;
pub mod run;
pub mod synthetic;

pub use corpus::{cached, default_cache_dir, fetch_corpus, CorpusName, CorpusSel, FetchError};
pub use run::{bracket_sweep, run_bench, Algorithm, BenchConfig, FileReport};
