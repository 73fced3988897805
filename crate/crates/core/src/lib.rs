//! Storage and querying of probabilistic OCR output.
//!
//! Each OCR line is a stochastic finite automaton ([`Sfa`]): a DAG whose
//! arcs emit strings with conditional probabilities. The crate provides
//!
//! - the SFA model, its `sfa v1` text format and a brute-force enumerator
//!   ([`sfa`]),
//! - k-best string extraction and sum-product mass computation
//!   ([`inference`]),
//! - the chunked top-k approximation built by greedy region merging
//!   ([`approx`]),
//! - a small regex dialect compiled to DFAs with exact match probabilities
//!   over every representation ([`query`]),
//! - a dictionary-driven inverted index with projection ([`index`]),
//! - a file-backed corpus store ([`store`]),
//! - parameter tuning and precision/recall evaluation ([`tune`]),
//! - a seeded synthetic OCR-noise generator ([`synth`]).

pub mod approx;
pub mod cost;
mod dag;
pub mod error;
pub mod index;
pub mod inference;
pub mod query;
pub mod sfa;
pub mod store;
pub mod synth;
pub mod tune;

pub use approx::{
    best_assignment_bruteforce, collapse, find_min_sfa, greedy_approximate, AssignmentChoice,
    Chunk, ChunkPartition, ChunkedSfa,
};
pub use error::{Error, Result};
pub use index::{build_index, build_trie, indexed_query, project, Posting, PostingIndex, TrieDfa};
pub use inference::{kl_of_retention, top_k, total_mass, RankedEntry, RankedStrings};
pub use query::{compile_pattern, eval_sfa, eval_strings, rank_lines, LineMatch, Mode, QueryDfa};
pub use sfa::{enumerate_all, parse_sfa, validate, Diagnostic, NodeId, Sfa};
pub use store::{Corpus, CorpusManifest, SizeReport};
pub use tune::{evaluate, fit_size_model, tune, EvalReport, SizeModel, TuneOutcome};
