//! Ranking of web-archive documents for entity queries from non-content
//! evidence: URL strings, capture metadata, hyperlinks and anchor texts.
//!
//! The crate is organised along the processing pipeline:
//!
//! * [`ingest`] streams WARC/ARC containers into revision and link records.
//! * [`url_kit`] normalizes URLs and derives core URLs, tokens, depth and domains.
//! * [`graph`] builds page and domain link graphs and runs PageRank.
//! * [`anchor_index`] builds anchor-text surrogate documents and a BM25 index.
//! * [`features`] computes per (query, document) feature vectors.
//! * [`labeling`] derives soft and manual labels and the stratified sample.
//! * [`ltr`] trains the random-forest ranker and computes baselines.
//! * [`metrics`] evaluates ranked runs.
//! * [`pipeline`] wires everything into run-directory stages.

pub mod anchor_index;
pub mod features;
pub mod graph;
pub mod ingest;
pub mod labeling;
pub mod ltr;
pub mod metrics;
pub mod pipeline;
pub mod synth;
pub mod time;
pub mod tsv;
pub mod url_kit;

pub use time::Timestamp;
