//! Pointwise random-forest ranking, model selection, baselines and
//! feature ranking by information gain.

mod cv;
mod forest;
mod ig;
mod tree;

use std::collections::BTreeMap;

use thiserror::Error;

pub use cv::{assign_folds, cross_validate, default_grid, write_cv_report, CvReport, GridPoint};
pub use forest::{read_forest, train_forest, write_forest, Forest, ForestParams, Mtry};
pub use ig::{equal_frequency_cuts, information_gain, information_gain_ranking};
pub use tree::{Node, Tree};

use crate::anchor_index::{AnchorIndex, Bm25Params};
use crate::features::FeatureVector;

#[derive(Debug, Error)]
pub enum LtrError {
    #[error("no training examples")]
    NoExamples,
    #[error("{0} rows but {1} labels")]
    LabelCount(usize, usize),
    #[error("feature vector has {got} values, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid forest parameters: {0}")]
    BadParams(String),
    #[error("cross-validation needs at least {folds} queries, got {queries}")]
    TooFewQueries { folds: usize, queries: usize },
    #[error("empty parameter grid")]
    EmptyGrid,
}

/// Training matrix in canonical `(query_id, doc_id)` order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
    pub query_ids: Vec<u32>,
    pub doc_ids: Vec<String>,
}

impl Dataset {
    pub fn from_vectors(feature_names: &[String], vectors: &[FeatureVector]) -> Self {
        let mut sorted: Vec<&FeatureVector> = vectors.iter().collect();
        sorted.sort_by(|a, b| a.query_id.cmp(&b.query_id).then_with(|| a.doc_id.cmp(&b.doc_id)));
        Dataset {
            feature_names: feature_names.to_vec(),
            rows: sorted.iter().map(|v| v.values.clone()).collect(),
            labels: sorted.iter().map(|v| v.label).collect(),
            query_ids: sorted.iter().map(|v| v.query_id).collect(),
            doc_ids: sorted.iter().map(|v| v.doc_id.clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Row indices per query, ascending query id.
    pub fn query_groups(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut g: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, q) in self.query_ids.iter().enumerate() {
            g.entry(*q).or_default().push(i);
        }
        g
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    Bm25,
    PageRank,
    QueryInUrl,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::Bm25, Baseline::PageRank, Baseline::QueryInUrl];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Bm25 => "bm25",
            Baseline::PageRank => "pagerank",
            Baseline::QueryInUrl => "query_in_url",
        }
    }
}

/// Score of a baseline for one (query, document) pair. PageRank and
/// query-in-URL read the document's feature vector; BM25 scores the
/// document's surrogate in the index (0 when it has no anchors).
pub fn baseline_score(
    which: Baseline,
    query_terms: &[String],
    vector: &FeatureVector,
    index: &AnchorIndex,
    bm25: &Bm25Params,
) -> f64 {
    match which {
        Baseline::Bm25 => index.bm25(query_terms, &vector.doc_id, bm25),
        Baseline::PageRank => vector.get("pagerank_core").unwrap_or(0.0),
        Baseline::QueryInUrl => vector.get("query_in_url").unwrap_or(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::BASE_FEATURES;

    fn vector(qid: u32, doc: &str, pr: f64, qiu: f64) -> FeatureVector {
        let mut values = vec![0.0; BASE_FEATURES.len()];
        values[7] = pr;
        values[3] = qiu;
        FeatureVector {
            query_id: qid,
            doc_id: doc.into(),
            label: 0.0,
            values,
        }
    }

    #[test]
    fn baselines() {
        let index = AnchorIndex::default();
        let p = Bm25Params::default();
        let terms = vec!["x".to_string()];
        let a = vector(1, "http://a.de/", 0.3, 2.0);
        let b = vector(2, "http://a.de/", 0.3, 1.0);
        assert_eq!(
            baseline_score(Baseline::PageRank, &terms, &a, &index, &p),
            baseline_score(Baseline::PageRank, &[], &b, &index, &p)
        );
        assert_eq!(baseline_score(Baseline::Bm25, &terms, &a, &index, &p), 0.0);
        assert!(baseline_score(Baseline::QueryInUrl, &terms, &a, &index, &p) > baseline_score(Baseline::QueryInUrl, &terms, &b, &index, &p));
    }

    #[test]
    fn dataset_is_canonically_ordered() {
        let names: Vec<String> = BASE_FEATURES.iter().map(|s| s.to_string()).collect();
        let vs = vec![vector(2, "b", 0.0, 0.0), vector(1, "z", 0.0, 0.0), vector(1, "a", 0.0, 0.0)];
        let d = Dataset::from_vectors(&names, &vs);
        assert_eq!(d.doc_ids, ["a", "z", "b"]);
        assert_eq!(d.query_groups()[&1], [0, 1]);
        let mut rev = vs.clone();
        rev.reverse();
        assert_eq!(Dataset::from_vectors(&names, &rev), d);
    }
}
