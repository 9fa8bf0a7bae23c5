//! Non-content features for (query, document) pairs.

mod evidence;
mod io;

use std::collections::{HashMap, HashSet};

use thiserror::Error;

pub use evidence::{evidence_summary, EvidenceSummary};
pub use io::{
    group_by_query, load_queries, load_wiki_citations, load_word_list, read_vectors, write_vectors,
};

use crate::anchor_index::{self, AnchorIndex};
use crate::graph::{InlinkTable, NamedScores};
use crate::ingest::RevisionRecord;
use crate::time::{gaps_at_least_week, gaps_longer_than_week};
use crate::url_kit::{self, NormalizedUrl};
use crate::Timestamp;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("unknown document {0}")]
    UnknownDoc(String),
    #[error("unparseable document URL {0}")]
    BadUrl(String),
    #[error("evidence summary over an empty result set")]
    EmptyResultSet,
    #[error(transparent)]
    Read(#[from] crate::tsv::ReadError),
}

pub const ENTITY_TYPES: [&str; 15] = [
    "Politician",
    "Scientist",
    "Artist",
    "Sport player",
    "Author",
    "Entrepreneur",
    "Organisation",
    "Product",
    "Location",
    "Works",
    "Event",
    "Biology",
    "Music",
    "Astrology",
    "Abstract Concept",
];

/// Index into [`ENTITY_TYPES`], matched case-insensitively and ignoring
/// spaces and underscores.
pub fn parse_entity_type(s: &str) -> Option<usize> {
    let squash = |t: &str| {
        t.chars()
            .filter(|c| !matches!(c, ' ' | '_' | '-'))
            .flat_map(char::to_lowercase)
            .collect::<String>()
    };
    let wanted = squash(s);
    ENTITY_TYPES.iter().position(|t| squash(t) == wanted)
}

/// The named features, in serialization order. The entity-type block follows.
pub const BASE_FEATURES: [&str; 18] = [
    "url_depth",
    "query_string_flag",
    "search_word_flag",
    "query_in_url",
    "news_url_flag",
    "wikipedia_url_count",
    "inlink_count",
    "pagerank_core",
    "pagerank_domain",
    "anchor_freq",
    "anchor_time_spans",
    "max_term_freq",
    "doc_len",
    "length_norm",
    "inverse_doc_freq",
    "revision_count",
    "rev_duration",
    "domain_size",
];

pub const DEFAULT_SEARCH_WORDS: [&str; 6] = ["such", "suche", "suchergebnis", "search", "query", "q"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EntityEncoding {
    /// One 0/1 column per entity type.
    #[default]
    OneHot,
    /// A single column holding the type's index.
    Code,
}

impl std::str::FromStr for EntityEncoding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "onehot" | "one_hot" => Ok(EntityEncoding::OneHot),
            "code" => Ok(EntityEncoding::Code),
            other => Err(format!("unknown entity encoding {other:?} (expected onehot or code)")),
        }
    }
}

pub fn feature_names(encoding: EntityEncoding) -> Vec<String> {
    let mut names: Vec<String> = BASE_FEATURES.iter().map(|s| s.to_string()).collect();
    match encoding {
        EntityEncoding::OneHot => names.extend(
            ENTITY_TYPES
                .iter()
                .map(|t| format!("ent_{}", t.to_lowercase().replace(' ', "_"))),
        ),
        EntityEncoding::Code => names.push("ent_type".into()),
    }
    names
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub query_id: u32,
    pub text: String,
    pub entity_type: usize,
    /// Citations of each domain on the entity's Wikipedia page.
    pub wiki_citation_counts: HashMap<String, u32>,
    pub valid: bool,
}

impl QueryRecord {
    pub fn new(query_id: u32, text: &str, entity_type: usize) -> Self {
        QueryRecord {
            query_id,
            text: text.to_string(),
            entity_type,
            wiki_citation_counts: HashMap::new(),
            valid: is_valid_query(text),
        }
    }

    pub fn terms(&self) -> Vec<String> {
        anchor_index::tokenize_text(&self.text)
    }
}

/// Queries with commas or round brackets are disambiguated titles and
/// are not used.
pub fn is_valid_query(text: &str) -> bool {
    !text.contains([',', '(', ')'])
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub query_id: u32,
    pub doc_id: String,
    pub label: f64,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn get(&self, feature: &str) -> Option<f64> {
        BASE_FEATURES
            .iter()
            .position(|f| *f == feature)
            .and_then(|i| self.values.get(i).copied())
    }
}

#[derive(Debug, Clone)]
pub struct ResourceTables {
    pub news_domains: HashSet<String>,
    pub search_words: HashSet<String>,
}

impl Default for ResourceTables {
    fn default() -> Self {
        ResourceTables {
            news_domains: HashSet::new(),
            search_words: DEFAULT_SEARCH_WORDS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocInfo {
    /// The full URL captured most often for this core URL (ties: smallest).
    pub representative_url: String,
    pub domain: String,
    /// Distinct capture times, ascending.
    pub revision_times: Vec<Timestamp>,
}

/// Per-core-URL revision facts and domain sizes.
#[derive(Debug, Clone, Default)]
pub struct DocCatalog {
    docs: HashMap<String, DocInfo>,
    domain_sizes: HashMap<String, usize>,
}

impl DocCatalog {
    pub fn build(revisions: &[RevisionRecord]) -> Self {
        let mut captures: HashMap<&str, HashMap<&str, usize>> = HashMap::new();
        let mut domains: HashMap<&str, &str> = HashMap::new();
        for r in revisions {
            *captures
                .entry(r.core_url.as_str())
                .or_default()
                .entry(r.full_url.as_str())
                .or_default() += 1;
            domains.entry(r.core_url.as_str()).or_insert(r.domain.as_str());
        }
        let times = anchor_index::revision_times(revisions);
        let mut domain_sizes: HashMap<String, usize> = HashMap::new();
        let docs = captures
            .into_iter()
            .map(|(core, fulls)| {
                let representative_url = fulls
                    .into_iter()
                    .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(a.0)))
                    .map(|(u, _)| u.to_string())
                    .unwrap_or_default();
                let domain = domains[core].to_string();
                *domain_sizes.entry(domain.clone()).or_default() += 1;
                let info = DocInfo {
                    representative_url,
                    domain,
                    revision_times: times[core].clone(),
                };
                (core.to_string(), info)
            })
            .collect();
        DocCatalog { docs, domain_sizes }
    }

    pub fn get(&self, doc_id: &str) -> Option<&DocInfo> {
        self.docs.get(url_kit::core_url_str(doc_id))
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.get(doc_id).is_some()
    }

    pub fn domain_size(&self, domain: &str) -> usize {
        self.domain_sizes.get(domain).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

/// Read-only structures shared by all extractions.
#[derive(Clone, Copy)]
pub struct FeatureContext<'a> {
    pub index: &'a AnchorIndex,
    pub catalog: &'a DocCatalog,
    pub inlinks: &'a InlinkTable,
    pub page_ranks: &'a NamedScores,
    pub domain_ranks: &'a NamedScores,
    pub resources: &'a ResourceTables,
    pub encoding: EntityEncoding,
}

/// Gaps between consecutive anchor timestamps longer than one week.
pub fn anchor_time_spans(times: &[Timestamp]) -> usize {
    gaps_longer_than_week(times)
}

/// Gaps between consecutive revisions of at least one week.
pub fn rev_duration(times: &[Timestamp]) -> usize {
    gaps_at_least_week(times)
}

/// Occurrences of query terms among the URL's tokens.
pub fn query_in_url(terms: &[String], url: &NormalizedUrl) -> usize {
    let tokens = url_kit::tokenize_url(url);
    terms
        .iter()
        .map(|t| tokens.iter().filter(|tok| *tok == t).count())
        .sum()
}

pub fn search_word_flag(url: &NormalizedUrl, words: &HashSet<String>) -> bool {
    url.to_string().to_lowercase().contains("query=")
        || url_kit::tokenize_url(url).iter().any(|t| words.contains(t))
}

/// Fraction of anchor texts that contain every query term.
pub fn anchor_freq<'a>(terms: &[String], anchors: impl IntoIterator<Item = &'a str>) -> f64 {
    let mut total = 0usize;
    let mut hits = 0usize;
    for a in anchors {
        total += 1;
        let toks = anchor_index::tokenize_text(a);
        if !terms.is_empty() && terms.iter().all(|t| toks.contains(t)) {
            hits += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

pub fn extract_features(
    q: &QueryRecord,
    doc_id: &str,
    ctx: &FeatureContext<'_>,
) -> Result<FeatureVector, FeatureError> {
    let info = ctx
        .catalog
        .get(doc_id)
        .ok_or_else(|| FeatureError::UnknownDoc(doc_id.to_string()))?;
    let core = url_kit::core_url_str(doc_id);
    let url_text = if doc_id.contains('?') { doc_id } else { info.representative_url.as_str() };
    let url = url_kit::normalize(url_text).map_err(|_| FeatureError::BadUrl(url_text.to_string()))?;
    let terms = q.terms();
    let surrogate = ctx.index.doc(core);
    let ts = anchor_index::term_stats(surrogate, ctx.index.stats(), &terms);
    let anchors = surrogate.map(|d| d.anchor_instances.as_slice()).unwrap_or(&[]);
    let anchor_times: Vec<Timestamp> = anchors.iter().map(|a| a.time).collect();
    let flag = |b: bool| if b { 1.0 } else { 0.0 };

    let mut values = vec![
        url_kit::url_depth(&url) as f64,
        flag(url.has_query()),
        flag(search_word_flag(&url, &ctx.resources.search_words)),
        query_in_url(&terms, &url) as f64,
        flag(ctx.resources.news_domains.contains(&info.domain)),
        q.wiki_citation_counts.get(&info.domain).copied().unwrap_or(0) as f64,
        ctx.inlinks.get(core) as f64,
        ctx.page_ranks.get(core),
        ctx.domain_ranks.get(&info.domain),
        anchor_freq(&terms, anchors.iter().map(|a| a.text.as_str())),
        anchor_time_spans(&anchor_times) as f64,
        ts.max_term_freq,
        ts.doc_len as f64,
        ts.length_norm,
        ts.inverse_doc_freq,
        info.revision_times.len() as f64,
        rev_duration(&info.revision_times) as f64,
        ctx.catalog.domain_size(&info.domain) as f64,
    ];
    match ctx.encoding {
        EntityEncoding::OneHot => values.extend((0..ENTITY_TYPES.len()).map(|i| flag(i == q.entity_type))),
        EntityEncoding::Code => values.push(q.entity_type as f64),
    }
    Ok(FeatureVector {
        query_id: q.query_id,
        doc_id: core.to_string(),
        label: 0.0,
        values,
    })
}
