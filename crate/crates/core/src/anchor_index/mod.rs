//! Anchor-text surrogate documents and the inverted index built over them.
//!
//! A surrogate stands in for a document's content: it is the concatenation
//! of every anchor text pointing at the document's core URL. Scoring offers
//! BM25 and the classic tf/idf/norm statistics used as ranking features.

mod distribution;
mod store;

use std::collections::{HashMap, HashSet};

pub use distribution::{anchor_distribution, top_domains, write_distribution, DistributionRow};
pub use store::{load_index, save_index};

use crate::ingest::{LinkRecord, RevisionRecord};
use crate::Timestamp;

/// Surrogates longer than this many tokens are truncated.
pub const MAX_SURROGATE_TOKENS: u64 = 1_000_000;

/// How repeated anchors are kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DedupStrategy {
    /// One instance per (source revision, target, anchor text).
    UniquePerRevision,
    /// Every link record contributes an instance.
    All,
}

impl std::str::FromStr for DedupStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "s1" | "unique_per_revision" => Ok(DedupStrategy::UniquePerRevision),
            "s2" | "all" => Ok(DedupStrategy::All),
            other => Err(format!("unknown dedup strategy {other:?} (expected S1 or S2)")),
        }
    }
}

/// Lowercases and splits on whitespace and punctuation. No stemming, no stopwords.
pub fn tokenize_text(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorInstance {
    pub text: String,
    pub time: Timestamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateDocument {
    pub doc_id: String,
    pub term_freqs: HashMap<String, u32>,
    pub length: u64,
    pub anchor_instances: Vec<AnchorInstance>,
    /// Distinct capture times, ascending.
    pub revision_times: Vec<Timestamp>,
}

impl SurrogateDocument {
    pub fn tf(&self, term: &str) -> u32 {
        self.term_freqs.get(term).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Default)]
pub struct SurrogateSet {
    /// Sorted by `doc_id`.
    pub docs: Vec<SurrogateDocument>,
    /// Documents whose token stream hit [`MAX_SURROGATE_TOKENS`].
    pub truncated: usize,
}

/// Distinct sorted capture times per core URL.
pub fn revision_times(revisions: &[RevisionRecord]) -> HashMap<&str, Vec<Timestamp>> {
    let mut times: HashMap<&str, Vec<Timestamp>> = HashMap::new();
    for r in revisions {
        times.entry(r.core_url.as_str()).or_default().push(r.capture_time);
    }
    for v in times.values_mut() {
        v.sort_unstable();
        v.dedup();
    }
    times
}

/// Groups content links by target core URL into surrogate documents.
/// Only archived targets (present in `revisions`) are kept, and documents
/// without any non-empty anchor text are left out.
pub fn build_surrogates(
    links: &[LinkRecord],
    revisions: &[RevisionRecord],
    strategy: DedupStrategy,
) -> SurrogateSet {
    build_surrogates_capped(links, revisions, strategy, MAX_SURROGATE_TOKENS)
}

pub fn build_surrogates_capped(
    links: &[LinkRecord],
    revisions: &[RevisionRecord],
    strategy: DedupStrategy,
    max_tokens: u64,
) -> SurrogateSet {
    let times = revision_times(revisions);
    let mut seen: HashSet<(&str, i64, &str, &str)> = HashSet::new();
    let mut grouped: HashMap<&str, Vec<&LinkRecord>> = HashMap::new();
    for l in links {
        if l.anchor_text.trim().is_empty() {
            continue;
        }
        let target = l.target_core();
        if !times.contains_key(target) {
            continue;
        }
        if strategy == DedupStrategy::UniquePerRevision
            && !seen.insert((
                l.source_full_url.as_str(),
                l.source_capture_time.0,
                target,
                l.anchor_text.as_str(),
            ))
        {
            continue;
        }
        grouped.entry(target).or_default().push(l);
    }

    let mut truncated = 0;
    let mut docs: Vec<SurrogateDocument> = grouped
        .into_iter()
        .map(|(doc_id, instances)| {
            let mut term_freqs: HashMap<String, u32> = HashMap::new();
            let mut length = 0u64;
            let mut hit_cap = false;
            for l in &instances {
                for tok in tokenize_text(&l.anchor_text) {
                    if length >= max_tokens {
                        hit_cap = true;
                        break;
                    }
                    *term_freqs.entry(tok).or_default() += 1;
                    length += 1;
                }
            }
            if hit_cap {
                truncated += 1;
            }
            SurrogateDocument {
                doc_id: doc_id.to_string(),
                term_freqs,
                length,
                anchor_instances: instances
                    .iter()
                    .map(|l| AnchorInstance {
                        text: l.anchor_text.clone(),
                        time: l.source_capture_time,
                    })
                    .collect(),
                revision_times: times[doc_id].clone(),
            }
        })
        .collect();
    docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    SurrogateSet { docs, truncated }
}

/// Collection statistics over the indexed documents.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IndexStats {
    pub num_docs: usize,
    pub avg_doc_length: f64,
    pub doc_freq: HashMap<String, u32>,
}

impl IndexStats {
    pub fn from_docs(docs: &[SurrogateDocument]) -> Self {
        let mut doc_freq: HashMap<String, u32> = HashMap::new();
        for d in docs {
            for t in d.term_freqs.keys() {
                *doc_freq.entry(t.clone()).or_default() += 1;
            }
        }
        let total: u64 = docs.iter().map(|d| d.length).sum();
        IndexStats {
            num_docs: docs.len(),
            avg_doc_length: if docs.is_empty() { 0.0 } else { total as f64 / docs.len() as f64 },
            doc_freq,
        }
    }

    pub fn df(&self, term: &str) -> u32 {
        self.doc_freq.get(term).copied().unwrap_or(0)
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`
    pub fn bm25_idf(&self, term: &str) -> f64 {
        let n = self.num_docs as f64;
        let df = self.df(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Classic idf `1 + ln(N / (df + 1))`; 0 for an empty collection.
    pub fn classic_idf(&self, term: &str) -> f64 {
        if self.num_docs == 0 {
            return 0.0;
        }
        1.0 + (self.num_docs as f64 / (self.df(term) as f64 + 1.0)).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

pub fn bm25_score(query: &[String], doc: &SurrogateDocument, stats: &IndexStats, params: &Bm25Params) -> f64 {
    let len_ratio = if stats.avg_doc_length > 0.0 {
        doc.length as f64 / stats.avg_doc_length
    } else {
        0.0
    };
    let norm = params.k1 * (1.0 - params.b + params.b * len_ratio);
    query
        .iter()
        .map(|t| {
            let tf = doc.tf(t) as f64;
            if tf == 0.0 {
                return 0.0;
            }
            stats.bm25_idf(t) * tf * (params.k1 + 1.0) / (tf + norm)
        })
        .sum()
}

/// Classic per-document term statistics for a query.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TermStats {
    /// Max over query terms of `sqrt(tf)`.
    pub max_term_freq: f64,
    /// Sum over query terms of the classic idf.
    pub inverse_doc_freq: f64,
    /// `1 / sqrt(length)`, 0 for empty documents.
    pub length_norm: f64,
    pub doc_len: u64,
}

/// `doc` is `None` for documents that are not in the index.
pub fn term_stats(doc: Option<&SurrogateDocument>, stats: &IndexStats, query: &[String]) -> TermStats {
    let max_term_freq = doc
        .map(|d| {
            query
                .iter()
                .map(|t| (d.tf(t) as f64).sqrt())
                .fold(0.0, f64::max)
        })
        .unwrap_or(0.0);
    let doc_len = doc.map(|d| d.length).unwrap_or(0);
    TermStats {
        max_term_freq,
        inverse_doc_freq: query.iter().map(|t| stats.classic_idf(t)).sum(),
        length_norm: if doc_len == 0 { 0.0 } else { 1.0 / (doc_len as f64).sqrt() },
        doc_len,
    }
}

/// Frozen inverted index over surrogate documents.
#[derive(Debug, Clone, Default)]
pub struct AnchorIndex {
    docs: Vec<SurrogateDocument>,
    lookup: HashMap<String, u32>,
    postings: HashMap<String, Vec<(u32, u32)>>,
    stats: IndexStats,
    truncated: usize,
}

impl AnchorIndex {
    pub fn build(set: SurrogateSet) -> Self {
        let SurrogateSet { mut docs, truncated } = set;
        docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        let stats = IndexStats::from_docs(&docs);
        let lookup = docs
            .iter()
            .enumerate()
            .map(|(i, d)| (d.doc_id.clone(), i as u32))
            .collect();
        let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();
        for (i, d) in docs.iter().enumerate() {
            for (t, &tf) in &d.term_freqs {
                postings.entry(t.clone()).or_default().push((i as u32, tf));
            }
        }
        AnchorIndex {
            docs,
            lookup,
            postings,
            stats,
            truncated,
        }
    }

    pub fn stats(&self) -> &IndexStats {
        &self.stats
    }

    pub fn docs(&self) -> &[SurrogateDocument] {
        &self.docs
    }

    pub fn truncated(&self) -> usize {
        self.truncated
    }

    pub fn doc(&self, doc_id: &str) -> Option<&SurrogateDocument> {
        self.lookup.get(doc_id).map(|&i| &self.docs[i as usize])
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.lookup.contains_key(doc_id)
    }

    /// Postings of a term as `(doc index, tf)`, ascending by doc index.
    pub fn postings(&self, term: &str) -> &[(u32, u32)] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    pub fn bm25(&self, query: &[String], doc_id: &str, params: &Bm25Params) -> f64 {
        self.doc(doc_id)
            .map(|d| bm25_score(query, d, &self.stats, params))
            .unwrap_or(0.0)
    }

    /// Documents whose surrogate contains every query term.
    pub fn docs_with_all_terms(&self, query: &[String]) -> Vec<&str> {
        let Some(first) = query.first() else {
            return Vec::new();
        };
        self.postings(first)
            .iter()
            .map(|&(i, _)| &self.docs[i as usize])
            .filter(|d| query.iter().all(|t| d.tf(t) > 0))
            .map(|d| d.doc_id.as_str())
            .collect()
    }

    /// BM25 ranking over documents matching at least one query term,
    /// by descending score then ascending doc id.
    pub fn search(&self, query: &[String], params: &Bm25Params) -> Vec<(&str, f64)> {
        let mut candidates: Vec<u32> = query
            .iter()
            .flat_map(|t| self.postings(t).iter().map(|&(i, _)| i))
            .collect();
        candidates.sort_unstable();
        candidates.dedup();
        let mut hits: Vec<(&str, f64)> = candidates
            .into_iter()
            .map(|i| {
                let d = &self.docs[i as usize];
                (d.doc_id.as_str(), bm25_score(query, d, &self.stats, params))
            })
            .collect();
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        hits
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::TagPattern;
    use proptest::prelude::*;

    pub(super) fn link(src: &str, t: i64, dst: &str, anchor: &str) -> LinkRecord {
        LinkRecord {
            source_full_url: src.into(),
            source_capture_time: Timestamp(t),
            target_url: dst.into(),
            tag_pattern: TagPattern::AHref,
            anchor_text: anchor.into(),
        }
    }

    pub(super) fn rev(url: &str, t: i64) -> RevisionRecord {
        let u = crate::url_kit::normalize(url).unwrap();
        RevisionRecord {
            core_url: crate::url_kit::core_url(&u).to_string(),
            full_url: u.to_string(),
            capture_time: Timestamp(t),
            domain: crate::url_kit::domain_of(&u),
        }
    }

    fn q(s: &str) -> Vec<String> {
        tokenize_text(s)
    }

    fn doc_with(len: u64, tfs: &[(&str, u32)]) -> SurrogateDocument {
        SurrogateDocument {
            doc_id: "d".into(),
            term_freqs: tfs.iter().map(|(t, f)| (t.to_string(), *f)).collect(),
            length: len,
            anchor_instances: vec![],
            revision_times: vec![],
        }
    }

    #[test]
    fn tokenizer() {
        assert_eq!(tokenize_text("Angela Merkel's  CDU-Chefin!"), ["angela", "merkel", "s", "cdu", "chefin"]);
        assert!(tokenize_text(" -- ").is_empty());
        assert_eq!(tokenize_text("Größe"), ["größe"]);
    }

    #[test]
    fn strategies_on_duplicate_links() {
        let links = vec![
            link("http://s.de/", 1, "http://t.de/", "x"),
            link("http://s.de/", 1, "http://t.de/", "x"),
        ];
        let revs = vec![rev("http://t.de/", 5)];
        let s1 = build_surrogates(&links, &revs, DedupStrategy::UniquePerRevision);
        let s2 = build_surrogates(&links, &revs, DedupStrategy::All);
        assert_eq!(s1.docs[0].anchor_instances.len(), 1);
        assert_eq!(s2.docs[0].anchor_instances.len(), 2);
        assert!(build_surrogates(&[], &revs, DedupStrategy::All).docs.is_empty());
    }

    #[test]
    fn surrogate_term_counts() {
        let links = vec![
            link("http://a.de/", 1, "http://t.de/p", "Angela Merkel"),
            link("http://b.de/", 2, "http://t.de/p?x=1", "Merkel"),
        ];
        let revs = vec![rev("http://t.de/p", 9), rev("http://t.de/p", 3), rev("http://t.de/p?x=1", 3)];
        let set = build_surrogates(&links, &revs, DedupStrategy::UniquePerRevision);
        assert_eq!(set.docs.len(), 1);
        let d = &set.docs[0];
        assert_eq!(d.doc_id, "http://t.de/p");
        assert_eq!(d.tf("angela"), 1);
        assert_eq!(d.tf("merkel"), 2);
        assert_eq!(d.length, 3);
        assert_eq!(d.revision_times, [Timestamp(3), Timestamp(9)]);
    }

    #[test]
    fn unarchived_and_empty_anchor_targets_are_excluded() {
        let links = vec![
            link("http://a.de/", 1, "http://gone.de/", "text"),
            link("http://a.de/", 1, "http://t.de/", "   "),
        ];
        let revs = vec![rev("http://t.de/", 1)];
        assert!(build_surrogates(&links, &revs, DedupStrategy::All).docs.is_empty());
    }

    #[test]
    fn surrogate_cap_counts_truncation() {
        let links = vec![link("http://a.de/", 1, "http://t.de/", "a b c d e")];
        let revs = vec![rev("http://t.de/", 1)];
        let set = build_surrogates_capped(&links, &revs, DedupStrategy::All, 3);
        assert_eq!(set.docs[0].length, 3);
        assert_eq!(set.truncated, 1);
    }

    #[test]
    fn bm25_hand_value() {
        // N=2, avgdl=2, |d|=3, tf=2, df=1, k1=1.2, b=0.75
        let stats = IndexStats {
            num_docs: 2,
            avg_doc_length: 2.0,
            doc_freq: [("angela".to_string(), 1)].into_iter().collect(),
        };
        let d = doc_with(3, &[("angela", 2)]);
        let s = bm25_score(&q("angela"), &d, &stats, &Bm25Params::default());
        assert!((s - 0.8355).abs() < 1e-4, "{s}");
        assert_eq!(bm25_score(&q("merkel"), &d, &stats, &Bm25Params::default()), 0.0);
        assert_eq!(bm25_score(&[], &d, &stats, &Bm25Params::default()), 0.0);
    }

    #[test]
    fn term_stats_examples() {
        let stats = IndexStats {
            num_docs: 10,
            avg_doc_length: 4.0,
            doc_freq: [("x".to_string(), 4)].into_iter().collect(),
        };
        let d = doc_with(4, &[("x", 4)]);
        let ts = term_stats(Some(&d), &stats, &q("x"));
        assert_eq!(ts.max_term_freq, 2.0);
        assert!((ts.inverse_doc_freq - (1.0 + 2f64.ln())).abs() < 1e-12);
        assert!((ts.inverse_doc_freq - 1.6931).abs() < 1e-4);
        assert_eq!(ts.length_norm, 0.5);
        assert_eq!(ts.doc_len, 4);
        let missing = term_stats(None, &stats, &q("x"));
        assert_eq!((missing.length_norm, missing.doc_len, missing.max_term_freq), (0.0, 0, 0.0));
    }

    #[test]
    fn index_search_and_matching() {
        let links = vec![
            link("http://a.de/", 1, "http://t.de/1", "angela merkel"),
            link("http://a.de/", 1, "http://t.de/2", "merkel"),
            link("http://a.de/", 1, "http://t.de/3", "other"),
        ];
        let revs: Vec<_> = (1..=3).map(|i| rev(&format!("http://t.de/{i}"), 1)).collect();
        let idx = AnchorIndex::build(build_surrogates(&links, &revs, DedupStrategy::All));
        assert_eq!(idx.docs_with_all_terms(&q("angela merkel")), ["http://t.de/1"]);
        let hits = idx.search(&q("angela merkel"), &Bm25Params::default());
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].0, "http://t.de/1");
        assert_eq!(idx.bm25(&q("angela"), "http://nope.de/", &Bm25Params::default()), 0.0);
    }

    #[test]
    fn bm25_matches_plain_loop_oracle() {
        let texts = [
            "angela merkel", "merkel", "merkel merkel cdu", "bundestag", "angela",
            "kanzlerin angela merkel berlin", "cdu parteitag", "merkel rede", "x y z", "angela angela",
        ];
        let links: Vec<_> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| link("http://s.de/", 1, &format!("http://t.de/{i}"), t))
            .collect();
        let revs: Vec<_> = (0..texts.len()).map(|i| rev(&format!("http://t.de/{i}"), 1)).collect();
        let idx = AnchorIndex::build(build_surrogates(&links, &revs, DedupStrategy::All));
        let toks: Vec<Vec<String>> = texts.iter().map(|t| t.split(' ').map(String::from).collect()).collect();
        let avg = toks.iter().map(Vec::len).sum::<usize>() as f64 / toks.len() as f64;
        let query = q("angela merkel");
        for k1 in [1.2, 2.4] {
            let params = Bm25Params { k1, b: 0.75 };
            for (i, doc) in toks.iter().enumerate() {
                let mut expect = 0.0;
                for term in &query {
                    let tf = doc.iter().filter(|w| *w == term).count() as f64;
                    let df = toks.iter().filter(|d| d.contains(term)).count() as f64;
                    let idf = (1.0 + (10.0 - df + 0.5) / (df + 0.5)).ln();
                    expect += idf * tf * (k1 + 1.0) / (tf + k1 * (0.25 + 0.75 * doc.len() as f64 / avg));
                }
                let got = idx.bm25(&query, &format!("http://t.de/{i}"), &params);
                assert!((got - expect).abs() < 1e-12, "doc {i} k1 {k1}: {got} vs {expect}");
            }
        }
    }

    fn corpus() -> impl Strategy<Value = Vec<Vec<usize>>> {
        proptest::collection::vec(proptest::collection::vec(0usize..12, 1..15), 1..40)
    }

    fn index_of(docs: &[Vec<usize>]) -> AnchorIndex {
        let mut links = Vec::new();
        let mut revs = Vec::new();
        for (i, words) in docs.iter().enumerate() {
            let target = format!("http://t.de/{i}");
            revs.push(rev(&target, 1));
            let text: Vec<String> = words.iter().map(|w| format!("w{w}")).collect();
            links.push(link("http://s.de/", 1, &target, &text.join(" ")));
        }
        AnchorIndex::build(build_surrogates(&links, &revs, DedupStrategy::All))
    }

    proptest! {
        #[test]
        fn df_matches_brute_force(docs in corpus()) {
            let idx = index_of(&docs);
            for w in 0..12 {
                let term = format!("w{w}");
                let brute = docs.iter().filter(|d| d.contains(&w)).count() as u32;
                prop_assert_eq!(idx.stats().df(&term), brute);
                prop_assert!(brute == 0 || (1..=docs.len() as u32).contains(&brute));
            }
            let avg = docs.iter().map(|d| d.len()).sum::<usize>() as f64 / docs.len() as f64;
            prop_assert!((idx.stats().avg_doc_length - avg).abs() < 1e-12);
        }

        #[test]
        fn bm25_monotone_in_tf(tf in 1u32..50, extra in 1u32..5, len in 50u64..100) {
            let stats = IndexStats {
                num_docs: 10,
                avg_doc_length: 60.0,
                doc_freq: [("x".to_string(), 3)].into_iter().collect(),
            };
            let p = Bm25Params::default();
            let lo = bm25_score(&q("x"), &doc_with(len, &[("x", tf)]), &stats, &p);
            let hi = bm25_score(&q("x"), &doc_with(len, &[("x", tf + extra)]), &stats, &p);
            prop_assert!(hi >= lo);
        }

        #[test]
        fn s1_never_exceeds_s2(picks in proptest::collection::vec((0usize..3, 0i64..3, 0usize..3, 0usize..2), 0..30)) {
            let anchors = ["alpha", "beta"];
            let links: Vec<LinkRecord> = picks
                .iter()
                .map(|&(s, t, d, a)| link(&format!("http://s{s}.de/"), t, &format!("http://t.de/{d}"), anchors[a]))
                .collect();
            let revs: Vec<_> = (0..3).map(|d| rev(&format!("http://t.de/{d}"), 0)).collect();
            let s1 = build_surrogates(&links, &revs, DedupStrategy::UniquePerRevision);
            let s2 = build_surrogates(&links, &revs, DedupStrategy::All);
            let unique: HashSet<_> = picks.iter().collect();
            for d2 in &s2.docs {
                let n1 = s1.docs.iter().find(|d| d.doc_id == d2.doc_id).map(|d| d.anchor_instances.len()).unwrap_or(0);
                let n2 = d2.anchor_instances.len();
                prop_assert!(n1 <= n2);
                let target = d2.doc_id.rsplit('/').next().unwrap().parse::<usize>().unwrap();
                let has_dupes = picks.iter().filter(|p| p.2 == target).count()
                    != unique.iter().filter(|p| p.2 == target).count();
                prop_assert_eq!(n1 == n2, !has_dupes);
            }
        }
    }
}
