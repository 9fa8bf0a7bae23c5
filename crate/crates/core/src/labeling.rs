//! Training labels from search-engine snapshots and manual judgments,
//! assessor agreement, and the stratified evaluation sample.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{self, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tsv::{self, ReadError};
use crate::url_kit;

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("judgment item sets differ between assessors")]
    ItemSetsDiffer,
    #[error("no items to compare")]
    NoItems,
    #[error("assessors {0} and {1} share no judged items")]
    NoCommonItems(String, String),
    #[error("need at least two assessors")]
    TooFewAssessors,
    #[error("stratified sampling needs at least 3 documents, got {0}")]
    TooFewDocs(usize),
    #[error("per-partition range {lo}..={hi} is invalid for partitions of size {min_partition}")]
    BadRange { lo: usize, hi: usize, min_partition: usize },
    #[error(transparent)]
    Read(#[from] ReadError),
}

/// One engine result list for a query, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultSnapshot {
    pub query_id: u32,
    pub fetched_at: String,
    pub ranked_urls: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManualJudgment {
    pub query_id: u32,
    pub doc_id: String,
    pub assessor_id: String,
    pub grade: u8,
}

/// Union of snapshot URLs as core URLs, each with its best (smallest) rank.
/// URLs that fail to normalize are skipped.
pub fn merge_snapshots(snapshots: &[ResultSnapshot]) -> BTreeMap<String, usize> {
    let mut best: BTreeMap<String, usize> = BTreeMap::new();
    for s in snapshots {
        for (i, raw) in s.ranked_urls.iter().enumerate() {
            let Ok(u) = url_kit::normalize(raw) else { continue };
            let core = url_kit::core_url(&u).to_string();
            let rank = i + 1;
            best.entry(core).and_modify(|r| *r = (*r).min(rank)).or_insert(rank);
        }
    }
    best
}

/// Dataset B: merged results that the archive can retrieve.
pub fn intersect_with_index(merged: &BTreeMap<String, usize>, indexed: impl Fn(&str) -> bool) -> BTreeMap<String, usize> {
    merged
        .iter()
        .filter(|(d, _)| indexed(d))
        .map(|(d, &r)| (d.clone(), r))
        .collect()
}

/// Inverse rank of the document, 0 when it was never returned.
pub fn soft_label(doc_id: &str, merged: &BTreeMap<String, usize>) -> f64 {
    merged.get(doc_id).map(|&r| 1.0 / r as f64).unwrap_or(0.0)
}

/// Cohen's kappa of two assessors over the same items.
pub fn cohen_kappa(a: &BTreeMap<String, u8>, b: &BTreeMap<String, u8>) -> Result<f64, LabelError> {
    if !a.keys().eq(b.keys()) {
        return Err(LabelError::ItemSetsDiffer);
    }
    if a.is_empty() {
        return Err(LabelError::NoItems);
    }
    let n = a.len() as f64;
    let agree = a.iter().filter(|(k, g)| b[*k] == **g).count() as f64;
    let p_o = agree / n;
    let mut ma: HashMap<u8, f64> = HashMap::new();
    let mut mb: HashMap<u8, f64> = HashMap::new();
    for g in a.values() {
        *ma.entry(*g).or_default() += 1.0;
    }
    for g in b.values() {
        *mb.entry(*g).or_default() += 1.0;
    }
    let p_e: f64 = ma.iter().map(|(g, ca)| ca * mb.get(g).unwrap_or(&0.0)).sum::<f64>() / (n * n);
    if p_e >= 1.0 {
        return Ok(if p_o >= 1.0 { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Mean kappa over all assessor pairs, each pair on its common items.
pub fn average_pairwise_kappa(judgments: &[ManualJudgment]) -> Result<f64, LabelError> {
    let mut by_assessor: BTreeMap<&str, BTreeMap<String, u8>> = BTreeMap::new();
    for j in judgments {
        by_assessor
            .entry(j.assessor_id.as_str())
            .or_default()
            .insert(format!("{}\t{}", j.query_id, j.doc_id), j.grade);
    }
    let assessors: Vec<_> = by_assessor.iter().collect();
    if assessors.len() < 2 {
        return Err(LabelError::TooFewAssessors);
    }
    let mut sum = 0.0;
    let mut pairs = 0;
    for (i, (na, a)) in assessors.iter().enumerate() {
        for (nb, b) in &assessors[i + 1..] {
            let common = |m: &BTreeMap<String, u8>, other: &BTreeMap<String, u8>| -> BTreeMap<String, u8> {
                m.iter().filter(|(k, _)| other.contains_key(*k)).map(|(k, v)| (k.clone(), *v)).collect()
            };
            let (ca, cb) = (common(a, b), common(b, a));
            if ca.is_empty() {
                return Err(LabelError::NoCommonItems(na.to_string(), nb.to_string()));
            }
            sum += cohen_kappa(&ca, &cb)?;
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

/// Mean grade per (query, doc) over assessors.
pub fn manual_labels(judgments: &[ManualJudgment]) -> BTreeMap<(u32, String), f64> {
    let mut acc: BTreeMap<(u32, String), (f64, usize)> = BTreeMap::new();
    for j in judgments {
        let e = acc.entry((j.query_id, j.doc_id.clone())).or_default();
        e.0 += j.grade as f64;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

/// Splits `n` items into three partitions whose sizes differ by at most one,
/// larger ones first.
fn partition_bounds(n: usize) -> [(usize, usize); 3] {
    let base = n / 3;
    let extra = n % 3;
    let mut start = 0;
    let mut out = [(0, 0); 3];
    for (i, slot) in out.iter_mut().enumerate() {
        let len = base + usize::from(i < extra);
        *slot = (start, start + len);
        start += len;
    }
    out
}

/// Samples documents stratified by each feature: per feature, documents
/// are ordered by min-max normalized score (ties by doc id), cut into three
/// partitions, and between `per_partition.0` and `per_partition.1` documents
/// are drawn from each. The union over features is returned, topped up so
/// that every pair of features shares at least one sampled document.
///
/// `features[f][i]` is the score of `docs[i]` under feature `f`.
pub fn stratified_sample(
    docs: &[String],
    features: &[Vec<f64>],
    per_partition: (usize, usize),
    seed: u64,
) -> Result<BTreeSet<String>, LabelError> {
    if docs.len() < 3 {
        return Err(LabelError::TooFewDocs(docs.len()));
    }
    let min_partition = docs.len() / 3;
    let (lo, hi) = per_partition;
    if lo == 0 || lo > hi || lo > min_partition {
        return Err(LabelError::BadRange { lo, hi, min_partition });
    }

    // canonical order makes the sample independent of input order
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.sort_by(|&a, &b| docs[a].cmp(&docs[b]));
    let canon: Vec<&str> = order.iter().map(|&i| docs[i].as_str()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_feature: Vec<Vec<usize>> = Vec::with_capacity(features.len());
    for column in features {
        let scores: Vec<f64> = order.iter().map(|&i| column[i]).collect();
        let (min, max) = scores
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let norm = |x: f64| if max > min { (x - min) / (max - min) } else { 0.0 };
        let mut ranked: Vec<usize> = (0..canon.len()).collect();
        ranked.sort_by(|&a, &b| norm(scores[a]).total_cmp(&norm(scores[b])).then_with(|| canon[a].cmp(canon[b])));
        let mut picked = Vec::new();
        for (start, end) in partition_bounds(ranked.len()) {
            let size = end - start;
            let count = rng.gen_range(lo..=hi).min(size);
            let mut chosen: Vec<usize> = sample(&mut rng, size, count).into_iter().map(|i| ranked[start + i]).collect();
            chosen.sort_unstable();
            picked.extend(chosen);
        }
        per_feature.push(picked);
    }

    let mut sets: Vec<BTreeSet<usize>> = per_feature.iter().map(|p| p.iter().copied().collect()).collect();
    for j in 0..sets.len() {
        for k in j + 1..sets.len() {
            if sets[j].is_disjoint(&sets[k]) {
                let candidates: Vec<usize> = sets[j].iter().copied().collect();
                let extra = candidates[rng.gen_range(0..candidates.len())];
                sets[k].insert(extra);
            }
        }
    }
    Ok(sets
        .iter()
        .flatten()
        .map(|&i| canon[i].to_string())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Sampled,
    FromB,
    Both,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Sampled => "sampled",
            Provenance::FromB => "from_b",
            Provenance::Both => "both",
        }
    }
}

/// The judging pool: the stratified sample plus every document of dataset B.
pub fn pool_with_positives<'a>(
    sample: impl IntoIterator<Item = &'a String>,
    dataset_b: impl IntoIterator<Item = &'a String>,
) -> BTreeMap<String, Provenance> {
    let mut pool: BTreeMap<String, Provenance> =
        sample.into_iter().map(|d| (d.clone(), Provenance::Sampled)).collect();
    for d in dataset_b {
        pool.entry(d.clone())
            .and_modify(|p| *p = Provenance::Both)
            .or_insert(Provenance::FromB);
    }
    pool
}

/// Reads `serp/<query_id>_<date>.txt` files: one URL per line, rank is the line number.
pub fn load_snapshots(dir: &Path) -> Result<BTreeMap<u32, Vec<ResultSnapshot>>, ReadError> {
    let mut out: BTreeMap<u32, Vec<ResultSnapshot>> = BTreeMap::new();
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    paths.sort();
    for path in paths {
        let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let Some((qid, date)) = stem.split_once('_') else {
            return Err(ReadError::malformed(&path, 0, "file name is not <query_id>_<date>.txt"));
        };
        let query_id = qid
            .parse()
            .map_err(|_| ReadError::malformed(&path, 0, "bad query id in file name"))?;
        let text = std::fs::read_to_string(&path)?;
        let mut seen = HashSet::new();
        let ranked_urls = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .filter(|l| seen.insert(l.to_string()))
            .map(String::from)
            .collect();
        out.entry(query_id).or_default().push(ResultSnapshot {
            query_id,
            fetched_at: date.to_string(),
            ranked_urls,
        });
    }
    Ok(out)
}

/// `query_id<TAB>doc_id<TAB>assessor_id<TAB>grade` per line.
pub fn load_judgments(path: &Path) -> Result<Vec<ManualJudgment>, ReadError> {
    let mut out = Vec::new();
    for (no, line) in tsv::read_lines(path)? {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(ReadError::malformed(path, no, "expected 4 fields"));
        }
        let query_id = f[0]
            .parse()
            .map_err(|_| ReadError::malformed(path, no, "bad query id"))?;
        let grade: u8 = f[3]
            .parse()
            .ok()
            .filter(|g| *g <= 2)
            .ok_or_else(|| ReadError::malformed(path, no, "grade must be 0, 1 or 2"))?;
        let doc_id = url_kit::normalize(f[1])
            .map(|u| url_kit::core_url(&u).to_string())
            .map_err(|_| ReadError::malformed(path, no, "bad document URL"))?;
        out.push(ManualJudgment {
            query_id,
            doc_id,
            assessor_id: f[2].to_string(),
            grade,
        });
    }
    Ok(out)
}

/// `query_id<TAB>doc_id<TAB>provenance`
pub fn write_sample(w: &mut dyn Write, pools: &BTreeMap<u32, BTreeMap<String, Provenance>>) -> io::Result<()> {
    for (qid, pool) in pools {
        for (doc, prov) in pool {
            writeln!(w, "{qid}\t{doc}\t{}", prov.as_str())?;
        }
    }
    Ok(())
}
