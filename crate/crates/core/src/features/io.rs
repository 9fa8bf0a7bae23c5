//! `features.txt` and the plain-text resource tables.

use std::collections::{HashMap, HashSet};
use std::io::{self, Write};
use std::path::Path;

use super::{parse_entity_type, FeatureVector, QueryRecord};
use crate::tsv::{self, ReadError};

/// One line per vector: `<label> qid:<id> 1:<v1> 2:<v2> ... # <doc_id>`,
/// preceded by a comment line naming the features.
pub fn write_vectors(w: &mut dyn Write, names: &[String], vectors: &[FeatureVector]) -> io::Result<()> {
    writeln!(w, "# {}", names.join(" "))?;
    for v in vectors {
        write!(w, "{} qid:{}", v.label, v.query_id)?;
        for (i, x) in v.values.iter().enumerate() {
            write!(w, " {}:{}", i + 1, x)?;
        }
        writeln!(w, " # {}", v.doc_id)?;
    }
    Ok(())
}

/// Inverse of [`write_vectors`]: feature names and vectors in file order.
pub fn read_vectors(path: &Path) -> Result<(Vec<String>, Vec<FeatureVector>), ReadError> {
    let mut names = Vec::new();
    let mut out = Vec::new();
    for (no, line) in tsv::read_lines(path)? {
        if let Some(header) = line.strip_prefix("# ") {
            if out.is_empty() && names.is_empty() {
                names = header.split(' ').map(String::from).collect();
            }
            continue;
        }
        out.push(parse_line(&line).map_err(|reason| ReadError::malformed(path, no, reason))?);
    }
    Ok((names, out))
}

fn parse_line(line: &str) -> Result<FeatureVector, String> {
    let (data, doc_id) = line.split_once(" # ").ok_or("missing '# doc_id' comment")?;
    let mut fields = data.split(' ');
    let label: f64 = fields
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or("bad label")?;
    let query_id: u32 = fields
        .next()
        .and_then(|s| s.strip_prefix("qid:"))
        .and_then(|s| s.parse().ok())
        .ok_or("bad qid field")?;
    let mut values = Vec::new();
    for (i, f) in fields.enumerate() {
        let (idx, val) = f.split_once(':').ok_or_else(|| format!("bad feature field {f:?}"))?;
        if idx.parse::<usize>().ok() != Some(i + 1) {
            return Err(format!("feature index {idx} out of order"));
        }
        values.push(val.parse().map_err(|_| format!("bad feature value {val:?}"))?);
    }
    Ok(FeatureVector {
        query_id,
        doc_id: doc_id.to_string(),
        label,
        values,
    })
}

/// Groups vectors by query id, keeping first-appearance order of queries
/// and file order within a query.
pub fn group_by_query(vectors: &[FeatureVector]) -> Vec<(u32, Vec<&FeatureVector>)> {
    let mut order: Vec<(u32, Vec<&FeatureVector>)> = Vec::new();
    let mut slot: HashMap<u32, usize> = HashMap::new();
    for v in vectors {
        let i = *slot.entry(v.query_id).or_insert_with(|| {
            order.push((v.query_id, Vec::new()));
            order.len() - 1
        });
        order[i].1.push(v);
    }
    order
}

/// `query_id<TAB>text<TAB>entity type` per line.
pub fn load_queries(path: &Path) -> Result<Vec<QueryRecord>, ReadError> {
    let mut out = Vec::new();
    for (no, line) in tsv::read_lines(path)? {
        if line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(ReadError::malformed(path, no, "expected query_id, text, entity type"));
        }
        let id = f[0]
            .parse()
            .map_err(|_| ReadError::malformed(path, no, "bad query id"))?;
        let ty = parse_entity_type(f[2])
            .ok_or_else(|| ReadError::malformed(path, no, format!("unknown entity type {:?}", f[2])))?;
        out.push(QueryRecord::new(id, f[1], ty));
    }
    Ok(out)
}

/// `query_id<TAB>domain<TAB>count` per line, merged into the queries.
pub fn load_wiki_citations(path: &Path, queries: &mut [QueryRecord]) -> Result<(), ReadError> {
    for (no, line) in tsv::read_lines(path)? {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(ReadError::malformed(path, no, "expected query_id, domain, count"));
        }
        let (Ok(id), Ok(count)) = (f[0].parse::<u32>(), f[2].parse::<u32>()) else {
            return Err(ReadError::malformed(path, no, "bad query id or count"));
        };
        if let Some(q) = queries.iter_mut().find(|q| q.query_id == id) {
            *q.wiki_citation_counts.entry(f[1].to_lowercase()).or_default() += count;
        }
    }
    Ok(())
}

/// One lowercased entry per line; `#` starts a comment line.
pub fn load_word_list(path: &Path) -> Result<HashSet<String>, ReadError> {
    Ok(tsv::read_lines(path)?
        .into_iter()
        .map(|(_, l)| l.trim().to_lowercase())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect())
}
