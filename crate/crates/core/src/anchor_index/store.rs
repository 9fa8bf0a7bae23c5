//! On-disk form of the index: `docs.tsv`, `postings.tsv`, `instances.tsv`.

use std::collections::HashMap;
use std::io;
use std::path::Path;

use super::{revision_times, AnchorIndex, AnchorInstance, SurrogateDocument, SurrogateSet};
use crate::ingest::RevisionRecord;
use crate::tsv::{self, ReadError};
use crate::Timestamp;

pub fn save_index(dir: &Path, index: &AnchorIndex) -> io::Result<()> {
    let docs = index.docs();
    tsv::write_atomic(&dir.join("docs.tsv"), |w| {
        for d in docs {
            writeln!(w, "{}\t{}\t{}", d.doc_id, d.length, d.revision_times.len())?;
        }
        Ok(())
    })?;

    let mut terms: Vec<&str> = index.terms().collect();
    terms.sort_unstable();
    tsv::write_atomic(&dir.join("postings.tsv"), |w| {
        for t in terms {
            let postings = index.postings(t);
            write!(w, "{}\t{}", tsv::escape(t), postings.len())?;
            for &(i, tf) in postings {
                write!(w, "\t{}:{}", docs[i as usize].doc_id, tf)?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;

    tsv::write_atomic(&dir.join("instances.tsv"), |w| {
        for d in docs {
            for inst in &d.anchor_instances {
                writeln!(w, "{}\t{}\t{}", d.doc_id, inst.time.0, tsv::escape(&inst.text))?;
            }
        }
        Ok(())
    })
}

/// Reads an index written by [`save_index`]. Revision times are not stored
/// in the index files, so they are re-attached from `revisions` and checked
/// against the stored counts.
pub fn load_index(dir: &Path, revisions: &[RevisionRecord]) -> Result<AnchorIndex, ReadError> {
    let times = revision_times(revisions);
    let docs_path = dir.join("docs.tsv");
    let mut docs = Vec::new();
    let mut lookup = HashMap::new();
    for (no, line) in tsv::read_lines(&docs_path)? {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(ReadError::malformed(&docs_path, no, "expected 3 fields"));
        }
        let length: u64 = f[1]
            .parse()
            .map_err(|_| ReadError::malformed(&docs_path, no, "bad length"))?;
        let rev_count: usize = f[2]
            .parse()
            .map_err(|_| ReadError::malformed(&docs_path, no, "bad revision count"))?;
        let revision_times = times.get(f[0]).cloned().unwrap_or_default();
        if revision_times.len() != rev_count {
            return Err(ReadError::malformed(
                &docs_path,
                no,
                format!("revision count {rev_count} disagrees with revisions ({})", revision_times.len()),
            ));
        }
        lookup.insert(f[0].to_string(), docs.len());
        docs.push(SurrogateDocument {
            doc_id: f[0].to_string(),
            term_freqs: HashMap::new(),
            length,
            anchor_instances: Vec::new(),
            revision_times,
        });
    }

    let postings_path = dir.join("postings.tsv");
    for (no, line) in tsv::read_lines(&postings_path)? {
        let mut f = line.split('\t');
        let term = tsv::unescape(f.next().unwrap_or_default());
        let df: usize = f
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ReadError::malformed(&postings_path, no, "bad document frequency"))?;
        let mut seen = 0;
        for pair in f {
            let (doc, tf) = pair
                .rsplit_once(':')
                .ok_or_else(|| ReadError::malformed(&postings_path, no, "posting without ':'"))?;
            let tf: u32 = tf
                .parse()
                .map_err(|_| ReadError::malformed(&postings_path, no, "bad term frequency"))?;
            let &i = lookup
                .get(doc)
                .ok_or_else(|| ReadError::malformed(&postings_path, no, format!("unknown document {doc}")))?;
            docs[i].term_freqs.insert(term.clone(), tf);
            seen += 1;
        }
        if seen != df {
            return Err(ReadError::malformed(&postings_path, no, "df disagrees with postings"));
        }
    }

    let inst_path = dir.join("instances.tsv");
    for (no, line) in tsv::read_lines(&inst_path)? {
        let f: Vec<&str> = line.splitn(3, '\t').collect();
        if f.len() != 3 {
            return Err(ReadError::malformed(&inst_path, no, "expected 3 fields"));
        }
        let time: i64 = f[1]
            .parse()
            .map_err(|_| ReadError::malformed(&inst_path, no, "bad epoch seconds"))?;
        let &i = lookup
            .get(f[0])
            .ok_or_else(|| ReadError::malformed(&inst_path, no, format!("unknown document {}", f[0])))?;
        docs[i].anchor_instances.push(AnchorInstance {
            text: tsv::unescape(f[2]),
            time: Timestamp(time),
        });
    }

    for (no, d) in docs.iter().enumerate() {
        if d.term_freqs.values().map(|&v| v as u64).sum::<u64>() != d.length {
            return Err(ReadError::malformed(&docs_path, no + 1, "length disagrees with postings"));
        }
    }
    Ok(AnchorIndex::build(SurrogateSet { docs, truncated: 0 }))
}

#[cfg(test)]
mod tests {
    use super::super::tests::{link, rev};
    use super::super::{build_surrogates, DedupStrategy};
    use super::*;

    #[test]
    fn round_trip() {
        let links = vec![
            link("http://a.de/", 1, "http://t.de/x:y", "Angela\tMerkel"),
            link("http://b.de/", 2, "http://t.de/x:y", "merkel"),
            link("http://b.de/", 2, "http://u.de/", "other"),
        ];
        let revs = vec![rev("http://t.de/x:y", 1), rev("http://t.de/x:y", 4), rev("http://u.de/", 1)];
        let idx = AnchorIndex::build(build_surrogates(&links, &revs, DedupStrategy::All));
        let dir = tempfile::tempdir().unwrap();
        save_index(dir.path(), &idx).unwrap();
        let back = load_index(dir.path(), &revs).unwrap();
        assert_eq!(back.docs(), idx.docs());
        assert_eq!(back.stats(), idx.stats());

        let err = load_index(dir.path(), &revs[..1]).unwrap_err();
        assert!(err.to_string().contains("docs.tsv:1"), "{err}");
    }
}
