//! Frequency-of-frequency histogram of anchor texts over their distinct targets.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{self, Write};

use crate::ingest::{LinkRecord, RevisionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct DistributionRow {
    /// Capture year of the source revision, 0 when not grouped.
    pub year: i32,
    /// Number of distinct target core URLs an anchor text points at.
    pub k: usize,
    /// Number of anchor texts with exactly `k` targets.
    pub count: usize,
}

/// The `n` domains with the most distinct member core URLs; ties go to the
/// lexicographically smaller domain.
pub fn top_domains(revisions: &[RevisionRecord], n: usize) -> HashSet<String> {
    let mut members: HashMap<&str, HashSet<&str>> = HashMap::new();
    for r in revisions {
        members.entry(r.domain.as_str()).or_default().insert(r.core_url.as_str());
    }
    let mut ranked: Vec<(&str, usize)> = members.into_iter().map(|(d, m)| (d, m.len())).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.into_iter().take(n).map(|(d, _)| d.to_string()).collect()
}

/// Counts, for each anchor text, the distinct target core URLs it points at
/// and histograms those counts. Empty anchors are ignored. With
/// `domain_filter`, only links whose target domain (as computed by
/// `domain_of` on the target URL) is in the set are counted.
pub fn anchor_distribution<F>(
    links: &[LinkRecord],
    group_by_year: bool,
    domain_filter: Option<(&HashSet<String>, F)>,
) -> Vec<DistributionRow>
where
    F: Fn(&str) -> String,
{
    let mut targets: HashMap<(i32, &str), HashSet<&str>> = HashMap::new();
    for l in links {
        if l.anchor_text.trim().is_empty() {
            continue;
        }
        if let Some((allowed, domain_of)) = &domain_filter {
            if !allowed.contains(&domain_of(&l.target_url)) {
                continue;
            }
        }
        let year = if group_by_year { l.source_capture_time.year() } else { 0 };
        targets
            .entry((year, l.anchor_text.as_str()))
            .or_default()
            .insert(l.target_core());
    }
    let mut hist: BTreeMap<(i32, usize), usize> = BTreeMap::new();
    for ((year, _), t) in targets {
        *hist.entry((year, t.len())).or_default() += 1;
    }
    hist.into_iter()
        .map(|((year, k), count)| DistributionRow { year, k, count })
        .collect()
}

pub fn write_distribution(w: &mut dyn Write, rows: &[DistributionRow]) -> io::Result<()> {
    writeln!(w, "year,k,count")?;
    for r in rows {
        writeln!(w, "{},{},{}", r.year, r.k, r.count)?;
    }
    Ok(())
}
