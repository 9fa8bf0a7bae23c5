//! Synthetic web-archive generator with planted ranking evidence.
//!
//! Every query names a made-up entity. Its relevant ("good") documents sit
//! shallow in their sites, are captured often, and collect many anchors that
//! name the entity. Four kinds of distractors each imitate one baseline's
//! favourite evidence:
//!
//! * deep news pages: query anchors, but deep URLs and single captures;
//! * anchor spam: a few sources repeating the entity name over and over;
//! * popular hubs: heavily linked site roots with generic anchors;
//! * URL keyword pages: the entity name stuffed into the URL path.
//!
//! The output directory holds the archives (one gzipped WARC, one plain
//! WARC, one gzipped ARC), search-engine snapshots, manual judgments, the
//! resource tables and a ready-to-run config.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::ENTITY_TYPES;
use crate::ingest::container::{arc_filedesc, arc_record, gzip, http_response, warc_record};
use crate::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthParams {
    pub queries: usize,
    pub good_per_query: usize,
    /// Documents of each distractor kind per query.
    pub distractors_per_kind: usize,
    pub background_pages: usize,
    pub seed: u64,
}

impl Default for SynthParams {
    /// 20 queries x 50 targets plus 1000 link-source pages: 2000 documents.
    fn default() -> Self {
        SynthParams {
            queries: 20,
            good_per_query: 10,
            distractors_per_kind: 10,
            background_pages: 1000,
            seed: 7,
        }
    }
}

impl SynthParams {
    pub fn small(seed: u64) -> Self {
        SynthParams {
            queries: 6,
            good_per_query: 4,
            distractors_per_kind: 3,
            background_pages: 80,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocKind {
    Good,
    DeepNews,
    AnchorSpam,
    PopularHub,
    UrlKeyword,
    Background,
}

#[derive(Debug, Clone)]
struct Page {
    url: String,
    kind: DocKind,
    query: Option<usize>,
    captures: Vec<Timestamp>,
    /// Outgoing links per capture: `(target, anchor)`.
    links: Vec<Vec<(String, String)>>,
}

/// What the generator planted, for tests that want ground truth.
#[derive(Debug, Clone, Default)]
pub struct SynthSummary {
    pub documents: usize,
    pub records: usize,
    /// Query id to its good documents' URLs.
    pub good: BTreeMap<u32, Vec<String>>,
}

const SYLLABLES: [&str; 24] = [
    "ka", "ren", "mo", "li", "tas", "ber", "no", "vi", "sel", "dra", "gun", "pe", "ro", "fal", "mi", "zen", "tor",
    "lu", "han", "sa", "qui", "wel", "do", "bri",
];
const GENERIC_ANCHORS: [&str; 8] = ["hier", "mehr", "link", "website", "weiterlesen", "startseite", "portal", "home"];
const START: i64 = 1_104_537_600; // 2005-01-01
const END: i64 = 1_388_534_400; // 2014-01-01
const DAY: i64 = 86_400;

struct Gen {
    rng: ChaCha8Rng,
    used: HashSet<String>,
}

impl Gen {
    fn draw(&mut self, syllables: usize) -> String {
        (0..syllables).map(|_| *SYLLABLES.choose(&mut self.rng).unwrap()).collect()
    }

    /// A word never returned before; used for entity and site names.
    fn name(&mut self, syllables: usize) -> String {
        loop {
            let w = self.draw(syllables);
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    /// A word that may repeat but never equals a reserved name.
    fn filler(&mut self, syllables: usize) -> String {
        loop {
            let w = self.draw(syllables);
            if !self.used.contains(&w) {
                return w;
            }
        }
    }

    /// `n` capture times; gaps are a mix of short (days) and long (months).
    fn captures(&mut self, n: usize, spread: bool) -> Vec<Timestamp> {
        let mut t = self.rng.gen_range(START..START + 400 * DAY);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(Timestamp(t));
            let gap = if spread && self.rng.gen_bool(0.75) {
                self.rng.gen_range(8 * DAY..120 * DAY)
            } else {
                self.rng.gen_range(DAY / 2..6 * DAY)
            };
            t = (t + gap).min(END - 1);
        }
        out.sort();
        out.dedup();
        out
    }

    fn pick<'a, T>(&mut self, v: &'a [T]) -> &'a T {
        v.choose(&mut self.rng).unwrap()
    }
}

struct Entity {
    first: String,
    last: String,
}

impl Entity {
    fn name(&self) -> String {
        format!("{} {}", self.first, self.last)
    }
}

/// Builds the corpus in memory and writes it below `out`.
pub fn generate(out: &Path, params: &SynthParams) -> io::Result<SynthSummary> {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(params.seed),
        used: SYLLABLES.iter().map(|s| s.to_string()).collect(),
    };
    for w in GENERIC_ANCHORS {
        g.used.insert(w.to_string());
    }

    let sites: Vec<String> = (0..40).map(|_| format!("{}.de", g.name(3))).collect();
    let news_sites: Vec<String> = (0..8).map(|_| format!("{}-zeitung.de", g.name(2))).collect();
    let source_sites: Vec<String> = (0..60).map(|_| format!("{}.de", g.name(3))).collect();
    let entities: Vec<Entity> = (0..params.queries)
        .map(|_| Entity {
            first: g.name(2),
            last: g.name(3),
        })
        .collect();

    let mut pages: Vec<Page> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut page = |url: String, kind: DocKind, query: Option<usize>, captures: Vec<Timestamp>| {
        // repeated filler words can produce the same URL twice
        let mut url = url;
        let mut n = 2;
        while !seen.insert(url.clone()) {
            let base = url.trim_end_matches(".html").trim_end_matches(char::is_numeric).trim_end_matches('-');
            let ext = if url.ends_with(".html") { ".html" } else { "" };
            url = format!("{base}-{n}{ext}");
            n += 1;
        }
        Page {
            links: vec![Vec::new(); captures.len()],
            url,
            kind,
            query,
            captures,
        }
    };

    for i in 0..params.background_pages {
        let site = g.pick(&source_sites).clone();
        let n = g.rng.gen_range(2..=5);
        let caps = g.captures(n, true);
        let url = format!("http://{site}/{}/{}.html", g.filler(2), i);
        pages.push(page(url, DocKind::Background, None, caps));
    }
    let background = pages.len();

    let mut targets: Vec<(usize, usize)> = Vec::new(); // (page index, query)
    for (q, e) in entities.iter().enumerate() {
        for _ in 0..params.good_per_query {
            let site = g.pick(&sites).clone();
            let slug = if g.rng.gen_bool(0.3) { e.last.clone() } else { g.filler(2) };
            let n = g.rng.gen_range(6..=16);
            let caps = g.captures(n, true);
            pages.push(page(format!("http://{site}/{slug}"), DocKind::Good, Some(q), caps));
            targets.push((pages.len() - 1, q));
        }
        for kind in [DocKind::DeepNews, DocKind::AnchorSpam, DocKind::PopularHub, DocKind::UrlKeyword] {
            for _ in 0..params.distractors_per_kind {
                let (url, n, spread) = match kind {
                    DocKind::DeepNews => {
                        let site = g.pick(&news_sites).clone();
                        let year = g.rng.gen_range(2005..2014);
                        let slug = if g.rng.gen_bool(0.5) {
                            format!("{}-{}-{}", e.first, e.last, g.filler(2))
                        } else {
                            g.filler(3)
                        };
                        (format!("http://{site}/{year}/{}/{}/{slug}.html", g.filler(2), g.filler(2)), g.rng.gen_range(1..=2), false)
                    }
                    DocKind::AnchorSpam => {
                        let site = g.pick(&sites).clone();
                        (format!("http://{site}/tag/{}/{}", g.filler(2), g.filler(2)), g.rng.gen_range(1..=3), false)
                    }
                    DocKind::PopularHub => (format!("http://{}.de/", g.name(3)), g.rng.gen_range(3..=7), true),
                    _ => {
                        let site = g.pick(&sites).clone();
                        (
                            format!("http://{site}/{f}-{l}/{f}_{l}/{l}-{f}.html", f = e.first, l = e.last),
                            g.rng.gen_range(1..=3),
                            false,
                        )
                    }
                };
                let caps = g.captures(n, spread);
                pages.push(page(url, kind, Some(q), caps));
                targets.push((pages.len() - 1, q));
            }
        }
    }

    // Inbound links are placed into captures of background pages.
    for &(t, q) in &targets {
        let e = &entities[q];
        let target = pages[t].url.clone();
        let placements: Vec<String> = match pages[t].kind {
            DocKind::Good => (0..g.rng.gen_range(6..=12))
                .map(|_| match g.rng.gen_range(0..20) {
                    0..=10 => match g.rng.gen_range(0..4) {
                        0 => e.name(),
                        1 => format!("{}, {}", e.last, e.first),
                        2 => format!("über {}", e.name()),
                        _ => format!("{} homepage", e.name()),
                    },
                    11..=14 => e.last.clone(),
                    _ => g.pick(&GENERIC_ANCHORS).to_string(),
                })
                .collect(),
            DocKind::DeepNews => (0..g.rng.gen_range(1..=2)).map(|_| e.name()).collect(),
            DocKind::AnchorSpam => {
                let reps = g.rng.gen_range(12..=20);
                let text = vec![e.name(); reps].join(" ");
                vec![text; g.rng.gen_range(2..=4)]
            }
            DocKind::PopularHub => {
                let mut v: Vec<String> = (0..g.rng.gen_range(15..=40)).map(|_| g.pick(&GENERIC_ANCHORS).to_string()).collect();
                v.push(e.last.clone());
                v
            }
            DocKind::UrlKeyword => (0..g.rng.gen_range(1..=2)).map(|_| e.last.clone()).collect(),
            DocKind::Background => Vec::new(),
        };
        for anchor in placements {
            let src = g.rng.gen_range(0..background);
            let cap = g.rng.gen_range(0..pages[src].captures.len());
            pages[src].links[cap].push((target.clone(), anchor));
        }
    }
    // Targets link back into the background so the graph has no sinks there.
    for &(t, _) in &targets {
        for c in 0..pages[t].captures.len() {
            let src = g.rng.gen_range(0..background);
            let url = pages[src].url.clone();
            let anchor = g.pick(&GENERIC_ANCHORS).to_string();
            pages[t].links[c].push((url, anchor));
        }
    }
    // Some background cross links.
    for p in 0..background {
        for c in 0..pages[p].captures.len() {
            if g.rng.gen_bool(0.5) {
                let other = pages[g.rng.gen_range(0..background)].url.clone();
                let anchor = g.filler(2);
                pages[p].links[c].push((other, anchor));
            }
        }
    }

    let summary = write_corpus(out, &pages, &entities, &news_sites, &mut g)?;
    Ok(summary)
}

fn render(page: &Page, capture: usize) -> String {
    let mut body = String::new();
    let _ = write!(
        body,
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{}</title>\
         <link rel=\"stylesheet\" href=\"/style.css\"></head><body>\n<p>Archivseite</p>\n",
        page.url
    );
    for (target, anchor) in &page.links[capture] {
        let _ = writeln!(body, "<p><a href=\"{target}\">{anchor}</a></p>");
    }
    body.push_str("<img src=\"/logo.png\"></body></html>\n");
    body
}

fn write_corpus(
    out: &Path,
    pages: &[Page],
    entities: &[Entity],
    news_sites: &[String],
    g: &mut Gen,
) -> io::Result<SynthSummary> {
    let archives = out.join("archives");
    let serp = out.join("serp");
    fs::create_dir_all(&archives)?;
    fs::create_dir_all(&serp)?;

    let mut warc_gz = Vec::new();
    let mut warc_plain = Vec::new();
    let mut arc_gz = gzip(&arc_filedesc("synth-2.arc"));
    warc_gz.extend(gzip(&warc_record("warcinfo", "", &Timestamp(START).to_warc_date(), b"software: synth\r\n")));
    let mut records = 0;
    for (i, p) in pages.iter().enumerate() {
        for (c, t) in p.captures.iter().enumerate() {
            let html = render(p, c);
            records += 1;
            match i % 3 {
                0 => warc_gz.extend(gzip(&warc_record("response", &p.url, &t.to_warc_date(), &http_response(200, &html)))),
                1 => {
                    if c == 0 {
                        let req = format!("GET / HTTP/1.1\r\nHost: {}\r\n\r\n", p.url);
                        warc_plain.extend(warc_record("request", &p.url, &t.to_warc_date(), req.as_bytes()));
                    }
                    warc_plain.extend(warc_record("response", &p.url, &t.to_warc_date(), &http_response(200, &html)));
                }
                _ => arc_gz.extend(gzip(&arc_record(&p.url, &t.to_arc_date(), &http_response(200, &html)))),
            }
        }
    }
    fs::write(archives.join("synth-0.warc.gz"), warc_gz)?;
    fs::write(archives.join("synth-1.warc"), warc_plain)?;
    fs::write(archives.join("synth-2.arc.gz"), arc_gz)?;

    let mut summary = SynthSummary {
        documents: pages.len(),
        records,
        good: BTreeMap::new(),
    };
    let mut queries = String::new();
    let mut wiki = String::new();
    let mut judgments = String::new();
    for (q, e) in entities.iter().enumerate() {
        let qid = q as u32 + 1;
        let _ = writeln!(queries, "{qid}\t{}\t{}", e.name(), ENTITY_TYPES[q % ENTITY_TYPES.len()]);
        let good: Vec<&Page> = pages.iter().filter(|p| p.query == Some(q) && p.kind == DocKind::Good).collect();
        summary.good.insert(qid, good.iter().map(|p| p.url.clone()).collect());

        // two engine snapshots: good pages among external results
        for date in ["2016-03-01", "2016-04-01"] {
            // engines also return a couple of pages that were planted as distractors
            let others: Vec<&Page> = pages.iter().filter(|p| p.query == Some(q) && p.kind != DocKind::Good).collect();
            let mut list: Vec<String> = good.iter().map(|p| p.url.clone()).collect();
            list.extend((0..2).map(|_| g.pick(&others).url.clone()));
            list.extend((0..good.len()).map(|k| format!("http://www.{}.com/{k}", g.filler(3))));
            list.shuffle(&mut g.rng);
            let mut text = list.join("\n");
            text.push('\n');
            fs::write(serp.join(format!("{qid}_{date}.txt")), text)?;
        }
        for p in good.iter().take(2) {
            let domain = p.url.trim_start_matches("http://").split('/').next().unwrap_or_default();
            let _ = writeln!(wiki, "{qid}\t{domain}\t{}", g.rng.gen_range(1..=3));
        }
        for p in pages.iter().filter(|p| p.query == Some(q)) {
            let truth: u8 = match p.kind {
                DocKind::Good => {
                    if g.rng.gen_bool(0.7) {
                        2
                    } else {
                        1
                    }
                }
                _ => u8::from(g.rng.gen_bool(0.1)),
            };
            for assessor in ["a1", "a2"] {
                let grade = if g.rng.gen_bool(0.9) { truth } else { g.rng.gen_range(0..=2) };
                let _ = writeln!(judgments, "{qid}\t{}\t{assessor}\t{grade}", p.url);
            }
        }
    }
    fs::write(out.join("queries.tsv"), queries)?;
    fs::write(out.join("wiki_citations.tsv"), wiki)?;
    fs::write(out.join("judgments.tsv"), judgments)?;
    fs::write(out.join("news_domains.txt"), news_sites.join("\n") + "\n")?;
    fs::write(out.join("archive-rank.conf"), DEFAULT_CONFIG)?;
    Ok(summary)
}

const DEFAULT_CONFIG: &str = "\
# archive-rank run configuration for a synthetic corpus
seed = 42
archives.dir = archives
resources.queries = queries.tsv
resources.news_domains = news_domains.txt
resources.wiki_citations = wiki_citations.tsv
labels.serp_dir = serp
labels.judgments = judgments.tsv
labels.source = soft
index.dedup = S1
rf.num_trees = 300
cv.folds = 5
";
