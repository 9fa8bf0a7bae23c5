//! Streaming ingestion of WARC and ARC containers into revision and link
//! records. Document bodies are only held while their links are extracted.

pub mod arc;
pub mod container;
mod http;
pub mod links;
mod stream;
pub mod warc;

use std::fs::File;
use std::io::{self, BufRead, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

pub use arc::ArcReader;
pub use links::{extract_links, filter_content_links, LinkExtraction, LinkRecord, TagPattern};
pub use warc::WarcReader;

use crate::tsv::{self, ReadError};
use crate::url_kit::{self, SuffixTable};
use crate::Timestamp;

#[cfg(test)]
pub(crate) mod testutil {
    pub(crate) use super::container::{arc_filedesc, arc_record, gzip, warc_record};
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ContainerFormat {
    Warc,
    Arc,
}

impl ContainerFormat {
    /// Detects the format from a file name (`.warc`, `.warc.gz`, `.arc`, `.arc.gz`).
    pub fn from_path(path: &Path) -> Option<Self> {
        let name = path.file_name()?.to_string_lossy().to_ascii_lowercase();
        let name = name.strip_suffix(".gz").unwrap_or(&name);
        if name.ends_with(".warc") {
            Some(ContainerFormat::Warc)
        } else if name.ends_with(".arc") {
            Some(ContainerFormat::Arc)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    Response,
    Other,
}

/// One archived capture as read from a container.
#[derive(Debug, Clone)]
pub struct ArchiveRecord {
    pub target_uri: String,
    pub capture_time: Timestamp,
    pub record_kind: RecordKind,
    pub mime_type: String,
    pub http_status: Option<u16>,
    /// HTTP body; dropped once links have been extracted.
    pub payload: Vec<u8>,
    pub container_format: ContainerFormat,
}

/// Per-stream record accounting: every record lands in exactly one bucket.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StreamStats {
    pub emitted: u64,
    pub skipped: u64,
    pub corrupt: u64,
}

impl StreamStats {
    pub fn total(&self) -> u64 {
        self.emitted + self.skipped + self.corrupt
    }

    fn add(&mut self, other: &StreamStats) {
        self.emitted += other.emitted;
        self.skipped += other.skipped;
        self.corrupt += other.corrupt;
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ReaderOptions {
    /// Records with a larger declared length are skipped without buffering.
    pub max_record_bytes: u64,
}

impl Default for ReaderOptions {
    fn default() -> Self {
        ReaderOptions {
            max_record_bytes: 64 << 20,
        }
    }
}

/// One capture of a document.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RevisionRecord {
    pub core_url: String,
    pub full_url: String,
    pub capture_time: Timestamp,
    pub domain: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub files: u64,
    pub stream: StreamStats,
    pub non_2xx: u64,
    pub bad_urls: u64,
    pub decode_failures: u64,
    pub truncated_anchors: u64,
    pub revisions: u64,
    pub links: u64,
}

impl IngestReport {
    fn merge(&mut self, other: &IngestReport) {
        self.files += other.files;
        self.stream.add(&other.stream);
        self.non_2xx += other.non_2xx;
        self.bad_urls += other.bad_urls;
        self.decode_failures += other.decode_failures;
        self.truncated_anchors += other.truncated_anchors;
        self.revisions += other.revisions;
        self.links += other.links;
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestOutput {
    pub revisions: Vec<RevisionRecord>,
    pub links: Vec<LinkRecord>,
    pub report: IngestReport,
}

impl IngestOutput {
    fn append(&mut self, mut other: IngestOutput) {
        self.revisions.append(&mut other.revisions);
        self.links.append(&mut other.links);
        self.report.merge(&other.report);
    }
}

/// Turns container records into revisions and links.
#[derive(Debug, Clone, Default)]
pub struct Ingestor {
    pub suffixes: SuffixTable,
    pub reader: ReaderOptions,
}

fn is_html(mime: &str) -> bool {
    mime.is_empty() || mime.contains("html")
}

impl Ingestor {
    pub fn new(suffixes: SuffixTable) -> Self {
        Ingestor {
            suffixes,
            reader: ReaderOptions::default(),
        }
    }

    /// Converts one record. Only 2xx captures (or captures without an HTTP
    /// status line) become revisions.
    pub fn process_record(&self, record: ArchiveRecord, out: &mut IngestOutput) {
        if let Some(status) = record.http_status {
            if !(200..300).contains(&status) {
                out.report.non_2xx += 1;
                return;
            }
        }
        let Ok(url) = url_kit::normalize(&record.target_uri) else {
            out.report.bad_urls += 1;
            return;
        };
        let full_url = url.to_string();
        out.revisions.push(RevisionRecord {
            core_url: url_kit::core_url(&url).to_string(),
            full_url,
            capture_time: record.capture_time,
            domain: self.suffixes.domain_of(&url),
        });
        out.report.revisions += 1;
        if is_html(&record.mime_type) {
            let extraction = extract_links(&record.payload, &url, record.capture_time);
            if extraction.decode_failed {
                out.report.decode_failures += 1;
            }
            out.report.truncated_anchors += extraction.truncated_anchors as u64;
            out.report.links += extraction.links.len() as u64;
            out.links.extend(extraction.links);
        }
    }

    pub fn ingest_reader<R: Read>(&self, reader: R, format: ContainerFormat) -> io::Result<IngestOutput> {
        let mut out = IngestOutput::default();
        let stats = match format {
            ContainerFormat::Warc => {
                let mut r = WarcReader::with_options(reader, self.reader)?;
                for record in r.by_ref() {
                    self.process_record(record, &mut out);
                }
                r.stats().clone()
            }
            ContainerFormat::Arc => {
                let mut r = ArcReader::with_options(reader, self.reader)?;
                for record in r.by_ref() {
                    self.process_record(record, &mut out);
                }
                r.stats().clone()
            }
        };
        out.report.files = 1;
        out.report.stream = stats;
        Ok(out)
    }

    pub fn ingest_path(&self, path: &Path) -> io::Result<IngestOutput> {
        let format = match ContainerFormat::from_path(path) {
            Some(f) => f,
            None => sniff_format(path)?,
        };
        self.ingest_reader(File::open(path)?, format)
    }

    /// Ingests files in parallel; results are concatenated in input order.
    pub fn ingest_paths(&self, paths: &[PathBuf]) -> io::Result<IngestOutput> {
        let parts: Vec<io::Result<IngestOutput>> =
            paths.par_iter().map(|p| self.ingest_path(p)).collect();
        let mut out = IngestOutput::default();
        for part in parts {
            out.append(part?);
        }
        Ok(out)
    }
}

fn sniff_format(path: &Path) -> io::Result<ContainerFormat> {
    let mut r = stream::maybe_gunzip(File::open(path)?)?;
    let head = r.fill_buf()?;
    Ok(if head.starts_with(b"WARC/") {
        ContainerFormat::Warc
    } else {
        ContainerFormat::Arc
    })
}

/// Lists archive files under a directory (recursively), sorted by path.
pub fn find_archives(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if ContainerFormat::from_path(&path).is_some() {
                found.push(path);
            }
        }
    }
    found.sort();
    Ok(found)
}

pub fn write_revisions(w: &mut dyn Write, revisions: &[RevisionRecord]) -> io::Result<()> {
    for r in revisions {
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            r.core_url,
            r.full_url,
            r.capture_time.epoch_seconds(),
            r.domain
        )?;
    }
    Ok(())
}

pub fn read_revisions(path: &Path) -> Result<Vec<RevisionRecord>, ReadError> {
    let mut out = Vec::new();
    for (no, line) in tsv::read_lines(path)? {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(ReadError::malformed(path, no, "expected 4 fields"));
        }
        let time = f[2]
            .parse()
            .map_err(|_| ReadError::malformed(path, no, "bad epoch seconds"))?;
        out.push(RevisionRecord {
            core_url: f[0].to_string(),
            full_url: f[1].to_string(),
            capture_time: Timestamp(time),
            domain: f[3].to_string(),
        });
    }
    Ok(out)
}

pub fn write_links(w: &mut dyn Write, links: &[LinkRecord]) -> io::Result<()> {
    for l in links {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            l.source_full_url,
            l.source_capture_time.epoch_seconds(),
            l.target_url,
            l.tag_pattern.token(),
            tsv::escape(&l.anchor_text)
        )?;
    }
    Ok(())
}

pub fn read_links(path: &Path) -> Result<Vec<LinkRecord>, ReadError> {
    let mut out = Vec::new();
    for (no, line) in tsv::read_lines(path)? {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(ReadError::malformed(path, no, "expected 5 fields"));
        }
        let time = f[1]
            .parse()
            .map_err(|_| ReadError::malformed(path, no, "bad epoch seconds"))?;
        let pattern = f[3]
            .parse()
            .map_err(|e: String| ReadError::malformed(path, no, e))?;
        out.push(LinkRecord {
            source_full_url: f[0].to_string(),
            source_capture_time: Timestamp(time),
            target_url: f[2].to_string(),
            tag_pattern: pattern,
            anchor_text: tsv::unescape(f[4]),
        });
    }
    Ok(out)
}
