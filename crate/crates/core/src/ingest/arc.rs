use std::io::{BufRead, Read};

use super::http::{mime_essence, parse_http_head};
use super::stream::{is_blank, maybe_gunzip, trim_line, Rewind};
use super::{ArchiveRecord, ContainerFormat, ReaderOptions, RecordKind, StreamStats};
use crate::Timestamp;

/// Fields of an ARC record header line:
/// `URL IP-address Archive-date Content-type [...] Archive-length`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct ArcHeader {
    pub url: String,
    pub date: Timestamp,
    pub mime: String,
    pub length: u64,
}

#[derive(Debug, PartialEq, Eq)]
pub(crate) enum HeaderParse {
    Ok(ArcHeader),
    /// Fewer than five fields or unparseable date/length.
    Bad,
}

pub(crate) fn parse_header(line: &[u8]) -> HeaderParse {
    let text = String::from_utf8_lossy(trim_line(line));
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() < 5 {
        return HeaderParse::Bad;
    }
    let url = fields[0];
    let looks_like_url = url.contains("://") || url.starts_with("filedesc:");
    let date = Timestamp::parse_arc_date(fields[2]);
    let length = fields[fields.len() - 1].parse::<u64>().ok();
    match (looks_like_url, date, length) {
        (true, Some(date), Some(length)) => HeaderParse::Ok(ArcHeader {
            url: url.to_string(),
            date,
            mime: mime_essence(fields[3]),
            length,
        }),
        _ => HeaderParse::Bad,
    }
}

/// Streaming reader over ARC (v1) files, plain or gzip-per-record.
///
/// A record whose declared length does not land on a record separator is
/// counted as corrupt; reading resumes at the next well-formed header line
/// found after the bad record's header.
pub struct ArcReader<'a> {
    input: Rewind<Box<dyn BufRead + 'a>>,
    options: ReaderOptions,
    stats: StreamStats,
    in_junk: bool,
    done: bool,
    line: Vec<u8>,
}

impl<'a> ArcReader<'a> {
    pub fn new<R: Read + 'a>(reader: R) -> std::io::Result<Self> {
        Self::with_options(reader, ReaderOptions::default())
    }

    pub fn with_options<R: Read + 'a>(reader: R, options: ReaderOptions) -> std::io::Result<Self> {
        Ok(ArcReader {
            input: Rewind::new(maybe_gunzip(reader)?),
            options,
            stats: StreamStats::default(),
            in_junk: false,
            done: false,
            line: Vec::with_capacity(256),
        })
    }

    pub fn stats(&self) -> &StreamStats {
        &self.stats
    }

    /// True when the declared length ended exactly at a separator or EOF.
    fn at_record_boundary(&mut self) -> bool {
        match self.input.peek_byte() {
            Ok(None) => true,
            Ok(Some(b'\n' | b'\r')) => true,
            _ => false,
        }
    }

    fn next_record(&mut self) -> Option<ArchiveRecord> {
        let mut body = Vec::new();
        loop {
            if self.done {
                return None;
            }
            match self.input.read_line_bounded(&mut self.line) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(_) => {
                    self.stats.corrupt += 1;
                    self.done = true;
                    return None;
                }
            }
            if is_blank(&self.line) {
                continue;
            }
            let header = match parse_header(&self.line) {
                HeaderParse::Ok(h) => h,
                HeaderParse::Bad => {
                    if !self.in_junk {
                        self.stats.corrupt += 1;
                        self.in_junk = true;
                    }
                    continue;
                }
            };
            self.in_junk = false;

            let oversized = header.length > self.options.max_record_bytes;
            if oversized {
                let skipped = self.input.skip(header.length).unwrap_or(0);
                if skipped < header.length || !self.at_record_boundary() {
                    self.stats.corrupt += 1;
                    self.in_junk = true;
                } else {
                    self.stats.skipped += 1;
                }
                continue;
            }

            if self
                .input
                .read_up_to(header.length as usize, &mut body)
                .is_err()
            {
                self.stats.corrupt += 1;
                self.done = true;
                return None;
            }
            let complete = body.len() as u64 == header.length;
            if !complete || !self.at_record_boundary() {
                // Length disagrees with the data: rescan the swallowed bytes.
                self.stats.corrupt += 1;
                self.in_junk = true;
                self.input.push_front(&body);
                continue;
            }

            if header.url.starts_with("filedesc:") {
                self.stats.skipped += 1;
                continue;
            }

            let head = parse_http_head(&body);
            body.drain(..head.body_offset);
            self.stats.emitted += 1;
            return Some(ArchiveRecord {
                target_uri: header.url,
                capture_time: header.date,
                record_kind: RecordKind::Response,
                mime_type: head.content_type.unwrap_or(header.mime),
                http_status: head.status,
                payload: body,
                container_format: ContainerFormat::Arc,
            });
        }
    }
}

impl Iterator for ArcReader<'_> {
    type Item = ArchiveRecord;

    fn next(&mut self) -> Option<ArchiveRecord> {
        self.next_record()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::testutil::{arc_filedesc, arc_record, gzip};

    fn read_all(data: &[u8]) -> (Vec<ArchiveRecord>, StreamStats) {
        let mut reader = ArcReader::new(data).unwrap();
        let records: Vec<_> = reader.by_ref().collect();
        (records, reader.stats().clone())
    }

    #[test]
    fn header_fields() {
        match parse_header(b"http://a.de/ 1.2.3.4 20051122093000 text/html 120\n") {
            HeaderParse::Ok(h) => {
                assert_eq!(h.url, "http://a.de/");
                assert_eq!(h.date.to_warc_date(), "2005-11-22T09:30:00Z");
                assert_eq!(h.mime, "text/html");
                assert_eq!(h.length, 120);
            }
            HeaderParse::Bad => panic!("header should parse"),
        }
        assert_eq!(parse_header(b"http://a.de/ 1.2.3.4 20051122093000 120\n"), HeaderParse::Bad);
    }

    #[test]
    fn filedesc_is_not_emitted() {
        let mut data = arc_filedesc("test.arc");
        data.extend(arc_record("http://a.de/", "20051122093000", b"HTTP/1.0 200 OK\nContent-type: text/html\n\n<a href=x>y</a>"));
        let (records, stats) = read_all(&data);
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].target_uri, "http://a.de/");
        assert_eq!(records[0].capture_time.to_warc_date(), "2005-11-22T09:30:00Z");
        assert_eq!(records[0].payload, b"<a href=x>y</a>");
        assert_eq!((stats.emitted, stats.skipped, stats.corrupt), (1, 1, 0));
    }

    #[test]
    fn short_header_is_corrupt() {
        let mut data = b"http://a.de/ 1.2.3.4 20051122093000\n".to_vec();
        data.extend(arc_record("http://b.de/", "20051122093000", b"HTTP/1.0 200 OK\n\nok"));
        let (records, stats) = read_all(&data);
        assert_eq!(records.len(), 1);
        assert_eq!(stats.corrupt, 1);
    }

    fn with_length(url: &str, payload: &[u8], declared: usize) -> Vec<u8> {
        let mut v = format!("{url} 1.2.3.4 20060101000000 text/html {declared}\n").into_bytes();
        v.extend_from_slice(payload);
        v.push(b'\n');
        v
    }

    #[test]
    fn overlong_length_resyncs_at_next_header() {
        let mut data = with_length("http://a.de/1", b"HTTP/1.0 200 OK\n\none", 40);
        data.extend(arc_record("http://a.de/2", "20060101000000", b"HTTP/1.0 200 OK\n\ntwo"));
        data.extend(arc_record("http://a.de/3", "20060101000000", b"HTTP/1.0 200 OK\n\nthree"));
        let (records, stats) = read_all(&data);
        let urls: Vec<_> = records.iter().map(|r| r.target_uri.as_str()).collect();
        assert_eq!(urls, ["http://a.de/2", "http://a.de/3"]);
        assert_eq!((stats.emitted, stats.skipped, stats.corrupt), (2, 0, 1));
    }

    #[test]
    fn short_length_resyncs_at_next_header() {
        let mut data = with_length("http://a.de/1", b"HTTP/1.0 200 OK\n\none more line\nand more", 8);
        data.extend(arc_record("http://a.de/2", "20060101000000", b"HTTP/1.0 200 OK\n\ntwo"));
        let (records, stats) = read_all(&data);
        let urls: Vec<_> = records.iter().map(|r| r.target_uri.as_str()).collect();
        assert_eq!(urls, ["http://a.de/2"]);
        assert_eq!(stats.corrupt, 1);
    }

    #[test]
    fn length_past_eof_is_corrupt() {
        let mut data = arc_record("http://a.de/1", "20060101000000", b"HTTP/1.0 200 OK\n\none");
        data.extend(with_length("http://a.de/2", b"HTTP/1.0 200 OK\n\ntwo", 500));
        let (records, stats) = read_all(&data);
        assert_eq!(records.len(), 1);
        assert_eq!((stats.emitted, stats.corrupt), (1, 1));
    }

    #[test]
    fn gzip_per_record() {
        let mut data = gzip(&arc_filedesc("x.arc"));
        data.extend(gzip(&arc_record("http://a.de/1", "20060101000000", b"HTTP/1.0 200 OK\n\none")));
        data.extend(gzip(&arc_record("http://a.de/2", "20060101000000", b"HTTP/1.0 301 Moved\n\n")));
        let (records, stats) = read_all(&data);
        assert_eq!(records.len(), 2);
        assert_eq!(records[1].http_status, Some(301));
        assert_eq!((stats.emitted, stats.skipped), (2, 1));
    }
}
