use std::collections::HashMap;
use std::io::{BufRead, Read};

use super::http::parse_http_head;
use super::stream::{is_blank, maybe_gunzip, trim_line, Rewind};
use super::{ArchiveRecord, ContainerFormat, ReaderOptions, RecordKind, StreamStats};
use crate::Timestamp;

/// Streaming reader over WARC records. Yields one [`ArchiveRecord`] per
/// `response` record; everything else is counted in [`StreamStats`].
pub struct WarcReader<'a> {
    input: Rewind<Box<dyn BufRead + 'a>>,
    options: ReaderOptions,
    stats: StreamStats,
    /// Set while skipping bytes that belong to an unparseable record.
    in_junk: bool,
    done: bool,
    line: Vec<u8>,
}

impl<'a> WarcReader<'a> {
    pub fn new<R: Read + 'a>(reader: R) -> std::io::Result<Self> {
        Self::with_options(reader, ReaderOptions::default())
    }

    pub fn with_options<R: Read + 'a>(reader: R, options: ReaderOptions) -> std::io::Result<Self> {
        Ok(WarcReader {
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

    fn corrupt(&mut self) {
        self.stats.corrupt += 1;
    }

    /// Reads the header block. Returns `None` when the stream ended inside it.
    fn read_headers(&mut self) -> Option<(HashMap<String, String>, bool)> {
        let mut headers = HashMap::with_capacity(16);
        let mut malformed = false;
        loop {
            match self.input.read_line_bounded(&mut self.line) {
                Ok(0) | Err(_) => return None,
                Ok(_) => {}
            }
            let line = trim_line(&self.line);
            if line.is_empty() {
                return Some((headers, malformed));
            }
            let text = String::from_utf8_lossy(line);
            match text.split_once(':') {
                Some((name, value)) if !name.trim().is_empty() => {
                    headers.insert(name.trim().to_ascii_lowercase(), value.trim().to_string());
                }
                _ => malformed = true,
            }
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
                    // Broken compression or I/O: whatever was in flight is lost.
                    self.corrupt();
                    self.done = true;
                    return None;
                }
            }
            if is_blank(&self.line) {
                continue;
            }
            if !self.line.starts_with(b"WARC/") {
                if !self.in_junk {
                    self.corrupt();
                    self.in_junk = true;
                }
                continue;
            }
            self.in_junk = false;

            let Some((headers, malformed)) = self.read_headers() else {
                self.corrupt();
                self.done = true;
                return None;
            };
            let content_length = headers
                .get("content-length")
                .and_then(|v| v.parse::<u64>().ok());
            let Some(content_length) = content_length else {
                self.corrupt();
                self.in_junk = true;
                continue;
            };
            if malformed {
                self.corrupt();
                if self.input.skip(content_length).unwrap_or(0) < content_length {
                    self.done = true;
                    return None;
                }
                continue;
            }

            let is_response = headers
                .get("warc-type")
                .is_some_and(|t| t.eq_ignore_ascii_case("response"));
            if !is_response || content_length > self.options.max_record_bytes {
                match self.input.skip(content_length) {
                    Ok(n) if n == content_length => self.stats.skipped += 1,
                    _ => {
                        self.corrupt();
                        self.done = true;
                        return None;
                    }
                }
                continue;
            }

            if self
                .input
                .read_up_to(content_length as usize, &mut body)
                .is_err()
                || (body.len() as u64) < content_length
            {
                self.corrupt();
                self.done = true;
                return None;
            }

            let target = headers.get("warc-target-uri").map(|u| {
                u.trim_start_matches('<').trim_end_matches('>').to_string()
            });
            let time = headers
                .get("warc-date")
                .and_then(|d| Timestamp::parse_warc_date(d));
            let (Some(target_uri), Some(capture_time)) = (target, time) else {
                self.corrupt();
                continue;
            };
            if target_uri.is_empty() {
                self.corrupt();
                continue;
            }

            let head = parse_http_head(&body);
            body.drain(..head.body_offset);
            self.stats.emitted += 1;
            return Some(ArchiveRecord {
                target_uri,
                capture_time,
                record_kind: RecordKind::Response,
                mime_type: head.content_type.unwrap_or_default(),
                http_status: head.status,
                payload: body,
                container_format: ContainerFormat::Warc,
            });
        }
    }
}

impl Iterator for WarcReader<'_> {
    type Item = ArchiveRecord;

    fn next(&mut self) -> Option<ArchiveRecord> {
        self.next_record()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::testutil::{gzip, warc_record};

    fn read_all(data: &[u8]) -> (Vec<ArchiveRecord>, StreamStats) {
        let mut reader = WarcReader::new(data).unwrap();
        let records: Vec<_> = reader.by_ref().collect();
        (records, reader.stats().clone())
    }

    #[test]
    fn response_fields() {
        let data = warc_record(
            "response",
            "http://a.de/x?q=1",
            "2009-03-02T11:00:00Z",
            b"HTTP/1.1 200 OK\r\nContent-Type: text/html\r\n\r\n<p>hi</p>",
        );
        let (records, stats) = read_all(&data);
        assert_eq!(records.len(), 1);
        let r = &records[0];
        assert_eq!(r.target_uri, "http://a.de/x?q=1");
        assert_eq!(r.capture_time.to_warc_date(), "2009-03-02T11:00:00Z");
        assert_eq!(r.record_kind, RecordKind::Response);
        assert_eq!(r.http_status, Some(200));
        assert_eq!(r.mime_type, "text/html");
        assert_eq!(r.payload, b"<p>hi</p>");
        assert_eq!(stats.emitted, 1);
    }

    #[test]
    fn request_is_skipped() {
        let data = warc_record("request", "http://a.de/", "2009-03-02T11:00:00Z", b"GET / HTTP/1.1\r\n\r\n");
        let (records, stats) = read_all(&data);
        assert!(records.is_empty());
        assert_eq!(stats.skipped, 1);
    }

    #[test]
    fn gzip_members_in_file_order() {
        let mut data = Vec::new();
        data.extend(gzip(&warc_record("response", "http://a.de/1", "2009-03-02T11:00:00Z", b"HTTP/1.1 200 OK\r\n\r\none")));
        data.extend(gzip(&warc_record("metadata", "http://a.de/1", "2009-03-02T11:00:00Z", b"via: x")));
        data.extend(gzip(&warc_record("response", "http://a.de/2", "2009-03-02T11:00:01Z", b"HTTP/1.1 200 OK\r\n\r\ntwo")));
        let (records, stats) = read_all(&data);
        let uris: Vec<_> = records.iter().map(|r| r.target_uri.as_str()).collect();
        assert_eq!(uris, ["http://a.de/1", "http://a.de/2"]);
        assert_eq!((stats.emitted, stats.skipped, stats.corrupt), (2, 1, 0));
    }

    #[test]
    fn malformed_header_line_is_corrupt_and_stream_continues() {
        let mut bad = warc_record("response", "http://a.de/1", "2009-03-02T11:00:00Z", b"HTTP/1.1 200 OK\r\n\r\nx");
        let pos = bad.windows(9).position(|w| w == b"WARC-Date").unwrap();
        bad.splice(pos..pos, b"garbage line without colon\r\n".iter().copied());
        let mut data = bad;
        data.extend(warc_record("response", "http://a.de/2", "2009-03-02T11:00:00Z", b"HTTP/1.1 200 OK\r\n\r\ny"));
        let (records, stats) = read_all(&data);
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].target_uri, "http://a.de/2");
        assert_eq!(stats.corrupt, 1);
    }

    #[test]
    fn truncated_final_record() {
        let mut data = warc_record("response", "http://a.de/1", "2009-03-02T11:00:00Z", b"HTTP/1.1 200 OK\r\n\r\nfirst");
        let second = warc_record("response", "http://a.de/2", "2009-03-02T11:00:00Z", b"HTTP/1.1 200 OK\r\n\r\n0123456789");
        data.extend_from_slice(&second[..second.len() - 12]);
        let (records, stats) = read_all(&data);
        assert_eq!(records.len(), 1);
        assert_eq!((stats.emitted, stats.skipped, stats.corrupt), (1, 0, 1));
    }

    #[test]
    fn junk_between_records_counts_once() {
        let mut data = b"not a warc line\r\nanother\r\n\r\n".to_vec();
        data.extend(warc_record("response", "http://a.de/2", "2009-03-02T11:00:00Z", b"HTTP/1.1 200 OK\r\n\r\ny"));
        let (records, stats) = read_all(&data);
        assert_eq!(records.len(), 1);
        assert_eq!(stats.corrupt, 1);
    }
}
